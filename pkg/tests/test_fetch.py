import functools
import hashlib
import http.server
import os
import threading

import pytest

from ecgroute.errors import ChecksumMismatch, NetworkError
from ecgroute.fetch import (
    CACHE_ENV,
    MANIFEST_NAME,
    default_cache_dir,
    fetch_dataset,
    format_manifest,
    parse_manifest,
    require_ok,
)


class _Handler(http.server.SimpleHTTPRequestHandler):
    requests: list = []

    def do_GET(self):
        type(self).requests.append(self.path)
        super().do_GET()

    def log_message(self, *args):
        pass


@pytest.fixture
def archive(tmp_path):
    src = tmp_path / "remote"
    src.mkdir()
    files = {"r1.hea": b"r1 1 360 10\n", "r1.dat": b"\x01\x02\x03" * 5, "r1.atr": b"\x00\x00"}
    for name, data in files.items():
        (src / name).write_bytes(data)
    digests = {n: hashlib.sha256(d).hexdigest() for n, d in files.items()}
    (src / MANIFEST_NAME).write_text(format_manifest(digests))
    _Handler.requests = []
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), functools.partial(_Handler, directory=str(src)))
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/", src, digests
    server.shutdown()


def test_download_then_cached_without_network(archive, tmp_path):
    url, _, digests = archive
    dest = tmp_path / "cache"
    first = fetch_dataset(url, ["r1"], str(dest))
    assert [r.status for r in first] == ["downloaded"] * 3
    assert all(r.sha256 == digests[r.filename] for r in first)
    n = len(_Handler.requests)
    again = fetch_dataset(url, ["r1"], str(dest))
    assert [r.status for r in again] == ["cached"] * 3
    assert len(_Handler.requests) == n  # no network call for verified files
    offline = fetch_dataset(url, ["r1"], str(dest), offline=True)
    assert all(r.ok for r in offline)


def test_checksum_mismatch_is_distinct_error(archive, tmp_path):
    url, src, _ = archive
    (src / "r1.dat").write_bytes(b"tampered")
    res = {r.filename: r for r in fetch_dataset(url, ["r1"], str(tmp_path / "c"))}
    bad = res["r1.dat"]
    assert bad.status == "checksum_mismatch" and isinstance(bad.error, ChecksumMismatch)
    assert (tmp_path / "c" / "r1.dat.corrupt").exists() and not (tmp_path / "c" / "r1.dat").exists()
    with pytest.raises(ChecksumMismatch):
        require_ok(res.values())


def test_corrupt_cache_is_redownloaded(archive, tmp_path):
    url, _, _ = archive
    dest = tmp_path / "c"
    fetch_dataset(url, ["r1"], str(dest))
    (dest / "r1.hea").write_bytes(b"garbage")
    res = {r.filename: r.status for r in fetch_dataset(url, ["r1"], str(dest))}
    assert res["r1.hea"] == "downloaded"


def test_network_failure_and_offline(tmp_path):
    res = fetch_dataset("http://127.0.0.1:9/", ["r1"], str(tmp_path), manifest={}, extensions=("hea",), timeout=2)
    assert res[0].status == "network_error" and isinstance(res[0].error, NetworkError)
    res = fetch_dataset("http://invalid/", ["r1"], str(tmp_path), extensions=("hea",), offline=True)
    assert res[0].status == "network_error"


def test_partial_download_is_replaced(archive, tmp_path):
    url, _, digests = archive
    dest = tmp_path / "c"
    dest.mkdir()
    (dest / "r1.dat.part").write_bytes(b"\x01")
    res = {r.filename: r for r in fetch_dataset(url, ["r1"], str(dest))}
    assert res["r1.dat"].sha256 == digests["r1.dat"]
    assert not (dest / "r1.dat.part").exists()


def test_manifest_format_roundtrip():
    entries = {"a.dat": "0" * 64, "b.hea": "f" * 64}
    assert parse_manifest(format_manifest(entries)) == entries
    assert parse_manifest("# comment\n" + "A" * 64 + " *x.atr\n") == {"x.atr": "a" * 64}


def test_cache_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert default_cache_dir() == str(tmp_path)
    monkeypatch.delenv(CACHE_ENV)
    assert default_cache_dir().endswith(os.path.join(".cache", "ecgroute"))
