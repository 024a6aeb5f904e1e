"""Download WFDB records from a public archive with SHA-256 verification."""

from __future__ import annotations

import hashlib
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import ChecksumMismatch, DataError, NetworkError

log = logging.getLogger(__name__)

MITDB_URL = "https://physionet.org/files/mitdb/1.0.0/"
MANIFEST_NAME = "SHA256SUMS.txt"
CACHE_ENV = "ECGROUTE_CACHE"


def default_cache_dir() -> str:
    return os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "ecgroute")


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_manifest(text: str) -> dict[str, str]:
    """Parse ``sha256  filename`` lines (``sha256sum`` output) into a mapping."""
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        digest, _, name = line.partition(" ")
        name = name.strip().lstrip("*")
        if len(digest) != 64 or not name:
            raise DataError(f"malformed checksum manifest line: {line!r}")
        out[name] = digest.lower()
    return out


def format_manifest(entries: dict[str, str]) -> str:
    return "".join(f"{digest}  {name}\n" for name, digest in sorted(entries.items()))


@dataclass
class FileStatus:
    filename: str
    status: str  # cached | downloaded | unverified | checksum_mismatch | network_error
    sha256: str | None = None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _download(url: str, dest: str, timeout: float) -> None:
    part = dest + ".part"
    have = os.path.getsize(part) if os.path.exists(part) else 0
    req = urllib.request.Request(url)
    if have:
        req.add_header("Range", f"bytes={have}-")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        mode = "ab" if have and resp.status == 206 else "wb"
        with open(part, mode) as fh:
            while True:
                chunk = resp.read(1 << 16)
                if not chunk:
                    break
                fh.write(chunk)
    os.replace(part, dest)


def _join(base_url: str, name: str) -> str:
    return base_url.rstrip("/") + "/" + name


def fetch_dataset(
    base_url: str,
    records,
    destination: str,
    manifest: dict[str, str] | str | None = None,
    extensions=("hea", "dat", "atr"),
    offline: bool = False,
    timeout: float = 30.0,
) -> list[FileStatus]:
    """Make ``<record>.<ext>`` files available under ``destination``.

    ``manifest`` is a mapping or the path of a checksum file; when omitted,
    the archive's own ``SHA256SUMS.txt`` is used (downloaded unless cached).
    A cached file whose digest matches is never re-downloaded. Each file gets
    its own :class:`FileStatus`; network failures and checksum mismatches are
    reported as distinct error types.
    """
    os.makedirs(destination, exist_ok=True)
    if isinstance(manifest, str):
        with open(manifest) as fh:
            manifest = parse_manifest(fh.read())
    elif manifest is None:
        manifest = _archive_manifest(base_url, destination, offline, timeout)

    results = []
    for rec in records:
        for ext in extensions:
            name = f"{rec}.{ext}"
            results.append(_fetch_one(base_url, name, destination, manifest, offline, timeout))
    return results


def _archive_manifest(base_url, destination, offline, timeout) -> dict[str, str]:
    path = os.path.join(destination, MANIFEST_NAME)
    if not os.path.exists(path):
        if offline:
            log.warning("no checksum manifest cached; files will be unverified")
            return {}
        try:
            _download(_join(base_url, MANIFEST_NAME), path, timeout)
        except (urllib.error.URLError, OSError) as exc:
            log.warning("could not fetch checksum manifest: %s", exc)
            return {}
    with open(path) as fh:
        return parse_manifest(fh.read())


def _fetch_one(base_url, name, destination, manifest, offline, timeout) -> FileStatus:
    path = os.path.join(destination, name)
    expected = manifest.get(name)
    if os.path.exists(path):
        digest = sha256_file(path)
        if expected is None:
            return FileStatus(name, "unverified", digest)
        if digest == expected:
            return FileStatus(name, "cached", digest)
        log.info("%s: cached copy fails checksum, re-downloading", name)
        os.remove(path)
    if offline:
        return FileStatus(name, "network_error", error=NetworkError(name, "offline mode and no cached copy"))
    try:
        _download(_join(base_url, name), path, timeout)
    except (urllib.error.URLError, OSError) as exc:
        return FileStatus(name, "network_error", error=NetworkError(name, exc))
    digest = sha256_file(path)
    if expected is not None and digest != expected:
        os.replace(path, path + ".corrupt")
        return FileStatus(name, "checksum_mismatch", digest, ChecksumMismatch(name, expected, digest))
    return FileStatus(name, "downloaded" if expected else "unverified", digest)


def require_ok(results) -> None:
    """Raise the first per-file error, if any."""
    for r in results:
        if r.error is not None:
            raise r.error
