import os
import time

import numpy as np
import pytest

from ecgroute.ingest import CLASSES
from ecgroute.synthetic import SyntheticConfig, gen_synthetic

DATA = os.path.join(os.path.dirname(__file__), "data")
MITDB_ENV = "ECGROUTE_MITDB_DIR"


def mitdb_dir():
    """Directory with the real MIT-BIH records, or None."""
    d = os.environ.get(MITDB_ENV)
    if d and os.path.exists(os.path.join(d, "100.hea")):
        return d
    return None


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synthetic")
    gen_synthetic(str(d), SyntheticConfig(seconds=60.0))
    return str(d)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_labels(rng, n, classes=CLASSES):
    return [classes[i] for i in rng.integers(len(classes), size=n)]


# --- acceptance reporting ----------------------------------------------------

SESSION_START = time.perf_counter()
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_collection_modifyitems(session, config, items):
    # the acceptance suite runs last so criterion 9 can time everything before it
    items.sort(key=lambda it: "test_acceptance.py" in it.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} {number}. {title}: {detail}")
