import os
from pathlib import Path

import numpy as np
import pytest

from proxyfair.dataset import GroupSet

REPO = Path(__file__).resolve().parents[1]


def adult_dir() -> Path:
    return Path(os.environ.get("ADULT_DIR", REPO / "data" / "adult"))


@pytest.fixture(scope="session")
def adult_paths():
    d = adult_dir()
    train, test = d / "adult.data", d / "adult.test"
    if not (train.exists() and test.exists()):
        pytest.skip(f"Adult files not found in {d}")
    return train, test


@pytest.fixture(scope="session")
def adult_reports(adult_paths):
    from proxyfair.harness import reproduce_adult

    return reproduce_adult(*adult_paths, write=False)


def partition(labels, name="g"):
    return GroupSet.from_labels(name, np.asarray(labels).astype(str))


def random_partition(rng, n, k):
    """Partition of ``n`` examples into at most ``k`` non-empty groups."""
    return partition(rng.integers(0, k, n))


# --- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
