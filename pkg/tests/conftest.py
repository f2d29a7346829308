import os

import pytest

from detect_correct.data import find_mnist_files

DEFAULT_MNIST_DIR = "/root/data/mnist"


def _mnist_dir():
    d = os.environ.get("DETECT_CORRECT_MNIST_DIR", DEFAULT_MNIST_DIR)
    try:
        find_mnist_files(d, "train")
        find_mnist_files(d, "test")
    except FileNotFoundError:
        return None
    return d


@pytest.fixture(scope="session")
def mnist_dir():
    d = _mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set DETECT_CORRECT_MNIST_DIR")
    return d


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        assert passed, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
