import pytest

from gridrts.engine import load_map


@pytest.fixture
def map16():
    return load_map("basesWorkers16x16")


@pytest.fixture
def map8():
    return load_map("basesWorkers8x8")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
