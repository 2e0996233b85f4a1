import numpy as np
import pytest

from unrollkit import datagen


@pytest.fixture(scope="session")
def standard_dataset():
    """The standard sparse-coding family; generated once per session (about 10 s)."""
    return datagen.gen_sparse_coding_dataset(**datagen.STANDARD_FAMILY)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.fixture
def verdict(request):
    """Record the outcome of an acceptance criterion, then assert it."""
    number, title = request.node.get_closest_marker("criterion").args

    def record(ok, detail):
        _VERDICTS[number] = (title, bool(ok), detail)
        assert ok, detail

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and rep.when == "call" and rep.failed and marker.args[0] not in _VERDICTS:
        _VERDICTS[marker.args[0]] = (marker.args[1], False,
                                     f"raised {call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, ok, detail = _VERDICTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
