import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dbuofdm.grid import CONFIG_1, CONFIG_3, GridConfig, build_grid

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid1():
    return build_grid(CONFIG_1)


@pytest.fixture(scope="session")
def grid3():
    return build_grid(CONFIG_3)


@pytest.fixture(scope="session")
def tiny_config():
    """N_data = 6: N = 16 with 4 guards per side, 2 DC nulls, no pilots."""
    cfg = GridConfig(16, 4, 4, 2, 0, 4)
    assert cfg.n_data == 6
    return cfg


def crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# acceptance reporting ------------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(rep.longrepr).strip().splitlines()[-1][:160]
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    _ACCEPTANCE[number] = f"criterion {number:2d} {status}: {title}" + (f" | {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
