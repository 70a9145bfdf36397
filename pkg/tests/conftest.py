from __future__ import annotations

import math

import pytest

from disclination.harness import ExperimentConfig, run_sweep

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _RESULTS[item.nodeid] = (number, title, rep.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, detail in sorted(_RESULTS.values(), key=lambda r: r[0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:>2}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fvk_sweep(tmp_path_factory):
    """Continuation sweep at Delta = 0.5 with the default grid policy."""
    out = tmp_path_factory.mktemp("fvk_sweep")
    cfg = ExperimentConfig(model="fvk", delta=0.5, h_list=[0.05, 0.02, 0.01, 0.005], out_dir=str(out))
    return cfg, run_sweep(cfg)


@pytest.fixture(scope="session")
def plate_spot(tmp_path_factory):
    out = tmp_path_factory.mktemp("plate_spot")
    cfg = ExperimentConfig(model="plate", delta=0.5, h_list=[0.05, 0.01], out_dir=str(out))
    return cfg, run_sweep(cfg)


def normalized(E, h, delta):
    return E / (2.0 * math.pi * delta**2 * h**2)
