import numpy as np
import pytest

from cthp_pinn.model import CthpParams


@pytest.fixture
def synthetic_params():
    return CthpParams(0.08, 0.12, 1.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance bookkeeping: tests marked ``acceptance(n)`` roll up into one line per criterion.
ACCEPTANCE_TITLES = {
    1: "synthetic parameter recovery (60k iterations)",
    2: "synthetic reconstruction MAEs within 2x",
    3: "parameter-count goldens 7623/7989/7867",
    4: "stability classification goldens",
    5: "Bode reproduction of the AstaZero sets",
    6: "sinusoidal platoon scenarios",
    7: "composite loss gradient vs finite differences",
    8: "integrator fidelity vs closed form",
    9: "frequency/time-domain consistency",
    10: "empirical-table reproduction (data-gated)",
}
_acceptance: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): belongs to acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.setdefault(marker.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_TITLES):
        results = _acceptance.get(n)
        if not results:
            continue
        outcomes = {o for _, o in results}
        status = "FAIL" if "failed" in outcomes else "SKIP" if outcomes == {"skipped"} else "PASS"
        failed = [name for name, o in results if o == "failed"]
        detail = f"  (failed: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {n:2d} {status}: {ACCEPTANCE_TITLES[n]}{detail}")
