import pytest

from edgechaos.backend import SimCluster
from edgechaos.config import plan_from_dict

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict(label, passed, detail)``."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((label, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip())


def small_plan(**overrides):
    doc = {
        "name": "t",
        "fault_types": ["network-delay"],
        "intensities": [25, 100],
        "window_s": 6,
        "stabilization_s": 5,
        "seed": 1,
    }
    doc.update(overrides)
    return plan_from_dict(doc)


def sim_for(plan, seed=None):
    return SimCluster(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed if seed is None else seed)


@pytest.fixture
def make_plan():
    return small_plan
