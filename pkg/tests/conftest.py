from __future__ import annotations

from pathlib import Path

import pytest

from pricebands.deal_model import CASE_STUDY_DEAL, SEMICONDUCTOR_NODE_TABLE, map_attributes
from pricebands.priors import ConstraintSet, PriorSpec

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

CASE_MU = (1.17, 0.86, 0.97, 1.39, 1.16)
CASE_S = (0.15, 0.12, 0.10, 0.18, 0.14)


@pytest.fixture
def case_prior() -> PriorSpec:
    return PriorSpec(b0=3.90e-5, s_alpha=0.25, mu=CASE_MU, s=CASE_S, s_sigma=0.35)


@pytest.fixture
def case_constraints() -> ConstraintSet:
    return ConstraintSet(beta_bounds=((0.0, 3.0),), sigma_bounds=(0.0, 1.0))


@pytest.fixture
def case_x():
    return map_attributes(CASE_STUDY_DEAL, SEMICONDUCTOR_NODE_TABLE)


@pytest.fixture
def degenerate_prior() -> PriorSpec:
    return PriorSpec(b0=3.90e-5, s_alpha=0.0, mu=CASE_MU, s=(0.0,) * 5, s_sigma=0.0)


# --- acceptance summary: one PASS/FAIL line per criterion ---------------------

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
