"""Session-wide audit of every solver result produced by the suite.

Each TcResult built anywhere in the tests is checked for slot feasibility,
pairwise capsule disjointness and the sphere-packing bound. The acceptance
module runs last and asserts that the audit saw many results and no failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from transcap import solver
from transcap.protocol import capsules_pairwise_disjoint, is_feasible


@dataclass
class Audit:
    results: int = 0
    max_n: int = 0
    methods: set = field(default_factory=set)
    infeasible: list = field(default_factory=list)
    capsule_overlap: list = field(default_factory=list)
    above_bound: list = field(default_factory=list)

    def check(self, ps, mp, res):
        self.results += 1
        self.max_n = max(self.max_n, len(ps))
        self.methods.add(res.method)
        for _, s in res.schedule.slots:
            if not is_feasible(s, ps, mp):
                self.infeasible.append((len(ps), res.method))
            if not capsules_pairwise_disjoint(s, ps, mp):
                self.capsule_overlap.append((len(ps), res.method))
        if res.value > solver.sphere_packing_upper_bound(ps, mp):
            self.above_bound.append((len(ps), res.method, res.value))


AUDIT = Audit()
_original_result = solver._result


def _audited_result(ps, mp, links, method, optimal, **info):
    res = _original_result(ps, mp, links, method, optimal, **info)
    AUDIT.check(ps, mp, res)
    return res


solver._result = _audited_result


@pytest.fixture(scope="session")
def audit() -> Audit:
    return AUDIT


def pytest_collection_modifyitems(config, items):
    # acceptance criteria read the audit, so they run after everything else
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py"))


@dataclass
class CriterionLog:
    lines: dict = field(default_factory=dict)

    def record(self, number: int, ok: bool, detail: str) -> None:
        self.lines[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


CRITERIA = CriterionLog()


@pytest.fixture(scope="session")
def criteria() -> CriterionLog:
    return CRITERIA


def pytest_terminal_summary(terminalreporter):
    if CRITERIA.lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA.lines):
            terminalreporter.write_line(CRITERIA.lines[k])
