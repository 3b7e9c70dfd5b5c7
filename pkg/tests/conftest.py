import numpy as np
import pytest
from hypothesis import settings

from riskmarket.engine import Market

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

OBJECTIVE_SLACK = 1e-9

# every market run anywhere in the suite is audited for the two trace invariants
_original_run = Market.run
AUDITED_RUNS = []
AUDIT_VIOLATIONS = []


def _audited_run(self, *args, **kwargs):
    result = _original_run(self, *args, **kwargs)
    running = np.zeros((self.n_agents, self.n_securities))
    index = {a.id: n for n, a in enumerate(self.agents)}
    problems = []
    for rec in result.records:
        if not rec.objective_after <= rec.objective_before + OBJECTIVE_SLACK:
            problems.append(f"objective rose at t={rec.t}: {rec.objective_before!r} -> {rec.objective_after!r}")
        running[index[rec.agent_id]] += rec.delta_shares
    if not np.array_equal(result.state.holdings, running):
        problems.append("holdings differ from the cumulative trades")
    if not np.array_equal(result.state.inventory, result.state.holdings.sum(axis=0)):
        problems.append("inventory differs from the summed holdings")
    AUDITED_RUNS.append(len(result.records))
    AUDIT_VIOLATIONS.extend(problems)
    assert not problems, problems
    return result


Market.run = _audited_run


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""
    def _report(number, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if AUDITED_RUNS:
        ok = not AUDIT_VIOLATIONS
        terminalreporter.write_line(
            f"[{'PASS' if ok else 'FAIL'}] criterion 4 (suite-wide audit): {len(AUDITED_RUNS)} market runs, "
            f"{sum(AUDITED_RUNS)} trades, {len(AUDIT_VIOLATIONS)} violations of objective monotonicity "
            "(slack 1e-9) or the exact inventory identity"
        )
