"""Acceptance bookkeeping: one PASS/FAIL line per numbered criterion at the end of the run."""

import time

import pytest

CRITERIA = {
    1: "forward map matches the eigenfunction closed form",
    2: "Newton recovers the eigenfunction solution",
    3: "critical points of the eigenfunction curvature",
    4: "degree formulas on random Morse samples",
    5: "saddle perturbations reach degrees 1, -1, 0",
    6: "kernel and index at the round solution",
    7: "Kazdan-Warner integrals and sign certificates",
    8: "Hersch bound at computed solutions",
    9: "fold on a path into the obstructed region",
    10: "asymmetric crossing of a zero-level maximum",
    11: "even-class solves and trivial even kernel",
    12: "spectral invariants and total runtime",
}
SUITE_BUDGET = 300.0

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config._t0 = time.monotonic()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    ok = rep.passed if rep.when == "call" else not (rep.failed or rep.skipped)
    if rep.when == "call" or not ok:
        _outcomes.setdefault(m.args[0], []).append(ok)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    elapsed = time.monotonic() - config._t0
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            tr.write_line(f"criterion {n:2d}: NOT RUN  {title}")
            continue
        ok = all(runs)
        note = ""
        if n == 12:
            ok = ok and elapsed < SUITE_BUDGET
            note = f" (session {elapsed:.0f} s, budget {SUITE_BUDGET:.0f} s)"
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}{note}")
