from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from minperiod.certify import attempt_certificate, finalize
from minperiod.sdpengine import (
    FEASIBLE,
    NoValidatedStart,
    SearchConfig,
    minimize_C,
    nice_between,
    prune_bases,
    solve_feasibility,
)
from minperiod.sosbuilder import DegreeConfig, assemble_identity, build_library, flatten
from minperiod.systems import henon_heiles, lorenz_rescaled

ROW1 = DegreeConfig("parity", 1, 4, 2)
HH2 = DegreeConfig.lie_span_preset(2)


@pytest.fixture(scope="module")
def row1():
    s = lorenz_rescaled()
    return assemble_identity(s, build_library(s, ROW1), ROW1, 5896)


@pytest.fixture(scope="module")
def hh2():
    s = henon_heiles()
    return assemble_identity(s, build_library(s, HH2), HH2, 485)


def test_feasible_at_table_value(row1):
    sol = solve_feasibility(flatten(row1))
    assert sol.solver_status == FEASIBLE
    assert sol.max_residual < 1e-6
    assert sol.min_block_eigenvalue_estimate > 0


def test_feasible_at_huge_C(row1):
    assert solve_feasibility(flatten(row1.with_C(10**9))).feasible


def test_not_feasible_at_small_C(row1):
    sol = solve_feasibility(flatten(row1.with_C(1)))
    assert sol.solver_status in ("infeasible", "inconclusive")
    assert attempt_certificate(row1.with_C(1))[1] is None


def test_bad_solver_is_inconclusive(row1):
    sol = solve_feasibility(flatten(row1), solver="NO_SUCH_SOLVER")
    assert sol.solver_status == "inconclusive"
    assert np.all(np.isnan(sol.y_float))


def test_validated_feasibility_is_monotone(row1):
    assert attempt_certificate(row1)[1] is not None
    assert attempt_certificate(row1.with_C(2 * 5896))[1] is not None


def test_time_rescaling_scales_C_by_four():
    s2 = lorenz_rescaled().scaled(2)
    idn = assemble_identity(s2, build_library(s2, ROW1), ROW1, 4 * 5900)
    cert = attempt_certificate(idn)[1]
    assert cert is not None
    assert abs(finalize(cert).approx - 6 * 2 * np.pi / np.sqrt(5900)) < 1e-12
    assert attempt_certificate(idn.with_C(4 * 5840))[1] is None


# pruning --------------------------------------------------------------------------
def test_prune_zero_rounds_is_identity(row1):
    sol = solve_feasibility(flatten(row1))
    idn, sol2 = prune_bases(row1, sol, rounds=0)
    assert idn is row1 and sol2 is sol


def test_prune_needs_feasible_start(row1):
    sol = solve_feasibility(flatten(row1.with_C(1)))
    with pytest.raises(ValueError):
        prune_bases(row1, sol, rounds=2)


def test_prune_hh_shrinks_and_stays_feasible(hh2):
    solve = lambda idn: solve_feasibility(flatten(idn), margin_blocks=("Q_e", "Q_o"))
    first = solve(hh2)
    assert first.feasible
    pruned, sol = prune_bases(hh2, first, 1e-7, 5, solve=solve)
    assert pruned.layout.total < hh2.layout.total
    assert sol.feasible


def test_hh_validates_only_with_pruning(hh2):
    assert attempt_certificate(hh2, prune_rounds=0)[1] is None
    assert attempt_certificate(hh2, prune_rounds=5)[1] is not None


# bisection ------------------------------------------------------------------------
def threshold_attempt(threshold, calls=None):
    def attempt(C):
        if calls is not None:
            calls.append(C)
        return ("feasible", object()) if C >= threshold else ("infeasible", None)
    return attempt


@given(st.fractions(min_value=2, max_value=999, max_denominator=1000))
def test_minimize_brackets_threshold(threshold):
    calls = []
    res = minimize_C(threshold_attempt(threshold, calls), SearchConfig(1000, 1, rel_tol=1e-4))
    assert calls[0] == 1000
    assert res.C_bad < threshold <= res.C_star
    assert res.C_star / res.C_bad - 1 < 1e-4
    assert len(res.history) == len(calls)
    assert all(step.validated == (step.C >= threshold) for step in res.history)


def test_minimize_no_validated_start():
    with pytest.raises(NoValidatedStart):
        minimize_C(threshold_attempt(10**6), SearchConfig(1000, 1))


def test_minimize_degenerate_bracket():
    calls = []
    res = minimize_C(threshold_attempt(5, calls), SearchConfig(100, 100))
    assert res.C_star == 100 and calls == [100]


def test_minimize_respects_max_iter():
    res = minimize_C(threshold_attempt(Fraction(1, 3) + 1), SearchConfig(1000, 1, rel_tol=0, max_iter=7))
    assert len(res.history) == 8


def test_minimize_reports_progress():
    seen = []
    minimize_C(threshold_attempt(50), SearchConfig(100, 1, rel_tol=1e-2), progress=seen.append)
    assert seen and "validated=True" in seen[0].line()


@pytest.mark.parametrize("kw", [dict(C_hi=1, C_lo=2), dict(C_hi=1, C_lo=0), dict(C_hi=2, C_lo=1, prune_rounds=-1)])
def test_search_config_validation(kw):
    with pytest.raises(ValueError):
        SearchConfig(**kw)


@given(st.fractions(min_value=Fraction(1, 1000), max_value=10**6, max_denominator=10**6),
       st.fractions(min_value=Fraction(1, 10**6), max_value=10**4, max_denominator=10**6))
def test_nice_between(lo, width):
    hi = lo + width
    x = nice_between(lo, hi)
    assert lo < x < hi
    mid = (lo + hi) / 2
    assert abs(x - mid) <= width / 4


def test_nice_between_short_decimal():
    assert nice_between(Fraction(1000), Fraction(20000)) == 10000
    assert nice_between(Fraction(5895), Fraction(5897)) == Fraction(5896)
