import math
import random
from fractions import Fraction

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from minperiod import exactla
from minperiod.certify import (
    NoExactSolution,
    PI_LOWER,
    RationalCertificate,
    ValidationError,
    attempt_certificate,
    dumps_certificate,
    exact_project,
    finalize,
    lower_decimal,
    loads_certificate,
    rationalize,
    rationalize_grid,
    render_bound,
    sylvester_pd,
    validate,
    verify_identity,
    verify_text,
)
from minperiod.sdpengine import solve_feasibility
from minperiod.sosbuilder import (
    DegreeConfig,
    LinearCertificateSystem,
    UnknownLayout,
    assemble_identity,
    build_library,
    flatten,
)
from minperiod.systems import lorenz_rescaled

ROW1 = DegreeConfig("parity", 1, 4, 2)


def make_lcs(A, c):
    layout = UnknownLayout.build([("v", "vec", len(A[0]))])
    rows = [{j: Fraction(v) for j, v in enumerate(r) if v} for r in A]
    return LinearCertificateSystem(rows, [Fraction(v) for v in c], layout, list(range(len(A))))


# rationalize -------------------------------------------------------------------
def test_rationalize_pi():
    assert rationalize([math.pi], 10**6) == [Fraction(3126535, 995207)]


def test_rationalize_simple():
    assert rationalize([0.5]) == [Fraction(1, 2)]
    assert rationalize([1 / 3], 100) == [Fraction(1, 3)]


def test_rationalize_rejects_nan():
    with pytest.raises(ValueError):
        rationalize([float("nan")])


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
def test_grid_rounding_common_denominator(xs):
    qs = rationalize_grid(xs, 10**30)
    for x, q in zip(xs, qs):
        assert (2**100) % q.denominator == 0
        assert abs(Fraction(x) - q) <= Fraction(1, 2**101)


# exact projection -------------------------------------------------------------------
def test_project_single_row():
    lcs = make_lcs([[1, 1]], [1])
    assert exact_project(lcs, [Fraction(0), Fraction(0)]) == [Fraction(1, 2), Fraction(1, 2)]


def test_project_already_exact_is_identity():
    lcs = make_lcs([[1, 2]], [3])
    y0 = [Fraction(1), Fraction(1)]
    assert exact_project(lcs, y0) == y0


def test_project_inconsistent():
    lcs = make_lcs([[1, 1], [2, 2]], [1, 3])
    with pytest.raises(NoExactSolution):
        exact_project(lcs, [Fraction(0), Fraction(0)])


def random_rank_deficient(rng, m, n, r):
    B = [[rng.randint(-4, 4) for _ in range(r)] for _ in range(m)]
    Cm = [[rng.randint(-4, 4) for _ in range(n)] for _ in range(r)]
    A = [[sum(B[i][k] * Cm[k][j] for k in range(r)) for j in range(n)] for i in range(m)]
    x = [Fraction(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(n)]
    c = [sum(a * xi for a, xi in zip(row, x)) for row in A]
    return A, c


@pytest.mark.parametrize("seed", range(10))
def test_project_matches_pseudoinverse(seed):
    rng = random.Random(seed)
    A, c = random_rank_deficient(rng, 5, 8, 4)
    y0 = [Fraction(rng.randint(-50, 50), rng.randint(1, 9)) for _ in range(8)]
    y = exact_project(make_lcs(A, c), y0)
    As = sympy.Matrix(A)
    oracle = sympy.Matrix(y0) + As.pinv() * (sympy.Matrix(c) - As * sympy.Matrix(y0))
    assert [sympy.Rational(v.numerator, v.denominator) for v in y] == list(oracle)


@given(st.integers(0, 10**6))
def test_project_postcondition_and_row_space(seed):
    rng = random.Random(seed)
    m, n = rng.randint(1, 6), rng.randint(2, 9)
    A, c = random_rank_deficient(rng, m, n, rng.randint(1, min(m, n)))
    y0 = [Fraction(rng.randint(-30, 30), rng.randint(1, 7)) for _ in range(n)]
    lcs = make_lcs(A, c)
    y = exact_project(lcs, y0)
    assert verify_identity(lcs, y)
    # the correction is orthogonal to the null space of A
    d = [a - b for a, b in zip(y, y0)]
    for z in exactla.nullspace([[Fraction(v) for v in r] for r in A], n):
        assert sum(a * b for a, b in zip(d, z)) == 0


# exact linear algebra -------------------------------------------------------------------
@given(st.integers(0, 10**6))
def test_bareiss_solve_matches_sympy(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 6)
    while True:
        M = [[rng.randint(-9, 9) for _ in range(n)] for _ in range(n)]
        if sympy.Matrix(M).det() != 0:
            break
    b = [rng.randint(-9, 9) for _ in range(n)]
    x = exactla.bareiss_solve(M, b)
    oracle = sympy.Matrix(M).LUsolve(sympy.Matrix(b))
    assert [sympy.Rational(v.numerator, v.denominator) for v in x] == list(oracle)


def test_bareiss_singular():
    with pytest.raises(exactla.SingularMatrixError):
        exactla.bareiss_solve([[1, 2], [2, 4]], [1, 1])


def test_leading_minors():
    M = [[2, -1, 0], [-1, 2, -1], [0, -1, 2]]
    assert exactla.leading_minors(M) == [2, 3, 4]


def test_independent_rows_modp():
    rows = [{0: 1, 1: 1}, {0: 2, 1: 2}, {1: 1}]
    assert exactla.independent_rows_modp(rows, 2) == [0, 2]


def test_rank_and_nullspace():
    R = [[Fraction(1), Fraction(2), Fraction(3)], [Fraction(2), Fraction(4), Fraction(6)]]
    assert exactla.rank(R) == 1
    ns = exactla.nullspace(R, 3)
    assert len(ns) == 2
    for z in ns:
        assert sum(a * b for a, b in zip(R[0], z)) == 0


# Sylvester ------------------------------------------------------------------------
@pytest.mark.parametrize("M, expected", [
    ([[2, 1], [1, 2]], True),
    ([[1, 2], [2, 1]], False),
    ([[1, 0], [0, 0]], False),
    ([[Fraction(1, 10**40)]], True),
    ([[0, 0], [0, 1]], False),
    ([], True),
])
def test_sylvester_examples(M, expected):
    assert sylvester_pd(M) is expected


def test_sylvester_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        sylvester_pd([[1, 2], [0, 1]])


@given(st.integers(0, 10**6))
def test_sylvester_agrees_with_eigenvalues(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 6)
    B = [[rng.randint(-5, 5) for _ in range(n)] for _ in range(n)]
    shift = rng.randint(-3, 12)
    M = [[sum(B[k][i] * B[k][j] for k in range(n)) + (shift if i == j else 0) - 6 * (i == j)
          for j in range(n)] for i in range(n)]
    lam = np.linalg.eigvalsh(np.array(M, dtype=float)).min()
    if abs(lam) < 1e-9:
        return
    assert sylvester_pd(M) is bool(lam > 0)


# rendering ------------------------------------------------------------------------
@pytest.mark.parametrize("C, ts, text", [
    (5896, 6, "0.4909"),
    (2818, 6, "0.7101"),
    (485, 20, "5.7060"),
    ("431.13", 20, "6.0520"),
    (2700, 1, "0.1209"),
    (1, 1, "6.2831"),
])
def test_render_rounds_down(C, ts, text):
    assert render_bound(Fraction(C), Fraction(ts)) == text


def test_pi_lower_is_below_pi():
    with mpmath.workdps(80):
        assert mpmath.mpf(PI_LOWER.numerator) / PI_LOWER.denominator < mpmath.pi
        assert mpmath.pi - mpmath.mpf(PI_LOWER.numerator) / PI_LOWER.denominator < mpmath.mpf(10) ** -49


@given(st.fractions(min_value=Fraction(1, 100), max_value=10**7, max_denominator=10**4),
       st.integers(1, 40), st.integers(1, 8))
def test_rendered_bound_never_exceeds_true_value(C, ts, digits):
    d = lower_decimal(C, Fraction(ts), digits)
    with mpmath.workdps(60):
        true = ts * 2 * mpmath.pi / mpmath.sqrt(mpmath.mpf(C.numerator) / C.denominator)
        assert mpmath.mpf(d.numerator) / d.denominator <= true
        assert true - mpmath.mpf(d.numerator) / d.denominator < mpmath.mpf(10) ** -digits


# certificates --------------------------------------------------------------------
@pytest.fixture(scope="module")
def row1_identity():
    s = lorenz_rescaled()
    return assemble_identity(s, build_library(s, ROW1), ROW1, 5896)


@pytest.fixture(scope="module")
def row1_cert(row1_identity):
    status, cert = attempt_certificate(row1_identity)
    assert cert is not None, status
    return cert


def test_certificate_is_exact(row1_cert, row1_identity):
    lcs = flatten(row1_identity)
    assert verify_identity(lcs, row1_cert.y)
    for b in row1_identity.gram_blocks:
        assert sylvester_pd(row1_cert.blocks()[b.name])


def test_finalize(row1_cert):
    b = finalize(row1_cert)
    assert b.C == 5896 and b.time_scale == 6
    assert b.render() == "0.4909"
    assert abs(b.approx - 0.49096709) < 1e-8


def test_finalize_rejects_unvalidated(row1_cert):
    y = list(row1_cert.y)
    y[0] += Fraction(1, 10**12)
    bad = RationalCertificate(tuple(y), row1_cert.identity, row1_cert.C, row1_cert.lcs_hash)
    with pytest.raises(ValidationError):
        finalize(bad)


def test_rationalize_without_projection_fails(row1_identity):
    lcs = flatten(row1_identity)
    sol = solve_feasibility(lcs)
    assert sol.feasible
    assert not verify_identity(lcs, rationalize_grid(sol.y_float))
    assert verify_identity(lcs, exact_project(lcs, rationalize_grid(sol.y_float)))


def test_validate_convergent_rounding(row1_identity):
    sol = solve_feasibility(flatten(row1_identity))
    cert = validate(row1_identity, sol.y_float, rounding="convergent")
    assert verify_identity(flatten(row1_identity), cert.y)


def test_validate_reports_sylvester_stage(row1_identity):
    # a Gram-indefinite point that still satisfies A y = c after projection
    sol = solve_feasibility(flatten(row1_identity))
    y = np.array(sol.y_float)
    P = row1_identity.layout.block("P_e")
    y[P.offset] -= 1e6
    with pytest.raises(ValidationError) as info:
        validate(row1_identity, y)
    assert info.value.stage == "sylvester"


def test_round_trip(row1_cert):
    text = dumps_certificate(row1_cert)
    identity, y, digest = loads_certificate(text)
    assert tuple(y) == row1_cert.y
    assert digest == row1_cert.lcs_hash
    assert flatten(identity).digest() == digest
    assert dumps_certificate(RationalCertificate(tuple(y), identity, identity.C, digest)) == text


def test_verify_passes(row1_cert):
    rep = verify_text(dumps_certificate(row1_cert))
    assert rep.passed and rep.bound.render() == "0.4909"
    assert rep.lines()[0].startswith("verify: PASS")


def test_verify_lowered_C_fails(row1_cert):
    text = dumps_certificate(row1_cert).replace("value = 5896/1", "value = 5000/1")
    rep = verify_text(text)
    assert not rep.passed and rep.stage in ("digest", "identity")


def test_verify_digest_mismatch(row1_cert):
    text = dumps_certificate(row1_cert)
    text = text.replace(row1_cert.lcs_hash, "0" * 64)
    rep = verify_text(text)
    assert not rep.passed and rep.stage == "digest"


@pytest.mark.parametrize("index", [0, 3, 20, -1])
def test_verify_single_entry_perturbation_fails(row1_cert, index):
    y = list(row1_cert.y)
    y[index] += Fraction(1, 10**40)
    bad = RationalCertificate(tuple(y), row1_cert.identity, row1_cert.C, row1_cert.lcs_hash)
    rep = verify_text(dumps_certificate(bad))
    assert not rep.passed and rep.stage == "identity"


def test_verify_malformed():
    rep = verify_text("[system]\nname = x\n")
    assert not rep.passed and rep.stage == "parse"
