import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from minperiod.orbitlab import (
    CompiledPolys,
    NoConvergence,
    _solve_on_constraint,
    integrate,
    prime_period,
    same_orbit,
    refine_orbit,
    residual_scan,
    wirtinger_ratio,
)
from minperiod.polycore import parse_polynomial
from minperiod.systems import henon_heiles, henon_heiles_hamiltonian, lorenz, system_from_config

HH_SEED = np.array([0.0, -0.3979, 0.2922, 0.0])


@pytest.fixture(scope="module")
def circle():
    return system_from_config(["-y", "x"], ["x", "y"], symmetry=[-1, -1], conserved="x^2 + y^2")


# integration ---------------------------------------------------------------------
def test_hh_energy_drift_small():
    traj = integrate(henon_heiles(), HH_SEED, 10.0)
    assert traj.conserved_drift < 1e-8
    assert traj.times[-1] == pytest.approx(10.0)


def test_lorenz_origin_is_fixed():
    traj = integrate(lorenz(10, 28, 8 / 3), [0, 0, 0], 5.0)
    assert np.all(traj.states == 0)


def test_circle_returns_after_two_pi(circle):
    traj = integrate(circle, [1.0, 0.0], 2 * math.pi, tol=1e-12)
    assert np.linalg.norm(traj.final - [1.0, 0.0]) < 1e-8


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
def test_drift_shrinks_with_tolerance(tol):
    drift = integrate(henon_heiles(), HH_SEED, 20.0, tol=tol).conserved_drift
    assert drift < 100 * tol


def test_integrate_rejects_bad_input():
    with pytest.raises(ValueError):
        integrate(henon_heiles(), [0, 0], 1.0)
    with pytest.raises(ValueError):
        integrate(henon_heiles(), HH_SEED, 1.0, tol=0)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_compiled_polys_match_exact_evaluation(x):
    H = henon_heiles_hamiltonian()
    fast = CompiledPolys([H])
    assert fast(np.array(x))[0] == pytest.approx(H.evaluate_float(x), rel=1e-12, abs=1e-12)


# Wirtinger ------------------------------------------------------------------------
def grid(T, N=256):
    return np.arange(N) * T / N


@pytest.mark.parametrize("T", [1.0, 2 * math.pi, 6.0521])
def test_wirtinger_equality_for_sinusoid(T):
    t = grid(T)
    assert abs(wirtinger_ratio(np.sin(2 * math.pi * t / T), T) - (2 * math.pi / T) ** 2) < 1e-6


def test_wirtinger_second_harmonic():
    T = 3.0
    t = grid(T)
    assert wirtinger_ratio(np.sin(4 * math.pi * t / T), T) == pytest.approx((4 * math.pi / T) ** 2, rel=1e-12)


def test_wirtinger_mixed_harmonics_fourier_oracle():
    T = 2.5
    t = grid(T)
    f = np.sin(2 * math.pi * t / T) + 0.5 * np.sin(4 * math.pi * t / T)
    # coefficients 1 and 1/2 at frequencies 1 and 2: (1 + 4 * 1/4) / (1 + 1/4)
    oracle = (4 * math.pi**2 / T**2) * 2 / 1.25
    r = wirtinger_ratio(f, T)
    assert r == pytest.approx(oracle, rel=1e-12)
    assert (2 * math.pi / T) ** 2 < r < (4 * math.pi / T) ** 2


def test_wirtinger_vector_signal():
    T = 1.7
    t = grid(T)
    f = np.stack([np.cos(2 * math.pi * t / T), np.sin(2 * math.pi * t / T)], axis=1)
    assert wirtinger_ratio(f, T) == pytest.approx((2 * math.pi / T) ** 2, rel=1e-12)


@given(st.floats(0.1, 50), st.lists(st.floats(-1, 1), min_size=3, max_size=6))
def test_wirtinger_inequality(T, amps):
    t = grid(T)
    f = sum(a * np.sin(2 * math.pi * (k + 1) * t / T + k) for k, a in enumerate(amps))
    if np.max(np.abs(f)) < 1e-3:
        return
    assert wirtinger_ratio(f, T) >= (2 * math.pi / T) ** 2 * (1 - 1e-9)


def test_wirtinger_zero_signal():
    with pytest.raises(ZeroDivisionError):
        wirtinger_ratio(np.zeros(16), 1.0)


def test_wirtinger_nonzero_mean():
    with pytest.raises(ValueError):
        wirtinger_ratio(1 + np.sin(2 * math.pi * grid(1.0)), 1.0)


# refinement -----------------------------------------------------------------------
@pytest.fixture(scope="module")
def hh_orbit():
    return refine_orbit(henon_heiles(), HH_SEED, 6.05, section=(3, 0.0))


def test_refine_hh(hh_orbit):
    assert abs(hh_orbit.T - 6.0521) < 5e-3
    assert hh_orbit.closure_error < 1e-8
    assert hh_orbit.conserved_drift < 1e-9
    H = henon_heiles_hamiltonian()
    assert abs(H.evaluate_float(hh_orbit.x0) - 1 / 7) < 2e-4


def test_refine_hh_symmetric_partner(hh_orbit):
    s = henon_heiles()
    partner = refine_orbit(s, np.array(s.symmetry.signs) * HH_SEED, 6.05, section=(3, 0.0))
    assert partner.T == pytest.approx(hh_orbit.T, abs=1e-7)


def test_refine_without_section(circle):
    orb = refine_orbit(circle, [1.0, 0.05], 6.0, original_units=False)
    assert orb.T == pytest.approx(2 * math.pi, abs=1e-8)
    assert np.hypot(*orb.x0) == pytest.approx(math.hypot(1.0, 0.05), abs=1e-8)


def test_refine_rejects_bad_period(circle):
    with pytest.raises(ValueError):
        refine_orbit(circle, [1.0, 0.0], 0.0)


def test_refine_no_convergence():
    with pytest.raises(NoConvergence):
        refine_orbit(henon_heiles(), HH_SEED, 3.1, section=(3, 0.0), max_iter=2)


def test_report_mentions_bound(hh_orbit):
    text = hh_orbit.report(henon_heiles().names, bound=5.706)
    assert "(ok)" in text and text.startswith("T=6.0521")


# residual scan --------------------------------------------------------------------
def test_solve_on_constraint():
    h = parse_polynomial("1 - x1^2 - x2^2", n_vars=2)
    assert _solve_on_constraint(h, np.array([0.6, 0.0]), 1) == pytest.approx([-0.8, 0.8])
    assert _solve_on_constraint(h, np.array([2.0, 0.0]), 1) == []


def test_residual_scan_zero_starts(hh_dw3_cert):
    assert residual_scan(hh_dw3_cert, n_starts=0) == []


def test_residual_scan_needs_solvable_section(hh_dw3_cert):
    with pytest.raises(ValueError):
        residual_scan(hh_dw3_cert, n_starts=3, box=0.01, section=(3, 5.0))


@pytest.fixture(scope="module")
def hh_seeds(hh_dw3_cert):
    return residual_scan(hh_dw3_cert, n_starts=40, seed=0)


def test_residual_scan_finds_known_orbit(hh_seeds):
    s = henon_heiles()
    images = [HH_SEED, np.array(s.symmetry.signs) * HH_SEED]
    assert any(min(np.linalg.norm(sd.x0 - im) for im in images) < 0.05 for sd in hh_seeds)
    for sd in hh_seeds:
        assert sd.x0[3] == 0.0
        assert abs(s.constraint.evaluate_float(sd.x0)) < 1e-9


def test_residual_at_seed_much_smaller_than_typical(hh_dw3_cert, hh_seeds):
    s = henon_heiles()
    ev = CompiledPolys([hh_dw3_cert.identity.lhs(hh_dw3_cert.y)])
    rng = np.random.default_rng(1)
    vals = []
    while len(vals) < 100:
        x = np.zeros(4)
        x[:2] = rng.uniform(-1, 1, 2)
        roots = _solve_on_constraint(s.constraint, x, 2)
        if roots:
            x[2] = roots[rng.integers(len(roots))]
            vals.append(ev(x)[0])
    assert hh_seeds[0].residual < 1e-3 * np.median(vals)


def test_seed_refines_to_known_period(hh_seeds):
    best = min(hh_seeds, key=lambda sd: np.linalg.norm(np.abs(sd.x0) - np.abs(HH_SEED)))
    orb = refine_orbit(henon_heiles(), best.x0, 6.05, section=(3, 0.0))
    assert abs(orb.T - 6.0521) < 5e-3


def test_prime_period_reduces_double_loop(hh_orbit):
    s = henon_heiles()
    double = refine_orbit(s, hh_orbit.x0, 2 * hh_orbit.T, section=(3, 0.0))
    assert double.T == pytest.approx(2 * hh_orbit.T, abs=1e-6)
    single = prime_period(s, double, section=(3, 0.0))
    assert single.T == pytest.approx(hh_orbit.T, abs=1e-7)
    assert prime_period(s, hh_orbit, section=(3, 0.0)) is hh_orbit


def test_same_orbit_up_to_symmetry(hh_orbit):
    s = henon_heiles()
    mirrored = type(hh_orbit)(np.array(s.symmetry.signs) * hh_orbit.x0, hh_orbit.T, hh_orbit.closure_error)
    assert same_orbit(hh_orbit, mirrored, s)
    shifted = type(hh_orbit)(hh_orbit.x0, hh_orbit.T + 0.1, hh_orbit.closure_error)
    assert not same_orbit(hh_orbit, shifted, s)
