"""Numerical dynamics: integration, Wirtinger ratios, residual scans and shooting.

All public functions take and return times in the ORIGINAL time units of
the system (system time multiplied by ``time_scale``) unless
``original_units=False`` is passed, so that periods here are directly
comparable with validated bounds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .polycore import Polynomial
from .systems import SystemSpec

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    pass


# fast float views of polynomials ----------------------------------------------------
class CompiledPolys:
    """Vector of polynomials evaluated in float: ``values = coef @ prod(x**E)``."""

    def __init__(self, polys: Sequence[Polynomial]):
        n = polys[0].n_vars if polys else 0
        mons = sorted({m for p in polys for m in p.support()})
        self.n_vars = n
        self.exps = np.array(mons, dtype=np.int64).reshape(len(mons), n)
        self.coef = np.zeros((len(polys), len(mons)))
        index = {m: k for k, m in enumerate(mons)}
        for i, p in enumerate(polys):
            for m, c in p.items():
                self.coef[i, index[m]] = float(c)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.coef @ np.prod(x[None, :] ** self.exps, axis=1)
        # batch: x has shape (N, n)
        mon = np.prod(x[:, None, :] ** self.exps[None, :, :], axis=2)
        return mon @ self.coef.T


def compile_field(f: Sequence[Polynomial]) -> Callable[[float, np.ndarray], np.ndarray]:
    """``rhs(t, x)`` for scipy integrators."""
    ev = CompiledPolys(list(f))
    return lambda t, x: ev(x)


def compile_jacobian(f: Sequence[Polynomial]) -> Callable[[np.ndarray], np.ndarray]:
    n = len(f)
    ev = CompiledPolys([fi.diff(j) for fi in f for j in range(n)])
    return lambda x: ev(x).reshape(n, n)


def _conserved(system: SystemSpec) -> Polynomial | None:
    if system.conserved is not None:
        return system.conserved
    if system.constraint is not None and system.constraint_invariant():
        return system.constraint
    return None


# integration ----------------------------------------------------------------------
@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)
    system: str
    tol: float
    conserved_drift: float | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(system: SystemSpec, x0, t_end: float, tol: float = 1e-10, n_out: int = 1001,
              original_units: bool = True) -> Trajectory:
    """DOP853 (embedded 8(5,3) Runge-Kutta) with rtol = atol = tol.

    Reports the largest deviation of the conserved quantity over ``n_out``
    output points when the system has one.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    scale = float(system.time_scale) if original_units else 1.0
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.n_vars,):
        raise ValueError("x0 has the wrong dimension")
    tau = t_end / scale
    t_eval = np.linspace(0.0, tau, n_out)
    sol = solve_ivp(compile_field(system.f), (0.0, tau), x0, method="DOP853", rtol=tol, atol=tol,
                    t_eval=t_eval)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"integration failed: {sol.message}")
    states = sol.y.T
    drift = None
    H = _conserved(system)
    if H is not None:
        hv = CompiledPolys([H])(states)[:, 0]
        drift = float(np.max(np.abs(hv - hv[0])))
    return Trajectory(sol.t * scale, states, system.name, tol, drift)


def _flow_with_variations(system: SystemSpec, x0, tau: float, tol: float):
    """phi_tau(x0) and its derivative with respect to x0, in system time."""
    n = system.n_vars
    rhs = CompiledPolys(list(system.f))
    jac = compile_jacobian(system.f)

    def aug(t, z):
        x = z[:n]
        Phi = z[n:].reshape(n, n)
        return np.concatenate([rhs(x), (jac(x) @ Phi).ravel()])

    z0 = np.concatenate([np.asarray(x0, float), np.eye(n).ravel()])
    sol = solve_ivp(aug, (0.0, tau), z0, method="DOP853", rtol=tol, atol=tol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegrationError(f"integration failed: {sol.message}")
    z = sol.y[:, -1]
    return z[:n], z[n:].reshape(n, n)


# Wirtinger ------------------------------------------------------------------------
def wirtinger_ratio(samples, T: float, mean_tol: float = 1e-8) -> float:
    """Spectral estimate of int |f'|^2 / int |f|^2 for a T-periodic signal.

    ``samples`` are values at t_k = k T / N, k = 0..N-1 (endpoint excluded),
    shape (N,) or (N, m) for vector signals. Exact for trigonometric
    polynomials resolved by the grid.
    """
    f = np.asarray(samples, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    N = f.shape[0]
    if N < 3 or not T > 0:
        raise ValueError("need at least 3 samples and T > 0")
    c = np.fft.rfft(f, axis=0) / N
    scale = np.sqrt(np.sum(np.abs(c) ** 2))
    if scale == 0:
        raise ZeroDivisionError("signal is identically zero")
    if np.max(np.abs(c[0])) > mean_tol * max(scale, 1.0):
        raise ValueError("signal does not have zero mean")
    k = np.arange(c.shape[0])
    w = np.full(c.shape[0], 2.0)  # rfft halves: count each +-k pair twice
    w[0] = 1.0
    if N % 2 == 0:
        w[-1] = 1.0
    power = w[:, None] * np.abs(c) ** 2
    omega = 2 * math.pi * k / T
    return float(np.sum(omega[:, None] ** 2 * power) / np.sum(power))


# orbit candidates -----------------------------------------------------------------
@dataclass
class PeriodicOrbitCandidate:
    x0: np.ndarray
    T: float  # original time units
    closure_error: float
    conserved_drift: float | None = None
    residual: float | None = None
    iterations: int = 0

    def report(self, names: Sequence[str] | None = None, bound=None) -> str:
        names = names or [f"x{i + 1}" for i in range(len(self.x0))]
        xs = ", ".join(f"{n}={v:+.10f}" for n, v in zip(names, self.x0))
        out = f"T={self.T:.8f} closure={self.closure_error:.2e}"
        if self.conserved_drift is not None:
            out += f" drift={self.conserved_drift:.2e}"
        if self.residual is not None:
            out += f" residual={self.residual:.3e}"
        if bound is not None:
            out += f" bound={bound:.6f} ({'ok' if self.T >= bound else 'VIOLATED'})"
        return f"{out}  x0=({xs})"


def refine_orbit(
    system: SystemSpec,
    x0,
    T_guess: float,
    section: tuple[int, float] | None = None,
    level: float | None = None,
    tol: float = 1e-8,
    integ_tol: float = 1e-12,
    max_iter: int = 50,
    max_step: float = 0.1,
    original_units: bool = True,
) -> PeriodicOrbitCandidate:
    """Single shooting with Gauss-Newton on (x0, T).

    Equations: phi_T(x0) - x0 = 0, a phase condition (x0 on ``section`` if
    given, otherwise orthogonal to the flow at the seed) and, for systems
    with a conserved quantity, conserved quantity = ``level`` (default: its
    value at the seed). Least-squares steps cope with the rank deficiency
    that the energy family of a Hamiltonian system causes; steps longer
    than ``max_step`` are shortened.
    """
    if not T_guess > 0:
        raise ValueError("T_guess must be positive")
    scale = float(system.time_scale) if original_units else 1.0
    n = system.n_vars
    f = CompiledPolys(list(system.f))
    H = _conserved(system)
    if level is not None and H is None:
        raise ValueError("system has no conserved quantity to fix")
    Hc = CompiledPolys([H]) if H is not None else None
    Hgrad = CompiledPolys([H.diff(i) for i in range(n)]) if H is not None else None
    x = np.asarray(x0, dtype=float).copy()
    if level is None and Hc is not None:
        level = float(Hc(x)[0])
    tau = T_guess / scale
    anchor, direction = x.copy(), f(x)
    direction = direction / (np.linalg.norm(direction) or 1.0)

    def equations(x, tau):
        xT, Phi = _flow_with_variations(system, x, tau, integ_tol)
        F = [xT - x]
        J = [np.hstack([Phi - np.eye(n), f(xT)[:, None]])]
        if section is not None:
            i, val = section
            row = np.zeros(n + 1)
            row[i] = 1.0
            F.append(np.array([x[i] - val]))
            J.append(row[None, :])
        else:
            F.append(np.array([direction @ (x - anchor)]))
            J.append(np.concatenate([direction, [0.0]])[None, :])
        if level is not None:
            F.append(np.array([Hc(x)[0] - level]))
            J.append(np.concatenate([Hgrad(x), [0.0]])[None, :])
        return np.concatenate(F), np.vstack(J), xT

    closure = math.inf
    for it in range(1, max_iter + 1):
        F, J, xT = equations(x, tau)
        closure = float(np.linalg.norm(xT - x))
        if np.linalg.norm(F) < tol:
            break
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        norm = np.linalg.norm(step[:n])
        if norm > max_step:
            step *= max_step / norm
        x = x + step[:n]
        tau = tau + step[n]
        if not tau > 0:
            raise NoConvergence("period became non-positive")
    else:
        raise NoConvergence(f"no convergence in {max_iter} iterations (closure {closure:.2e})")
    drift = None
    if H is not None:
        drift = integrate(system, x, tau, tol=integ_tol, original_units=False).conserved_drift
    return PeriodicOrbitCandidate(x, tau * scale, closure, drift, iterations=it)


def prime_period(system: SystemSpec, orbit: PeriodicOrbitCandidate, max_divisor: int = 4,
                 section: tuple[int, float] | None = None, closure_tol: float = 1e-6,
                 original_units: bool = True) -> PeriodicOrbitCandidate:
    """Replace a k-times-around orbit by the orbit with period T/k.

    Shooting converges just as happily to twice the shortest period, so the
    flow is checked at T/k for k = max_divisor..2; the first k that closes
    to ``closure_tol`` is refined again with T/k as the guess.
    """
    scale = float(system.time_scale) if original_units else 1.0
    for k in range(max_divisor, 1, -1):
        tau = orbit.T / k / scale
        xT = integrate(system, orbit.x0, tau, tol=1e-12, n_out=2, original_units=False).final
        if np.linalg.norm(xT - orbit.x0) < closure_tol:
            try:
                short = refine_orbit(system, orbit.x0, orbit.T / k, section=section,
                                     original_units=original_units)
            except (NoConvergence, IntegrationError):
                continue
            short.residual = orbit.residual
            return short
    return orbit


def same_orbit(a: PeriodicOrbitCandidate, b: PeriodicOrbitCandidate, system: SystemSpec,
               tol: float = 1e-6) -> bool:
    """Equal periods and initial points equal up to the sign symmetry."""
    if abs(a.T - b.T) > tol * max(1.0, a.T):
        return False
    images = [np.ones(len(a.x0))]
    if system.symmetry is not None:
        images.append(np.array(system.symmetry.signs, dtype=float))
    return any(np.linalg.norm(s * a.x0 - b.x0) < tol for s in images)


# residual scan --------------------------------------------------------------------
def _solve_on_constraint(h: Polynomial, x: np.ndarray, j: int) -> list[float]:
    """Real roots in x_j of h with the other coordinates fixed at x."""
    deg = max((m[j] for m in h.support()), default=0)
    coeffs = np.zeros(deg + 1)
    for m, c in h.items():
        rest = float(c) * math.prod(x[i] ** e for i, e in enumerate(m) if i != j)
        coeffs[deg - m[j]] += rest
    if deg == 0:
        return []
    roots = np.roots(coeffs)
    return sorted(float(r.real) for r in roots if abs(r.imag) < 1e-12)


def _first_returns(system: SystemSpec, x0, section: tuple[int, float], n_returns: int, t_max: float):
    """Times (system units) and states of crossings of the section in the seed's direction."""
    i, val = section
    rhs = compile_field(system.f)
    sign = np.sign(rhs(0, x0)[i]) or 1.0

    def event(t, x):
        return x[i] - val

    event.direction = sign
    sol = solve_ivp(rhs, (0.0, t_max), np.asarray(x0, float), method="DOP853", rtol=1e-10, atol=1e-10,
                    events=event)
    times, states = sol.t_events[0], sol.y_events[0]
    keep = times > 1e-9 * t_max
    return times[keep][:n_returns], states[keep][:n_returns]


def residual_scan(
    certificate,
    system: SystemSpec | None = None,
    section: tuple[int, float] = (3, 0.0),
    solve_for: int | None = None,
    n_starts: int = 200,
    box: float = 1.0,
    seed: int = 0,
    n_keep: int = 10,
    dedup: float = 1e-3,
    max_returns: int = 6,
) -> list[PeriodicOrbitCandidate]:
    """Locate points where the certificate's left-hand side nearly vanishes.

    The scan evaluates ``C g'Qg - (Lg)'Q(Lg) + L(v'a)`` on the section,
    restricted to the constraint set when the system has one (coordinate
    ``solve_for`` is eliminated from the constraint equation), runs a
    local descent from uniformly sampled starts in [-box, box], and returns
    deduplicated minima (modulo the sign symmetry) sorted by residual.
    Each seed carries a period guess: the earliest section return (among
    the first ``max_returns``) whose closure error is close to the best.
    """
    identity = certificate.identity
    system = system or identity.system
    n = system.n_vars
    if n_starts <= 0:
        return []
    lhs = identity.lhs(certificate.y)
    ev = CompiledPolys([lhs])
    sec_i, sec_v = section
    h = system.constraint
    if h is not None and solve_for is None:
        cands = [j for j in range(n) if j != sec_i and any(m[j] for m in h.support())]
        solve_for = cands[-1]
    free = [j for j in range(n) if j != sec_i and j != solve_for]
    rng = np.random.default_rng(seed)

    def lift(u, branch):
        x = np.zeros(n)
        x[sec_i] = sec_v
        x[free] = u
        if h is not None:
            roots = _solve_on_constraint(h, x, solve_for)
            if not roots:
                return None
            x[solve_for] = roots[-1] if branch > 0 else roots[0]
        return x

    def objective(u, branch):
        x = lift(u, branch)
        if x is None:
            return 1e6 * (1 + float(np.sum(np.square(u))))
        return float(ev(x)[0])

    found: list[tuple[float, np.ndarray]] = []
    tries = 0
    while tries < n_starts:
        u0 = rng.uniform(-box, box, size=len(free))
        for branch in ((1, -1) if h is not None else (1,)):
            if lift(u0, branch) is None:
                continue
            res = minimize(objective, u0, args=(branch,), method="BFGS", options={"gtol": 1e-10})
            x = lift(res.x, branch)
            if x is not None:
                found.append((float(ev(x)[0]), x))
        tries += 1
    if not found:
        raise ValueError("no section point satisfies the constraint")

    images = [np.ones(n)]
    if system.symmetry is not None:
        images.append(np.array(system.symmetry.signs, dtype=float))
    found.sort(key=lambda rx: (rx[0], tuple(rx[1])))
    seeds: list[tuple[float, np.ndarray]] = []
    for r, x in found:
        if any(np.linalg.norm(s * x - y) < dedup for _, y in seeds for s in images):
            continue
        seeds.append((r, x))
        if len(seeds) >= n_keep:
            break

    out = []
    scale = float(system.time_scale)
    for r, x in seeds:
        T, closure = math.nan, math.inf
        try:
            times, states = _first_returns(system, x, section, max_returns, t_max=100.0 / scale)
            if len(times):
                errs = np.linalg.norm(states - x[None, :], axis=1)
                # earliest return that closes about as well as the best one,
                # so that twice-around loops are not preferred
                k = int(np.flatnonzero(errs <= 5 * errs.min() + 1e-3)[0])
                T, closure = float(times[k]) * scale, float(errs[k])
        except IntegrationError:
            pass
        out.append(PeriodicOrbitCandidate(x, T, closure, residual=r))
    return out
