"""Floating-point SDP solves at fixed C, bisection on C, and basis pruning.

Solver output is only ever a hint; a value of C counts as good only once
the caller's validator has produced an exact certificate for it.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .sosbuilder import LinearCertificateSystem, SosIdentity, UnknownLayout, flatten

log = logging.getLogger(__name__)

FEASIBLE, INFEASIBLE, INCONCLUSIVE = "feasible", "infeasible", "inconclusive"


@dataclass
class FloatSolution:
    y_float: np.ndarray
    solver_status: str
    max_residual: float
    min_block_eigenvalue_estimate: float
    solver: str = ""
    solve_time: float = 0.0
    raw_status: str = ""
    # solution in the solver's scaled coordinates (y = colscale * z)
    z_float: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.solver_status == FEASIBLE


@dataclass
class SearchConfig:
    C_hi: Fraction
    C_lo: Fraction
    rel_tol: float = 1e-4
    max_iter: int = 60
    prune_threshold: float = 1e-7
    prune_rounds: int = 0

    def __post_init__(self):
        self.C_hi, self.C_lo = Fraction(self.C_hi), Fraction(self.C_lo)
        if not (self.C_lo > 0 and self.C_hi >= self.C_lo):
            raise ValueError("need C_hi >= C_lo > 0")
        if self.prune_rounds < 0:
            raise ValueError("prune_rounds must be >= 0")


class NoValidatedStart(RuntimeError):
    pass


# solving ---------------------------------------------------------------------
def _sym_maps(layout: UnknownLayout):
    """For each symmetric block, a sparse map y -> vec(M) (column-major)."""
    maps = []
    n = layout.total
    for b in layout.blocks:
        if b.kind != "sym":
            continue
        s = b.size
        rows, cols = [], []
        for k, i, j in layout.sym_entries(b):
            rows.append(i + j * s)
            cols.append(k)
            if i != j:
                rows.append(j + i * s)
                cols.append(k)
        E = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(s * s, n))
        maps.append((b, E))
    return maps


def column_scaling(A: np.ndarray, layout: UnknownLayout) -> np.ndarray:
    """Scaling y = colscale * z that keeps the cones: Gram blocks by congruence
    M = D Mhat D with Jacobi-like D, vector entries individually."""
    n = layout.total
    colnorm = np.abs(A).max(axis=0) if A.size else np.zeros(n)
    colscale = np.ones(n)
    for b in layout.blocks:
        if b.kind == "sym":
            d = np.ones(b.size)
            for k, i, j in layout.sym_entries(b):
                if i == j and colnorm[k] > 0:
                    d[i] = 1.0 / math.sqrt(colnorm[k])
            for k, i, j in layout.sym_entries(b):
                colscale[k] = d[i] * d[j]
        else:
            for k in range(b.offset, b.offset + b.length):
                if colnorm[k] > 0:
                    colscale[k] = 1.0 / colnorm[k]
    return colscale


def solve_feasibility(
    lcs: LinearCertificateSystem,
    layout: UnknownLayout | None = None,
    solver: str = "CLARABEL",
    margin_cap: float = 1.0,
    feas_tol: float = 1e-9,
    margin_blocks: Sequence[str] | None = None,
    verbose: bool = False,
) -> FloatSolution:
    """Maximize t subject to A y = c and every scaled Gram block - t I PSD.

    Status is ``feasible`` when the solver converges with t > feas_tol,
    ``infeasible`` when it certifies infeasibility or returns t < -feas_tol,
    ``inconclusive`` otherwise (including any solver exception).
    ``margin_blocks`` restricts the margin to the named blocks; the others
    are only required to be PSD (used before pruning).
    """
    import cvxpy as cp

    layout = layout or lcs.layout
    n = layout.total
    A = lcs.float_matrix()
    c = np.array([float(v) for v in lcs.c_vec])
    colscale = column_scaling(A, layout)
    As = A * colscale[None, :]
    rscale = np.abs(As).max(axis=1) if As.size else np.ones(len(c))
    rscale[rscale == 0] = 1.0
    As = sp.csr_matrix(As / rscale[:, None])
    cs = c / rscale

    t0 = time.perf_counter()
    z = cp.Variable(n)
    t = cp.Variable()
    cons = [As @ z == cs, t <= margin_cap]
    for b, E in _sym_maps(layout):
        M = cp.reshape(E @ z, (b.size, b.size), order="F")
        if margin_blocks is None or b.name in margin_blocks:
            cons.append(M - t * np.eye(b.size) >> 0)
        else:
            cons.append(M >> 0)
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        with warnings.catch_warnings():
            # "solution may be inaccurate" is reflected in the returned status
            warnings.simplefilter("ignore", UserWarning)
            prob.solve(solver=solver, verbose=verbose)
    except Exception as exc:  # any backend failure maps to inconclusive
        log.debug("solver %s failed: %s", solver, exc)
        return FloatSolution(np.full(n, np.nan), INCONCLUSIVE, math.inf, math.nan, solver,
                             time.perf_counter() - t0, f"error: {exc}")
    elapsed = time.perf_counter() - t0
    status = prob.status
    if status in ("infeasible", "infeasible_inaccurate"):
        return FloatSolution(np.full(n, np.nan), INFEASIBLE, math.inf, math.nan, solver, elapsed, status)
    if z.value is None:
        return FloatSolution(np.full(n, np.nan), INCONCLUSIVE, math.inf, math.nan, solver, elapsed, status)
    yv = np.asarray(z.value, dtype=float) * colscale
    resid = float(np.max(np.abs(A @ yv - c))) if A.size else 0.0
    eig = min_block_eigenvalue(layout, yv, margin_blocks)
    if t.value is not None and t.value < -feas_tol and status == "optimal":
        return FloatSolution(yv, INFEASIBLE, resid, eig, solver, elapsed, status, np.asarray(z.value, dtype=float))
    if status == "optimal" and t.value > feas_tol and eig > 0:
        verdict = FEASIBLE
    else:
        verdict = INCONCLUSIVE
    return FloatSolution(yv, verdict, resid, eig, solver, elapsed, status, np.asarray(z.value, dtype=float))


def min_block_eigenvalue(layout: UnknownLayout, y: np.ndarray, names=None) -> float:
    vals = [math.inf]
    for name, M in layout.unpack(list(y)).items():
        if layout.block(name).kind == "sym" and (names is None or name in names):
            vals.append(float(np.linalg.eigvalsh(np.array(M, dtype=float)).min()))
    return min(vals)


# pruning ---------------------------------------------------------------------
def prune_bases(
    identity: SosIdentity,
    solution: FloatSolution,
    threshold: float = 1e-7,
    rounds: int = 5,
    solve: Callable[[SosIdentity], FloatSolution] | None = None,
    prune_library: bool = True,
) -> tuple[SosIdentity, FloatSolution]:
    """Drop basis entries whose coefficients are negligible, re-solving each round.

    Candidates: entries of v and rho with |coef| < threshold * max|coef|, and
    rows of the Gram blocks whose diagonal is < threshold * max diagonal, both
    measured in the solver's scaled coordinates. Library blocks Q_e / Q_o are
    included when ``prune_library`` is set: library directions that the
    identity forces to zero weight would otherwise leave Q singular. At least
    one entry is kept per block. Returns the last identity whose re-solve
    stayed feasible.
    """
    if solve is None:
        solve = lambda idn: solve_feasibility(flatten(idn), margin_blocks=("Q_e", "Q_o"))
    if rounds <= 0:
        return identity, solution
    if not solution.feasible:
        raise ValueError("prune_bases needs a feasible solution")
    current, cur_sol = identity, solution
    for r in range(rounds):
        z = cur_sol.z_float if cur_sol.z_float is not None else cur_sol.y_float
        drop = _prune_candidates(current, z, threshold, prune_library)
        if not drop:
            break
        trial = current.without(drop)
        trial_sol = solve(trial)
        log.info("prune round %d: dropped %s -> %s, status %s", r + 1,
                 {k: len(v) for k, v in drop.items()}, trial.layout.total, trial_sol.solver_status)
        if not trial_sol.feasible:
            break
        current, cur_sol = trial, trial_sol
    return current, cur_sol


def _prune_candidates(identity: SosIdentity, y: np.ndarray, threshold: float,
                      prune_library: bool = True) -> dict[str, list[int]]:
    parts = identity.layout.unpack(list(y))
    drop = {}
    grams = ("Q_e", "Q_o", "P_e", "P_o") if prune_library else ("P_e", "P_o")
    for name in grams:
        if name not in parts:
            continue
        M = np.array(parts[name], dtype=float)
        d = np.diag(M)
        big = np.max(np.abs(d)) if d.size else 0.0
        bad = [i for i in range(len(d)) if d[i] < threshold * big]
        if len(bad) >= len(d):
            bad = sorted(bad, key=lambda i: d[i])[: len(d) - 1]
        if bad:
            drop[name] = bad
    for name in ("v", "rho"):
        if name not in parts:
            continue
        v = np.abs(np.array(parts[name], dtype=float))
        big = v.max() if v.size else 0.0
        bad = [i for i in range(len(v)) if v[i] < threshold * big]
        if len(bad) >= len(v):
            bad = sorted(bad, key=lambda i: v[i])[: len(v) - 1]
        if bad:
            drop[name] = bad
    return drop


# C search --------------------------------------------------------------------
@dataclass
class SearchStep:
    iteration: int
    C: Fraction
    solver_status: str
    validated: bool
    wall_time: float

    def line(self) -> str:
        return (f"iter={self.iteration} C={float(self.C):.8g} ({self.C}) "
                f"solver={self.solver_status} validated={self.validated} t={self.wall_time:.2f}s")


@dataclass
class SearchResult:
    C_star: Fraction
    certificate: object
    C_bad: Fraction
    history: list[SearchStep] = field(default_factory=list)


def nice_between(lo: Fraction, hi: Fraction) -> Fraction:
    """A short decimal strictly between lo and hi, near the midpoint."""
    mid = (lo + hi) / 2
    width = hi - lo
    k = math.floor(math.log10(float(width) / 4))
    step = Fraction(10) ** k
    cand = Fraction(round(mid / step)) * step
    if lo < cand < hi:
        return cand
    return mid


def minimize_C(
    attempt: Callable[[Fraction], tuple[str, object | None]],
    cfg: SearchConfig,
    progress: Callable[[SearchStep], None] | None = None,
) -> SearchResult:
    """Bisection on C keeping a validated upper end.

    ``attempt(C)`` returns ``(solver_status, certificate_or_None)``; a value
    of C is good only if a certificate comes back. C_lo is treated as bad.
    """
    history: list[SearchStep] = []

    def run(i, C):
        t0 = time.perf_counter()
        status, cert = attempt(C)
        step = SearchStep(i, C, status, cert is not None, time.perf_counter() - t0)
        history.append(step)
        log.info(step.line())
        if progress:
            progress(step)
        return cert

    cert = run(0, cfg.C_hi)
    if cert is None:
        raise NoValidatedStart(f"no validated starting point: C_hi={cfg.C_hi} failed validation")
    good, bad = cfg.C_hi, cfg.C_lo
    it = 0
    while good / bad - 1 >= cfg.rel_tol and it < cfg.max_iter:
        it += 1
        C = nice_between(bad, good)
        c2 = run(it, C)
        if c2 is not None:
            good, cert = C, c2
        else:
            bad = C
    return SearchResult(good, cert, bad, history)
