"""Built-in polynomial systems, the closed-form Lorenz certificate and Yorke's bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .polycore import (
    Polynomial,
    SignSymmetry,
    default_names,
    is_equivariant,
    lie_derivative,
    parse_polynomial,
)


@dataclass(frozen=True)
class SystemSpec:
    """A polynomial vector field ``dx/dt = f(x)`` plus metadata.

    ``time_scale`` converts periods of this system into periods of the
    original one (bound reported = time_scale * 2*pi/sqrt(C)).
    ``constraint`` is a polynomial h with the orbits of interest on h = 0;
    ``conserved`` is the quantity h is built from, when it is not h itself.
    """

    name: str
    f: tuple[Polynomial, ...]
    symmetry: SignSymmetry | None = None
    time_scale: Fraction = Fraction(1)
    constraint: Polynomial | None = None
    conserved: Polynomial | None = None
    parameters: Mapping[str, Fraction] = field(default_factory=dict)
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.f)
        if any(fi.n_vars != n for fi in self.f):
            raise ValueError("every field component must have n_vars == len(f)")
        if self.names is None:
            object.__setattr__(self, "names", tuple(default_names(n)))
        if len(self.names) != n:
            raise ValueError("names length mismatch")
        object.__setattr__(self, "time_scale", Fraction(self.time_scale))
        if self.time_scale <= 0:
            raise ValueError("time_scale must be positive")
        if self.symmetry is not None and self.symmetry.n_vars != n:
            raise ValueError("symmetry dimension mismatch")
        if self.constraint is not None and self.constraint.is_zero():
            raise ValueError("constraint polynomial is identically zero")

    @property
    def n_vars(self) -> int:
        return len(self.f)

    def lie(self, p: Polynomial) -> Polynomial:
        return lie_derivative(p, self.f)

    def is_equivariant(self) -> bool:
        return self.symmetry is None or is_equivariant(self.f, self.symmetry)

    def constraint_invariant(self) -> bool:
        """True when L_f h vanishes identically (or there is no constraint)."""
        if self.constraint is None:
            return True
        return self.lie(self.constraint).is_zero()

    def check(self) -> list[str]:
        """Exact invariant checks; returns a list of problems (empty if fine)."""
        problems = []
        if not self.is_equivariant():
            problems.append("field is not equivariant under the declared symmetry")
        if not self.constraint_invariant():
            problems.append("constraint is not conserved by the flow")
        if self.constraint is not None and self.symmetry is not None:
            if self.constraint.parity(self.symmetry) != 1:
                problems.append("constraint is not invariant under the symmetry")
        return problems

    def rhs(self):
        """Fast float callable ``rhs(t, x) -> ndarray`` for integrators."""
        from .orbitlab import compile_field

        return compile_field(self.f)

    def scaled(self, lam) -> "SystemSpec":
        """The same system with f multiplied by lam (time sped up by lam)."""
        lam = Fraction(lam)
        return SystemSpec(
            name=f"{self.name}*{lam}",
            f=tuple(fi.scale(lam) for fi in self.f),
            symmetry=self.symmetry,
            time_scale=self.time_scale * lam,
            constraint=self.constraint,
            conserved=self.conserved,
            parameters=dict(self.parameters),
            names=self.names,
        )


def lorenz(sigma=10, rho=28, beta=Fraction(8, 3)) -> SystemSpec:
    sigma, rho, beta = Fraction(sigma), Fraction(rho), Fraction(beta)
    x1, x2, x3 = (Polynomial.variable(i, 3) for i in range(3))
    f = (
        (x2 - x1) * sigma,
        x1 * rho - x1 * x3 - x2,
        x1 * x2 - x3 * beta,
    )
    return SystemSpec(
        "lorenz",
        f,
        SignSymmetry((-1, -1, 1)),
        parameters={"sigma": sigma, "rho": rho, "beta": beta},
    )


def lorenz_rescaled() -> SystemSpec:
    """Lorenz at (10, 28, 8/3) with space scaled by 25 and time by 6.

    Periods of this system times 6 are periods of the standard system.
    """
    names = ("x1", "x2", "x3")
    f = tuple(
        parse_polynomial(s, names)
        for s in ("60*x2 - 60*x1", "168*x1 - 150*x1*x3 - 6*x2", "150*x1*x2 - 16*x3")
    )
    spec = SystemSpec(
        "lorenz_rescaled",
        f,
        SignSymmetry((-1, -1, 1)),
        time_scale=Fraction(6),
        parameters={"sigma": Fraction(10), "rho": Fraction(28), "beta": Fraction(8, 3)},
        names=names,
    )
    _require_ok(spec)
    return spec


def henon_heiles_hamiltonian() -> Polynomial:
    names = ("x1", "x2", "x3", "x4")
    return parse_polynomial("1/2*(x1^2 + x2^2 + x3^2 + x4^2) + x1^2*x2 - 1/3*x2^3", names)


def henon_heiles(energy=Fraction(1, 7), time_scale=20) -> SystemSpec:
    """Henon-Heiles with time sped up by ``time_scale`` and the S-procedure
    constraint ``(6 - 42 H)`` (i.e. H = 1/7) at the default energy."""
    names = ("x1", "x2", "x3", "x4")
    energy = Fraction(energy)
    base = [parse_polynomial(s, names) for s in ("x3", "x4", "-x1 - 2*x1*x2", "-x2 - x1^2 + x2^2")]
    f = tuple(b.scale(time_scale) for b in base)
    H = henon_heiles_hamiltonian()
    constraint = _normalized_level_set(H, energy)
    spec = SystemSpec(
        "henon_heiles",
        f,
        SignSymmetry((-1, 1, -1, 1)),
        time_scale=Fraction(time_scale),
        constraint=constraint,
        conserved=H,
        parameters={"energy": energy},
        names=names,
    )
    _require_ok(spec)
    return spec


def _normalized_level_set(H: Polynomial, level: Fraction) -> Polynomial:
    # For level 1/7 this gives 6 - 42 H (integer coefficients, constant 6).
    h = (H - level) * (-1)
    lcm = 1
    for _, c in h.items():
        lcm = math.lcm(lcm, c.denominator)
    return h.scale(lcm)


def _require_ok(spec: SystemSpec):
    problems = spec.check()
    if problems:
        raise AssertionError(f"built-in system {spec.name} failed: {problems}")


BUILTINS = {
    "lorenz": lorenz,
    "lorenz_rescaled": lorenz_rescaled,
    "henon_heiles": henon_heiles,
}


def get_system(name: str) -> SystemSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in system {name!r}; choose from {sorted(BUILTINS)}") from None


def system_from_config(
    equations: Sequence[str],
    variables: Sequence[str] | None = None,
    symmetry: Sequence[int] | None = None,
    time_scale="1",
    constraint: str | None = None,
    name: str = "custom",
    parameters: Mapping[str, str] | None = None,
    conserved: str | None = None,
) -> SystemSpec:
    """Build a user system from polynomial strings.

    ``conserved`` names a first integral used only by the orbit tools; it is
    checked exactly and rejected if the flow does not preserve it.

    A constraint that the flow does not conserve only triggers a warning
    here; :func:`minperiod.certify.finalize` refuses to issue a bound for it.
    """
    names = tuple(variables) if variables else tuple(default_names(len(equations)))
    if len(names) != len(equations):
        raise ValueError("need one equation per variable")
    f = tuple(parse_polynomial(e, names) for e in equations)
    sym = SignSymmetry(tuple(int(s) for s in symmetry)) if symmetry else None
    con = parse_polynomial(constraint, names) if constraint else None
    first_integral = parse_polynomial(conserved, names) if conserved else None
    if first_integral is not None and not lie_derivative(first_integral, f).is_zero():
        raise ValueError("declared conserved quantity is not conserved by the flow")
    spec = SystemSpec(
        name,
        f,
        sym,
        time_scale=Fraction(time_scale),
        constraint=con,
        conserved=first_integral,
        parameters={k: Fraction(v) for k, v in (parameters or {}).items()},
        names=names,
    )
    if not spec.is_equivariant():
        raise ValueError("field is not equivariant under the declared symmetry")
    if not spec.constraint_invariant():
        warnings.warn(
            f"constraint of {name} is not conserved by the flow; no validated bound will be issued",
            stacklevel=2,
        )
    return spec


# analytic results --------------------------------------------------------------
@dataclass(frozen=True)
class AnalyticLorenzResult:
    passed: bool
    residual: Polynomial
    expected: Polynomial
    C: Fraction
    bound: float


def analytic_lorenz_check(sigma, rho, beta) -> AnalyticLorenzResult:
    """Check the closed-form certificate for symmetric Lorenz orbits.

    With g = x1, Q = 1, C = sigma^2 (rho - 1) and
    V = (sigma (rho - 2) x1^2 - sigma^2 x2^2 - sigma^2 x3^2) / 2 the residual
    C g^2 - (L_f g)^2 + L_f V must equal beta sigma^2 x3^2 exactly.
    """
    sigma, rho, beta = Fraction(sigma), Fraction(rho), Fraction(beta)
    if not (sigma > 0 and beta > 0 and rho > 1):
        raise ValueError("need sigma > 0, beta > 0, rho > 1 (C must be positive)")
    spec = lorenz(sigma, rho, beta)
    x1, x2, x3 = (Polynomial.variable(i, 3) for i in range(3))
    C = sigma**2 * (rho - 1)
    V = (x1 * x1 * (sigma * (rho - 2)) - x2 * x2 * sigma**2 - x3 * x3 * sigma**2) / 2
    g = x1
    Lg = spec.lie(g)
    residual = g * g * C - Lg * Lg + spec.lie(V)
    expected = x3 * x3 * (beta * sigma**2)
    passed = residual == expected
    if not passed:
        raise AssertionError(f"analytic Lorenz identity failed: {residual} != {expected}")
    return AnalyticLorenzResult(passed, residual, expected, C, 2 * math.pi / math.sqrt(C))


def yorke_bound(L: float) -> float:
    """Period lower bound 2*pi/L for a field with Lipschitz constant L."""
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    return 2 * math.pi / L
