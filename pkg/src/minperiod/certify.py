"""Exact validation of floating SDP solutions.

rationalize -> exact_project -> verify_identity -> sylvester_pd -> finalize.
Every verdict here is exact; no floating-point value is trusted.
"""
from __future__ import annotations

import configparser
import io
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath

from . import exactla
from .exactla import SingularMatrixError
from .polycore import Polynomial, format_monomial, parse_polynomial
from .sosbuilder import (
    DegreeConfig,
    LinearCertificateSystem,
    ObservableLibrary,
    SosIdentity,
    _assemble,
    flatten,
)
from .systems import SystemSpec

log = logging.getLogger(__name__)

DEFAULT_MAX_DENOMINATOR = 10**30

# Truncated decimal expansion, hence a strict lower bound for pi.
PI_LOWER = Fraction("3.14159265358979323846264338327950288419716939937510")


class ValidationError(RuntimeError):
    """Raised when a candidate certificate fails an exact check."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class NoExactSolution(ValidationError):
    def __init__(self, message="no exact solution (float solution was spurious)"):
        super().__init__("project", message)


def rationalize(y_float: Sequence[float], max_denominator: int = DEFAULT_MAX_DENOMINATOR) -> list[Fraction]:
    """Best rational approximation of each entry with bounded denominator."""
    out = []
    for x in y_float:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"cannot rationalize non-finite value {x}")
        out.append(Fraction(x).limit_denominator(max_denominator))
    return out


def rationalize_grid(y_float: Sequence[float], max_denominator: int = DEFAULT_MAX_DENOMINATOR) -> list[Fraction]:
    """Round every entry to the common grid 2^-k, 2^k the first power of two >= max_denominator.

    Per-entry convergents give unrelated denominators whose lcm, which the
    exact projection has to carry, grows with the number of unknowns; a
    common grid keeps it at 2^k.
    """
    k = max(int(max_denominator) - 1, 1).bit_length()
    scale = 1 << k
    out = []
    for x in y_float:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"cannot rationalize non-finite value {x}")
        out.append(Fraction(round(Fraction(x) * scale), scale))
    return out


# projection --------------------------------------------------------------------
def _integer_system(lcs: LinearCertificateSystem):
    rows, rhs = [], []
    for r, c in zip(lcs.rows, lcs.c_vec):
        ir, ic = exactla.integer_row(r, c)
        rows.append(ir)
        rhs.append(ic)
    return rows, rhs


def exact_project(lcs: LinearCertificateSystem, y0: Sequence[Fraction]) -> list[Fraction]:
    """Minimum-norm exact correction: y = y0 + A_r^T (A_r A_r^T)^{-1} (c_r - A_r y0).

    A_r is a maximal independent subset of rows. The rows are chosen by
    elimination modulo a large prime (always independent over Q); if the
    result misses a row, that row is added and the solve repeated, and a
    row that cannot be added is an inconsistency.
    """
    y0 = [Fraction(v) for v in y0]
    n = lcs.layout.total
    if len(y0) != n:
        raise ValueError("y0 length does not match the layout")
    rows, rhs = _integer_system(lcs)
    Y, D = exactla.common_denominator(y0)
    # integer residual numerators: r_i = (rhs_i * D - A_i Y) / D
    resid = [ci * D - sum(v * Y[j] for j, v in r.items()) for r, ci in zip(rows, rhs)]
    if not any(resid):
        return y0
    chosen = exactla.independent_rows_modp(rows, n)
    for _ in range(len(rows) + 1):
        y = _min_norm_correction(rows, resid, chosen, y0, D)
        bad = [i for i, (r, ci) in enumerate(zip(rows, rhs)) if _row_value(r, y) != ci]
        if not bad:
            return y
        extra = [i for i in bad if i not in chosen]
        if not extra:
            raise NoExactSolution("selected rows do not reproduce an exact solution")
        chosen = sorted(set(chosen) | {extra[0]})
    raise NoExactSolution()


def _row_value(row: dict[int, int], y: Sequence[Fraction]) -> Fraction:
    return sum((v * y[j] for j, v in row.items()), Fraction(0))


def _min_norm_correction(rows, resid, chosen, y0, D):
    sub = [rows[i] for i in chosen]
    k = len(sub)
    M = [[0] * k for _ in range(k)]
    for a in range(k):
        ra = sub[a]
        for b in range(a, k):
            rb = sub[b]
            if len(rb) < len(ra):
                s = sum(v * ra[j] for j, v in rb.items() if j in ra)
            else:
                s = sum(v * rb[j] for j, v in ra.items() if j in rb)
            M[a][b] = M[b][a] = s
    try:
        z = exactla.bareiss_solve(M, [resid[i] for i in chosen])
    except SingularMatrixError:
        raise NoExactSolution("row subset is dependent but inconsistent") from None
    y = list(y0)
    for zi, r in zip(z, sub):
        if not zi:
            continue
        w = zi / D
        for j, v in r.items():
            y[j] += v * w
    return y


def verify_identity(lcs: LinearCertificateSystem, y: Sequence[Fraction]) -> bool:
    """Exact recomputation of A y - c; True iff every entry is zero."""
    if len(y) != lcs.layout.total:
        return False
    Y, D = exactla.common_denominator([Fraction(v) for v in y])
    for r, c in zip(lcs.rows, lcs.c_vec):
        ir, ic = exactla.integer_row(r, c)
        if sum(v * Y[j] for j, v in ir.items()) != ic * D:
            return False
    return True


def sylvester_pd(M: Sequence[Sequence]) -> bool:
    """Strict positive definiteness via leading principal minors, exactly."""
    n = len(M)
    Mf = [[Fraction(v) for v in row] for row in M]
    if any(len(row) != n for row in Mf):
        raise ValueError("matrix must be square")
    for i in range(n):
        for j in range(i + 1, n):
            if Mf[i][j] != Mf[j][i]:
                raise ValueError("matrix is not symmetric")
    if n == 0:
        return True
    Mi, _ = exactla.to_integer_matrix(Mf)
    minors = exactla.leading_minors(Mi, stop_at_nonpositive=True)
    return len(minors) == n and all(m > 0 for m in minors)


# certificates --------------------------------------------------------------------
@dataclass(frozen=True)
class RationalCertificate:
    y: tuple[Fraction, ...]
    identity: SosIdentity
    C: Fraction
    lcs_hash: str

    @property
    def layout(self):
        return self.identity.layout

    def blocks(self) -> dict[str, list]:
        return self.layout.unpack(self.y)


def validate(identity: SosIdentity, y_float: Sequence[float], max_denominator: int = DEFAULT_MAX_DENOMINATOR,
             lcs: LinearCertificateSystem | None = None, rounding: str = "grid") -> RationalCertificate:
    """Float solution -> exact certificate, or raise ValidationError naming the failed stage.

    ``rounding`` is ``"grid"`` (common power-of-two denominator, default) or
    ``"convergent"`` (per-entry best approximation, see :func:`rationalize`).
    """
    lcs = lcs or flatten(identity)
    if rounding not in ("grid", "convergent"):
        raise ValueError(f"unknown rounding {rounding!r}")
    try:
        to_q = rationalize_grid if rounding == "grid" else rationalize
        y0 = to_q(y_float, max_denominator)
    except ValueError as exc:
        raise ValidationError("rationalize", str(exc)) from None
    y = exact_project(lcs, y0)
    if not verify_identity(lcs, y):
        raise ValidationError("identity", "A y != c after projection")
    check_blocks(identity, y)
    return RationalCertificate(tuple(y), identity, identity.C, lcs.digest())


def check_blocks(identity: SosIdentity, y: Sequence[Fraction]):
    parts = identity.layout.unpack(list(y))
    for b in identity.gram_blocks:
        if not sylvester_pd(parts[b.name]):
            raise ValidationError("sylvester", f"block {b.name} is not positive definite")


@dataclass(frozen=True)
class ValidatedBound:
    """Validated lower bound time_scale * 2 pi / sqrt(C) on periods."""

    C: Fraction
    time_scale: Fraction
    system: str
    degrees: str
    certificate: RationalCertificate | None = None

    @property
    def approx(self) -> float:
        return float(self.time_scale) * 2 * math.pi / math.sqrt(float(self.C))

    def render(self, digits: int = 4) -> str:
        return render_bound(self.C, self.time_scale, digits)

    def lower_value(self, digits: int = 10) -> Fraction:
        return lower_decimal(self.C, self.time_scale, digits)


def lower_decimal(C: Fraction, time_scale: Fraction, digits: int) -> Fraction:
    """Largest k/10^digits with (k/10^digits)^2 * C <= (2 pi time_scale)^2, provably."""
    C, time_scale = Fraction(C), Fraction(time_scale)
    with mpmath.workdps(digits + 30):
        val = time_scale.numerator * 2 * mpmath.pi / (time_scale.denominator * mpmath.sqrt(mpmath.mpf(C.numerator) / C.denominator))
        k = int(mpmath.floor(val * 10**digits))
    limit = (2 * PI_LOWER * time_scale) ** 2
    while k > 0 and Fraction(k, 10**digits) ** 2 * C > limit:
        k -= 1
    return Fraction(k, 10**digits)


def render_bound(C, time_scale, digits: int = 4) -> str:
    d = lower_decimal(C, time_scale, digits)
    whole, frac = divmod(d.numerator * 10**digits // d.denominator, 10**digits)
    return f"{whole}.{frac:0{digits}d}" if digits else str(whole)


def finalize(certificate: RationalCertificate, system: SystemSpec | None = None, recheck: bool = True) -> ValidatedBound:
    """Issue the bound; re-runs the exact checks unless told otherwise."""
    identity = certificate.identity
    system = system or identity.system
    if not system.constraint_invariant():
        raise ValidationError("finalize", "constraint is not conserved; S-procedure would be unsound")
    if recheck:
        lcs = flatten(identity)
        if lcs.digest() != certificate.lcs_hash:
            raise ValidationError("finalize", "certificate does not belong to this identity")
        if not verify_identity(lcs, certificate.y):
            raise ValidationError("finalize", "called on an unvalidated certificate")
        check_blocks(identity, certificate.y)
    deg = identity.degrees.label() if identity.degrees else ""
    return ValidatedBound(certificate.C, system.time_scale, system.name, deg, certificate)


# solve + validate at one C ---------------------------------------------------------
def attempt_certificate(
    identity: SosIdentity,
    prune_rounds: int = 0,
    prune_threshold: float = 1e-7,
    solver: str = "CLARABEL",
    max_denominator: int = DEFAULT_MAX_DENOMINATOR,
) -> tuple[str, RationalCertificate | None]:
    """One C value: (optional) solve-and-prune, final solve, exact validation.

    Returns ``(solver_status, certificate or None)``. The certificate, not the
    solver status, decides whether C is good; validation is attempted for any
    finite float solution.
    """
    import numpy as np

    from .sdpengine import INCONCLUSIVE, prune_bases, solve_feasibility

    if prune_rounds > 0:
        first = solve_feasibility(flatten(identity), solver=solver, margin_blocks=("Q_e", "Q_o"))
        if first.feasible:
            solve = lambda idn: solve_feasibility(flatten(idn), solver=solver, margin_blocks=("Q_e", "Q_o"))
            identity, _ = prune_bases(identity, first, prune_threshold, prune_rounds, solve=solve)
    lcs = flatten(identity)
    sol = solve_feasibility(lcs, solver=solver)
    if not np.all(np.isfinite(sol.y_float)):
        return sol.solver_status if sol.solver_status != "feasible" else INCONCLUSIVE, None
    try:
        cert = validate(identity, sol.y_float, max_denominator, lcs=lcs)
    except ValidationError as exc:
        log.info("C=%s: validation failed at %s", identity.C, exc)
        return sol.solver_status, None
    return sol.solver_status, cert


# file format ---------------------------------------------------------------------
def _fmt_q(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def dumps_certificate(cert: RationalCertificate) -> str:
    idn = cert.identity
    s = idn.system
    names = s.names
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["system"] = {
        "name": s.name,
        "variables": " ".join(names),
        "equations": "\n" + "\n".join(fi.to_string(names) for fi in s.f),
        "symmetry": " ".join(str(v) for v in s.symmetry.signs) if s.symmetry else "",
        "time_scale": _fmt_q(s.time_scale),
        "constraint": s.constraint.to_string(names) if s.constraint is not None else "",
    }
    d = idn.degrees
    cp["degrees"] = {
        "mode": d.mode if d else "",
        "d_lib": str(d.d_lib) if d else "",
        "d_a": str(d.d_a) if d else "",
        "d_b": str(d.d_b) if d else "",
        "d_rho": "" if d is None or d.d_rho is None else str(d.d_rho),
    }
    cp["C"] = {"value": _fmt_q(cert.C)}

    def mons(ms):
        return "\n" + "\n".join(format_monomial(m, names) or "1" for m in ms) if ms else ""

    def polys(ps):
        return "\n" + "\n".join(p.to_string(names) for p in ps) if ps else ""

    cp["layout"] = {
        "blocks": idn.layout.describe(),
        "provenance": idn.library.provenance,
        "g_even": polys(idn.library.g_even),
        "g_odd": polys(idn.library.g_odd),
        "a": polys(idn.a_basis),
        "b_even": mons(idn.b_even),
        "b_odd": mons(idn.b_odd),
        "c": mons(idn.c_basis),
    }
    cp["y"] = {"values": "\n" + "\n".join(_fmt_q(v) for v in cert.y)}
    cp["digest"] = {"sha256": cert.lcs_hash}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_certificate(cert: RationalCertificate, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_certificate(cert))


class CertificateFormatError(ValueError):
    pass


def _lines(text: str) -> list[str]:
    return [ln.strip() for ln in text.strip().splitlines() if ln.strip()]


def loads_certificate(text: str) -> tuple[SosIdentity, list[Fraction], str]:
    """Parse a certificate file and re-assemble its identity from scratch.

    Returns (identity, y, stored digest). Nothing from the file is trusted
    beyond the system, bases, C and y it states.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
        sysec, deg, lay = cp["system"], cp["degrees"], cp["layout"]
        names = tuple(sysec["variables"].split())
        from .polycore import SignSymmetry

        f = tuple(parse_polynomial(e, names) for e in _lines(sysec["equations"]))
        sym = SignSymmetry(tuple(int(v) for v in sysec["symmetry"].split())) if sysec["symmetry"].strip() else None
        con = parse_polynomial(sysec["constraint"], names) if sysec["constraint"].strip() else None
        system = SystemSpec(sysec["name"], f, sym, Fraction(sysec["time_scale"]), con, names=names)
        degrees = None
        if deg["mode"].strip():
            degrees = DegreeConfig(deg["mode"], int(deg["d_lib"]), int(deg["d_a"]), int(deg["d_b"]),
                                   int(deg["d_rho"]) if deg["d_rho"].strip() else None)
        C = Fraction(cp["C"]["value"])
        lib = ObservableLibrary(
            tuple(parse_polynomial(t, names) for t in _lines(lay["g_even"])),
            tuple(parse_polynomial(t, names) for t in _lines(lay["g_odd"])),
            lay.get("provenance", ""),
        )
        a = tuple(parse_polynomial(t, names) for t in _lines(lay["a"]))

        def mono(t):
            p = parse_polynomial(t, names)
            if len(p) != 1 or next(iter(p.items()))[1] != 1:
                raise CertificateFormatError(f"not a monomial: {t}")
            return next(iter(p.items()))[0]

        b_e = tuple(mono(t) for t in _lines(lay["b_even"]))
        b_o = tuple(mono(t) for t in _lines(lay["b_odd"]))
        c = tuple(mono(t) for t in _lines(lay["c"]))
        y = [Fraction(t) for t in _lines(cp["y"]["values"])]
        digest = cp["digest"]["sha256"].strip()
    except CertificateFormatError:
        raise
    except (KeyError, ValueError, configparser.Error) as exc:
        raise CertificateFormatError(f"malformed certificate: {exc}") from None
    identity = _assemble(system, lib, C, a, b_e, b_o, c, degrees)
    if identity.layout.describe() != lay["blocks"].strip():
        raise CertificateFormatError("layout description does not match the stated bases")
    return identity, y, digest


@dataclass
class VerifyReport:
    passed: bool
    stage: str
    message: str
    bound: ValidatedBound | None = None

    def lines(self) -> list[str]:
        out = [f"verify: {'PASS' if self.passed else 'FAIL'} ({self.stage}) {self.message}"]
        if self.bound is not None:
            b = self.bound
            out.append(f"C = {b.C} (~{float(b.C):.6g}); period bound >= {b.render(4)}")
        return out


def verify_text(text: str) -> VerifyReport:
    """Independent re-check of a certificate file; needs no SDP solver."""
    try:
        identity, y, digest = loads_certificate(text)
    except (CertificateFormatError, ValueError) as exc:
        return VerifyReport(False, "parse", str(exc))
    lcs = flatten(identity)
    if lcs.digest() != digest:
        return VerifyReport(False, "digest", "digest of re-assembled (A, c) does not match")
    if len(y) != identity.layout.total:
        return VerifyReport(False, "identity", "y has wrong length")
    if not verify_identity(lcs, y):
        return VerifyReport(False, "identity", "A y != c")
    try:
        check_blocks(identity, y)
    except ValidationError as exc:
        return VerifyReport(False, "sylvester", str(exc))
    if not identity.system.constraint_invariant():
        return VerifyReport(False, "constraint", "constraint not conserved by the flow")
    cert = RationalCertificate(tuple(y), identity, identity.C, digest)
    bound = finalize(cert, recheck=False)
    return VerifyReport(True, "all", "identity exact, all Gram blocks positive definite", bound)


def verify_file(path) -> VerifyReport:
    with open(path) as fh:
        return verify_text(fh.read())
