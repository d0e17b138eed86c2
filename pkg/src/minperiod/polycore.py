"""Exact sparse multivariate polynomials over the rationals.

Monomials are plain tuples of non-negative exponents. A :class:`Polynomial`
maps monomials to :class:`fractions.Fraction` coefficients and never stores
zeros. Nothing in this module rounds.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

Monomial = tuple[int, ...]


def monomial_key(m: Monomial) -> tuple:
    """Graded order: total degree first, then x1 > x2 > ... lexicographically."""
    return (sum(m), tuple(-e for e in m))


def monomial_degree(m: Monomial) -> int:
    return sum(m)


def monomial_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"exact coefficient required, got {type(c).__name__}")


@dataclass(frozen=True)
class SignSymmetry:
    """Coordinate sign flip ``x -> (s_1 x_1, ..., s_n x_n)`` with ``s_i = +-1``."""

    signs: tuple[int, ...]

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"signs must be +1/-1, got {self.signs}")

    @property
    def n_vars(self) -> int:
        return len(self.signs)

    def parity(self, m: Monomial) -> int:
        p = 1
        for s, e in zip(self.signs, m):
            if s < 0 and e % 2:
                p = -p
        return p

    def apply(self, p: "Polynomial") -> "Polynomial":
        """Return p(s.x)."""
        return Polynomial(
            {m: c * self.parity(m) for m, c in p.terms.items()}, p.n_vars
        )


class Polynomial:
    """Immutable sparse polynomial with exact rational coefficients."""

    __slots__ = ("_terms", "n_vars", "_hash")

    def __init__(self, terms: Mapping[Monomial, object] | None = None, n_vars: int = 0):
        clean: dict[Monomial, Fraction] = {}
        if terms:
            for m, c in terms.items():
                m = tuple(int(e) for e in m)
                if len(m) != n_vars:
                    raise ValueError(f"monomial {m} does not have {n_vars} exponents")
                if any(e < 0 for e in m):
                    raise ValueError(f"negative exponent in {m}")
                c = _as_fraction(c)
                if c:
                    clean[m] = clean.get(m, Fraction(0)) + c
                    if not clean[m]:
                        del clean[m]
        self._terms = clean
        self.n_vars = n_vars
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def _raw(cls, terms: dict[Monomial, Fraction], n_vars: int) -> "Polynomial":
        # caller guarantees canonical form
        p = cls.__new__(cls)
        p._terms = terms
        p.n_vars = n_vars
        p._hash = None
        return p

    @classmethod
    def zero(cls, n_vars: int) -> "Polynomial":
        return cls._raw({}, n_vars)

    @classmethod
    def constant(cls, c, n_vars: int) -> "Polynomial":
        return cls({(0,) * n_vars: c}, n_vars)

    @classmethod
    def variable(cls, i: int, n_vars: int) -> "Polynomial":
        """The coordinate x_{i+1} (0-based index)."""
        m = [0] * n_vars
        m[i] = 1
        return cls({tuple(m): 1}, n_vars)

    @classmethod
    def from_monomial(cls, m: Monomial, coeff=1) -> "Polynomial":
        return cls({tuple(m): coeff}, len(m))

    @property
    def terms(self) -> dict[Monomial, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, m: Monomial) -> Fraction:
        return self._terms.get(tuple(m), Fraction(0))

    def support(self) -> list[Monomial]:
        return sorted(self._terms, key=monomial_key)

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self._terms), default=-1)

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if other.n_vars != self.n_vars:
            raise ValueError(f"n_vars mismatch: {self.n_vars} vs {other.n_vars}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        return Polynomial.constant(_as_fraction(other), self.n_vars)

    def __add__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Polynomial._raw(out, self.n_vars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw({m: -c for m, c in self._terms.items()}, self.n_vars)

    def __sub__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = _as_fraction(c)
        if not c:
            return Polynomial.zero(self.n_vars)
        return Polynomial._raw({m: c * v for m, v in self._terms.items()}, self.n_vars)

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            try:
                return self.scale(other)
            except TypeError:
                return NotImplemented
        self._check(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._raw({m: c for m, c in out.items() if c}, self.n_vars)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return self.scale(Fraction(1) / _as_fraction(other))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = Polynomial.constant(1, self.n_vars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.n_vars == other.n_vars and self._terms == other._terms
        try:
            return self == self._coerce(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.n_vars, frozenset(self._terms.items())))
        return self._hash

    # calculus / evaluation ------------------------------------------------
    def diff(self, i: int) -> "Polynomial":
        out = {}
        for m, c in self._terms.items():
            e = m[i]
            if e:
                mm = list(m)
                mm[i] = e - 1
                out[tuple(mm)] = c * e
        return Polynomial._raw(out, self.n_vars)

    def __call__(self, point: Sequence):
        return self.evaluate(point)

    def evaluate(self, point: Sequence):
        """Evaluate at a point; exact when the point is rational."""
        if len(point) != self.n_vars:
            raise ValueError("point has wrong dimension")
        total = 0
        for m, c in self._terms.items():
            t = c
            for x, e in zip(point, m):
                if e:
                    t = t * x**e
            total = total + t
        return total

    def evaluate_float(self, point) -> float:
        return float(sum(float(c) * _fmono(point, m) for m, c in self._terms.items()))

    def parity(self, symmetry: SignSymmetry) -> int | None:
        """+1 (invariant), -1 (sign-changing) or None if mixed. Zero is +1."""
        pars = {symmetry.parity(m) for m in self._terms}
        if len(pars) > 1:
            return None
        return pars.pop() if pars else 1

    def substitute_scale(self, factors: Sequence) -> "Polynomial":
        """Return p(a_1 x_1, ..., a_n x_n) for rational factors a_i."""
        fs = [_as_fraction(a) for a in factors]
        out = {}
        for m, c in self._terms.items():
            t = c
            for a, e in zip(fs, m):
                t *= a**e
            out[m] = t
        return Polynomial(out, self.n_vars)

    def to_string(self, names: Sequence[str] | None = None) -> str:
        return format_polynomial(self, names)

    def __repr__(self):
        return f"Polynomial({self.to_string()!r})"

    __str__ = to_string


def _fmono(point, m) -> float:
    t = 1.0
    for x, e in zip(point, m):
        if e:
            t *= float(x) ** e
    return t


def default_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def format_monomial(m: Monomial, names: Sequence[str]) -> str:
    parts = []
    for name, e in zip(names, m):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts)


def format_polynomial(p: Polynomial, names: Sequence[str] | None = None) -> str:
    """Render as e.g. ``-60*x1 + 60*x2 - 1/3*x2^3`` (graded order, exact)."""
    names = list(names) if names is not None else default_names(p.n_vars)
    if p.is_zero():
        return "0"
    out = []
    for m in p.support():
        c = p.coefficient(m)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        mono = format_monomial(m, names)
        if not mono:
            body = str(a)
        elif a == 1:
            body = mono
        else:
            body = f"{a}*{mono}"
        out.append((sign, body))
    s0, b0 = out[0]
    text = ("-" if s0 == "-" else "") + b0
    for s, b in out[1:]:
        text += f" {s} {b}"
    return text


# parsing -------------------------------------------------------------------
_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


class PolynomialParseError(ValueError):
    pass


def parse_polynomial(text: str, names: Sequence[str] | None = None, n_vars: int | None = None) -> Polynomial:
    """Parse exact polynomial text such as ``60*x2 - 60*x1`` or ``-1/3*x2^3``.

    Supports ``+ - * / ^ **`` and parentheses. Division is only allowed by
    rational constants. Numbers are integers; decimal points are rejected so
    that nothing passes through a float.
    """
    if names is None:
        if n_vars is None:
            raise ValueError("need variable names or n_vars")
        names = default_names(n_vars)
    names = list(names)
    n = len(names)
    index = {name: i for i, name in enumerate(names)}

    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if not mt or mt.end() == pos:
            raise PolynomialParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        num, ident, op = mt.groups()
        if num is not None:
            tokens.append(("num", int(num)))
        elif ident is not None:
            if ident not in index:
                raise PolynomialParseError(f"unknown variable {ident!r}")
            tokens.append(("var", index[ident]))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = mt.end()
    if not tokens:
        raise PolynomialParseError("empty polynomial")

    i = 0

    def peek():
        return tokens[i] if i < len(tokens) else (None, None)

    def take():
        nonlocal i
        tok = tokens[i]
        i += 1
        return tok

    def expr():
        sign = 1
        if peek() == ("op", "-"):
            take()
            sign = -1
        elif peek() == ("op", "+"):
            take()
        acc = term() * sign
        while peek() in (("op", "+"), ("op", "-")):
            op = take()[1]
            t = term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term():
        acc = power()
        while peek() in (("op", "*"), ("op", "/")):
            op = take()[1]
            rhs = power()
            if op == "*":
                acc = acc * rhs
            else:
                if not rhs.is_constant() or rhs.is_zero():
                    raise PolynomialParseError("division only by nonzero constants")
                acc = acc / rhs.coefficient((0,) * n)
        return acc

    def power():
        base = atom()
        if peek() == ("op", "^"):
            take()
            kind, val = take() if i < len(tokens) else (None, None)
            if kind != "num":
                raise PolynomialParseError("exponent must be a non-negative integer")
            base = base**val
        return base

    def atom():
        kind, val = peek()
        if kind == "num":
            take()
            return Polynomial.constant(val, n)
        if kind == "var":
            take()
            return Polynomial.variable(val, n)
        if (kind, val) == ("op", "("):
            take()
            inner = expr()
            if peek() != ("op", ")"):
                raise PolynomialParseError("missing ')'")
            take()
            return inner
        if (kind, val) == ("op", "-"):
            take()
            return -power()
        raise PolynomialParseError(f"unexpected token {val!r}")

    result = expr()
    if i != len(tokens):
        raise PolynomialParseError(f"trailing input after token {i}")
    return result


# operations ------------------------------------------------------------------
def monomials_up_to_degree(
    n_vars: int,
    d: int,
    parity: str | None = None,
    symmetry: SignSymmetry | None = None,
    include_constant: bool = False,
    min_degree: int = 0,
) -> list[Monomial]:
    """All monomials of total degree <= d in graded order, optionally parity-filtered.

    ``parity`` is ``"even"`` (invariant under ``symmetry``) or ``"odd"``
    (sign-changing).
    """
    if d < 0:
        raise ValueError("d must be >= 0")
    if parity is not None:
        if symmetry is None:
            raise ValueError("parity filter needs a symmetry")
        if parity not in ("even", "odd"):
            raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    want = {"even": 1, "odd": -1}.get(parity)
    out = []
    for deg in range(max(min_degree, 0), d + 1):
        if deg == 0 and not include_constant:
            continue
        for m in _monomials_of_degree(n_vars, deg):
            if want is not None and symmetry.parity(m) != want:
                continue
            out.append(m)
    return out


def _monomials_of_degree(n: int, deg: int) -> list[Monomial]:
    # compositions of deg into n parts, x1-heavy first
    out = []
    for cut in itertools.combinations(range(deg + n - 1), n - 1):
        parts = []
        prev = -1
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(deg + n - 2 - prev)
        out.append(tuple(parts))
    out.sort(key=monomial_key)
    return out


def lie_derivative(p: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """Sum_i dp/dx_i * f_i, exactly."""
    if len(f) != p.n_vars:
        raise ValueError(f"field has {len(f)} components, polynomial has {p.n_vars} variables")
    out = Polynomial.zero(p.n_vars)
    for i, fi in enumerate(f):
        if fi.n_vars != p.n_vars:
            raise ValueError("field component has wrong n_vars")
        d = p.diff(i)
        if d:
            out = out + d * fi
    return out


def coefficient_matrix(polys: Sequence[Polynomial]) -> tuple[list[list[Fraction]], list[Monomial]]:
    """Rows = polynomials, columns = union of supports in graded order."""
    support = sorted({m for p in polys for m in p._terms}, key=monomial_key)
    rows = [[p.coefficient(m) for m in support] for p in polys]
    return rows, support


def exact_rank_basis(polys: Sequence[Polynomial]) -> tuple[list[Polynomial], list[int]]:
    """Greedy maximal linearly independent sublist, first-come-first-kept.

    Uses exact incremental row reduction; no rank tolerance.
    """
    if not polys:
        raise ValueError("need at least one polynomial")
    n = polys[0].n_vars
    if any(p.n_vars != n for p in polys):
        raise ValueError("n_vars mismatch")
    # echelon rows stored as dict monomial->coeff with a pivot monomial
    echelon: list[tuple[Monomial, dict[Monomial, Fraction]]] = []
    kept, kept_idx = [], []
    for idx, p in enumerate(polys):
        row = dict(p._terms)
        for piv, erow in echelon:
            c = row.get(piv)
            if c:
                for m, v in erow.items():
                    s = row.get(m, 0) - c * v
                    if s:
                        row[m] = s
                    else:
                        row.pop(m, None)
        if row:
            piv = min(row, key=monomial_key)
            inv = 1 / row[piv]
            row = {m: v * inv for m, v in row.items()}
            # keep echelon reduced so later reductions see a consistent pivot set
            new_echelon = []
            for opiv, erow in echelon:
                c = erow.get(piv)
                if c:
                    erow = dict(erow)
                    for m, v in row.items():
                        s = erow.get(m, 0) - c * v
                        if s:
                            erow[m] = s
                        else:
                            erow.pop(m, None)
                new_echelon.append((opiv, erow))
            echelon = new_echelon + [(piv, row)]
            kept.append(p)
            kept_idx.append(idx)
    return kept, kept_idx


def is_equivariant(f: Sequence[Polynomial], symmetry: SignSymmetry) -> bool:
    """f_i(s.x) == s_i f_i(x) as polynomial identities."""
    return all(symmetry.apply(fi) == fi.scale(s) for fi, s in zip(f, symmetry.signs))


def polys_from_strings(texts: Iterable[str], names: Sequence[str]) -> list[Polynomial]:
    return [parse_polynomial(t, names) for t in texts]
