"""Assembly of the SOS feasibility identity and its flattening to ``A y = c``.

For fixed C the unknowns are the upper triangles of the Gram blocks
(Q_e, Q_o on the observable library, P_e, P_o on monomial bases) and the
coefficient vectors v (auxiliary function) and rho (S-procedure multiplier).
The residual

    C (g_e' Q_e g_e + g_o' Q_o g_o) - (L g_e)' Q_e (L g_e) - (L g_o)' Q_o (L g_o)
      + L(v' a) - b_e' P_e b_e - b_o' P_o b_o + h (rho' c)

is affine in y: every unknown contributes ``y_j * (C * cpart_j + zpart_j)``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import exactla
from .polycore import (
    Monomial,
    Polynomial,
    exact_rank_basis,
    format_monomial,
    monomial_key,
    monomial_mul,
    monomials_up_to_degree,
)
from .systems import SystemSpec


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class DegreeConfig:
    """Degrees of the library (d_lib = d_g or d_w), V basis, SOS bases and multiplier."""

    mode: str
    d_lib: int
    d_a: int
    d_b: int
    d_rho: int | None = None

    def __post_init__(self):
        if self.mode not in ("parity", "lie_span"):
            raise ValueError(f"mode must be 'parity' or 'lie_span', got {self.mode!r}")
        for name in ("d_lib", "d_a", "d_b"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_rho is not None and self.d_rho < 0:
            raise ValueError("d_rho must be >= 0")

    @classmethod
    def lie_span_preset(cls, d_w: int) -> "DegreeConfig":
        """d_b = d_w + 1, d_a = 2 d_w + 1, d_rho = 2 d_w - 1."""
        return cls("lie_span", d_w, 2 * d_w + 1, d_w + 1, 2 * d_w - 1)

    def label(self) -> str:
        lib = "d_g" if self.mode == "parity" else "d_w"
        s = f"{lib}={self.d_lib} d_a={self.d_a} d_b={self.d_b}"
        if self.d_rho is not None:
            s += f" d_rho={self.d_rho}"
        return s


@dataclass(frozen=True)
class ObservableLibrary:
    """Library g split by parity. Elements are nonconstant and independent."""

    g_even: tuple[Polynomial, ...]
    g_odd: tuple[Polynomial, ...]
    provenance: str

    @property
    def all(self) -> tuple[Polynomial, ...]:
        return self.g_even + self.g_odd

    def __len__(self):
        return len(self.g_even) + len(self.g_odd)


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # "sym" or "vec"
    size: int
    offset: int

    @property
    def length(self) -> int:
        return self.size * (self.size + 1) // 2 if self.kind == "sym" else self.size


@dataclass(frozen=True)
class UnknownLayout:
    blocks: tuple[Block, ...]

    @classmethod
    def build(cls, spec: Sequence[tuple[str, str, int]]) -> "UnknownLayout":
        blocks, off = [], 0
        for name, kind, size in spec:
            b = Block(name, kind, size, off)
            blocks.append(b)
            off += b.length
        return cls(tuple(blocks))

    @property
    def total(self) -> int:
        return sum(b.length for b in self.blocks)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def names(self) -> list[str]:
        return [b.name for b in self.blocks]

    def sym_entries(self, b: Block):
        """(flat index, i, j) for the upper triangle of a symmetric block, row-major."""
        k = b.offset
        for i in range(b.size):
            for j in range(i, b.size):
                yield k, i, j
                k += 1

    def unpack(self, y: Sequence) -> dict[str, list]:
        """Split a flat vector into symmetric matrices (lists of rows) and vectors."""
        out = {}
        for b in self.blocks:
            if b.kind == "sym":
                M = [[None] * b.size for _ in range(b.size)]
                for k, i, j in self.sym_entries(b):
                    M[i][j] = M[j][i] = y[k]
                out[b.name] = M
            else:
                out[b.name] = list(y[b.offset : b.offset + b.size])
        return out

    def describe(self) -> str:
        return ", ".join(f"{b.name}:{b.kind}{b.size}" for b in self.blocks)


@dataclass(frozen=True)
class SosIdentity:
    """Symbolic identity for one system, library, bases and value of C."""

    system: SystemSpec
    library: ObservableLibrary
    C: Fraction
    a_basis: tuple[Polynomial, ...]
    b_even: tuple[Monomial, ...]
    b_odd: tuple[Monomial, ...]
    c_basis: tuple[Monomial, ...]
    constraint: Polynomial | None
    layout: UnknownLayout
    degrees: DegreeConfig | None = None
    # per-column polynomial contributions: residual = sum_j y_j (C cpart_j + zpart_j)
    cpart: tuple[Polynomial, ...] = field(default=(), repr=False)
    zpart: tuple[Polynomial, ...] = field(default=(), repr=False)
    trace_columns: tuple[int, ...] = field(default=(), repr=False)

    def with_C(self, C) -> "SosIdentity":
        return replace(self, C=Fraction(C))

    @property
    def gram_blocks(self) -> list[Block]:
        return [b for b in self.layout.blocks if b.kind == "sym"]

    def column_polynomial(self, j: int) -> Polynomial:
        return self.cpart[j] * self.C + self.zpart[j]

    def residual(self, y: Sequence) -> Polynomial:
        """Residual polynomial for exact y (zero iff the identity holds)."""
        n = self.system.n_vars
        acc: dict[Monomial, Fraction] = {}
        for j, yj in enumerate(y):
            yj = Fraction(yj)
            if not yj:
                continue
            for part, mult in ((self.cpart[j], self.C * yj), (self.zpart[j], yj)):
                for m, c in part.items():
                    acc[m] = acc.get(m, 0) + mult * c
        return Polynomial(acc, n)

    def lhs(self, y: Sequence) -> Polynomial:
        """C g'Qg - (Lg)'Q(Lg) + L(v'a): the part that is nonnegative on the constraint set."""
        keep = [b for b in self.layout.blocks if b.name in ("Q_e", "Q_o", "v")]
        n = self.system.n_vars
        acc: dict[Monomial, Fraction] = {}
        for b in keep:
            for j in range(b.offset, b.offset + b.length):
                yj = Fraction(y[j])
                if not yj:
                    continue
                for part, mult in ((self.cpart[j], self.C * yj), (self.zpart[j], yj)):
                    for m, c in part.items():
                        acc[m] = acc.get(m, 0) + mult * c
        return Polynomial(acc, n)

    def sos_part(self, y: Sequence) -> Polynomial:
        """b_e'P_e b_e + b_o'P_o b_o built directly from the Gram blocks.

        Computed independently of the column polynomials; when the identity
        holds it equals lhs(y) + h * rho'c.
        """
        n = self.system.n_vars
        parts = self.layout.unpack(list(y))
        acc: dict[Monomial, Fraction] = {}
        for name, basis in (("P_e", self.b_even), ("P_o", self.b_odd)):
            if name not in parts:
                continue
            M = parts[name]
            for i, mi in enumerate(basis):
                for j, mj in enumerate(basis):
                    m = monomial_mul(mi, mj)
                    acc[m] = acc.get(m, 0) + Fraction(M[i][j])
        return Polynomial(acc, n)

    def basis_for(self, name: str):
        return {
            "Q_e": self.library.g_even,
            "Q_o": self.library.g_odd,
            "P_e": self.b_even,
            "P_o": self.b_odd,
            "v": self.a_basis,
            "rho": self.c_basis,
        }[name]

    def without(self, drop: dict[str, Sequence[int]]) -> "SosIdentity":
        """Rebuild with the given basis positions removed.

        Keys are block names: Q_e / Q_o drop library elements, P_e / P_o drop
        SOS basis monomials, v and rho drop entries of a and c.
        """
        def keep(seq, name):
            bad = set(drop.get(name, ()))
            return tuple(x for i, x in enumerate(seq) if i not in bad)

        library = self.library
        if drop.get("Q_e") or drop.get("Q_o"):
            library = ObservableLibrary(keep(library.g_even, "Q_e"), keep(library.g_odd, "Q_o"),
                                        library.provenance + " (pruned)")
        return _assemble(
            self.system,
            library,
            self.C,
            keep(self.a_basis, "v"),
            keep(self.b_even, "P_e"),
            keep(self.b_odd, "P_o"),
            keep(self.c_basis, "rho"),
            self.degrees,
        )


@dataclass
class LinearCertificateSystem:
    """Exact ``A y = c``: one row per residual monomial, then the trace row."""

    rows: list[dict[int, Fraction]]
    c_vec: list[Fraction]
    layout: UnknownLayout
    row_labels: list[Monomial | str]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), self.layout.total

    def dense(self) -> list[list[Fraction]]:
        n = self.layout.total
        out = []
        for r in self.rows:
            row = [Fraction(0)] * n
            for j, v in r.items():
                row[j] = v
            out.append(row)
        return out

    def float_matrix(self) -> np.ndarray:
        A = np.zeros(self.shape)
        for i, r in enumerate(self.rows):
            for j, v in r.items():
                A[i, j] = float(v)
        return A

    def apply(self, y: Sequence) -> list[Fraction]:
        return [sum((v * Fraction(y[j]) for j, v in r.items()), Fraction(0)) for r in self.rows]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.shape}\n".encode())
        for r, c in zip(self.rows, self.c_vec):
            h.update(";".join(f"{j}:{v}" for j, v in sorted(r.items())).encode())
            h.update(f"|{c}\n".encode())
        return h.hexdigest()


# library ---------------------------------------------------------------------
def build_library(system: SystemSpec, cfg: DegreeConfig, restrict_degrees: bool = True) -> ObservableLibrary:
    """Parity mode: sign-changing monomials up to d_g. Lie-span mode: an
    independent basis of span{L_f w : w nonconstant monomial, deg w <= d_w},
    split by parity, restricted (by default) to the degree-compatible
    subspace described in :func:`_degree_compatible_span`.
    """
    n = system.n_vars
    sym = system.symmetry
    if cfg.mode == "parity":
        if sym is None:
            raise AssemblyError("parity library needs a sign symmetry")
        mons = monomials_up_to_degree(n, cfg.d_lib, parity="odd", symmetry=sym)
        if not mons:
            raise AssemblyError("no sign-changing monomials: library is empty")
        return ObservableLibrary((), tuple(Polynomial.from_monomial(m) for m in mons), f"parity_monomials(d_g={cfg.d_lib})")

    w_all = monomials_up_to_degree(n, cfg.d_lib)
    if sym is None:
        classes = {"even": w_all, "odd": []}
    else:
        classes = {
            "even": [m for m in w_all if sym.parity(m) == 1],
            "odd": [m for m in w_all if sym.parity(m) == -1],
        }
    out = {}
    for par, ws in classes.items():
        cands = [system.lie(Polynomial.from_monomial(w)) for w in ws]
        cands = [c for c in cands if not c.is_zero()]
        if restrict_degrees:
            cands = _degree_compatible_span(system, cands, cfg.d_b)
        out[par] = tuple(exact_rank_basis(cands)[0]) if cands else ()
    lib = ObservableLibrary(out["even"], out["odd"], f"lie_span(d_w={cfg.d_lib})")
    if len(lib) == 0:
        raise AssemblyError("library is empty")
    return lib


def _degree_compatible_span(system: SystemSpec, cands: list[Polynomial], d_b: int) -> list[Polynomial]:
    """Subspace of span(cands) whose members g satisfy deg g < d_b and deg L g <= d_b.

    Then (Lg)'Q(Lg) has the same top degree 2 d_b as the SOS side and
    C g'Qg stays strictly below it. Members with deg L g > d_b put terms into
    (Lg)'Q(Lg) that nothing can cancel while Q is definite, and members with
    deg g = d_b make the top-degree form indefinite in the momenta.
    Returned generators are individual candidates where possible.
    """
    if not cands:
        return []
    lie = [system.lie(c) for c in cands]
    high = sorted({m for p in cands for m, _ in p.items() if sum(m) >= d_b}, key=monomial_key)
    high_lie = sorted({m for p in lie for m, _ in p.items() if sum(m) > d_b}, key=monomial_key)
    if not high and not high_lie:
        return cands
    rows = [[p.coefficient(m) for p in cands] for m in high]
    rows += [[p.coefficient(m) for p in lie] for m in high_lie]
    out = []
    for vec in exactla.nullspace(rows, len(cands)):
        acc = Polynomial.zero(system.n_vars)
        for coef, p in zip(vec, cands):
            if coef:
                acc = acc + p.scale(coef)
        if not acc.is_zero():
            out.append(acc)
    return out


# bases -----------------------------------------------------------------------
def v_basis(system: SystemSpec, d_a: int, extra: Sequence[Polynomial] = ()) -> tuple[Polynomial, ...]:
    """Symmetry-invariant nonconstant monomials up to d_a, plus user extras."""
    n = system.n_vars
    if system.symmetry is None:
        mons = monomials_up_to_degree(n, d_a)
    else:
        mons = monomials_up_to_degree(n, d_a, parity="even", symmetry=system.symmetry)
    return tuple(Polynomial.from_monomial(m) for m in mons) + tuple(extra)


def sos_bases(system: SystemSpec, d_b: int) -> tuple[tuple[Monomial, ...], tuple[Monomial, ...]]:
    n = system.n_vars
    if system.symmetry is None:
        return tuple(monomials_up_to_degree(n, d_b, include_constant=True)), ()
    sym = system.symmetry
    return (
        tuple(monomials_up_to_degree(n, d_b, "even", sym, include_constant=True)),
        tuple(monomials_up_to_degree(n, d_b, "odd", sym)),
    )


def multiplier_basis(system: SystemSpec, d_rho: int) -> tuple[Monomial, ...]:
    n = system.n_vars
    if system.symmetry is None:
        return tuple(monomials_up_to_degree(n, d_rho, include_constant=True))
    return tuple(monomials_up_to_degree(n, d_rho, "even", system.symmetry, include_constant=True))


def reduce_sos_basis(
    b_blocks: Sequence[Sequence[Monomial]], available: set[Monomial]
) -> list[tuple[Monomial, ...]]:
    """Drop monomials m whose square can never be matched.

    If x^(2m) is not among the monomials the rest of the identity can
    produce, and 2m is not a sum of two distinct basis monomials of the
    same block, the diagonal Gram entry for m is forced to zero and the
    block can never be strictly definite. Iterated to a fixed point.
    """
    blocks = [list(b) for b in b_blocks]
    changed = True
    while changed:
        changed = False
        for bi, b in enumerate(blocks):
            keep = []
            pair_sums = {}
            for i, m1 in enumerate(b):
                for m2 in b[i + 1 :]:
                    s = tuple(x + y for x, y in zip(m1, m2))
                    pair_sums[s] = pair_sums.get(s, 0) + 1
            for m in b:
                sq = tuple(2 * e for e in m)
                if sq in available or pair_sums.get(sq):
                    keep.append(m)
                else:
                    changed = True
            blocks[bi] = keep
    return [tuple(b) for b in blocks]


# assembly --------------------------------------------------------------------
def assemble_identity(
    system: SystemSpec,
    library: ObservableLibrary,
    cfg: DegreeConfig,
    C,
    extra_v_basis: Sequence[Polynomial] = (),
    reduce_basis: bool = True,
) -> SosIdentity:
    C = Fraction(C)
    if len(library) == 0:
        raise AssemblyError("empty observable library")
    sym = system.symmetry
    if sym is not None:
        for g in library.g_even:
            if g.parity(sym) != 1:
                raise AssemblyError(f"g_even element {g} is not invariant")
        for g in library.g_odd:
            if g.parity(sym) != -1:
                raise AssemblyError(f"g_odd element {g} does not change sign")
    elif library.g_odd:
        raise AssemblyError("odd library block without a symmetry")
    if any(g.is_constant() for g in library.all):
        raise AssemblyError("constant library element cannot average to zero")

    qdeg = max(max(g.degree for g in library.all), max(system.lie(g).degree for g in library.all))
    if 2 * qdeg > 2 * cfg.d_b:
        raise AssemblyError(
            f"d_b={cfg.d_b} cannot absorb Q-terms of degree {2 * qdeg}; minimal workable d_b is {qdeg}"
        )
    if (system.constraint is not None) != (cfg.d_rho is not None):
        raise AssemblyError("d_rho must be given exactly when the system has a constraint")

    a = v_basis(system, cfg.d_a, extra_v_basis)
    if sym is not None:
        for p in a:
            if p.parity(sym) != 1:
                raise AssemblyError(f"V basis element {p} is not symmetry invariant")
    b_e, b_o = sos_bases(system, cfg.d_b)
    c = multiplier_basis(system, cfg.d_rho) if cfg.d_rho is not None else ()
    if reduce_basis:
        avail = set()
        for g in library.all:
            Lg = system.lie(g)
            for h in library.all:
                avail.update(m for m, _ in (g * h).items())
                avail.update(m for m, _ in (Lg * system.lie(h)).items())
        for p in a:
            avail.update(m for m, _ in system.lie(p).items())
        if system.constraint is not None:
            for m in c:
                avail.update(m for m, _ in (system.constraint * Polynomial.from_monomial(m)).items())
        b_e, b_o = reduce_sos_basis([b_e, b_o], avail)
    return _assemble(system, library, C, a, b_e, b_o, c, cfg)


def _assemble(system, library, C, a, b_e, b_o, c, cfg) -> SosIdentity:
    n = system.n_vars
    spec = []
    if library.g_even:
        spec.append(("Q_e", "sym", len(library.g_even)))
    if library.g_odd:
        spec.append(("Q_o", "sym", len(library.g_odd)))
    if b_e:
        spec.append(("P_e", "sym", len(b_e)))
    if b_o:
        spec.append(("P_o", "sym", len(b_o)))
    if a:
        spec.append(("v", "vec", len(a)))
    if c:
        spec.append(("rho", "vec", len(c)))
    layout = UnknownLayout.build(spec)

    zero = Polynomial.zero(n)
    cpart: list[Polynomial] = [zero] * layout.total
    zpart: list[Polynomial] = [zero] * layout.total
    trace_cols = []
    for name, g in (("Q_e", library.g_even), ("Q_o", library.g_odd)):
        if not g:
            continue
        blk = layout.block(name)
        Lg = [system.lie(p) for p in g]
        for k, i, j in layout.sym_entries(blk):
            mult = 1 if i == j else 2
            cpart[k] = (g[i] * g[j]).scale(mult)
            zpart[k] = (Lg[i] * Lg[j]).scale(-mult)
            if i == j:
                trace_cols.append(k)
    for name, b in (("P_e", b_e), ("P_o", b_o)):
        if not b:
            continue
        blk = layout.block(name)
        for k, i, j in layout.sym_entries(blk):
            mult = 1 if i == j else 2
            m = tuple(x + y for x, y in zip(b[i], b[j]))
            zpart[k] = Polynomial.from_monomial(m, -mult)
    if a:
        blk = layout.block("v")
        for i, p in enumerate(a):
            zpart[blk.offset + i] = system.lie(p)
    if c:
        blk = layout.block("rho")
        for i, m in enumerate(c):
            zpart[blk.offset + i] = system.constraint * Polynomial.from_monomial(m)

    return SosIdentity(
        system=system,
        library=library,
        C=Fraction(C),
        a_basis=tuple(a),
        b_even=tuple(b_e),
        b_odd=tuple(b_o),
        c_basis=tuple(c),
        constraint=system.constraint,
        layout=layout,
        degrees=cfg,
        cpart=tuple(cpart),
        zpart=tuple(zpart),
        trace_columns=tuple(trace_cols),
    )


def flatten(identity: SosIdentity) -> LinearCertificateSystem:
    """Coefficient matching: one row per monomial (graded order) plus sum tr Q = 1."""
    C = identity.C
    cols: dict[Monomial, dict[int, Fraction]] = {}
    for j in range(identity.layout.total):
        for part, mult in ((identity.cpart[j], C), (identity.zpart[j], Fraction(1))):
            if not mult:
                continue
            for m, v in part.items():
                row = cols.setdefault(m, {})
                s = row.get(j, 0) + mult * v
                if s:
                    row[j] = s
                else:
                    row.pop(j, None)
    labels = sorted((m for m, r in cols.items() if r), key=monomial_key)
    rows = [cols[m] for m in labels]
    c_vec = [Fraction(0)] * len(rows)
    rows.append({k: Fraction(1) for k in identity.trace_columns})
    c_vec.append(Fraction(1))
    return LinearCertificateSystem(rows, c_vec, identity.layout, labels + ["trace"])


def describe_bases(identity: SosIdentity) -> dict[str, list[str]]:
    names = identity.system.names
    return {
        "P_e": [format_monomial(m, names) or "1" for m in identity.b_even],
        "P_o": [format_monomial(m, names) or "1" for m in identity.b_odd],
        "rho": [format_monomial(m, names) or "1" for m in identity.c_basis],
    }
