"""Exact linear algebra over Q on Python integers and Fractions.

Matrices are lists of rows. Sparse rows are ``dict[int, value]``.
Heavy routines work on integer matrices (rows scaled by the lcm of their
denominators) and use fraction-free Bareiss elimination so that the only
big-number type is ``int``.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np

try:  # GMP integers make fraction-free elimination on huge entries much faster
    from gmpy2 import divexact as _divexact, mpz as _big
except ImportError:  # pragma: no cover - pure Python fallback
    _big = int

    def _divexact(a, b):
        return a // b

# Largest prime below 2**31; products of two residues fit in int64.
MODULUS = 2147483647


class SingularMatrixError(ArithmeticError):
    pass


def lcm_of_denominators(values) -> int:
    out = 1
    for v in values:
        d = v.denominator if isinstance(v, Fraction) else 1
        if d != 1:
            out = math.lcm(out, d)
    return out


def integer_row(row: dict[int, Fraction], rhs: Fraction = Fraction(0)) -> tuple[dict[int, int], int]:
    """Scale a sparse rational row (and its rhs) to integers by a positive factor."""
    m = lcm_of_denominators(list(row.values()) + [rhs])
    return {j: int(v * m) for j, v in row.items()}, int(rhs * m)


def common_denominator(vec: Sequence[Fraction]) -> tuple[list[int], int]:
    """Write vec = Y / D with integers Y and D > 0."""
    D = lcm_of_denominators(vec)
    return [int(v * D) for v in vec], D


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form with exact Fractions; returns (R, pivot_columns)."""
    R = [[Fraction(x) for x in r] for r in rows]
    if not R:
        return R, []
    n_cols = len(R[0])
    pivots = []
    r = 0
    for col in range(n_cols):
        piv = next((i for i in range(r, len(R)) if R[i][col] != 0), None)
        if piv is None:
            continue
        R[r], R[piv] = R[piv], R[r]
        inv = 1 / R[r][col]
        R[r] = [x * inv for x in R[r]]
        for i in range(len(R)):
            if i != r and R[i][col] != 0:
                c = R[i][col]
                R[i] = [a - c * b for a, b in zip(R[i], R[r])]
        pivots.append(col)
        r += 1
        if r == len(R):
            break
    return R, pivots


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    return len(rref(rows)[1])


def nullspace(rows: Sequence[Sequence[Fraction]], n_cols: int) -> list[list[Fraction]]:
    """Basis of {x : rows @ x = 0}; one vector per free column, that column set to 1."""
    if not rows:
        return [[Fraction(int(i == j)) for i in range(n_cols)] for j in range(n_cols)]
    R, pivots = rref(rows)
    free = [j for j in range(n_cols) if j not in pivots]
    basis = []
    for fj in free:
        x = [Fraction(0)] * n_cols
        x[fj] = Fraction(1)
        for r, pc in enumerate(pivots):
            x[pc] = -R[r][fj]
        basis.append(x)
    return basis


def independent_rows_modp(rows: Sequence[dict[int, int]], n_cols: int, p: int = MODULUS) -> list[int]:
    """Indices of a row subset independent mod p, chosen greedily in order.

    Rows independent mod p are independent over Q (a nonzero minor mod p is a
    nonzero integer), so the selection is always sound; it is maximal unless
    p divides every maximal minor, which callers detect and repair.
    """
    if not rows:
        return []
    M = np.zeros((len(rows), n_cols), dtype=np.int64)
    for i, r in enumerate(rows):
        for j, v in r.items():
            M[i, j] = v % p
    basis = np.zeros((0, n_cols), dtype=np.int64)
    piv_cols: list[int] = []
    chosen = []
    for i in range(len(rows)):
        v = M[i].copy()
        for b, pc in zip(basis, piv_cols):
            if v[pc]:
                v = (v - v[pc] * b) % p
        nz = np.flatnonzero(v)
        if nz.size == 0:
            continue
        pc = int(nz[0])
        inv = pow(int(v[pc]), p - 2, p)
        v = (v * inv) % p
        basis = np.vstack([basis, v])
        piv_cols.append(pc)
        chosen.append(i)
    return chosen


def bareiss_solve(M: Sequence[Sequence[int]], b: Sequence[int]) -> list[Fraction]:
    """Solve M x = b for square nonsingular integer M with fraction-free elimination."""
    n = len(M)
    A = [[_big(v) for v in row] + [_big(bi)] for row, bi in zip(M, b)]
    prev = _big(1)
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                raise SingularMatrixError("matrix is singular")
            A[k], A[swap] = A[swap], A[k]
        akk = A[k][k]
        rowk = A[k]
        for i in range(k + 1, n):
            rowi = A[i]
            aik = rowi[k]
            if aik == 0:
                # (akk * a_ij - 0) / prev, still exact
                for j in range(k + 1, n + 1):
                    rowi[j] = _divexact(akk * rowi[j], prev)
            else:
                for j in range(k + 1, n + 1):
                    rowi[j] = _divexact(akk * rowi[j] - aik * rowk[j], prev)
            rowi[k] = 0
        prev = akk
    if n and A[n - 1][n - 1] == 0:
        raise SingularMatrixError("matrix is singular")
    # back substitution on a common denominator: x_i = X_i / det, all X_i integers
    det = A[n - 1][n - 1] if n else _big(1)
    X = [_big(0)] * n
    for i in range(n - 1, -1, -1):
        row = A[i]
        acc = row[n] * det
        for j in range(i + 1, n):
            if row[j]:
                acc -= row[j] * X[j]
        X[i] = _divexact(acc, row[i])
    return [Fraction(int(xi), int(det)) for xi in X]


def leading_minors(M: Sequence[Sequence[int]], stop_at_nonpositive: bool = False) -> list[int]:
    """Leading principal minors of an integer matrix, via Bareiss without pivoting.

    The k-th Bareiss pivot equals the k-th leading principal minor as long as
    the previous pivots are nonzero; a zero minor ends the computation.
    """
    n = len(M)
    A = [[_big(v) for v in r] for r in M]
    minors = []
    prev = _big(1)
    for k in range(n):
        akk = A[k][k]
        minors.append(int(akk))
        if akk == 0 or (stop_at_nonpositive and akk < 0):
            break
        for i in range(k + 1, n):
            aik = A[i][k]
            rowi, rowk = A[i], A[k]
            for j in range(k + 1, n):
                rowi[j] = _divexact(akk * rowi[j] - aik * rowk[j], prev)
        prev = akk
    return minors


def to_integer_matrix(M: Sequence[Sequence[Fraction]]) -> tuple[list[list[int]], int]:
    """Scale a rational matrix by one positive integer so all entries are integers."""
    d = lcm_of_denominators(v for r in M for v in r)
    return [[int(Fraction(v) * d) for v in r] for r in M], d
