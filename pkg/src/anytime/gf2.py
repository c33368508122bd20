"""Dense GF(2) linear algebra.

Matrices are plain ``numpy`` arrays of dtype ``uint8`` holding 0/1 entries.
Elimination packs each row into a Python integer (bit ``j`` = column ``j``)
so that row operations are single XORs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIQUE = "unique"
UNDERDETERMINED = "underdetermined"
INCONSISTENT = "inconsistent"


def as_bits(M) -> np.ndarray:
    """Coerce an array-like to a 2-D uint8 matrix with entries reduced mod 2."""
    A = np.asarray(M)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    return (A.astype(np.int64) % 2).astype(np.uint8)


def matmul(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    return ((A @ B) % 2).astype(np.uint8)


def pack_rows(M: np.ndarray) -> list[int]:
    packed = np.packbits(np.asarray(M, dtype=np.uint8), axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def unpack_rows(rows: list[int], cols: int) -> np.ndarray:
    nbytes = (cols + 7) // 8
    if not rows or not cols:
        return np.zeros((len(rows), cols), dtype=np.uint8)
    mask = (1 << cols) - 1
    buf = b"".join((r & mask).to_bytes(nbytes, "little") for r in rows)
    raw = np.frombuffer(buf, dtype=np.uint8).reshape(len(rows), nbytes)
    return np.unpackbits(raw, axis=1, count=cols, bitorder="little")


def _echelon_packed(rows: list[int], ncols: int, reduced: bool = False):
    rows = list(rows)
    pivots: list[int] = []
    r = 0
    m = len(rows)
    for col in range(ncols):
        bit = 1 << col
        piv = None
        for i in range(r, m):
            if rows[i] & bit:
                piv = i
                break
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        prow = rows[r]
        start = 0 if reduced else r + 1
        for i in range(start, m):
            if i != r and rows[i] & bit:
                rows[i] ^= prow
        pivots.append(col)
        r += 1
        if r == m:
            break
    return rows, pivots


def row_echelon(M) -> tuple[np.ndarray, list[int], int]:
    """Row echelon form over GF(2).

    Pivoting always takes the lowest-index column that still has a nonzero
    entry and, within it, the lowest-index row, so results are reproducible.

    Returns:
        ``(E, pivots, rank)`` with ``E`` row-equivalent to ``M``.
    """
    A = as_bits(M)
    rows, pivots = _echelon_packed(pack_rows(A), A.shape[1])
    return unpack_rows(rows, A.shape[1]), pivots, len(pivots)


def rank(M) -> int:
    A = as_bits(M)
    return len(_echelon_packed(pack_rows(A), A.shape[1])[1])


@dataclass
class SolveResult:
    """Outcome of :func:`solve`.

    ``kind`` is one of ``"unique"``, ``"underdetermined"`` or
    ``"inconsistent"``; ``x`` is ``None`` only in the inconsistent case.
    """

    kind: str
    x: np.ndarray | None = None
    null_basis: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.uint8))

    @property
    def unique(self) -> bool:
        return self.kind == UNIQUE


def solve(A, b) -> SolveResult:
    """Solve ``A x = b`` over GF(2).

    Free variables of an underdetermined system are set to zero; the null
    space basis is returned as the rows of ``null_basis``.
    """
    A = as_bits(A)
    b = np.asarray(b, dtype=np.int64).reshape(-1) % 2
    m, n = A.shape
    if len(b) != m:
        raise ValueError(f"right-hand side has length {len(b)}, expected {m}")
    aug = [r | (int(bi) << n) for r, bi in zip(pack_rows(A), b)]
    rows, pivots = _echelon_packed(aug, n, reduced=True)
    rk = len(pivots)
    # a leftover row 0...0 | 1 means no solution
    for r in rows[rk:]:
        if r >> n & 1:
            return SolveResult(INCONSISTENT)
    x = np.zeros(n, dtype=np.uint8)
    for i, col in enumerate(pivots):
        x[col] = rows[i] >> n & 1
    free = [c for c in range(n) if c not in set(pivots)]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, col in enumerate(pivots):
            if rows[i] >> f & 1:
                basis[k, col] = 1
    kind = UNIQUE if rk == n else UNDERDETERMINED
    return SolveResult(kind, x, basis)


def left_annihilator(M) -> np.ndarray:
    """Rows spanning the left null space of ``M``.

    Returns ``N`` with ``N @ M = 0`` (mod 2), ``rows(N) = rows(M) - rank(M)``
    and ``N`` of full row rank.
    """
    A = as_bits(M)
    m, n = A.shape
    # row reduce [M | I]; rows whose M part vanishes carry the annihilator
    aug = [r | (1 << (n + i)) for i, r in enumerate(pack_rows(A))]
    rows, pivots = _echelon_packed(aug, n)
    rk = len(pivots)
    tail = [r >> n for r in rows[rk:]]
    return unpack_rows(tail, m)


def null_space(M) -> np.ndarray:
    """Basis of ``{x : M x = 0}`` as rows."""
    A = as_bits(M)
    return solve(A, np.zeros(A.shape[0], dtype=np.uint8)).null_basis


class IncrementalBasis:
    """Column-space basis grown one vector at a time.

    Vectors are packed integers. ``xor_count`` tallies the row reductions
    performed, which is the elimination work of the caller.
    """

    def __init__(self):
        self._pivots: dict[int, int] = {}
        self.xor_count = 0

    @property
    def rank(self) -> int:
        return len(self._pivots)

    def reduce(self, v: int) -> int:
        while v:
            top = v.bit_length() - 1
            p = self._pivots.get(top)
            if p is None:
                return v
            v ^= p
            self.xor_count += 1
        return 0

    def add(self, v: int) -> bool:
        """Insert ``v``; return True if it increased the rank."""
        v = self.reduce(v)
        if not v:
            return False
        self._pivots[v.bit_length() - 1] = v
        return True
