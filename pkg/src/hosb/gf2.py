"""Linear algebra over GF(2) with rows packed into Python integers.

Bit ``j`` of a row integer holds column ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def pack_bits(bits) -> int:
    value = 0
    for j, b in enumerate(np.asarray(bits, dtype=np.int64).ravel()):
        if b & 1:
            value |= 1 << j
    return value


def unpack_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> j) & 1 for j in range(width)], dtype=np.uint8)


@dataclass(frozen=True)
class Gf2Matrix:
    rows: tuple[int, ...]
    n_cols: int

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        limit = 1 << self.n_cols
        for i, r in enumerate(self.rows):
            if r < 0 or r >= limit:
                raise ValueError(f"row {i} has bits beyond column {self.n_cols - 1}")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), self.n_cols

    @classmethod
    def from_dense(cls, a) -> "Gf2Matrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.int64))
        return cls(tuple(pack_bits(row) for row in a), a.shape[1])

    def to_dense(self) -> np.ndarray:
        return np.array([unpack_bits(r, self.n_cols) for r in self.rows], dtype=np.uint8).reshape(self.shape)

    def matvec(self, x) -> np.ndarray:
        """``A x mod 2`` for a bit vector ``x``."""
        xv = pack_bits(x)
        return np.array([(r & xv).bit_count() & 1 for r in self.rows], dtype=np.uint8)


@dataclass
class Gf2Solution:
    solution: np.ndarray | None
    rank: int
    nullity: int
    pivots: list[int] = field(default_factory=list)
    nullspace: list[np.ndarray] = field(default_factory=list)

    @property
    def consistent(self) -> bool:
        return self.solution is not None

    @property
    def count(self) -> int:
        """Number of solutions (0 when inconsistent)."""
        return 2**self.nullity if self.consistent else 0

    def all_solutions(self) -> np.ndarray:
        """Every solution as rows of a ``(2**nullity, n)`` array."""
        if not self.consistent:
            return np.zeros((0, self.rank + self.nullity), dtype=np.uint8)
        base = pack_bits(self.solution)
        basis = [pack_bits(v) for v in self.nullspace]
        n = len(self.solution)
        out = []
        for mask in range(2**len(basis)):
            v = base
            for k, vec in enumerate(basis):
                if (mask >> k) & 1:
                    v ^= vec
            out.append(unpack_bits(v, n))
        return np.array(out, dtype=np.uint8)


def _rref(rows: Sequence[int], n_cols: int) -> tuple[list[int], list[int]]:
    """Reduced row echelon form over the first ``n_cols`` bits.

    Returns the reduced rows (pivot rows first, then the rest) and the pivot
    columns.
    """
    rows = list(rows)
    pivots = []
    r = 0
    for col in range(n_cols):
        bit = 1 << col
        sel = next((k for k in range(r, len(rows)) if rows[k] & bit), None)
        if sel is None:
            continue
        rows[r], rows[sel] = rows[sel], rows[r]
        piv = rows[r]
        for k in range(len(rows)):
            if k != r and rows[k] & bit:
                rows[k] ^= piv
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    return rows, pivots


def gf2_solve(a: Gf2Matrix, b) -> Gf2Solution:
    """Solve ``A x = b (mod 2)`` by Gaussian elimination.

    Free variables are set to 0 in the returned particular solution. An
    inconsistent system gives ``solution=None`` rather than raising.
    """
    m, n = a.shape
    b = np.asarray(b, dtype=np.int64).ravel()
    if len(b) != m:
        raise ValueError(f"b has length {len(b)}, expected {m}")
    rhs_bit = 1 << n
    aug = [row | (rhs_bit if bb & 1 else 0) for row, bb in zip(a.rows, b)]
    rows, pivots = _rref(aug, n)
    rank = len(pivots)
    nullity = n - rank
    if any(row == rhs_bit for row in rows[rank:]):
        return Gf2Solution(None, rank, nullity, pivots)

    x = np.zeros(n, dtype=np.uint8)
    for k, col in enumerate(pivots):
        x[col] = (rows[k] >> n) & 1

    pivot_set = set(pivots)
    free = [c for c in range(n) if c not in pivot_set]
    basis = []
    for f in free:
        v = np.zeros(n, dtype=np.uint8)
        v[f] = 1
        for k, col in enumerate(pivots):
            if (rows[k] >> f) & 1:
                v[col] = 1
        basis.append(v)
    return Gf2Solution(x, rank, nullity, pivots, basis)


def gf2_rank(a: Gf2Matrix) -> int:
    return len(_rref(a.rows, a.n_cols)[1])
