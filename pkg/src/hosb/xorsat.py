"""Planted three-regular 3-XORSAT (3R3X) instances."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .gf2 import Gf2Matrix, Gf2Solution, gf2_solve
from .model import ParseError, PolyProblem, Term

MIN_N = 4
DEFAULT_MAX_ATTEMPTS = 100_000


class GenerationError(RuntimeError):
    pass


@dataclass
class Xorsat3Instance:
    """``N`` parity clauses over ``N`` variables.

    ``clauses[m]`` lists the three variables of clause ``m`` in column
    order; each column is a permutation of ``0..N-1``. ``b[m]`` is the
    clause parity and ``planted`` an optional satisfying bit assignment.
    """

    n: int
    clauses: np.ndarray
    b: np.ndarray
    planted: np.ndarray | None = None

    def __post_init__(self):
        self.clauses = np.asarray(self.clauses, dtype=np.int64).reshape(-1, 3)
        self.b = np.asarray(self.b, dtype=np.uint8).ravel()
        if self.planted is not None:
            self.planted = np.asarray(self.planted, dtype=np.uint8).ravel()

    def validate(self):
        """Raise ``ValueError`` if any structural invariant is broken."""
        n, c = self.n, self.clauses
        if c.shape != (n, 3) or self.b.shape != (n,):
            raise ValueError(f"expected {n} clauses and {n} parity bits")
        if np.any(self.b > 1):
            raise ValueError("parity bits must be 0 or 1")
        ref = np.arange(n)
        for col in range(3):
            if not np.array_equal(np.sort(c[:, col]), ref):
                raise ValueError(f"column {col} is not a permutation of 0..{n - 1}")
        if not _clauses_ok(c):
            raise ValueError("clauses must have distinct indices and distinct index sets")
        if self.planted is not None:
            if self.planted.shape != (n,):
                raise ValueError("planted assignment has wrong length")
            if not np.array_equal(self.parities(self.planted), self.b):
                raise ValueError("planted assignment does not satisfy the clauses")

    def parities(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=np.int64)
        return (xi[self.clauses].sum(axis=1) & 1).astype(np.uint8)

    def incidence(self) -> Gf2Matrix:
        rows = [(1 << int(i)) | (1 << int(j)) | (1 << int(k)) for i, j, k in self.clauses]
        return Gf2Matrix(tuple(rows), self.n)

    def solve(self) -> Gf2Solution:
        return gf2_solve(self.incidence(), self.b)

    def planted_spins(self) -> np.ndarray:
        if self.planted is None:
            raise ValueError("instance has no planted assignment")
        return bits_to_spins(self.planted)

    def __eq__(self, other):
        if not isinstance(other, Xorsat3Instance):
            return NotImplemented
        same_planted = (self.planted is None and other.planted is None) or (
            self.planted is not None and other.planted is not None
            and np.array_equal(self.planted, other.planted))
        return (self.n == other.n and np.array_equal(self.clauses, other.clauses)
                and np.array_equal(self.b, other.b) and same_planted)


def bits_to_spins(xi) -> np.ndarray:
    """``s_i = (-1)**xi_i``."""
    return (1 - 2 * np.asarray(xi, dtype=np.int8)).astype(np.int8)


def spins_to_bits(s) -> np.ndarray:
    return (np.asarray(s) < 0).astype(np.uint8)


def _clauses_ok(c: np.ndarray) -> bool:
    srt = np.sort(c, axis=1)
    if np.any(srt[:, 1:] == srt[:, :-1]):
        return False
    return len(np.unique(srt, axis=0)) == len(srt)


def generate_3r3x(n: int, rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Xorsat3Instance:
    """Draw a random 3R3X instance with a planted solution.

    Three independent permutations form the clause columns and are redrawn
    together until every clause has distinct variables and no two clauses
    share a variable set. The parities are then set from a uniform planted
    assignment, so the instance is satisfiable by construction.
    """
    if n < MIN_N:
        raise ValueError(f"n must be at least {MIN_N}, got {n}")
    for _ in range(max_attempts):
        c = np.stack([rng.permutation(n) for _ in range(3)], axis=1)
        if _clauses_ok(c):
            break
    else:
        raise GenerationError(f"no valid 3R3X clause set for n={n} after {max_attempts} attempts")
    xi = rng.integers(0, 2, size=n).astype(np.uint8)
    inst = Xorsat3Instance(n, c, np.zeros(n, dtype=np.uint8), xi)
    inst.b = inst.parities(xi)
    return inst


def to_polynomial(inst: Xorsat3Instance) -> PolyProblem:
    """Cubic cost with coefficient ``(-1)**b_m`` on every clause.

    ``E(s) >= -N``, with equality exactly on satisfying assignments.
    """
    terms = [Term(1.0 - 2.0 * int(bm), tuple(sorted(int(v) for v in row)))
             for row, bm in zip(inst.clauses, inst.b)]
    return PolyProblem(inst.n, terms)


# --- text format ---------------------------------------------------------

def write_instance(inst: Xorsat3Instance, fh: TextIO):
    fh.write(f"p xorsat3 {inst.n}\n")
    for row, bm in zip(inst.clauses, inst.b):
        fh.write(f"{int(bm)} {int(row[0])} {int(row[1])} {int(row[2])}\n")
    if inst.planted is not None:
        fh.write("c planted " + "".join(str(int(v)) for v in inst.planted) + "\n")


def read_instance(fh: TextIO, validate: bool = True) -> Xorsat3Instance:
    """Parse the ``p xorsat3 <N>`` format; raises :class:`ParseError`."""
    n = None
    clauses, parity = [], []
    planted = None
    last = 0
    for lineno, line in enumerate(fh, start=1):
        last = lineno
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if n is None:
            if len(fields) != 3 or fields[:2] != ["p", "xorsat3"]:
                raise ParseError("expected header 'p xorsat3 <N>'", lineno)
            try:
                n = int(fields[2])
            except ValueError:
                raise ParseError("non-integer N in header", lineno) from None
            if n < 1:
                raise ParseError("N must be positive", lineno)
            continue
        if fields[0] == "c":
            if len(fields) == 3 and fields[1] == "planted":
                bits = fields[2]
                if len(bits) != n or set(bits) - {"0", "1"}:
                    raise ParseError("planted bitstring must have N characters of 0/1", lineno)
                planted = np.array([int(ch) for ch in bits], dtype=np.uint8)
            continue
        if planted is not None:
            raise ParseError("clause after planted footer", lineno)
        try:
            vals = [int(v) for v in fields]
        except ValueError:
            raise ParseError("expected '<b> <v1> <v2> <v3>'", lineno) from None
        if len(vals) != 4 or vals[0] not in (0, 1):
            raise ParseError("expected '<b> <v1> <v2> <v3>' with b in {0,1}", lineno)
        if any(v < 0 or v >= n for v in vals[1:]):
            raise ParseError("variable index out of range", lineno)
        parity.append(vals[0])
        clauses.append(vals[1:])
    if n is None:
        raise ParseError("missing header", 1)
    if len(clauses) != n:
        raise ParseError(f"expected {n} clauses, found {len(clauses)}", last)
    inst = Xorsat3Instance(n, np.array(clauses), np.array(parity), planted)
    if validate:
        try:
            inst.validate()
        except ValueError as exc:
            raise ParseError(str(exc), last) from None
    return inst
