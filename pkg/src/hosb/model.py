"""Sparse multilinear spin cost functions.

A problem is a list of monomials over spins ``s_i = +-1`` with energy

    E(s) = - sum_m coeff_m * prod_{i in indices_m} s_i

Every kernel accepts a single configuration of shape ``(N,)`` or a batch of
shape ``(R, N)``; batched rows are processed independently and give the same
floating-point result as processing each row alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

DEFAULT_EPS = 1e-14


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Term:
    coefficient: float
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("a term needs at least one index")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def degree(self) -> int:
        return len(self.indices)


class PolyProblem:
    """Immutable sparse multilinear polynomial over ``num_vars`` spins.

    Parameters
    ----------
    num_vars : int
        Number of spin variables N.
    terms : sequence of Term
        Monomials with canonical (sorted, distinct) index tuples. Index sets
        must be pairwise distinct; use :meth:`from_terms` to fold raw input.
    max_degree : int, optional
        Recorded maximum degree; defaults to the largest term length.
    """

    def __init__(self, num_vars: int, terms: Sequence[Term], max_degree: int | None = None):
        num_vars = int(num_vars)
        if num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        terms = tuple(terms)
        seen = set()
        for t in terms:
            if t.indices[0] < 0 or t.indices[-1] >= num_vars:
                raise ValueError(f"term indices {t.indices} out of range [0, {num_vars})")
            if t.indices in seen:
                raise ValueError(f"duplicate index set {t.indices}")
            seen.add(t.indices)
        actual = max((t.degree for t in terms), default=0)
        if max_degree is None:
            max_degree = actual
        if max_degree < actual:
            raise ValueError(f"max_degree {max_degree} below actual degree {actual}")

        self.num_vars = num_vars
        self.terms = terms
        self.max_degree = int(max_degree)
        self.adjacency = build_adjacency(num_vars, terms)
        self._build_arrays()

    @classmethod
    def from_terms(cls, num_vars: int, raw: Iterable[tuple[float, Iterable[int]]]) -> "PolyProblem":
        """Fold ``(coeff, indices)`` pairs into canonical terms.

        Indices are sorted and terms on the same set are summed, so an
        asymmetric ``J_ij`` / ``J_ji`` pair becomes one term with coefficient
        ``J_ij + J_ji``. Terms whose folded coefficient is zero are dropped.
        """
        acc: dict[tuple[int, ...], float] = {}
        for coeff, indices in raw:
            key = tuple(sorted(int(i) for i in indices))
            if len(set(key)) != len(key):
                raise ValueError(f"repeated index in term {key}")
            acc[key] = acc.get(key, 0.0) + float(coeff)
        terms = [Term(c, k) for k, c in acc.items() if c != 0.0]
        return cls(num_vars, terms)

    def _build_arrays(self):
        n, m = self.num_vars, len(self.terms)
        # Padded (M, K) index table for the reference kernels; padding points
        # at a constant 1 column appended to the input.
        k = max(self.max_degree, 1)
        idx = np.full((m, k), n, dtype=np.intp)
        for j, t in enumerate(self.terms):
            idx[j, : t.degree] = t.indices
        self._idx = idx
        self._coef = np.array([t.coefficient for t in self.terms], dtype=float)
        self._padded = bool(m) and bool((idx == n).any())

        # Fast kernels work on variable-major (N, R) arrays with terms grouped
        # by degree; _order maps group position back to term index.
        groups = []
        order = []
        for d in sorted({t.degree for t in self.terms}):
            ids = np.array([j for j, t in enumerate(self.terms) if t.degree == d], dtype=np.intp)
            cols = [np.ascontiguousarray(idx[ids, p]) for p in range(d)]
            groups.append((cols, self._coef[ids][:, None]))
            order.append(ids)
        self._groups = groups
        self._order = np.concatenate(order) if order else np.zeros(0, np.intp)
        rows = idx[self._order].ravel()
        cols = np.repeat(np.arange(m), k)
        keep = rows < n
        # N x M membership matrix in group order; row i selects the terms containing i.
        self._incidence = sp.csr_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, m))

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    def degree_of(self, i: int) -> int:
        return len(self.adjacency[i])

    def _gather(self, x: np.ndarray) -> np.ndarray:
        """Per-term factor values for an ``(R, N)`` batch, shape ``(R, M, K)``."""
        if self._padded:
            x = np.concatenate([x, np.ones((x.shape[0], 1), dtype=x.dtype)], axis=1)
        return x[:, self._idx]

    def products_vm(self, xt: np.ndarray) -> np.ndarray:
        """``coeff_m * prod_{i in m} x_i`` for variable-major ``(N, R)`` input.

        Returns ``(M, R)`` with terms in internal group order.
        """
        parts = []
        for cols, coef in self._groups:
            out = np.take(xt, cols[0], axis=0)
            for c in cols[1:]:
                out *= np.take(xt, c, axis=0)
            out *= coef
            parts.append(out)
        if len(parts) == 1:
            return parts[0]
        if not parts:
            return np.zeros((0, xt.shape[1]))
        return np.concatenate(parts, axis=0)

    def scatter_vm(self, per_term: np.ndarray) -> np.ndarray:
        """Sum ``(M, R)`` per-term values into their members -> ``(N, R)``."""
        return self._incidence @ per_term

    def __repr__(self):
        return f"PolyProblem(num_vars={self.num_vars}, num_terms={self.num_terms}, max_degree={self.max_degree})"

    def __eq__(self, other):
        if not isinstance(other, PolyProblem):
            return NotImplemented
        return self.num_vars == other.num_vars and self.terms == other.terms


def build_adjacency(num_vars: int, terms: Sequence[Term]) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(num_vars)]
    for m, t in enumerate(terms):
        for i in t.indices:
            adj[i].append(m)
    return adj


def _as_batch(problem: PolyProblem, x, name: str = "x") -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != problem.num_vars:
        raise ValueError(f"{name} has shape {np.shape(x)}, expected (..., {problem.num_vars})")
    return arr, single


def _spin_batch(problem: PolyProblem, s) -> tuple[np.ndarray, bool]:
    arr, single = _as_batch(problem, s, "s")
    if not np.all(np.abs(arr) == 1.0):
        raise ValueError("spin configuration entries must be exactly +1 or -1")
    return arr, single


def evaluate(problem: PolyProblem, s) -> float | np.ndarray:
    """Energy of one configuration ``(N,)`` or a batch ``(R, N)``.

    Real-valued inputs are accepted as well; the multilinear extension is
    evaluated in that case.
    """
    arr, single = _as_batch(problem, s, "s")
    if problem.num_terms == 0:
        e = np.zeros(arr.shape[0])
    else:
        # sequential accumulation: a row's energy does not depend on the batch
        e = -np.add.accumulate(problem.products_vm(np.ascontiguousarray(arr.T)), axis=0)[-1]
    return float(e[0]) if single else e


def gradient_direct(problem: PolyProblem, x) -> np.ndarray:
    """Reference force ``-dE/dx_i`` built from exclusion products.

    Each term contributes ``coeff * prod_{j != i} x_j`` to every member
    ``i``; no division is involved.
    """
    arr, single = _as_batch(problem, x)
    out = np.zeros_like(arr)
    if problem.num_terms:
        factors = problem._gather(arr)
        k = factors.shape[-1]
        excl = np.stack([np.prod(np.delete(factors, p, axis=-1), axis=-1) for p in range(k)], axis=-1)
        excl *= problem._coef[:, None]
        # accumulate term by term in the same order as the scatter kernels,
        # so sums over identical values agree bit for bit
        order = problem._order
        cols = problem._idx[order].ravel()
        keep = cols < problem.num_vars
        np.add.at(out, (slice(None), cols[keep]), excl[:, order, :].reshape(len(arr), -1)[:, keep])
    return out[0] if single else out


def gradient_fast(problem: PolyProblem, x, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Force via the division trick.

    The full product of every term is computed once, accumulated into each
    member variable, and slot ``i`` is divided by ``x_i + eps``. Agrees with
    :func:`gradient_direct` when ``|x_i|`` is not tiny.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    arr, single = _as_batch(problem, x)
    g = _fast_batch(problem, arr, eps)
    return g[0] if single else g


def _fast_batch(problem: PolyProblem, x: np.ndarray, eps: float) -> np.ndarray:
    return _fast_vm(problem, np.ascontiguousarray(x.T), eps).T


def _fast_vm(problem: PolyProblem, xt: np.ndarray, eps: float) -> np.ndarray:
    if problem.num_terms == 0:
        return np.zeros_like(xt)
    g = problem.scatter_vm(problem.products_vm(xt))
    g /= xt + eps
    return g


def gradient_discrete(problem: PolyProblem, s) -> np.ndarray:
    """Exact force at a spin configuration, ``s_i * sum_{m ni i} coeff_m prod s``."""
    arr, single = _spin_batch(problem, s)
    g = _discrete_batch(problem, arr)
    return g[0] if single else g


def _discrete_batch(problem: PolyProblem, s: np.ndarray) -> np.ndarray:
    return _discrete_vm(problem, np.ascontiguousarray(s.T)).T


def _discrete_vm(problem: PolyProblem, st: np.ndarray) -> np.ndarray:
    if problem.num_terms == 0:
        return np.zeros_like(st)
    g = problem.scatter_vm(problem.products_vm(st))
    g *= st
    return g


def delta_energy(problem: PolyProblem, s, i: int) -> float:
    """``E(s with s_i flipped) - E(s)`` using only the terms containing ``i``."""
    if not 0 <= i < problem.num_vars:
        raise IndexError(f"variable index {i} out of range [0, {problem.num_vars})")
    arr = np.asarray(s, dtype=float)
    if arr.shape != (problem.num_vars,):
        raise ValueError(f"s has shape {arr.shape}, expected ({problem.num_vars},)")
    total = 0.0
    for m in problem.adjacency[i]:
        t = problem.terms[m]
        total += t.coefficient * np.prod(arr[list(t.indices)])
    return 2.0 * total


def flip(s, i: int) -> np.ndarray:
    out = np.array(s, copy=True)
    out[i] = -out[i]
    return out


def spins_from_positions(x) -> np.ndarray:
    """Sign readout with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def all_spin_configs(n: int) -> np.ndarray:
    """Every configuration of ``n`` spins as rows of a ``(2**n, n)`` int8 array.

    Row ``k`` has ``s_i = -1`` exactly where bit ``i`` of ``k`` is set.
    """
    k = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (k >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


# --- text format ---------------------------------------------------------

def write_pubo(problem: PolyProblem, fh: TextIO):
    fh.write(f"p pubo {problem.num_vars} {problem.num_terms}\n")
    for t in problem.terms:
        idx = " ".join(str(i) for i in t.indices)
        fh.write(f"{t.coefficient!r} {t.degree} {idx}\n")


def read_pubo(fh: TextIO) -> PolyProblem:
    """Parse the ``p pubo <N> <T>`` format; raises :class:`ParseError`."""
    header = None
    raw = []
    for lineno, line in enumerate(fh, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if header is None:
            if len(fields) != 4 or fields[:2] != ["p", "pubo"]:
                raise ParseError("expected header 'p pubo <N> <T>'", lineno)
            try:
                header = (int(fields[2]), int(fields[3]))
            except ValueError:
                raise ParseError("non-integer size in header", lineno) from None
            if header[0] < 0 or header[1] < 0:
                raise ParseError("negative size in header", lineno)
            continue
        try:
            coeff = float(fields[0])
            k = int(fields[1])
            idx = [int(v) for v in fields[2:]]
        except (ValueError, IndexError):
            raise ParseError("expected '<coeff> <k> <i1> ... <ik>'", lineno) from None
        if k < 1 or len(idx) != k:
            raise ParseError(f"term declares {k} indices but lists {len(idx)}", lineno)
        if any(i < 0 or i >= header[0] for i in idx):
            raise ParseError("index out of range", lineno)
        if len(set(idx)) != k:
            raise ParseError("repeated index within a term", lineno)
        raw.append((coeff, idx))
    if header is None:
        raise ParseError("missing header", 1)
    if len(raw) != header[1]:
        raise ParseError(f"header declares {header[1]} terms, found {len(raw)}", lineno if raw else 1)
    return PolyProblem.from_terms(header[0], raw)
