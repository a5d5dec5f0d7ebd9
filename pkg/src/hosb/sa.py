"""Simulated annealing directly on multilinear costs.

One step is a full sequential sweep over the variables in ascending index
order. The inverse temperature is constant within a sweep and ramps
linearly, ``beta_k = beta_final * k / n_steps`` for sweep ``k = 1..n_steps``.
A flip of ``s_i`` is accepted iff ``beta * dE_i < -ln R`` with ``R`` uniform.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .model import PolyProblem, evaluate
from .sb import SUCCESS_TOL, RunResult


@dataclass(frozen=True)
class SAParams:
    n_steps: int
    beta_final: float = 2.0

    def __post_init__(self):
        if not self.beta_final > 0:
            raise ValueError("beta_final must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")

    def with_steps(self, n_steps: int) -> "SAParams":
        return replace(self, n_steps=n_steps)


@dataclass
class SweepRecord:
    sweep: int
    beta: float
    spins: np.ndarray          # (R, N), live view; copy to keep
    energy: np.ndarray         # running energy from accepted deltas, (R,)
    uphill_proposed: np.ndarray
    uphill_accepted: np.ndarray


def _neighbour_tables(problem: PolyProblem):
    """Per variable: (others, coeffs) with ``others`` of shape ``(d_i, K-1)``.

    ``others`` lists the remaining members of each incident term, padded
    with index N (a constant +1 spin column).
    """
    n = problem.num_vars
    k = max(problem.max_degree, 1)
    tables = []
    for i in range(n):
        rows = []
        coeffs = []
        for m in problem.adjacency[i]:
            t = problem.terms[m]
            rest = [j for j in t.indices if j != i]
            rows.append(rest + [n] * (k - 1 - len(rest)))
            coeffs.append(t.coefficient)
        others = np.array(rows, dtype=np.intp).reshape(len(rows), k - 1)
        tables.append((others, np.array(coeffs, dtype=float)))
    return tables


def metropolis_accept(beta, d_e, r):
    """Flip rule ``beta * dE < -ln R``; strict, so ``beta = 0`` accepts whenever ``R < 1``."""
    return beta * np.asarray(d_e) < -np.log(r)


def _uniform_open(rngs: Sequence[np.random.Generator], n: int) -> np.ndarray:
    # 1 - U(0,1] lies in (0, 1], so -ln R is finite and non-negative
    return np.stack([1.0 - g.random(n) for g in rngs])


def anneal(problem: PolyProblem, params: SAParams,
           rngs: Sequence[np.random.Generator]) -> Iterator[SweepRecord]:
    """Yield the batch state after every sweep.

    Each generator drives one run: it first draws the initial spins and then
    ``N`` uniforms per sweep, so a run is reproducible on its own.
    """
    n = problem.num_vars
    if n < 1:
        raise ValueError("problem has no variables")
    r = len(rngs)
    s = np.ones((r, n + 1))
    s[:, :n] = np.stack([1.0 - 2.0 * g.integers(0, 2, n) for g in rngs])
    energy = np.asarray(evaluate(problem, s[:, :n]), dtype=float).copy()
    tables = _neighbour_tables(problem)
    rows = np.arange(r)
    for k in range(1, params.n_steps + 1):
        beta = params.beta_final * k / params.n_steps
        r_draw = _uniform_open(rngs, n)
        up_prop = np.zeros(r, dtype=np.int64)
        up_acc = np.zeros(r, dtype=np.int64)
        for i, (others, coeffs) in enumerate(tables):
            if len(coeffs) == 0:
                d_e = np.zeros(r)
            else:
                field = np.prod(s[:, others], axis=-1) @ coeffs
                d_e = 2.0 * s[:, i] * field
            accept = metropolis_accept(beta, d_e, r_draw[:, i])
            uphill = d_e > 0
            up_prop += uphill
            up_acc += uphill & accept
            if accept.any():
                hit = rows[accept]
                s[hit, i] = -s[hit, i]
                energy[hit] += d_e[hit]
        yield SweepRecord(k, beta, s[:, :n], energy, up_prop, up_acc)


def run_sa_batch(problem: PolyProblem, params: SAParams, rngs: Sequence[np.random.Generator],
                 known_optimum: float | None = None) -> list[RunResult]:
    last = None
    for last in anneal(problem, params, rngs):
        pass
    spins = last.spins.astype(np.int8)
    energies = evaluate(problem, spins)
    return [
        RunResult(spins[j], float(energies[j]), params.n_steps,
                  None if known_optimum is None else bool(energies[j] <= known_optimum + SUCCESS_TOL))
        for j in range(len(rngs))
    ]


def run_sa(problem: PolyProblem, params: SAParams, rng: np.random.Generator,
           known_optimum: float | None = None) -> RunResult:
    return run_sa_batch(problem, params, [rng], known_optimum)[0]
