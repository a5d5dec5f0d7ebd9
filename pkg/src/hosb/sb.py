"""Ballistic and discrete simulated bifurcation for multilinear costs.

Oscillator positions ``x`` and momenta ``y`` follow

    dy/dt = -(a0 - a(t)) x + c f(x),    dx/dt = a0 y

integrated with symplectic Euler (momentum first, then position) and
perfectly inelastic walls at ``|x| = 1``. The bifurcation parameter ramps
linearly from 0 to ``a0``; the spins are the signs of the final positions.

All run-level functions operate on batches of independent runs stacked as
rows of ``(R, N)`` arrays. A batch gives bit-identical rows to running each
member alone.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import _kernels
from .model import DEFAULT_EPS, PolyProblem, _discrete_vm, _fast_vm, evaluate, spins_from_positions

C_CAP = 1e15
MS_FLOOR = 1e-30
SUCCESS_TOL = 1e-9


class Variant(str, Enum):
    BALLISTIC = "ballistic"
    DISCRETE = "discrete"


class NumericError(FloatingPointError):
    """Non-finite oscillator state; ``step`` is the 1-based step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite oscillator state at step {step}")
        self.step = step


@dataclass(frozen=True)
class SBParams:
    dt: float
    c1: float
    n_steps: int
    variant: Variant = Variant.BALLISTIC
    a0: float = 1.0
    eps: float = DEFAULT_EPS
    # "step": recompute c from the current forces every step; "once": fix it
    # from the forces at the first step.
    normalize: str = "step"

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")
        if self.normalize not in ("step", "once"):
            raise ValueError("normalize must be 'step' or 'once'")

    def with_steps(self, n_steps: int) -> "SBParams":
        return replace(self, n_steps=n_steps)


@dataclass
class OscillatorState:
    x: np.ndarray
    y: np.ndarray

    def copy(self) -> "OscillatorState":
        return OscillatorState(self.x.copy(), self.y.copy())


@dataclass
class RunResult:
    spins: np.ndarray
    energy: float
    steps_used: int
    success: bool | None = None


def init_state(n: int, rng: np.random.Generator) -> OscillatorState:
    """Positions then momenta, each i.i.d. uniform on (-1, 1)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x = rng.uniform(-1.0, 1.0, n)
    y = rng.uniform(-1.0, 1.0, n)
    return OscillatorState(x, y)


def bifurcation_value(k: int, params: SBParams) -> float:
    """``a0 * k / n_steps`` for step ``k`` in ``0..n_steps``."""
    if not 0 <= k <= params.n_steps:
        raise ValueError(f"step {k} outside 0..{params.n_steps}")
    return params.a0 * k / params.n_steps


def normalization_factor(f, c1: float, nu: int | None = None) -> float | np.ndarray:
    """``c1 / rms(f)`` over the last axis, capped at ``c1 * 1e15``.

    ``nu`` is the number of spin variables and must match ``f``'s length.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim == 0 or f.shape[-1] == 0:
        raise ValueError("empty force vector")
    if nu is not None and nu != f.shape[-1]:
        raise ValueError(f"nu={nu} does not match force length {f.shape[-1]}")
    c = _normalize(np.mean(f * f, axis=-1), c1)
    return float(c) if c.ndim == 0 else c


def _normalize(ms: np.ndarray, c1: float) -> np.ndarray:
    return np.where(ms < MS_FLOOR, c1 * C_CAP, c1 / np.sqrt(np.maximum(ms, MS_FLOOR)))


def _forces_vm(problem: PolyProblem, xt: np.ndarray, params: SBParams) -> np.ndarray:
    if params.variant is Variant.BALLISTIC:
        return _fast_vm(problem, xt, params.eps)
    return _discrete_vm(problem, np.where(xt >= 0, 1.0, -1.0))


def _advance(xt: np.ndarray, yt: np.ndarray, problem: PolyProblem, params: SBParams,
             a: float, c=None) -> np.ndarray:
    """One in-place step on variable-major ``(N, R)`` arrays; returns the ``c`` used."""
    f = _forces_vm(problem, xt, params)
    if c is None:
        # accumulate is strictly sequential, so a run's c does not depend on
        # how many other runs share the batch
        c = _normalize(np.add.accumulate(f * f, axis=0)[-1] / f.shape[0], params.c1)
    f *= c
    f -= (params.a0 - a) * xt
    f *= params.dt
    yt += f
    xt += (params.a0 * params.dt) * yt
    hit = np.abs(xt) > 1.0
    if hit.any():
        np.clip(xt, -1.0, 1.0, out=xt)
        yt[hit] = 0.0
    return c


def sb_step(state: OscillatorState, problem: PolyProblem, params: SBParams, a: float,
            step: int = 0) -> OscillatorState:
    """Advance a state (single ``(N,)`` or batched ``(R, N)``) by one step."""
    x = np.asarray(state.x, dtype=float)
    y = np.asarray(state.y, dtype=float)
    single = x.ndim == 1
    if single:
        x, y = x[None, :], y[None, :]
    if x.shape[-1] != problem.num_vars or y.shape != x.shape:
        raise ValueError("state does not match problem size")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NumericError(step)
    xt, yt = np.array(x.T, order="C"), np.array(y.T, order="C")
    _advance(xt, yt, problem, params, a)
    if not (np.isfinite(xt).all() and np.isfinite(yt).all()):
        raise NumericError(step)
    x, y = xt.T.copy(), yt.T.copy()
    if single:
        x, y = x[0], y[0]
    return OscillatorState(x, y)


def evolve(problem: PolyProblem, params: SBParams, state: OscillatorState,
           backend: str = "auto") -> OscillatorState:
    """Run the full schedule ``k = 1..n_steps`` from ``state`` (batched).

    ``backend`` is ``"numpy"``, ``"numba"`` or ``"auto"`` (numba when
    importable). Both produce bit-identical trajectories.
    """
    if backend not in ("auto", "numpy", "numba"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and _kernels.evolve_runs is None:
        raise ValueError("numba backend unavailable")
    if backend != "numpy" and _kernels.evolve_runs is not None and problem.num_terms:
        return _evolve_compiled(problem, params, state)
    xt = np.array(np.atleast_2d(state.x).T, dtype=float, order="C")
    yt = np.array(np.atleast_2d(state.y).T, dtype=float, order="C")
    c = None
    for k in range(1, params.n_steps + 1):
        a = params.a0 * k / params.n_steps
        used = _advance(xt, yt, problem, params, a, c)
        if params.normalize == "once":
            c = used
        # walls keep finite x bounded; a NaN/inf always reaches y first
        if not np.isfinite(yt).all():
            raise NumericError(k)
    return OscillatorState(xt.T.copy(), yt.T.copy())


def _evolve_compiled(problem: PolyProblem, params: SBParams, state: OscillatorState) -> OscillatorState:
    tables = problem.__dict__.get("_flat")
    if tables is None:
        tables = problem.__dict__["_flat"] = _kernels.flat_tables(problem)
    x = np.array(np.atleast_2d(state.x), dtype=float, order="C")
    y = np.array(np.atleast_2d(state.y), dtype=float, order="C")
    fail = _kernels.evolve_runs(
        x, y, *tables, params.n_steps, float(params.a0), float(params.dt), float(params.c1),
        float(params.eps), params.variant is Variant.DISCRETE, params.normalize == "once",
        C_CAP, MS_FLOOR)
    if fail.any():
        raise NumericError(int(fail[fail > 0].min()))
    return OscillatorState(x, y)


def run_sb_batch(problem: PolyProblem, params: SBParams, rngs: Sequence[np.random.Generator],
                 known_optimum: float | None = None) -> list[RunResult]:
    """Independent runs, one per generator, evolved together."""
    if problem.num_vars < 1:
        raise ValueError("problem has no variables")
    states = [init_state(problem.num_vars, g) for g in rngs]
    start = OscillatorState(np.stack([s.x for s in states]), np.stack([s.y for s in states]))
    final = evolve(problem, params, start)
    spins = spins_from_positions(final.x)
    energies = evaluate(problem, spins)
    return [
        RunResult(spins[r], float(energies[r]), params.n_steps,
                  None if known_optimum is None else bool(energies[r] <= known_optimum + SUCCESS_TOL))
        for r in range(len(states))
    ]


def run_sb(problem: PolyProblem, params: SBParams, rng: np.random.Generator,
           known_optimum: float | None = None) -> RunResult:
    return run_sb_batch(problem, params, [rng], known_optimum)[0]
