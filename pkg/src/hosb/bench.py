"""Success-probability estimation, step-to-solution, tuning and scaling fits."""
from __future__ import annotations

import hashlib
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .gadget import gadgetize, project_solution
from .model import PolyProblem, evaluate
from .sa import SAParams, run_sa_batch
from .sb import SUCCESS_TOL, SBParams, Variant, run_sb_batch

log = logging.getLogger(__name__)

ALGORITHMS = ("3bSB", "3dSB", "3SA", "2bSB", "2dSB")
TARGET = 0.99
WARN_NR_P = 10
BATCH = 256

# Tuned values reported for N = 100: (dt, c1) for SB, beta_final for SA.
TUNED_DEFAULTS = {
    "3bSB": (1.1, 0.7),
    "3dSB": (0.7, 1.1),
    "2bSB": (0.8, 0.9),
    "2dSB": (0.7, 1.6),
    "3SA": 2.0,
}

DEFAULT_GRIDS = {
    "3bSB": [(dt, c1) for dt in (0.9, 1.0, 1.1, 1.2) for c1 in (0.5, 0.6, 0.7, 0.8, 0.9)],
    "3dSB": [(dt, c1) for dt in (0.5, 0.6, 0.7, 0.8, 0.9) for c1 in (0.9, 1.0, 1.1, 1.2, 1.3)],
    "2bSB": [(dt, c1) for dt in (0.6, 0.7, 0.8, 0.9, 1.0) for c1 in (0.7, 0.8, 0.9, 1.0, 1.1)],
    "2dSB": [(dt, c1) for dt in (0.5, 0.6, 0.7, 0.8, 0.9) for c1 in (1.2, 1.4, 1.6, 1.8, 2.0)],
    "3SA": [1.0, 1.5, 2.0, 2.5, 3.0],
}


class OptimizationError(RuntimeError):
    def __init__(self, message: str, table: list):
        super().__init__(message)
        self.table = table


class InsufficientDataError(ValueError):
    pass


def canonical_algorithm(tag: str) -> str:
    for a in ALGORITHMS:
        if a.lower() == tag.lower():
            return a
    raise ValueError(f"unknown algorithm {tag!r}; expected one of {', '.join(ALGORITHMS)}")


def make_params(algorithm: str, n_steps: int, dt: float | None = None, c1: float | None = None,
                beta1: float | None = None, **extra) -> SBParams | SAParams:
    """Parameter object for ``algorithm`` with the tuned defaults filled in."""
    algorithm = canonical_algorithm(algorithm)
    if algorithm == "3SA":
        return SAParams(n_steps=n_steps, beta_final=TUNED_DEFAULTS["3SA"] if beta1 is None else beta1)
    d_dt, d_c1 = TUNED_DEFAULTS[algorithm]
    variant = Variant.BALLISTIC if algorithm[1] == "b" else Variant.DISCRETE
    return SBParams(dt=d_dt if dt is None else dt, c1=d_c1 if c1 is None else c1,
                    n_steps=n_steps, variant=variant, **extra)


def derive_seed(base_seed: int, instance_id: str, run_index: int) -> int:
    """Run seed as a pure function of (base seed, instance id, run index)."""
    digest = hashlib.blake2b(f"{base_seed}:{instance_id}:{run_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def step_to_solution(n_steps: int, p: float) -> float:
    """Steps needed to reach the target with 99% probability.

    ``n_steps * log(0.01) / log(1 - p)`` with the repetition factor floored at
    1; ``p = 0`` gives ``inf`` and ``p = 1`` gives ``n_steps``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    if p == 0.0:
        return math.inf
    if p >= TARGET:
        return float(n_steps)
    return n_steps * max(1.0, math.log(1.0 - TARGET) / math.log1p(-p))


@dataclass
class BenchRecord:
    instance_id: str
    algorithm: str
    n: int
    n_steps: int
    runs: int
    successes: int
    dt: float | None = None
    c1: float | None = None
    beta1: float | None = None

    def __post_init__(self):
        if not 0 <= self.successes <= self.runs:
            raise ValueError("successes must lie in [0, runs]")

    @property
    def p(self) -> float:
        return self.successes / self.runs

    @property
    def s(self) -> float:
        return step_to_solution(self.n_steps, self.p)

    @property
    def nr_p_warning(self) -> bool:
        return self.successes < WARN_NR_P

    @property
    def param_key(self) -> tuple:
        return (self.dt, self.c1, self.beta1, self.n_steps)


def params_fields(params: SBParams | SAParams) -> dict:
    if isinstance(params, SAParams):
        return {"dt": None, "c1": None, "beta1": params.beta_final}
    return {"dt": params.dt, "c1": params.c1, "beta1": None}


# --- running ensembles ---------------------------------------------------

def solve_batch(problem: PolyProblem, algorithm: str, params: SBParams | SAParams,
                seeds: Sequence[int]) -> np.ndarray:
    """Final energies of the original problem for one run per seed."""
    algorithm = canonical_algorithm(algorithm)
    rngs = [np.random.default_rng(s) for s in seeds]
    if algorithm == "3SA":
        return np.array([r.energy for r in run_sa_batch(problem, params, rngs)])
    target = gadgetize(problem) if algorithm.startswith("2") else problem
    results = run_sb_batch(target, params, rngs)
    if target is problem:
        return np.array([r.energy for r in results])
    spins = project_solution(np.stack([r.spins for r in results]), problem.num_vars)
    return np.asarray(evaluate(problem, spins))


Solver = Callable[[PolyProblem, object, Sequence[int]], np.ndarray]


def estimate_p(problem: PolyProblem, algorithm: str | Solver, params, n_runs: int, *,
               known_optimum: float, instance_id: str = "0", base_seed: int = 0,
               seeds: Sequence[int] | None = None, batch: int = BATCH) -> BenchRecord:
    """Run ``n_runs`` independent runs and count hits of ``known_optimum``.

    ``algorithm`` is a tag from :data:`ALGORITHMS` or a callable
    ``(problem, params, seeds) -> energies``. Runs are chunked by run index
    in fixed-size batches, so the outcome does not depend on scheduling.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if seeds is None:
        seeds = [derive_seed(base_seed, instance_id, k) for k in range(n_runs)]
    elif len(seeds) != n_runs:
        raise ValueError("need one seed per run")
    if callable(algorithm):
        solver, tag = algorithm, getattr(algorithm, "__name__", "custom")
    else:
        tag = canonical_algorithm(algorithm)
        solver = lambda prob, par, sd: solve_batch(prob, tag, par, sd)  # noqa: E731
    successes = 0
    for start in range(0, n_runs, batch):
        energies = np.asarray(solver(problem, params, list(seeds[start:start + batch])))
        successes += int(np.count_nonzero(energies <= known_optimum + SUCCESS_TOL))
    rec = BenchRecord(instance_id, tag, problem.num_vars, params.n_steps, n_runs, successes,
                      **params_fields(params))
    if rec.nr_p_warning:
        log.debug("instance %s: N_r*P = %d < %d", instance_id, successes, WARN_NR_P)
    return rec


@dataclass
class Task:
    instance_id: str
    problem: PolyProblem
    known_optimum: float
    algorithm: str
    params: object
    n_runs: int
    base_seed: int


def _run_task(task: Task) -> BenchRecord:
    return estimate_p(task.problem, task.algorithm, task.params, task.n_runs,
                      known_optimum=task.known_optimum, instance_id=task.instance_id,
                      base_seed=task.base_seed)


def run_tasks(tasks: Sequence[Task], workers: int = 1,
              on_record: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    """Evaluate tasks, optionally in a process pool; output follows task order."""
    if workers <= 1 or len(tasks) <= 1:
        out = []
        for t in tasks:
            rec = _run_task(t)
            if on_record:
                on_record(rec)
            out.append(rec)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_task, t) for t in tasks]
        out = []
        for fut in futures:
            rec = fut.result()
            if on_record:
                on_record(rec)
            out.append(rec)
        return out


# --- medians -------------------------------------------------------------

@dataclass
class MedianS:
    median: float
    low: float
    high: float
    n_instances: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.median)


def _median(values: np.ndarray) -> float:
    # np.sort puts inf after every finite value
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n % 2:
        return float(v[n // 2])
    lo, hi = v[n // 2 - 1], v[n // 2]
    if math.isinf(hi):
        return math.inf
    return float(0.5 * (lo + hi))


def median_s(records: Sequence[BenchRecord], n_boot: int = 1000, seed: int = 0,
             band: tuple[float, float] = (16.0, 84.0)) -> MedianS:
    """Median step-to-solution over instances with a bootstrap band.

    The band resamples each instance's success count from
    ``Binomial(N_r, P_hat)`` and reports percentiles of the resampled medians.
    """
    if not records:
        raise ValueError("no records")
    s_vals = np.array([r.s for r in records])
    med = _median(s_vals)
    if n_boot <= 0:
        return MedianS(med, med, med, len(records))
    rng = np.random.default_rng(seed)
    runs = np.array([r.runs for r in records])
    p_hat = np.array([r.p for r in records])
    steps = np.array([r.n_steps for r in records])
    draws = rng.binomial(runs, p_hat, size=(n_boot, len(records)))
    boot = np.empty(n_boot)
    for b in range(n_boot):
        boot[b] = _median([step_to_solution(int(steps[j]), draws[b, j] / runs[j]) for j in range(len(records))])
    if np.isinf(boot).any():
        lo, hi = np.percentile(np.where(np.isinf(boot), np.finfo(float).max, boot), band)
        lo = math.inf if lo == np.finfo(float).max else float(lo)
        hi = math.inf if hi == np.finfo(float).max else float(hi)
    else:
        lo, hi = (float(v) for v in np.percentile(boot, band))
    return MedianS(med, lo, hi, len(records))


# --- grid search ---------------------------------------------------------

@dataclass
class GridRow:
    point: object
    n_steps: int
    median: MedianS
    records: list = field(default_factory=list, repr=False)


def _tie_key(point) -> float:
    if isinstance(point, tuple):
        return point[0]
    return point if isinstance(point, (int, float)) else 0.0


def grid_search(instances: Sequence[tuple[str, PolyProblem, float]] | None, algorithm: str,
                grid: Sequence, n_steps_list: Sequence[int], n_runs: int, *, base_seed: int = 0,
                workers: int = 1, evaluator: Callable[[object, int], MedianS] | None = None,
                n_boot: int = 200) -> tuple[tuple[object, int], list[GridRow]]:
    """Minimize the median step-to-solution over ``grid x n_steps_list``.

    Grid points are ``(dt, c1)`` pairs for SB or ``beta_final`` values for SA.
    ``evaluator(point, n_steps)`` replaces the solver ensemble when given.
    Ties go to smaller ``n_steps``, then smaller ``dt`` (or ``beta_final``).
    """
    if not grid or not n_steps_list:
        raise ValueError("empty grid")
    table: list[GridRow] = []
    for point, ns in itertools.product(grid, n_steps_list):
        if evaluator is not None:
            table.append(GridRow(point, ns, evaluator(point, ns)))
            continue
        if isinstance(point, tuple):
            params = make_params(algorithm, ns, dt=point[0], c1=point[1])
        else:
            params = make_params(algorithm, ns, beta1=point)
        tasks = [Task(iid, prob, opt, algorithm, params, n_runs, base_seed) for iid, prob, opt in instances]
        recs = run_tasks(tasks, workers)
        table.append(GridRow(point, ns, median_s(recs, n_boot=n_boot), recs))
    finite = [row for row in table if row.median.finite]
    if not finite:
        raise OptimizationError("every grid point has infinite median step-to-solution", table)
    best = min(finite, key=lambda row: (row.median.median, row.n_steps, _tie_key(row.point)))
    return (best.point, best.n_steps), table


# --- scaling fit ---------------------------------------------------------

@dataclass
class ScalingFit:
    alpha: float
    intercept: float
    alpha_sd: float
    intercept_sd: float
    fit_range: tuple[int, int]
    n_points: int

    def report(self) -> dict:
        return {
            "alpha": self.alpha,
            "intercept": self.intercept,
            "alpha_sd": self.alpha_sd,
            "intercept_sd": self.intercept_sd,
            "fit_range": list(self.fit_range),
            "n_points": self.n_points,
            "alpha_str": format_uncertainty(self.alpha, self.alpha_sd),
            "intercept_str": format_uncertainty(self.intercept, self.intercept_sd),
        }


def default_fit_range(ns: Iterable[int]) -> tuple[int, int]:
    """Drop the smallest and largest N of the sweep."""
    u = sorted(set(ns))
    if len(u) < 5:
        return u[0], u[-1]
    return u[1], u[-2]


def fit_scaling(points: Sequence[tuple[int, float]], fit_range: tuple[int, int] | None = None) -> ScalingFit:
    """Least squares of ``log10 S`` against ``N``: ``S ~ 10**(alpha N + intercept)``.

    Standard deviations are the usual OLS standard errors.
    """
    pts = [(int(n), float(s)) for n, s in points if math.isfinite(s) and s > 0]
    if fit_range is None and pts:
        fit_range = (min(n for n, _ in pts), max(n for n, _ in pts))
    if fit_range is not None:
        pts = [(n, s) for n, s in pts if fit_range[0] <= n <= fit_range[1]]
    if len(pts) < 3:
        raise InsufficientDataError(f"need at least 3 finite points in range, got {len(pts)}")
    x = np.array([n for n, _ in pts], dtype=float)
    y = np.log10([s for _, s in pts])
    res = stats.linregress(x, y)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.stderr),
                      float(res.intercept_stderr), tuple(fit_range), len(pts))


def format_uncertainty(value: float, sd: float) -> str:
    """``value(d)`` with ``sd`` rounded to one significant digit.

    ``format_uncertainty(0.03551, 0.00021) == '0.0355(2)'``.
    """
    if not math.isfinite(value):
        return str(value)
    if not (sd > 0 and math.isfinite(sd)):
        return f"{value:.12g}(0)"
    exp = math.floor(math.log10(sd))
    digit = round(sd / 10**exp)
    if digit == 10:
        exp += 1
        digit = 1
    decimals = max(0, -exp)
    if exp > 0:
        scale = 10**exp
        return f"{round(value / scale) * scale:d}({digit * scale:d})"
    return f"{value:.{decimals}f}({digit})"


def sign_test(a: Sequence[float], b: Sequence[float]) -> float:
    """One-sided sign-test p-value for ``a < b`` over paired instances.

    Pairs with equal values (including both infinite) are dropped.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    wins = int(np.sum(a < b))
    losses = int(np.sum(a > b))
    n = wins + losses
    if n == 0:
        return 1.0
    return float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)

