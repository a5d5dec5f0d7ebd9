"""Command-line entry point.

Subcommands: ``generate``, ``reduce``, ``solve``, ``bench``, ``fit``,
``oracle``. Any flag can also be set through an environment variable named
``HOSB_<FLAG>`` (upper case, dashes as underscores, e.g. ``HOSB_FIT_MIN``);
explicit flags win. The effective configuration is printed to stderr so
stdout stays machine-readable.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import bench
from .gadget import ReductionError, gadgetize, project_solution
from .model import ParseError, PolyProblem, all_spin_configs, evaluate, read_pubo, write_pubo
from .sa import run_sa
from .sb import NumericError, run_sb
from .xorsat import GenerationError, Xorsat3Instance, generate_3r3x, read_instance, to_polynomial, write_instance

ENV_PREFIX = "HOSB_"
CSV_COLUMNS = ["instance_id", "algorithm", "N", "dt", "c1", "beta1", "n_steps", "runs",
               "successes", "p", "s", "nr_p_warning"]
EXHAUSTIVE_MAX_N = 24

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


class CliError(Exception):
    pass


def fmt_float(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _first(text):
    return _floats(text)[0] if text else None


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


# --- file loading --------------------------------------------------------

def load_problem(path: str) -> tuple[PolyProblem, Xorsat3Instance | None]:
    """Read a xorsat3 or pubo file, choosing by its header line."""
    with open(path) as fh:
        text = fh.read()
    header = next((ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")), [])
    if header[:2] == ["p", "xorsat3"]:
        inst = read_instance(io.StringIO(text))
        return to_polynomial(inst), inst
    return read_pubo(io.StringIO(text)), None


def known_optimum(inst: Xorsat3Instance | None) -> float | None:
    """``-N`` when the parity system is solvable, else unknown."""
    if inst is None:
        return None
    return -float(inst.n) if inst.solve().consistent else None


# --- subcommands ---------------------------------------------------------

def cmd_generate(args) -> int:
    if args.count < 1:
        raise CliError("count must be >= 1")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for k in range(args.count):
        inst = generate_3r3x(args.n, rng)
        inst.validate()
        path = out / f"xorsat3_n{args.n}_{k:03d}.txt"
        with open(path, "w") as fh:
            write_instance(inst, fh)
        print(f"{path}\tnullity={inst.solve().nullity}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    problem, _ = load_problem(args.input)
    reduced = gadgetize(problem)
    if args.out:
        with open(args.out, "w") as fh:
            write_pubo(reduced, fh)
    else:
        write_pubo(reduced, sys.stdout)
    return EXIT_OK


def _params_from_args(args, n_steps: int, dt=None, c1=None, beta1=None):
    algo = bench.canonical_algorithm(args.algo)
    extra = {}
    if algo != "3SA":
        if args.a0 is not None:
            extra["a0"] = args.a0
        if args.eps is not None:
            extra["eps"] = args.eps
    return bench.make_params(algo, n_steps, dt=dt, c1=c1, beta1=beta1, **extra)


def cmd_solve(args) -> int:
    problem, inst = load_problem(args.input)
    algo = bench.canonical_algorithm(args.algo)
    steps = _ints(args.steps)[0]
    params = _params_from_args(args, steps, _first(args.dt), _first(args.c1), _first(args.beta1))
    target = known_optimum(inst)
    rng = np.random.default_rng(args.seed)
    solved_on = problem
    if algo == "3SA":
        res = run_sa(problem, params, rng, target)
        spins = res.spins
    else:
        solved_on = gadgetize(problem) if algo.startswith("2") else problem
        res = run_sb(solved_on, params, rng)
        spins = project_solution(res.spins, problem.num_vars)
    energy = float(evaluate(problem, spins))
    success = None if target is None else bool(energy <= target + 1e-9)
    payload = {
        "algorithm": algo,
        "n": problem.num_vars,
        "solver_spins": solved_on.num_vars,
        "spins": [int(v) for v in spins],
        "energy": energy,
        "known_optimum": target,
        "success": success,
        "steps": params.n_steps,
        "seed": args.seed,
        "params": bench.params_fields(params),
    }
    print(full_precision_json(payload))
    return EXIT_FAILED if success is False else EXIT_OK


def _open_csv(path: str | None):
    if not path or path == "-":
        return sys.stdout, False
    exists = os.path.exists(path) and os.path.getsize(path) > 0
    return open(path, "a", newline=""), exists


def record_row(rec: bench.BenchRecord) -> list[str]:
    return [rec.instance_id, rec.algorithm, str(rec.n), fmt_float(rec.dt), fmt_float(rec.c1),
            fmt_float(rec.beta1), str(rec.n_steps), str(rec.runs), str(rec.successes),
            fmt_float(rec.p), fmt_float(rec.s), "1" if rec.nr_p_warning else "0"]


def cmd_bench(args) -> int:
    if not args.inputs:
        raise CliError("no instance files given")
    algo = bench.canonical_algorithm(args.algo)
    instances = []
    for path in args.inputs:
        problem, inst = load_problem(path)
        target = known_optimum(inst)
        if target is None:
            raise CliError(f"{path}: optimum unknown (needs a solvable xorsat3 instance)")
        instances.append((Path(path).stem, problem, target))
    steps = _ints(args.steps)
    if algo == "3SA":
        points = [(None, None, b) for b in (_floats(args.beta1) if args.beta1 else [None])]
    else:
        dts = _floats(args.dt) if args.dt else [None]
        c1s = _floats(args.c1) if args.c1 else [None]
        points = [(d, c, None) for d in dts for c in c1s]
    tasks = []
    for (dt, c1, beta1) in points:
        for ns in steps:
            params = _params_from_args(args, ns, dt, c1, beta1)
            tasks += [bench.Task(iid, prob, opt, algo, params, args.runs, args.seed)
                      for iid, prob, opt in instances]
    fh, has_header = _open_csv(args.out)
    writer = csv.writer(fh, lineterminator="\n")
    if not has_header:
        writer.writerow(CSV_COLUMNS)
        fh.flush()

    def emit(rec):
        writer.writerow(record_row(rec))
        fh.flush()

    try:
        bench.run_tasks(tasks, args.workers, on_record=emit)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def read_records(path: str) -> list[bench.BenchRecord]:
    def opt(v):
        return float(v) if v not in ("", None) else None

    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise CliError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            out.append(bench.BenchRecord(row["instance_id"], row["algorithm"], int(row["N"]),
                                         int(row["n_steps"]), int(row["runs"]), int(row["successes"]),
                                         opt(row["dt"]), opt(row["c1"]), opt(row["beta1"])))
    return out


def cmd_fit(args) -> int:
    records = read_records(args.input)
    if not records:
        raise CliError("no records in input")
    algos = {r.algorithm for r in records}
    if len(algos) != 1:
        raise CliError(f"input mixes algorithms {sorted(algos)}; filter first")
    # per N: best median over the parameter settings present
    by_n = defaultdict(lambda: defaultdict(list))
    for r in records:
        by_n[r.n][r.param_key].append(r)
    points = []
    chosen = {}
    for n, groups in sorted(by_n.items()):
        meds = {key: bench.median_s(recs, n_boot=0).median for key, recs in groups.items()}
        key = min(meds, key=lambda k: (meds[k], k[3]))
        points.append((n, meds[key]))
        chosen[n] = {"dt": key[0], "c1": key[1], "beta1": key[2], "n_steps": key[3], "median_s": meds[key]}
    if args.fit_min is None and args.fit_max is None:
        fit_range = bench.default_fit_range([n for n, _ in points])
    else:
        fit_range = (args.fit_min if args.fit_min is not None else min(by_n),
                     args.fit_max if args.fit_max is not None else max(by_n))
    try:
        fit = bench.fit_scaling(points, fit_range)
    except bench.InsufficientDataError as exc:
        raise CliError(str(exc)) from exc
    payload = {"algorithm": algos.pop(), **fit.report(), "points": {str(n): chosen[n] for n in chosen}}
    text = full_precision_json(payload)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def full_precision_json(obj) -> str:
    """JSON with floats written to 17 significant digits."""
    def render(v):
        if isinstance(v, dict):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {render(x)}" for k, x in sorted(v.items())) + "}"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(render(x) for x in v) + "]"
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return json.dumps(fmt_float(v)) if math.isinf(v) else fmt_float(v)
        return json.dumps(v)
    return render(obj)


def cmd_oracle(args) -> int:
    problem, inst = load_problem(args.input)
    payload: dict = {"n": problem.num_vars}
    if inst is not None:
        sol = inst.solve()
        payload.update(consistent=sol.consistent, rank=sol.rank, nullity=sol.nullity,
                       count=sol.count, optimum=-float(inst.n) if sol.consistent else None)
    if args.exhaustive:
        if problem.num_vars > EXHAUSTIVE_MAX_N:
            raise CliError(f"exhaustive search limited to N <= {EXHAUSTIVE_MAX_N}")
        e = _exhaustive_energies(problem)
        best = float(e.min())
        payload["exhaustive"] = {"optimum": best, "count": int(np.count_nonzero(e == best))}
        if inst is None:
            payload.update(optimum=best, count=payload["exhaustive"]["count"])
        elif payload["consistent"]:
            payload["agree"] = best == payload["optimum"] and payload["count"] == payload["exhaustive"]["count"]
        else:
            payload["agree"] = best > -inst.n
    print(full_precision_json(payload))
    return EXIT_OK if payload.get("agree", True) else EXIT_FAILED


def _exhaustive_energies(problem: PolyProblem, chunk_bits: int = 16) -> np.ndarray:
    n = problem.num_vars
    if n <= chunk_bits:
        return np.asarray(evaluate(problem, all_spin_configs(n)))
    low = all_spin_configs(chunk_bits)
    out = []
    for hi in range(2 ** (n - chunk_bits)):
        bits = (hi >> np.arange(n - chunk_bits)) & 1
        high = np.broadcast_to(1 - 2 * bits, (len(low), n - chunk_bits))
        out.append(evaluate(problem, np.hstack([low, high])))
    return np.concatenate(out)


# --- parser --------------------------------------------------------------

def _env(name: str, cast, default=None):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise CliError(f"bad value for {ENV_PREFIX}{name.upper()}: {raw!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--algo", default=_env("algo", str, "3bSB"),
                        help="3bSB, 3dSB, 3SA, 2bSB or 2dSB (case-insensitive)")
    common.add_argument("--dt", default=_env("dt", str), help="time step; comma list for bench grids")
    common.add_argument("--c1", default=_env("c1", str), help="force normalization prefactor; comma list")
    common.add_argument("--beta1", default=_env("beta1", str), help="final inverse temperature (3SA); comma list")
    common.add_argument("--steps", default=_env("steps", str, "1000"), help="N_s; comma list for bench")
    common.add_argument("--runs", type=int, default=_env("runs", int, 200))
    common.add_argument("--seed", type=int, default=_env("seed", int, 0))
    common.add_argument("--workers", type=int, default=_env("workers", int, 1))
    common.add_argument("--a0", type=float, default=_env("a0", float))
    common.add_argument("--eps", type=float, default=_env("eps", float))
    common.add_argument("--fit-min", type=int, default=_env("fit_min", int))
    common.add_argument("--fit-max", type=int, default=_env("fit_max", int))
    common.add_argument("--out", default=_env("out", str))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hosb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write planted 3R3X instances")
    g.add_argument("--n", type=int, default=_env("n", int), required=_env("n", int) is None)
    g.add_argument("--count", type=int, default=_env("count", int, 1))
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reduce", parents=[common], help="gadgetize a cubic problem to a pubo file")
    r.add_argument("input")
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("solve", parents=[common], help="one solver run, JSON on stdout")
    s.add_argument("input")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", parents=[common], help="success-probability CSV over a parameter grid")
    b.add_argument("inputs", nargs="+")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fit", parents=[common], help="scaling fit of a bench CSV")
    f.add_argument("input")
    f.set_defaults(func=cmd_fit)

    o = sub.add_parser("oracle", parents=[common], help="exact optimum via GF(2) and brute force")
    o.add_argument("input")
    o.add_argument("--exhaustive", action="store_true")
    o.set_defaults(func=cmd_oracle)
    return parser


def effective_config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    print("config: " + json.dumps(effective_config(args), sort_keys=True), file=sys.stderr)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (CliError, ValueError, ReductionError, GenerationError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
