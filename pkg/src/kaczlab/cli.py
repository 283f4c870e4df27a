"""Command-line front end: ``kaczlab generate | solve | bounds | reproduce``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import bounds as bd
from .errors import InvalidInput, KaczlabError, NumericalFailure, ParseError
from .linalg import generalized_condition, spectral_condition, svd
from .problems import GENERATORS, NOISE_MODES, LinearProblem, add_noise, gen_synthetic, load_problem, save_problem
from .solvers import (
    RowSelector,
    SolverConfig,
    aggregate_traces,
    derive_seed,
    normalize_system,
    partition_rows,
    run_replicates,
)

log = logging.getLogger("kaczlab")

CSV_SCHEMA = "# kaczlab-csv v1"
METHODS = ("cyclic", "rk", "rk-normalized", "block-rk")
PARTITIONS = ("contiguous", "strided", "random")

# seed-stream keys under the base seed
_REPLICATE_KEY, _X0_KEY, _NOISE_KEY, _PARTITION_KEY = 0, 1, 2, 3

DEFAULTS = {
    "problem": None,
    "n": 100,
    "m": None,
    "rank": None,
    "inconsistent": False,
    "delta": 0.0,
    "noise_mode": "paper-offset",
    "method": "cyclic",
    "blocks": 10,
    "partition": "contiguous",
    "x0": "zero",
    "iters": 10000,
    "replicates": 1,
    "seed": 0,
    "record_every": 1,
    "out": "kaczlab-out",
}

# figure id -> (problem, method, delta, iterations at n = 1000)
FIGURES = {}
for _j, _name in enumerate(("phillips", "gravity", "shaw")):
    FIGURES[f"fig4.{1 + _j}"] = (_name, "cyclic", 0.0, 10_000)
    FIGURES[f"fig4.{4 + _j}"] = (_name, "cyclic", 0.0, 100_000)
    FIGURES[f"fig4.{7 + _j}"] = (_name, "cyclic", 0.1, 10_000)
    FIGURES[f"fig4.{10 + _j}"] = (_name, "cyclic", 0.1, 100_000)
    FIGURES[f"fig4.{13 + _j}"] = (_name, "rk", 0.0, 10_000)
    FIGURES[f"fig4.{16 + _j}"] = (_name, "rk", 0.1, 10_000)


class UsageError(KaczlabError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------------ CSV output

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path: Path, header, columns, meta: dict) -> None:
    """Write columns with the schema line and ``#`` metadata ahead of the header."""
    lines = [CSV_SCHEMA]
    lines.extend(f"# {key}: {value}" for key, value in meta.items())
    lines.append(",".join(header))
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path: Path) -> dict[str, np.ndarray]:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError(f"{path} has no header row")
    header = rows[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in rows[1:]]).reshape(-1, len(header))
    return {name: data[:, j] for j, name in enumerate(header)}


def _write_vector(path: Path, x) -> None:
    path.write_text("".join(f"{v:.17g}\n" for v in x))


def _read_vector(path: Path) -> np.ndarray:
    return np.array([float(tok) for tok in Path(path).read_text().split()])


# ---------------------------------------------------------------- config logic

@dataclass
class Experiment:
    problem: LinearProblem
    use_noisy: bool
    method: str
    x0: np.ndarray
    selector: RowSelector
    solved: LinearProblem
    settings: dict


def _merge(args) -> tuple[dict, set]:
    """Defaults, then the config file, then flags. Also returns the keys set explicitly."""
    settings = dict(DEFAULTS)
    given = set()
    if getattr(args, "config", None):
        loaded = yaml.safe_load(Path(args.config).read_text()) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {args.config} must hold a key-value mapping")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            settings[key] = value
            given.add(key)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            settings[key] = value
            given.add(key)
    return settings, given


def build_problem(settings: dict) -> tuple[LinearProblem, bool]:
    """Resolve the problem spec and noise; returns the problem and whether to iterate on noisy data."""
    spec = settings["problem"]
    if spec is None:
        raise UsageError("no problem given (use --problem NAME or a file path)")
    n = int(settings["n"])
    seed = int(settings["seed"])
    if spec in GENERATORS:
        problem = GENERATORS[spec](n)
    elif spec == "synthetic":
        m = int(settings["m"] or n)
        rank = int(settings["rank"] or min(m, n))
        problem = gen_synthetic(m, n, rank, consistent=not settings["inconsistent"], seed=seed)
    elif Path(spec).is_file():
        problem = load_problem(spec)
    else:
        raise UsageError(f"unknown problem {spec!r}: expected one of "
                         f"{sorted(GENERATORS) + ['synthetic']} or an existing file")
    delta = float(settings["delta"] or 0.0)
    mode = settings["noise_mode"]
    if mode not in NOISE_MODES:
        raise UsageError(f"unknown noise mode {mode!r}")
    if delta > 0:
        noisy = add_noise(problem.b, delta, mode, seed=derive_seed(seed, _NOISE_KEY))
        problem = LinearProblem(problem.A, problem.b, noisy, delta, problem.x_true,
                                problem.label, problem.consistent)
        return problem, True
    return problem, problem.b_noisy is not None


def build_x0(spec: str, n: int, seed: int) -> np.ndarray:
    if spec == "zero":
        return np.zeros(n)
    if spec == "random":
        return np.random.default_rng(derive_seed(seed, _X0_KEY)).standard_normal(n)
    if spec.startswith("file:"):
        x0 = _read_vector(Path(spec[5:]))
        if x0.shape != (n,):
            raise InvalidInput(f"x0 file has {x0.size} values, expected {n}")
        return x0
    raise UsageError(f"bad --x0 {spec!r}: expected zero, random or file:PATH")


def build_experiment(settings: dict) -> Experiment:
    problem, use_noisy = build_problem(settings)
    m, n = problem.shape
    seed = int(settings["seed"])
    method = settings["method"]
    solved = problem
    if method == "cyclic":
        selector = RowSelector.cyclic(m)
    elif method == "rk":
        selector = RowSelector.weighted(problem.A, seed)
    elif method == "rk-normalized":
        solved = normalize_system(problem)
        selector = RowSelector.uniform(m, seed)
    elif method == "block-rk":
        strategy = settings["partition"]
        if strategy not in PARTITIONS:
            raise UsageError(f"unknown partition {strategy!r}")
        part = partition_rows(m, int(settings["blocks"]), strategy, seed=derive_seed(seed, _PARTITION_KEY))
        selector = RowSelector.block(part, seed)
    else:
        raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
    x0 = build_x0(str(settings["x0"]), n, seed)
    return Experiment(problem, use_noisy, method, x0, selector, solved, settings)


# ------------------------------------------------------------------- commands

def _meta(argv, settings, **extra) -> dict:
    meta = {"command": "kaczlab " + shlex.join(argv), "seed": settings["seed"]}
    meta.update(extra)
    return meta


def cmd_generate(settings: dict, argv, output: str | None) -> int:
    problem, _ = build_problem(settings)
    oracle = svd(problem.A)
    out = Path(output) if output else Path(settings["out"]) / f"{problem.label or 'problem'}.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_problem(problem, out)
    cond = spectral_condition(oracle)
    m, n = problem.shape
    print(f"wrote {out}")
    print(f"m = {m}, n = {n}, rank = {oracle.rank}")
    print(f"generalized condition kappa_A = {generalized_condition(problem.A, oracle):.6e}")
    print(f"spectral condition = {cond.value:.6e} ({cond.status})")
    if m == n:
        asym = np.linalg.norm(problem.A - problem.A.T) / np.linalg.norm(problem.A)
        print(f"relative asymmetry ||A - A^T||_F / ||A||_F = {asym:.3e}")
    return 0


def cmd_solve(settings: dict, argv) -> tuple[int, Path]:
    exp = build_experiment(settings)
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    R = int(settings["replicates"])
    if R < 1:
        raise UsageError("--replicates must be >= 1")
    if exp.method == "cyclic" and R > 1:
        log.warning("cyclic selection is deterministic; running a single replicate")
        R = 1
    seed = int(settings["seed"])
    seeds = [derive_seed(seed, _REPLICATE_KEY, j) for j in range(R)]
    config = SolverConfig(exp.x0, int(settings["iters"]), record_every=int(settings["record_every"]))
    oracle = svd(exp.solved.A)
    traces = run_replicates(exp.solved, exp.selector, config, seeds, exp.use_noisy, oracle)

    save_problem(exp.problem, out / "problem.txt")
    _write_vector(out / "x0.txt", exp.x0)
    manifest = {k: settings[k] for k in sorted(settings)}
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))

    for j, tr in enumerate(traces):
        meta = _meta(argv, settings, replicate=j, replicate_seed=seeds[j] if exp.selector.is_random else "none",
                     termination=tr.reason)
        write_csv(out / f"trace_rep{j:03d}.csv", ["k", "row", "error", "error_sq", "residual"],
                  [tr.iterations, tr.rows, tr.errors, tr.errors**2, tr.residuals], meta)
    agg = aggregate_traces(traces)
    write_csv(out / "aggregate.csv", ["k", "mean_e_sq", "min_e_sq", "max_e_sq"],
              [agg.iterations, agg.mean_sq, agg.min_sq, agg.max_sq],
              _meta(argv, settings, replicates=R, method=exp.method))

    k_star, e_min, rebound = bd.semi_convergence_scan(np.sqrt(agg.mean_sq))
    k_star = int(agg.iterations[k_star])
    print(f"{exp.problem.label}: {exp.method}, {R} replicate(s), {config.max_iterations} iterations")
    print(f"final mean e^2 = {agg.mean_sq[-1]:.6e}; min at k = {k_star} (e = {e_min:.6e}), rebound = {rebound:.4f}")
    print(f"wrote {out}")
    return 0, out


def bounds_table(exp: Experiment, iterations: np.ndarray, empirical: np.ndarray) -> tuple[list, list]:
    problem = exp.problem
    oracle = svd(problem.A)
    inputs = bd.bound_inputs(problem, oracle, exp.x0, exp.use_noisy)
    k_max = int(iterations[-1])
    consistent = inputs.offrange_sq <= 1e-16 * max(float(problem.rhs(exp.use_noisy) @ problem.rhs(exp.use_noisy)), 1e-300)
    header = ["k", "empirical_mean_e_sq", "bound_thm2_5", "bound_cor2_6", "bound_prior_2_2"]
    cols = [
        iterations,
        empirical,
        bd.rk_bound(inputs, k_max).at(iterations),
        bd.normalized_bound(inputs, k_max, consistent).at(iterations),
        bd.rk_prior_bound(inputs, k_max, noisy=exp.use_noisy).at(iterations),
    ]
    if exp.method == "cyclic" and consistent and not exp.use_noisy:
        header.append("bound_cyclic_literal")
        cols.append(bd.cyclic_bound(problem, oracle, k_max, exp.x0).at(iterations))
    if exp.method == "block-rk":
        header.append("bound_block")
        cols.append(bd.block_bound(inputs, exp.selector.partition, k_max, consistent).at(iterations))
    return header, cols


def cmd_bounds(settings: dict, argv, source: str | None, given: set) -> int:
    if source:
        src = Path(source)
        agg_path = src / "aggregate.csv"
        if not agg_path.is_file():
            raise FileNotFoundError(f"no solve output at {src} (missing aggregate.csv)")
        stored = yaml.safe_load((src / "manifest.yaml").read_text())
        stored.update(
            problem=str(src / "problem.txt"),
            x0=f"file:{src / 'x0.txt'}",
            delta=0.0,  # noisy data, if any, is stored in problem.txt
            out=settings["out"] if "out" in given else str(src),
        )
        settings = stored
    else:
        _, src = cmd_solve(settings, argv)
        agg_path = src / "aggregate.csv"
    exp = build_experiment(settings)
    agg = read_csv(agg_path)
    iterations = agg["k"].astype(np.int64)
    header, cols = bounds_table(exp, iterations, agg["mean_e_sq"])
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "bounds.csv", header, cols, _meta(argv, settings, method=exp.method))
    print(f"wrote {out / 'bounds.csv'}")
    return 0


def _gnuplot_script(path: Path, title: str, header) -> None:
    plots = ", ".join(f"'bounds.csv' using 1:{j + 1} with lines title '{name}'"
                      for j, name in enumerate(header) if j > 0)
    path.write_text(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n"
        f"set logscale y\nset xlabel 'k'\nset ylabel 'e_k^2'\nset title '{title}'\n"
        f"plot {plots}\n"
    )


def cmd_reproduce(figure: str, settings: dict, argv, given: set, gnuplot: bool = False) -> int:
    """Run the (problem, method, delta, N) combination behind `figure` at scale ``--n``.

    Unless overridden, the iteration budget scales as ``N * n / 1000`` and
    randomized figures average 10 replicates.
    """
    if figure not in FIGURES:
        raise UsageError(f"unknown figure {figure!r}; expected one of fig4.1 .. fig4.18")
    name, method, delta, iters_full = FIGURES[figure]
    n = int(settings["n"])
    if name == "shaw" and n % 2:
        raise UsageError("shaw needs an even --n")
    settings = dict(settings, problem=name, method=method, delta=delta)
    if "iters" not in given:
        settings["iters"] = max(1, iters_full * n // 1000)
    if "replicates" not in given:
        settings["replicates"] = 1 if method == "cyclic" else 10
    out = Path(settings["out"]) / figure
    settings["out"] = str(out)
    code = cmd_bounds(settings, argv, None, given)
    if gnuplot:
        header = list(read_csv(out / "bounds.csv"))
        _gnuplot_script(out / "plot.gp", f"{figure}: {name}, {method}, delta = {delta}", header)
    return code


# --------------------------------------------------------------------- parser

def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML key-value file; flags override it")
    p.add_argument("--problem", help="phillips, gravity, shaw, synthetic, or a problem file")
    p.add_argument("--n", type=int, help="discretization size / columns (default 100)")
    p.add_argument("--m", type=int, help="rows for synthetic problems (default n)")
    p.add_argument("--rank", type=int, help="rank for synthetic problems (default min(m, n))")
    p.add_argument("--inconsistent", action="store_true", help="synthetic: add an off-range component")
    p.add_argument("--delta", type=float, help="relative noise level (default 0)")
    p.add_argument("--noise-mode", choices=NOISE_MODES)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--blocks", type=int, help="number of blocks for block-rk (default 10)")
    p.add_argument("--partition", choices=PARTITIONS)
    p.add_argument("--x0", help="zero | random | file:PATH")
    p.add_argument("--iters", type=int, help="iteration budget N")
    p.add_argument("--replicates", type=int, help="replicates R for random methods")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--record-every", type=int, help="trace thinning interval")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kaczlab", description="Kaczmarz solvers and error-estimate validation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a test problem file")
    g.add_argument("name", nargs="?", help="problem name (same as --problem)")
    g.add_argument("--output", help="explicit output file")
    _add_run_options(g)

    s = sub.add_parser("solve", help="run replicates and write trace CSVs")
    _add_run_options(s)

    b = sub.add_parser("bounds", help="compare empirical errors against the estimates")
    b.add_argument("--from", dest="source", help="directory written by 'solve'")
    _add_run_options(b)

    r = sub.add_parser("reproduce", help="rerun a numerical-experiment figure at desk scale")
    r.add_argument("figure", help="fig4.1 .. fig4.18")
    r.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    _add_run_options(r)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        settings, given = _merge(args)
        if args.command == "generate":
            if args.name:
                settings["problem"] = args.name
            return cmd_generate(settings, argv, args.output)
        if args.command == "solve":
            return cmd_solve(settings, argv)[0]
        if args.command == "bounds":
            return cmd_bounds(settings, argv, args.source, given)
        return cmd_reproduce(args.figure, settings, argv, given, args.gnuplot)
    except NumericalFailure as exc:
        print(f"kaczlab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (KaczlabError, FileNotFoundError, OSError, yaml.YAMLError) as exc:
        print(f"kaczlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
