"""Benchmark harness: (problem x variant x trial) sweeps, summaries and curves.

Output layout for ``run``::

    <out>/<problem>/<variant>/trial<k>.csv   per-trial traces
    <out>/summary.csv                        problem, variant, mean_iterations, ...
    <out>/summary.json                       summary rows, spec and per-trial records
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checks, engine, problems

SUMMARY_COLUMNS = ("problem", "variant", "mean_iterations", "mean_seconds", "convergence_rate")
CURVE_COLUMNS = ("problem", "variant", "iter", "optimality_gap")

# SolverOptions fields that a spec may set directly
SOLVER_KNOBS = ("window", "eps_r", "eps_n", "restart", "max_backtracks", "ls_slack",
                "lipschitz_factor", "tau0", "stop_rule", "record_objective")


class SpecError(ValueError):
    """Invalid experiment specification (maps to exit code 2)."""


@dataclass
class ExperimentSpec:
    problems: list
    variants: list = field(default_factory=lambda: list(engine.VARIANTS))
    trials: int = 20
    master_seed: int = 0
    tol: float = 1e-4
    max_iters: int | None = None
    out: str = "bench_out"
    desk_scale: bool = False
    jobs: int = 1
    timing: bool = True
    overrides: dict = field(default_factory=dict)
    solver: dict = field(default_factory=lambda: {"stop_rule": "relative"})

    def __post_init__(self):
        if isinstance(self.problems, str):
            self.problems = [self.problems]
        if isinstance(self.variants, str):
            self.variants = [self.variants]
        self.problems = list(self.problems)
        self.variants = list(self.variants)
        if not self.problems:
            raise SpecError("no problems given")
        unknown = [p for p in self.problems if p not in problems.BENCHMARKS]
        if unknown:
            raise SpecError(f"unknown problem(s) {unknown}; "
                            f"choose from {sorted(problems.BENCHMARKS)}")
        if not self.variants:
            raise SpecError("variant list is empty")
        bad = [v for v in self.variants if v not in engine.VARIANTS]
        if bad:
            raise SpecError(f"unknown variant(s) {bad}; choose from {list(engine.VARIANTS)}")
        if len(set(self.variants)) != len(self.variants):
            raise SpecError("duplicate variants")
        if int(self.trials) < 1:
            raise SpecError("trials must be >= 1")
        if not self.tol > 0:
            raise SpecError("tol must be positive")
        if self.max_iters is not None and int(self.max_iters) < 1:
            raise SpecError("max_iters must be >= 1")
        if int(self.jobs) < 1:
            raise SpecError("jobs must be >= 1")
        extra = set(self.solver) - set(SOLVER_KNOBS)
        if extra:
            raise SpecError(f"unknown solver options {sorted(extra)}")
        try:
            self.options_for(self.problems[0], self.variants[0])
        except ValueError as exc:
            raise SpecError(str(exc)) from exc

    def iteration_cap(self, problem):
        if self.max_iters is not None:
            return int(self.max_iters)
        return problems.MAX_ITERS.get(problem, 1000)

    def options_for(self, problem, variant):
        return engine.SolverOptions(variant=variant, tol=self.tol,
                                    max_iters=self.iteration_cap(problem), **self.solver)


@dataclass
class SummaryRow:
    problem: str
    variant: str
    mean_iterations: float
    mean_seconds: float
    convergence_rate: float

    def csv_row(self):
        return [self.problem, self.variant, repr(float(self.mean_iterations)),
                repr(float(self.mean_seconds)), repr(float(self.convergence_rate))]


@dataclass
class TrialRecord:
    problem: str
    variant: str
    trial: int
    seed: int
    iterations: int | None
    seconds: float | None
    status: str
    trace_file: str | None
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None or self.status == "nonfinite"


def trace_path(out, problem, variant, trial):
    return Path(out) / problem / variant / f"trial{trial}.csv"


def _run_trial(spec, problem, trial):
    """Solve one instance with every requested variant."""
    seed = problems.derive_seed(spec.master_seed, problem, trial)
    records = []
    try:
        instance, _ = problems.benchmark_instance(problem, seed, spec.desk_scale,
                                                  **spec.overrides.get(problem, {}))
    except Exception as exc:  # recorded, the sweep goes on
        return [TrialRecord(problem, v, trial, seed, None, None, "error", None,
                            f"generator: {exc!r}") for v in spec.variants]
    for variant in spec.variants:
        opts = spec.options_for(problem, variant)
        try:
            start = time.perf_counter()
            res = engine.solve(instance, opts, rng=np.random.default_rng(seed))
            seconds = time.perf_counter() - start
        except Exception as exc:
            records.append(TrialRecord(problem, variant, trial, seed, None, None, "error", None,
                                       f"solver: {exc!r}"))
            continue
        path = trace_path(spec.out, problem, variant, trial)
        path.parent.mkdir(parents=True, exist_ok=True)
        res.trace.to_csv(path)
        records.append(TrialRecord(problem, variant, trial, seed, res.iterations,
                                   seconds if spec.timing else math.nan, res.status,
                                   str(path.relative_to(spec.out))))
    return records


def _run_trial_args(args):
    return _run_trial(*args)


def summarize(spec, records):
    rows = []
    for problem in spec.problems:
        for variant in spec.variants:
            ok = [r for r in records if r.problem == problem and r.variant == variant
                  and r.iterations is not None]
            n = len(ok)
            if n:
                mean_it = sum(r.iterations for r in ok) / n
                mean_s = sum(r.seconds for r in ok) / n if spec.timing else math.nan
                rate = sum(r.status == "converged" for r in ok) / n
            else:
                mean_it = mean_s = rate = math.nan
            rows.append(SummaryRow(problem, variant, mean_it, mean_s, rate))
    return rows


def write_summary(out, rows, spec=None, records=None):
    out = Path(out)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow(row.csv_row())
    doc = {"rows": [asdict(r) for r in rows]}
    if spec is not None:
        doc["spec"] = asdict(spec)
    if records is not None:
        doc["trials"] = [asdict(r) for r in records]
    with open(out / "summary.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def read_summary_csv(path):
    with open(path, newline="") as fh:
        rdr = csv.DictReader(fh)
        if tuple(rdr.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {rdr.fieldnames}")
        return [SummaryRow(r["problem"], r["variant"], float(r["mean_iterations"]),
                           float(r["mean_seconds"]), float(r["convergence_rate"]))
                for r in rdr]


def read_summary_json(path):
    with open(path) as fh:
        doc = json.load(fh)
    rows = [SummaryRow(**r) for r in doc["rows"]]
    trials = [TrialRecord(**r) for r in doc.get("trials", [])]
    return rows, trials, doc.get("spec")


def run_experiment(spec, log=None):
    """Run the sweep; returns ``(summary_rows, trial_records)``.

    Generator or solver failures are kept as records with an ``error`` and do
    not stop the remaining trials.
    """
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(spec, p, t) for p in spec.problems for t in range(int(spec.trials))]
    if spec.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=int(spec.jobs)) as pool:
            batches = list(pool.map(_run_trial_args, tasks))
    else:
        batches = []
        for task in tasks:
            batches.append(_run_trial(*task))
            if log:
                for r in batches[-1]:
                    log(f"{r.problem:11s} {r.variant:12s} trial {r.trial:3d}  "
                        f"{r.status:9s} iters={r.iterations}")
    records = [r for batch in batches for r in batch]
    records.sort(key=lambda r: (spec.problems.index(r.problem), r.trial,
                                spec.variants.index(r.variant)))
    rows = summarize(spec, records)
    write_summary(out, rows, spec, records)
    return rows, records


# ---------------------------------------------------------------------------
# convergence curves

def emit_curves(trace_files, out_path=None):
    """Optimality gaps for one instance traced by several variants.

    ``trace_files`` maps ``(problem, variant)`` to a trace CSV.  The gap
    baseline ``h_best`` is the smallest objective seen in any trace of the
    same problem.  Returns the rows and writes them to ``out_path`` if given.
    """
    loaded = {}
    for key, path in trace_files.items():
        cols = engine.read_trace_csv(path)
        if not np.all(np.isfinite(cols["objective"])):
            raise KeyError(f"{path}: objective values were not recorded")
        loaded[key] = cols
    best = {}
    for (problem, _), cols in loaded.items():
        if len(cols["objective"]):
            best[problem] = min(best.get(problem, np.inf), float(cols["objective"].min()))
    rows = []
    for (problem, variant), cols in loaded.items():
        for it, obj in zip(cols["iter"], cols["objective"]):
            rows.append((problem, variant, int(it), float(obj) - best[problem]))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            for problem, variant, it, gap in rows:
                w.writerow([problem, variant, it, repr(gap)])
    return rows


def curves_from_run(out, trial=0):
    """Write ``curves_<problem>.csv`` for every problem found under ``out``."""
    out = Path(out)
    written = []
    for pdir in sorted(p for p in out.iterdir() if p.is_dir()):
        files = {(pdir.name, vdir.name): vdir / f"trial{trial}.csv"
                 for vdir in sorted(pdir.iterdir())
                 if (vdir / f"trial{trial}.csv").exists()}
        if files:
            target = out / f"curves_{pdir.name}.csv"
            emit_curves(files, target)
            written.append(target)
    return written


def format_table(rows):
    """Plain-text table: one line per problem, ``iterations (seconds)`` per variant."""
    variants = [v for v in engine.VARIANTS if any(r.variant == v for r in rows)]
    header = f"{'Problem':12s}" + "".join(f"{v:>22s}" for v in variants)
    lines = [header, "-" * len(header)]
    by_key = {(r.problem, r.variant): r for r in rows}
    for problem in dict.fromkeys(r.problem for r in rows):
        cells = []
        for v in variants:
            r = by_key.get((problem, v))
            if r is None:
                cells.append(f"{'-':>22s}")
            else:
                secs = "" if math.isnan(r.mean_seconds) else f" ({r.mean_seconds:.3f})"
                cells.append(f"{r.mean_iterations:>12.1f}{secs:>10s}")
        lines.append(f"{problem:12s}" + "".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# command line

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def _split_list(values):
    if values is None:
        return None
    out = []
    for v in values if isinstance(values, list) else [values]:
        out.extend(s for s in str(v).split(",") if s)
    return out


def build_parser():
    p = _Parser(prog="fbsplit-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a problem x variant x trial sweep")
    run.add_argument("--config", help="flat JSON file mirroring these flags")
    run.add_argument("--problem", action="append",
                     help="benchmark name, comma list or 'all' (repeatable)")
    run.add_argument("--variant", action="append", help="plain, accelerated, adaptive")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iters", type=int)
    run.add_argument("--out")
    run.add_argument("--desk-scale", action="store_true", default=None)
    run.add_argument("--jobs", type=int)
    run.add_argument("--no-timing", action="store_true", default=None,
                     help="write nan instead of wall-clock seconds")
    run.add_argument("--window", type=int)
    run.add_argument("--eps-r", type=float)
    run.add_argument("--eps-n", type=float)
    run.add_argument("--restart", choices=("on", "off"))
    run.add_argument("--max-backtracks", type=int)
    run.add_argument("--ls-slack", type=float)
    run.add_argument("--lipschitz-factor", type=float)
    run.add_argument("--tau0", type=float)
    run.add_argument("--stop-rule", choices=engine.STOP_RULES)
    run.add_argument("--quiet", action="store_true")

    cur = sub.add_parser("curves", help="optimality-gap curves from a finished run")
    cur.add_argument("--out", required=True, help="directory of a previous run")
    cur.add_argument("--trial", type=int, default=0)

    tab = sub.add_parser("table", help="print summary.json as a table")
    tab.add_argument("--out", required=True)

    st = sub.add_parser("selftest", help="run the invariant suites")
    st.add_argument("--seed", type=int, default=0)
    return p


def spec_from_args(args):
    conf = {}
    if args.config:
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read config: {exc}") from exc
        if not isinstance(conf, dict):
            raise SpecError("config must be a JSON object")
        conf = {k.replace("-", "_"): v for k, v in conf.items()}
        args.quiet = bool(conf.pop("quiet", False)) or args.quiet
    flags = {k: v for k, v in vars(args).items()
             if v is not None and k not in ("command", "config", "quiet")}
    merged = {**conf, **flags}

    kw = {}
    solver = {"stop_rule": "relative"}
    for key, value in merged.items():
        if key in ("problem", "problems"):
            names = _split_list(value)
            kw["problems"] = sorted(problems.BENCHMARKS) if names == ["all"] else names
        elif key in ("variant", "variants"):
            kw["variants"] = _split_list(value)
        elif key == "no_timing":
            kw["timing"] = not value
        elif key == "restart":
            solver["restart"] = value in ("on", True)
        elif key in SOLVER_KNOBS:
            solver[key] = value
        elif key in ("seed", "master_seed"):
            kw["master_seed"] = value
        elif key in ("trials", "tol", "max_iters", "out", "desk_scale", "jobs", "timing",
                     "overrides"):
            kw[key] = value
        else:
            raise SpecError(f"unknown config key {key!r}")
    if "problems" not in kw:
        raise SpecError("run needs at least one --problem")
    kw["solver"] = solver
    try:
        return ExperimentSpec(**kw)
    except TypeError as exc:
        raise SpecError(str(exc)) from exc


def cli_main(argv=None):
    """Entry point; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            spec = spec_from_args(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 2

    if args.command == "run":
        log = None if args.quiet else print
        rows, records = run_experiment(spec, log=log)
        print(format_table(rows))
        failed = [r for r in records if r.failed]
        for r in failed:
            print(f"failed: {r.problem}/{r.variant} trial {r.trial}: {r.error or r.status}",
                  file=sys.stderr)
        return 1 if failed else 0

    if args.command == "curves":
        out = Path(args.out)
        if not out.is_dir():
            print(f"error: {out} is not a directory", file=sys.stderr)
            return 2
        try:
            written = curves_from_run(out, args.trial)
        except KeyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for path in written:
            print(path)
        return 0 if written else 1

    if args.command == "table":
        path = Path(args.out) / "summary.json"
        if not path.exists():
            print(f"error: {path} not found", file=sys.stderr)
            return 2
        rows, _, _ = read_summary_json(path)
        print(format_table(rows))
        return 0

    failures = checks.run_selftest(seed=args.seed)
    return 1 if failures else 0


def main():
    sys.exit(cli_main())


__all__ = ["ExperimentSpec", "SummaryRow", "TrialRecord", "run_experiment", "emit_curves",
           "curves_from_run", "cli_main", "format_table", "read_summary_csv",
           "read_summary_json", "SpecError"]
