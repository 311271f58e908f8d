"""Optimality-gap curves for one seeded instance of each problem.

Solves each problem once with every variant, writes a
``curves_<problem>.csv`` per problem (columns problem, variant, iter,
optimality_gap) and prints the iteration at which each variant first gets
within ``--gap`` (relative to the best objective) of that best objective.

    python3 scripts/convergence_curves.py --problem bpdn500 tv --out runs/curves
"""

import argparse
from pathlib import Path

from fbsplit import bench, engine, problems


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", nargs="+", default=["bpdn500"],
                    choices=sorted(problems.BENCHMARKS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--gap", type=float, default=1e-6)
    ap.add_argument("--out", default="runs/curves")
    args = ap.parse_args()

    out = Path(args.out)
    spec = bench.ExperimentSpec(problems=args.problem, trials=1, master_seed=args.seed,
                                tol=args.tol, out=str(out), desk_scale=True)
    bench.run_experiment(spec)
    for problem in spec.problems:
        files = {(problem, v): bench.trace_path(out, problem, v, 0) for v in spec.variants}
        target = out / f"curves_{problem}.csv"
        rows = bench.emit_curves(files, target)
        h_best = min(engine.read_trace_csv(f)["objective"].min() for f in files.values())
        print(target)
        for variant in spec.variants:
            hits = [it for _, v, it, gap in rows
                    if v == variant and gap <= args.gap * abs(h_best)]
            first = hits[0] if hits else "never"
            print(f"  {variant:12s} relative gap <= {args.gap:g} at iteration {first}")


if __name__ == "__main__":
    main()
