"""Mean iteration counts for every benchmark problem and variant.

Runs the full sweep through the benchmark harness and prints a table of
``iterations (seconds)`` per variant.  Cheap rows run at full size; the
expensive rows use the reduced desk-scale sizes unless ``--full`` is given.

    python3 scripts/iteration_table.py --trials 20 --out runs/table
"""

import argparse

from fbsplit import bench, problems

CHEAP = ["lasso100", "lasso500", "bpdn100", "bpdn500", "logistic", "mmv", "democratic"]
EXPENSIVE = ["matcomp", "tv", "svm", "phaselift", "nmf", "maxnorm"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/table")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--full", action="store_true", help="expensive rows at full size")
    ap.add_argument("--only", nargs="*", choices=sorted(problems.BENCHMARKS))
    args = ap.parse_args()

    rows = []
    groups = [(CHEAP, False), (EXPENSIVE, not args.full)]
    for names, desk in groups:
        names = [n for n in names if not args.only or n in args.only]
        if not names:
            continue
        spec = bench.ExperimentSpec(problems=names, trials=args.trials, master_seed=args.seed,
                                    out=f"{args.out}/{'desk' if desk else 'full'}",
                                    desk_scale=desk, jobs=args.jobs)
        got, _ = bench.run_experiment(spec)
        rows.extend(got)
    print(bench.format_table(rows))


if __name__ == "__main__":
    main()
