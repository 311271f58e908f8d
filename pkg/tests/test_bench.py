import csv
import json
import math

import numpy as np
import pytest

from fbsplit import bench, engine
from fbsplit.bench import ExperimentSpec, SpecError

SMALL = {"bpdn100": {"n": 200, "k": 5}, "lasso100": {"n": 200, "k": 5, "radius": 4.0}}


def small_spec(tmp_path, **kw):
    base = dict(problems=["bpdn100"], variants=["adaptive"], trials=2, out=str(tmp_path),
                overrides=SMALL)
    return ExperimentSpec(**{**base, **kw})


@pytest.mark.parametrize("kw", [{"problems": []}, {"problems": ["nope"]}, {"variants": ["x"]},
                                {"variants": []}, {"variants": ["plain", "plain"]},
                                {"trials": 0}, {"tol": 0.0}, {"max_iters": 0}, {"jobs": 0},
                                {"solver": {"speed": 1}}, {"solver": {"window": 0}}])
def test_spec_validation(kw, tmp_path):
    with pytest.raises(SpecError):
        small_spec(tmp_path, **kw)


def test_iteration_caps(tmp_path):
    spec = small_spec(tmp_path, problems=["svm", "tv"])
    assert spec.iteration_cap("svm") == 5000 and spec.iteration_cap("tv") == 1000
    assert small_spec(tmp_path, max_iters=7).iteration_cap("svm") == 7


def test_run_counts_files_and_rows(tmp_path):
    rows, records = bench.run_experiment(small_spec(tmp_path))
    files = sorted((tmp_path / "bpdn100" / "adaptive").glob("*.csv"))
    assert len(files) == 2 and len(rows) == 1 and len(records) == 2
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "summary.json").exists()


def test_summary_means_recomputable_from_artifacts(tmp_path):
    spec = small_spec(tmp_path, variants=["plain", "adaptive"], trials=3)
    rows, records = bench.run_experiment(spec)
    for row in rows:
        lengths = [len(engine.read_trace_csv(tmp_path / r.trace_file)["iter"])
                   for r in records if r.variant == row.variant]
        secs = [r.seconds for r in records if r.variant == row.variant]
        assert row.mean_iterations == pytest.approx(np.mean(lengths))
        assert row.mean_seconds == pytest.approx(np.mean(secs))
    again = bench.read_summary_csv(tmp_path / "summary.csv")
    assert [r.mean_iterations for r in again] == [r.mean_iterations for r in rows]
    jrows, jtrials, jspec = bench.read_summary_json(tmp_path / "summary.json")
    assert len(jtrials) == 6 and jspec["trials"] == 3


def test_summary_csv_header(tmp_path):
    bench.run_experiment(small_spec(tmp_path, trials=1))
    with open(tmp_path / "summary.csv") as fh:
        assert next(csv.reader(fh)) == list(bench.SUMMARY_COLUMNS)


def test_untimed_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    bench.run_experiment(small_spec(a, timing=False))
    bench.run_experiment(small_spec(b, timing=False))
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    bench.run_experiment(small_spec(a, timing=False, trials=3))
    bench.run_experiment(small_spec(b, timing=False, trials=3, jobs=2))
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_generator_failure_is_recorded(tmp_path):
    spec = small_spec(tmp_path, overrides={"bpdn100": {"n": 200, "k": 500}})
    rows, records = bench.run_experiment(spec)
    assert all(r.failed and "generator" in r.error for r in records)
    assert math.isnan(rows[0].mean_iterations)


def test_emit_curves_gaps(tmp_path):
    spec = small_spec(tmp_path, variants=list(engine.VARIANTS), trials=1)
    bench.run_experiment(spec)
    files = {("bpdn100", v): tmp_path / "bpdn100" / v / "trial0.csv" for v in engine.VARIANTS}
    rows = bench.emit_curves(files, tmp_path / "c.csv")
    gaps = np.array([r[3] for r in rows])
    assert np.all(gaps >= 0) and gaps.min() == 0.0
    assert {r[1] for r in rows} == set(engine.VARIANTS)


def test_emit_curves_requires_objectives(tmp_path):
    p = tmp_path / "t.csv"
    res = engine.solve(bench.problems.benchmark_instance("bpdn100", n=200, k=5)[0],
                       engine.SolverOptions(record_objective=False, max_iters=3))
    res.trace.to_csv(p)
    with pytest.raises(KeyError):
        bench.emit_curves({("bpdn100", "adaptive"): p})


def test_bpdn500_adaptive_reaches_small_gap_first(tmp_path):
    spec = ExperimentSpec(problems=["bpdn500"], variants=["plain", "adaptive"], trials=1,
                          out=str(tmp_path), solver={"stop_rule": "relative"}, tol=1e-8)
    bench.run_experiment(spec)
    files = {("bpdn500", v): tmp_path / "bpdn500" / v / "trial0.csv" for v in spec.variants}
    rows = bench.emit_curves(files)
    best = min(engine.read_trace_csv(f)["objective"].min() for f in files.values())

    def first_hit(variant):
        its = [it for _, v, it, gap in rows if v == variant and gap < 1e-6 * best]
        return min(its) if its else math.inf

    assert first_hit("adaptive") < first_hit("plain")


# --- CLI ---------------------------------------------------------------------

def write_config(tmp_path, **kw):
    conf = {"overrides": SMALL, "quiet": True, **kw}
    path = tmp_path / "conf.json"
    path.write_text(json.dumps(conf))
    return str(path)


def test_cli_run_example(tmp_path, capsys):
    out = tmp_path / "run"
    rc = bench.cli_main(["run", "--config", write_config(tmp_path), "--problem", "lasso100",
                         "--variant", "adaptive", "--trials", "5", "--seed", "7",
                         "--out", str(out), "--quiet"])
    assert rc == 0
    assert len(list((out / "lasso100" / "adaptive").glob("*.csv"))) == 5
    assert len(bench.read_summary_csv(out / "summary.csv")) == 1
    assert "lasso100" in capsys.readouterr().out


def test_cli_flags_override_config(tmp_path):
    out = tmp_path / "run"
    conf = write_config(tmp_path, problem="bpdn100", trials=4, variant="plain")
    assert bench.cli_main(["run", "--config", conf, "--trials", "1", "--out", str(out),
                           "--quiet"]) == 0
    _, trials, spec = bench.read_summary_json(out / "summary.json")
    assert spec["trials"] == 1 and spec["variants"] == ["plain"]


@pytest.mark.parametrize("argv", [["run", "--problem", "lasso7"], ["run"],
                                  ["run", "--problem", "bpdn100", "--variant", "fast"],
                                  ["run", "--problem", "bpdn100", "--trials", "0"],
                                  ["run", "--problem", "bpdn100", "--config", "/nonexistent"],
                                  ["bogus"], ["table", "--out", "/nonexistent"]])
def test_cli_bad_arguments_exit_2(argv):
    assert bench.cli_main(argv) == 2


def test_cli_failed_trial_exit_1(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"overrides": {"bpdn100": {"n": 10, "k": 50}}}))
    assert bench.cli_main(["run", "--config", str(conf), "--problem", "bpdn100", "--trials",
                           "1", "--out", str(tmp_path / "o"), "--quiet"]) == 1


def test_cli_curves_and_table(tmp_path, capsys):
    out = tmp_path / "run"
    bench.cli_main(["run", "--config", write_config(tmp_path), "--problem", "bpdn100",
                    "--trials", "1", "--out", str(out), "--quiet"])
    assert bench.cli_main(["curves", "--out", str(out)]) == 0
    assert (out / "curves_bpdn100.csv").exists()
    assert bench.cli_main(["table", "--out", str(out)]) == 0
    assert "adaptive" in capsys.readouterr().out


def test_cli_selftest_passes(capsys):
    assert bench.cli_main(["selftest", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    for suite in ("prox-oracle", "adjoint", "gradient", "line-search"):
        assert suite in out
