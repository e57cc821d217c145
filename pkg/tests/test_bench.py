import math
import os

import numpy as np
import pytest

from conftest import LinearProblem
from lowrank_rk import cli
from lowrank_rk.bench import (
    CSV_HEADER,
    ExperimentConfig,
    RunRecord,
    SweepSummary,
    _steps_for,
    build_initial,
    diagnose_tangent,
    emit_csv,
    example1_check,
    parse_csv,
    parse_method,
    run_experiment,
)
from lowrank_rk.problems import ImagSchrodingerProblem
from lowrank_rk.randgen import RngStream
from lowrank_rk.reference import clear_cache
from lowrank_rk.svgplot import render_convergence_svg
from lowrank_rk import factored as fm


def test_parse_method():
    assert parse_method("rand_rk1") == ("rand_rk", "rk1")
    assert parse_method("rand_rk2") == ("rand_rk", "rk2")
    assert parse_method("rand_rk4") == ("rand_rk", "rk4")
    assert parse_method("rand_rk2_reuse") == ("rand_rk_reuse", "rk2")
    assert parse_method("rand_rk4_reuse") == ("rand_rk_reuse", "rk4")
    assert parse_method("modified_rk4") == ("modified_rk4", "rk4")
    assert parse_method("prk1") == ("prk", "rk1")
    assert parse_method("prk2") == ("prk", "rk2")
    assert parse_method("prk4") == ("prk", "rk4")
    for bad in ("prk2_reuse", "rand_rk3", "prk3", "modified_rk4_reuse", "rk2", ""):
        with pytest.raises(ValueError):
            parse_method(bad)


def test_experiment_config_validation():
    ok = dict(problem="toy", methods=("rand_rk2",), ranks=(2,), step_sizes=(0.5, 0.25))
    ExperimentConfig(**ok)
    with pytest.raises(ValueError):
        ExperimentConfig(**{**ok, "methods": ()})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**ok, "step_sizes": (0.25, 0.5)})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**ok, "step_sizes": (0.5, -0.1)})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**ok, "methods": ("rand_rk3",)})
    assert ExperimentConfig(**ok).experiment_id == "toy"
    assert ExperimentConfig(**ok, experiment_id="x").experiment_id == "x"


def test_steps_for():
    assert _steps_for(1.0, 0.3) == (3, pytest.approx(1.0 / 3.0))
    assert _steps_for(0.1, 0.1) == (1, 0.1)
    assert _steps_for(1.0, 2.0) == (1, 1.0)
    n, h = _steps_for(1.0, 1e-3)
    assert n == 1000 and h == pytest.approx(1e-3)


def _toy_cfg(**kw):
    base = dict(
        problem="toy",
        T=0.5,
        methods=("rand_rk2",),
        ranks=(3,),
        step_sizes=(0.05, 0.025),
        trials=2,
        seed=7,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_shape_and_order():
    clear_cache()
    cfg = _toy_cfg(methods=("rand_rk2", "prk2"), trials=3)
    records, summary = run_experiment(cfg)
    assert len(records) == 2 * 1 * 2 * 3
    # grouped in configured method order, h descending, trials in order
    want = [
        (m, 3, h, t)
        for m in ("rand_rk2", "prk2")
        for h in (0.05, 0.025)
        for t in range(3)
    ]
    assert [(r.method, r.rank, r.h, r.trial) for r in records] == want
    assert all(r.failure is None for r in records)
    assert all(math.isfinite(r.error_fro) for r in records)
    assert all(r.ref_norm > 0 for r in records)
    # full rank on the 3x3 toy: only time error remains
    assert summary.plateau("rand_rk2", 3) <= 1e-3
    # prk is deterministic, trials agree exactly
    prk_errs = [r.error_fro for r in records if r.method == "prk2" and r.h == records[0].h]
    assert len(set(prk_errs)) == 1


def test_run_experiment_determinism_modulo_time():
    clear_cache()
    cfg = _toy_cfg()
    rec_a, _ = run_experiment(cfg)
    rec_b, _ = run_experiment(cfg)
    strip = lambda rs: [(r.experiment, r.method, r.rank, r.h, r.trial, r.seed, r.error_fro, r.ref_norm) for r in rs]
    assert strip(rec_a) == strip(rec_b)


def test_run_experiment_workers_match_serial():
    clear_cache()
    cfg1 = _toy_cfg(trials=3)
    cfg2 = _toy_cfg(trials=3, workers=4)
    rec_a, _ = run_experiment(cfg1)
    rec_b, _ = run_experiment(cfg2)
    strip = lambda rs: [(r.method, r.rank, r.h, r.trial, r.error_fro) for r in rs]
    assert strip(rec_a) == strip(rec_b)


def test_run_experiment_records_failures():
    clear_cache()
    # rank 0 is rejected by the integrator config; the sweep must survive it
    cfg = _toy_cfg(ranks=(0,))
    records, summary = run_experiment(cfg)
    assert len(records) == 4
    assert all(r.failure is not None for r in records)
    assert all(math.isnan(r.error_fro) for r in records)
    assert "rank" in records[0].failure
    assert summary.points == {}


def test_run_experiment_ref_cache(tmp_path):
    clear_cache()
    cfg = _toy_cfg(trials=1, ref_cache=str(tmp_path))
    run_experiment(cfg)
    assert list(tmp_path.glob("*.lrref"))


def test_build_initial_reserved_substream():
    prob = ImagSchrodingerProblem(n=16)
    A = build_initial(prob, 42)
    B = prob.initial_value(RngStream(42).substream(2**63))
    assert np.array_equal(fm.to_dense(A), fm.to_dense(B))


# ------------------------------------------------------------- summaries


def _synthetic_records(curve, hs, trials=3, method="rand_rk2", rank=8):
    out = []
    for h in hs:
        for t in range(trials):
            err = curve(h) * (1.0 + 0.001 * (t - 1))
            out.append(RunRecord("syn", method, rank, h, t, 1, err, 1.0, 0.5))
    return out


def test_slope_recovery_exact_power_law():
    hs = np.geomspace(1e-1, 1e-3, 8)
    recs = _synthetic_records(lambda h: 2.5 * h**2, hs, trials=1)
    summ = SweepSummary(recs)
    assert abs(summ.slope("rand_rk2", 8) - 2.0) <= 1e-6
    assert abs(summ.slope_smallest("rand_rk2", 8, 3) - 2.0) <= 1e-6


def test_slope_ignores_plateau():
    hs = np.geomspace(1e-1, 1e-4, 10)
    floor = 3e-5
    recs = _synthetic_records(lambda h: max(4.0 * h**2, floor), hs)
    summ = SweepSummary(recs)
    assert abs(summ.slope("rand_rk2", 8) - 2.0) <= 0.05
    assert summ.plateau("rand_rk2", 8) == pytest.approx(floor, rel=0.01)
    # fit restricted to the smallest h sees only the flat region
    assert abs(summ.slope_smallest("rand_rk2", 8, 3)) <= 0.05


def test_slope_nan_when_everything_plateaus():
    hs = np.geomspace(1e-1, 1e-3, 6)
    recs = _synthetic_records(lambda h: 1e-4, hs, trials=1)
    summ = SweepSummary(recs)
    assert math.isnan(summ.slope("rand_rk2", 8))


def test_point_stats():
    recs = [
        RunRecord("syn", "rand_rk2", 8, 0.1, t, 1, e, 1.0, 0.5)
        for t, e in enumerate((1.0, 2.0, 6.0))
    ]
    recs.append(RunRecord("syn", "rand_rk2", 8, 0.1, 3, 1, float("nan"), 1.0, 0.5, failure="x"))
    summ = SweepSummary(recs)
    (pt,) = summ.points[("rand_rk2", 8)]
    assert pt.trials == 3  # the failed trial is excluded
    assert pt.mean == pytest.approx(3.0)
    assert pt.min == 1.0 and pt.max == 6.0
    assert math.isnan(summ.plateau("nope", 1))


# ------------------------------------------------------------------ csv


def test_csv_roundtrip(tmp_path):
    recs = [
        RunRecord("e", "rand_rk2", 8, 0.1 / 3.0, 0, 42, 1.2345678901234567e-5, 63.2, 12.5),
        RunRecord("e", "prk2", 4, 0.05, 1, 42, float("nan"), 63.2, 1.0),
    ]
    path = str(tmp_path / "out.csv")
    emit_csv(recs, path)
    with open(path) as f:
        lines = f.read().strip().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    back = parse_csv(path)
    assert back[0].h == recs[0].h  # 17 significant digits survive the trip
    assert back[0].error_fro == recs[0].error_fro
    assert math.isnan(back[1].error_fro)
    assert back[0].seed == 42 and back[0].rank == 8


def test_emit_csv_empty_raises(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], str(tmp_path / "x.csv"))


def test_parse_csv_rejects_foreign_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="unexpected header"):
        parse_csv(str(p))


# ------------------------------------------------------------- diagnose


def test_diagnose_tangent_zero_for_tangent_field():
    # F(Y) = Y lies in every tangent space, so the residual vanishes
    n = 12
    prob = LinearProblem(0.5 * np.eye(n), 0.5 * np.eye(n), None)
    rng = np.random.default_rng(0)
    prob.A0 = rng.standard_normal((n, 4)) @ rng.standard_normal((4, n))
    rep = diagnose_tangent(prob, rank=4, h=0.05, T=0.2, seed=1)
    assert len(rep.series) == 4
    assert rep.max <= 1e-10
    assert rep.mean <= rep.max


def test_diagnose_tangent_by_name():
    rep = diagnose_tangent("toy", rank=2, h=0.25, T=1.0, seed=3)
    assert len(rep.series) == 4
    assert rep.max > 0.0
    steps = [s for s, _, _ in rep.series]
    assert steps == [1, 2, 3, 4]


# ------------------------------------------------------------- example 1


def test_example1_report():
    rep = example1_check()
    assert rep.truncation_error == pytest.approx(1.234e-10, rel=1e-2)
    assert rep.tangent_gap == pytest.approx(8.103e-3, rel=1e-3)
    assert rep.zero_step_error == 0.0
    assert rep.ok


# ------------------------------------------------------------------ svg


def test_render_convergence_svg(tmp_path):
    hs = np.geomspace(1e-1, 1e-3, 6)
    recs = _synthetic_records(lambda h: 2.0 * h**2, hs, method="rand_rk2", rank=8)
    recs += _synthetic_records(lambda h: 0.5 * h, hs, method="rand_rk1", rank=8)
    summ = SweepSummary(recs)
    path = str(tmp_path / "plot.svg")
    render_convergence_svg(summ, "synthetic", path)
    text = open(path).read()
    assert text.startswith("<svg")
    assert "rand_rk2" in text and "rand_rk1" in text
    assert "polyline" in text
    assert "synthetic" in text


def test_render_convergence_svg_empty_raises(tmp_path):
    with pytest.raises(ValueError):
        render_convergence_svg(SweepSummary([]), "empty", str(tmp_path / "x.svg"))


# ------------------------------------------------------------------ cli


def test_parse_step_sizes():
    hs = cli.parse_step_sizes("1e-1:1e-3:log8")
    assert len(hs) == 8
    assert hs[0] == pytest.approx(1e-1) and hs[-1] == pytest.approx(1e-3)
    assert list(hs) == sorted(hs, reverse=True)
    assert cli.parse_step_sizes("1e-2,5e-2") == (5e-2, 1e-2)
    for bad in ("1e-1:1e-3:8", "1e-1:1e-3:log1", ",", "0:1e-3:log4"):
        with pytest.raises(ValueError):
            cli.parse_step_sizes(bad)


def test_cli_example1(capsys):
    assert cli.main(["example1"]) == 0
    out = capsys.readouterr().out
    assert out.count("[ok]") == 3


def test_cli_tableaus(capsys):
    assert cli.main(["tableaus"]) == 0
    out = capsys.readouterr().out
    assert "rk4: stages=4" in out
    assert "residual" in out


def test_cli_sweep_toy(tmp_path, capsys):
    clear_cache()
    rc = cli.main([
        "sweep", "--problem", "toy", "--methods", "rand_rk2", "--ranks", "2",
        "--hs", "0.5,0.25", "--trials", "2", "--T", "0.5", "--seed", "5",
        "--out", str(tmp_path),
    ])
    assert rc == 0
    csv_path = tmp_path / "toy.csv"
    svg_path = tmp_path / "toy.svg"
    assert csv_path.exists() and svg_path.exists()
    records = parse_csv(str(csv_path))
    assert len(records) == 4
    assert {r.method for r in records} == {"rand_rk2"}
    out = capsys.readouterr().out
    assert "4 runs (0 failed)" in out
    assert "plateau" in out


def test_cli_run_toy(capsys):
    clear_cache()
    rc = cli.main([
        "run", "--problem", "toy", "--method", "prk2", "--rank", "2",
        "--h", "0.1", "--trials", "1", "--T", "0.2",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "prk2" in out and "error_fro" in out


def test_cli_diagnose_toy(capsys):
    rc = cli.main(["diagnose", "--problem", "toy", "--rank", "2", "--h", "0.1", "--T", "1.0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mean" in out and "max" in out
    assert "..." in out  # 10 steps collapse to head ... tail


def test_cli_config_precedence(tmp_path, capsys):
    clear_cache()
    ini = tmp_path / "exp.ini"
    ini.write_text(
        "[sweep]\n"
        "problem = toy\n"
        "methods = rand_rk1\n"
        "ranks = 2\n"
        "hs = 0.5,0.25\n"
        "trials = 1\n"
        "T = 0.5\n"
        f"out = {tmp_path}\n"
    )
    rc = cli.main(["sweep", "--config", str(ini), "--trials", "2"])
    assert rc == 0
    records = parse_csv(str(tmp_path / "toy.csv"))
    assert {r.method for r in records} == {"rand_rk1"}  # from the file
    assert len(records) == 4  # 2 h values x 2 trials: the flag beat the file
    capsys.readouterr()


def test_cli_config_missing_file():
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--config", "/nonexistent.ini"])
