"""Experiment harness: sweeps over (method, rank, h, trial), error statistics,
convergence slopes, CSV emission, and the toy closed-form check.

A sweep builds the problem once, computes (or fetches) the dense reference at
time T once per initial value, then integrates every combination and records
the final Frobenius error against the reference. Trial t draws its randomness
from substream(root, t), so runs are reproducible and adding trials never
perturbs earlier ones.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import factored as fm
from .factored import FactoredMatrix
from .integrators import IntegratorConfig, integrate, prepare_initial, tableau
from .nystrom import SketchDims
from .problems import RhsOperator, make_problem, tangential_projection_error
from .randgen import RngStream
from .reference import AdaptiveSolverSettings, solve_reference

CSV_HEADER = ["experiment", "method", "rank", "h", "trial", "seed", "error_fro", "ref_norm", "time_ms"]

_A0_LABEL = 2**63  # substream label reserved for random initial values


def parse_method(name: str) -> tuple[str, str]:
    """Method string -> (scheme, tableau name).

    rand_rk1/rand_rk2/rand_rk4 (+ _reuse suffix), modified_rk4, prk1/prk2/prk4.
    """
    if name == "modified_rk4":
        return "modified_rk4", "rk4"
    base, reuse = (name[: -len("_reuse")], True) if name.endswith("_reuse") else (name, False)
    for prefix, scheme in (("rand_rk", "rand_rk"), ("prk", "prk")):
        if base.startswith(prefix) and base[len(prefix) :] in ("1", "2", "4"):
            if reuse and scheme != "rand_rk":
                break
            return (scheme + "_reuse" if reuse else scheme), "rk" + base[len(prefix) :]
    raise ValueError(f"unknown method {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    problem_params: dict = field(default_factory=dict)
    T: float = 1.0
    methods: tuple[str, ...] = ("rand_rk4",)
    ranks: tuple[int, ...] = (16,)
    step_sizes: tuple[float, ...] = ()
    trials: int = 10
    seed: int = 42
    ref_cache: str | None = None
    workers: int = 1
    experiment_id: str = ""

    def __post_init__(self):
        if not self.methods or not self.ranks or not self.step_sizes:
            raise ValueError("methods, ranks and step_sizes must be non-empty")
        hs = tuple(float(h) for h in self.step_sizes)
        if any(h <= 0 for h in hs):
            raise ValueError("step sizes must be positive")
        if list(hs) != sorted(hs, reverse=True):
            raise ValueError("step sizes must be sorted descending")
        object.__setattr__(self, "step_sizes", hs)
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", self.problem)
        for m in self.methods:
            parse_method(m)


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    method: str
    rank: int
    h: float
    trial: int
    seed: int
    error_fro: float
    ref_norm: float
    time_ms: float
    failure: str | None = None


@dataclass(frozen=True)
class PointStat:
    h: float
    mean: float
    min: float
    max: float
    trials: int


class SweepSummary:
    """Per-(method, rank) error statistics over h, plus fitted slopes."""

    def __init__(self, records: list[RunRecord]):
        cells: dict[tuple[str, int, float], list[float]] = {}
        for rec in records:
            if rec.failure is None and math.isfinite(rec.error_fro):
                cells.setdefault((rec.method, rec.rank, rec.h), []).append(rec.error_fro)
        self.points: dict[tuple[str, int], list[PointStat]] = {}
        for (method, rank, h), errs in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1], -kv[0][2])):
            stat = PointStat(h, float(np.mean(errs)), float(np.min(errs)), float(np.max(errs)), len(errs))
            self.points.setdefault((method, rank), []).append(stat)

    def slope(self, method: str, rank: int) -> float:
        """Least-squares slope of log mean error vs log h on the pre-plateau window.

        Points whose mean error is within 3x of the smallest mean error in
        the series are treated as plateaued and dropped; NaN when fewer than
        two points survive.
        """
        pts = self.points.get((method, rank), [])
        if len(pts) < 2:
            return float("nan")
        floor = min(p.mean for p in pts)
        kept = [p for p in pts if p.mean > 3.0 * floor]
        if len(kept) < 2:
            return float("nan")
        return float(np.polyfit(np.log([p.h for p in kept]), np.log([p.mean for p in kept]), 1)[0])

    def slope_smallest(self, method: str, rank: int, k: int = 3) -> float:
        """Slope fitted over only the k smallest step sizes (no plateau pruning)."""
        pts = self.points.get((method, rank), [])[-k:]
        if len(pts) < 2:
            return float("nan")
        return float(np.polyfit(np.log([p.h for p in pts]), np.log([p.mean for p in pts]), 1)[0])

    def plateau(self, method: str, rank: int) -> float:
        """The level the error curve settles to: smallest mean error over the sweep."""
        pts = self.points.get((method, rank), [])
        if not pts:
            return float("nan")
        return min(p.mean for p in pts)


def _steps_for(T: float, h: float) -> tuple[int, float]:
    n = max(1, round(T / h))
    return n, T / n


def _run_one(
    problem: RhsOperator,
    A0,
    ref: np.ndarray,
    ref_norm: float,
    cfg: ExperimentConfig,
    method: str,
    rank: int,
    h: float,
    trial: int,
) -> RunRecord:
    scheme, tab_name = parse_method(method)
    n_steps, h_eff = _steps_for(cfg.T, h)
    rng = RngStream(cfg.seed).substream(trial)
    t0 = time.perf_counter()
    try:
        icfg = IntegratorConfig(
            method=scheme,
            tableau=tableau(tab_name),
            rank=rank,
            dims=SketchDims.for_rank(rank),
            h=h_eff,
            n_steps=n_steps,
        )
        Y0 = prepare_initial(A0, problem, icfg, rng)
        Y = integrate(Y0, problem, icfg, rng)
        err = fm.frobenius_distance(fm.to_dense(Y), ref)
        failure = None
    except Exception as exc:
        err = float("nan")
        failure = f"{type(exc).__name__}: {exc}"
    ms = (time.perf_counter() - t0) * 1000.0
    return RunRecord(cfg.experiment_id, method, rank, h_eff, trial, cfg.seed, err, ref_norm, ms, failure)


def build_initial(problem: RhsOperator, seed: int):
    """The experiment's A_0; random initial values draw from a reserved substream."""
    return problem.initial_value(RngStream(seed).substream(_A0_LABEL))


def run_experiment(cfg: ExperimentConfig, settings: AdaptiveSolverSettings | None = None):
    """Execute the sweep; returns (records, SweepSummary).

    Every failed run is recorded with its reason (error_fro = NaN) and the
    sweep continues. Records come back sorted by (method, rank, h desc,
    trial) regardless of worker count.
    """
    problem = make_problem(cfg.problem, **cfg.problem_params)
    A0 = build_initial(problem, cfg.seed)
    A0_dense = fm.to_dense(A0) if isinstance(A0, FactoredMatrix) else A0
    ref = solve_reference(problem, A0_dense, cfg.T, settings, cfg.ref_cache)
    ref_norm = float(np.linalg.norm(ref))

    tasks = [
        (mi, ri, hi, trial, method, rank, h)
        for mi, method in enumerate(cfg.methods)
        for ri, rank in enumerate(cfg.ranks)
        for hi, h in enumerate(cfg.step_sizes)
        for trial in range(cfg.trials)
    ]

    def work(task):
        mi, ri, hi, trial, method, rank, h = task
        return (mi, ri, hi, trial), _run_one(problem, A0, ref, ref_norm, cfg, method, rank, h, trial)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            keyed = list(pool.map(work, tasks))
    else:
        keyed = [work(t) for t in tasks]
    keyed.sort(key=lambda kr: kr[0])
    records = [rec for _, rec in keyed]
    return records, SweepSummary(records)


@dataclass(frozen=True)
class DiagnoseReport:
    series: list[tuple[int, float, float]]  # (step, t, ||F - PF||_F)
    mean: float
    max: float


def diagnose_tangent(
    problem: str | RhsOperator,
    problem_params: dict | None = None,
    rank: int = 10,
    h: float = 5e-3,
    T: float = 1.0,
    seed: int = 42,
) -> DiagnoseReport:
    """Tangential projection error ||F(Y_i) - P(Y_i) F(Y_i)||_F along a PRK2 path."""
    if isinstance(problem, str):
        problem = make_problem(problem, **(problem_params or {}))
    A0 = build_initial(problem, seed)
    n_steps, h_eff = _steps_for(T, h)
    icfg = IntegratorConfig(
        method="prk",
        tableau=tableau("rk2"),
        rank=rank,
        dims=SketchDims.for_rank(rank),
        h=h_eff,
        n_steps=n_steps,
    )
    rng = RngStream(seed).substream(0)
    Y0 = prepare_initial(A0, problem, icfg, rng)
    series: list[tuple[int, float, float]] = []

    def observe(i, t, Y):
        series.append((i, t, tangential_projection_error(Y, problem.apply(Y))))

    integrate(Y0, problem, icfg, rng, observe=observe)
    values = [v for _, _, v in series]
    return DiagnoseReport(series, float(np.mean(values)), float(np.max(values)))


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit_csv(records: list[RunRecord], path: str) -> None:
    """Write records with the fixed header; floats carry 17 significant digits."""
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(
                [r.experiment, r.method, r.rank, _fmt(r.h), r.trial, r.seed,
                 _fmt(r.error_fro), _fmt(r.ref_norm), _fmt(r.time_ms)]
            )


def parse_csv(path: str) -> list[RunRecord]:
    out = []
    with open(path, newline="") as f:
        rd = csv.reader(f)
        header = next(rd)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in rd:
            out.append(
                RunRecord(row[0], row[1], int(row[2]), float(row[3]), int(row[4]),
                          int(row[5]), float(row[6]), float(row[7]), float(row[8]))
            )
    return out


@dataclass(frozen=True)
class Example1Report:
    truncation_error: float
    truncation_bound: float
    tangent_gap: float
    gap_bound: float
    zero_step_error: float

    @property
    def ok(self) -> bool:
        return (
            self.truncation_error <= self.truncation_bound
            and self.tangent_gap >= self.gap_bound
            and self.zero_step_error == 0.0
        )


def example1_check() -> Example1Report:
    """The 3x3 toy: excellent rank-2 truncation of the true flow at h=1 next to
    a visibly wrong rank-2 tangent flow."""
    from .problems import DiagonalToyProblem

    toy = DiagonalToyProblem()
    phi1 = toy.flow(1.0)
    best2 = fm.truncated_svd(phi1, 2)
    trunc_err = fm.frobenius_distance(phi1, fm.to_dense(best2))
    gap = float(np.linalg.norm(phi1 - toy.tangent_flow(1.0)))
    zero_err = float(np.linalg.norm(toy.flow(0.0) - toy.initial_value()))
    return Example1Report(trunc_err, 1.24e-10, gap, 0.008, zero_err)
