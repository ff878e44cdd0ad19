"""
Timing benchmark and error sweep.

run_bench times the sparse solvers (and the dense baseline up to its size
cap) against trajectory length; run_sweep compares the body-frame and
inertial priors over paired seeds as the range/bearing interval grows.
Trials run in a process pool; each trial is single-threaded.
"""

import csv
import json
import logging
import multiprocessing
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from lib.baseline import DenseBackend
from lib.config import CONFIG
from lib.errors import ConfigError, NotPositiveDefinite, SteamError
from lib.estimator import ConvergenceConfig, SolveReport, solve
from lib.gpinterp import query as gp_query
from lib.priors import PriorKind, make_prior_kind
from lib.simworld import GroundTruth, WorldConfig, simulate
from lib.utils import loglog_slope, uniform_times, wrap_angle

logger = logging.getLogger(__name__)

SOLVERS = ("sparse-lti", "sparse-ntv", "dense-baseline")
SOLVER_ALIASES = {"lti": "sparse-lti", "ntv": "sparse-ntv", "dense": "dense-baseline"}
TIMING_COLUMNS = ("kernel_build_s", "per_iter_solve_s", "per_query_s", "total_s")

# Stationary world: the robot stays among the landmarks however long it runs.
BENCH_WORLD = {
    "prior": "matern",
    "prior_params": {"length_scale": 4.0, "sigma": 1.0},
    "truth_step": 0.1,
    "odom_rate": 1.0,
    "rb_interval": 1.0,
    "max_range": 50.0,
}


def parse_solvers(text: str) -> List[str]:
    names = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name = SOLVER_ALIASES.get(part, part)
        if name not in SOLVERS:
            raise ConfigError(f"unknown solver '{part}' (expected one of {', '.join(SOLVERS)})")
        names.append(name)
    return names


def worker_count(requested: Optional[int] = None, tasks: int = 1) -> int:
    """Pool size: --workers, else STEAMGP_THREADS, else the CPU count."""
    if requested is None:
        env = os.environ.get(CONFIG.THREADS_ENV_VAR)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError(f"{CONFIG.THREADS_ENV_VAR} must be an integer, got {env!r}") from None
        else:
            requested = multiprocessing.cpu_count()
    if requested < 1:
        raise ConfigError("worker count must be at least 1")
    return max(1, min(requested, tasks))


def _map(fn, tasks: Sequence[dict], workers: int) -> List:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(processes=workers) as pool:
        return pool.map(fn, tasks, chunksize=1)


def bench_world(n: int, seed: int = 0) -> WorldConfig:
    """World with n knots in all-knots mode (1 Hz sensors, knot at t=0)."""
    return WorldConfig(seed=seed, duration=float(n - 1), **BENCH_WORLD)


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------


def _pose_errors(estimate: np.ndarray, truth: np.ndarray):
    translation = np.sqrt(np.mean(np.sum((estimate[:, :2] - truth[:, :2]) ** 2, axis=1)))
    rotation = np.sqrt(np.mean(wrap_angle(estimate[:, 2] - truth[:, 2]) ** 2))
    return float(translation), float(rotation)


def trajectory_rms(
    report: SolveReport, truth: GroundTruth, rate_hz: float = CONFIG.DEFAULT_QUERY_RATE_HZ
):
    """(translation m, rotation rad) RMS of interpolated poses at a uniform rate."""
    taus = uniform_times(float(report.times[0]), float(report.times[-1]), rate_hz)
    means, _ = gp_query(report.prior, report.knots, None, taus)
    return _pose_errors(means, truth.at(taus))


def knot_rms(report: SolveReport, truth: GroundTruth):
    """(translation m, rotation rad) RMS at the knot times."""
    return _pose_errors(report.knots, truth.at(report.times))


# ---------------------------------------------------------------------------
# Timing benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchReport:
    """Timing rows per (solver, N) with log-log slopes per solver and column."""

    rows: List[dict] = field(default_factory=list)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r["N"], SOLVERS.index(r["solver"])))

    @property
    def solvers(self) -> List[str]:
        return [s for s in SOLVERS if any(r["solver"] == s for r in self.rows)]

    def slopes(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for solver in self.solvers:
            rows = [r for r in self.rows if r["solver"] == solver]
            sizes = [r["N"] for r in rows]
            out[solver] = {col: loglog_slope(sizes, [r[col] for r in rows]) for col in TIMING_COLUMNS}
        return out

    def query_ratio(self, solver: str) -> float:
        """per_query_s at the largest N over the smallest."""
        rows = [r for r in self.rows if r["solver"] == solver]
        if len(rows) < 2:
            return float("nan")
        return rows[-1]["per_query_s"] / max(rows[0]["per_query_s"], 1e-12)

    def save(self, path: Union[str, Path]) -> Path:
        """Write the CSV and <path>.slopes.json beside it."""
        path = Path(path)
        columns = ["N", "solver", *TIMING_COLUMNS, "iterations"]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows)
        slopes_path = path.with_name(path.name + ".slopes.json")
        with open(slopes_path, "w", encoding="utf-8") as f:
            json.dump(
                {
                    "version": CONFIG.REPORT_VERSION,
                    "slopes": self.slopes(),
                    "per_query_ratio": {s: self.query_ratio(s) for s in self.solvers},
                },
                f,
                indent=2,
            )
        return slopes_path


def _bench_kind(solver: str) -> PriorKind:
    return make_prior_kind("ntv" if solver == "sparse-ntv" else "lti")


def _bench_trial(task: dict) -> dict:
    solver, n = task["solver"], task["N"]
    dataset = simulate(bench_world(n, task["seed"]))
    kind = _bench_kind(solver)

    # Local import keeps the pool workers free of the CLI layer.
    from lib.commands import problem_for_dataset

    problem, log = problem_for_dataset(
        dataset, kind, convergence=ConvergenceConfig(max_iters=task["max_iters"], raise_on_failure=False)
    )
    backend = DenseBackend() if solver == "dense-baseline" else None
    started = time.perf_counter()
    report = solve(problem, log, backend=backend)
    total = time.perf_counter() - started

    build = float(np.mean(report.prior_build_times))
    if backend is not None:
        build += float(np.mean(backend.kernel_times))
    rng = np.random.default_rng([task["seed"], n])
    taus = rng.uniform(report.times[0], report.times[-1], task["queries"])
    started = time.perf_counter()
    for tau in taus:
        report.query([tau])
    per_query = (time.perf_counter() - started) / max(len(taus), 1)

    row = {
        "N": n,
        "solver": solver,
        "kernel_build_s": build,
        "per_iter_solve_s": float(np.mean(report.iteration_times)) if report.iteration_times else 0.0,
        "per_query_s": per_query,
        "total_s": total,
        "iterations": report.iterations,
    }
    logger.info("bench %s N=%d: %.3fs total, %d iterations", solver, n, total, report.iterations)
    return row


def run_bench(
    sizes: Sequence[int],
    solvers: Sequence[str] = ("sparse-lti", "sparse-ntv"),
    queries: int = CONFIG.BENCH_QUERIES,
    seed: int = 0,
    workers: Optional[int] = None,
    max_iters: int = CONFIG.MAX_ITERS,
) -> BenchReport:
    """Time every solver at every size; the dense baseline skips N above its cap."""
    if not sizes or any(n < 2 for n in sizes):
        raise ConfigError("bench sizes must be at least 2")
    tasks = []
    for solver in solvers:
        for n in sorted(set(int(n) for n in sizes)):
            if solver == "dense-baseline" and n > CONFIG.DENSE_BASELINE_MAX_N:
                logger.info("dense baseline skips N=%d (cap %d)", n, CONFIG.DENSE_BASELINE_MAX_N)
                continue
            tasks.append({"solver": solver, "N": n, "seed": seed, "queries": queries, "max_iters": max_iters})
    rows = _map(_bench_trial, tasks, worker_count(workers, len(tasks)))
    return BenchReport(rows)


# ---------------------------------------------------------------------------
# Error sweep
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    """Pooled RMS per (interval, odometry, solver) plus the per-seed rows."""

    seed_rows: List[dict] = field(default_factory=list)

    def configurations(self):
        keys = sorted({(r["rb_interval_s"], r["odometry_used"]) for r in self.seed_rows})
        return keys

    def win_fraction(self, rb_interval: float, odometry: bool) -> float:
        """Share of seeds where the body-frame prior's translation RMS is no worse."""
        by_seed: Dict[int, Dict[str, float]] = {}
        for r in self.seed_rows:
            if r["rb_interval_s"] == rb_interval and r["odometry_used"] == odometry and r["ok"]:
                by_seed.setdefault(r["seed"], {})[r["solver"]] = r["rms_translation_m"]
        paired = [v for v in by_seed.values() if "sparse-ntv" in v and "sparse-lti" in v]
        if not paired:
            return float("nan")
        return float(np.mean([v["sparse-ntv"] <= v["sparse-lti"] for v in paired]))

    @property
    def rows(self) -> List[dict]:
        out = []
        for rb_interval, odometry in self.configurations():
            wins = self.win_fraction(rb_interval, odometry)
            for solver in ("sparse-lti", "sparse-ntv"):
                group = [
                    r for r in self.seed_rows
                    if r["rb_interval_s"] == rb_interval and r["odometry_used"] == odometry
                    and r["solver"] == solver and r["ok"]
                ]
                if group:
                    trans = float(np.sqrt(np.mean([r["rms_translation_m"] ** 2 for r in group])))
                    rot = float(np.sqrt(np.mean([r["rms_rotation_rad"] ** 2 for r in group])))
                else:
                    trans = rot = float("nan")
                out.append(
                    {
                        "rb_interval_s": rb_interval,
                        "odometry_used": odometry,
                        "solver": solver,
                        "rms_translation_m": trans,
                        "rms_rotation_rad": rot,
                        "seeds_used": len(group),
                        "ntv_win_fraction": wins,
                    }
                )
        return out

    def save(self, path: Union[str, Path]) -> Path:
        """Write the pooled CSV and <path>.seeds.csv with one row per seed."""
        path = Path(path)
        columns = ["rb_interval_s", "odometry_used", "solver", "rms_translation_m",
                   "rms_rotation_rad", "seeds_used", "ntv_win_fraction"]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.rows)
        seeds_path = path.with_name(path.name + ".seeds.csv")
        seed_columns = ["seed", "rb_interval_s", "odometry_used", "solver", "rms_translation_m",
                        "rms_rotation_rad", "iterations", "converged", "ok"]
        with open(seeds_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=seed_columns, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            writer.writerows(sorted(self.seed_rows, key=lambda r: (r["rb_interval_s"], not r["odometry_used"], r["solver"], r["seed"])))
        return seeds_path


def sweep_kinds(config: WorldConfig, qc: Optional[Sequence[float]] = None) -> Dict[str, PriorKind]:
    """Inertial and body-frame priors sharing one Qc (the world's unless given)."""
    if qc is None:
        qc = config.qc_diag()
        if np.any(qc <= 0):
            qc = None
    return {"sparse-lti": make_prior_kind("lti", qc=qc), "sparse-ntv": make_prior_kind("ntv", qc=qc)}


def _sweep_trial(task: dict) -> List[dict]:
    from lib.commands import problem_for_dataset

    config = WorldConfig.from_dict(task["config"])
    dataset = simulate(config)
    kinds = sweep_kinds(config, task["qc"])
    rows = []
    for odometry in task["odometry"]:
        for solver, kind in kinds.items():
            row = {
                "seed": config.seed,
                "rb_interval_s": config.rb_interval,
                "odometry_used": odometry,
                "solver": solver,
                "rms_translation_m": float("nan"),
                "rms_rotation_rad": float("nan"),
                "iterations": 0,
                "converged": False,
                "ok": False,
            }
            try:
                problem, log = problem_for_dataset(
                    dataset,
                    kind,
                    use_odometry=odometry,
                    convergence=ConvergenceConfig(max_iters=task["max_iters"], raise_on_failure=False),
                )
                report = solve(problem, log)
            except (NotPositiveDefinite, SteamError) as e:
                logger.warning("seed %d interval %g %s failed: %s", config.seed, config.rb_interval, solver, e)
                rows.append(row)
                continue
            trans, rot = trajectory_rms(report, dataset.truth, task["rate"])
            row.update(
                rms_translation_m=trans,
                rms_rotation_rad=rot,
                iterations=report.iterations,
                converged=report.converged,
                ok=bool(np.isfinite(trans)),
            )
            rows.append(row)
    return rows


def run_sweep(
    config: WorldConfig,
    intervals: Sequence[float],
    seeds: int,
    odometry: Sequence[bool] = (True, False),
    qc: Optional[Sequence[float]] = None,
    rate_hz: float = CONFIG.DEFAULT_QUERY_RATE_HZ,
    workers: Optional[int] = None,
    max_iters: int = CONFIG.MAX_ITERS,
) -> ErrorReport:
    """Paired-seed RMS comparison of the two priors per interval and odometry setting.

    Seeds run from config.seed to config.seed + seeds - 1; each seed's
    dataset is shared by every solver and odometry setting.
    """
    if seeds < 1 or not intervals:
        raise ConfigError("sweep needs at least one seed and one interval")
    tasks = []
    for interval in intervals:
        for k in range(seeds):
            world = replace(config, seed=config.seed + k, rb_interval=float(interval))
            tasks.append(
                {
                    "config": world.to_dict(),
                    "qc": None if qc is None else list(qc),
                    "odometry": list(odometry),
                    "rate": rate_hz,
                    "max_iters": max_iters,
                }
            )
    results = _map(_sweep_trial, tasks, worker_count(workers, len(tasks)))
    return ErrorReport([row for rows in results for row in rows])
