"""
Monte Carlo convergence study and result emission.

Each trial draws a random gyre field and a mission through the
configured waypoints, then replays the cycle log through the estimator
twice: once with the incompressible kernel and once with the standard
diagonal kernel, identical hyperparameters. After every cycle the
estimated field is scored on a fixed grid against the true field, so
the report traces how fast each kernel converges as surfacings
accumulate.

The error metric is the total misfit speed over the grid normalised by
the total true speed, with near-stagnant grid points (below 1 mm/s)
masked out of both sums.

Everything is a pure function of the run configuration: trial t uses
field seed base_seed + 2t and mission seed base_seed + 2t + 1, and
parallel execution reduces results in trial order, so reports are
byte-identical across runs and worker counts.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from driftfield.estimator import EmConfig, iter_process_mission
from driftfield.flowfield import (
    AnalyticField,
    Grid,
    Vec2,
    eval_field_many,
    random_gyre,
    write_field_csv,
)
from driftfield.kernels import HyperParams, KernelKind
from driftfield.simulator import MissionAborted, VehicleConfig, run_mission

__all__ = [
    "RunConfig",
    "ConvergenceReport",
    "TrialResult",
    "DegenerateTruth",
    "SPEED_MASK_EPS",
    "normalized_error",
    "default_grid",
    "monte_carlo",
    "emit_report",
    "read_convergence_csv",
]

# Grid points where the true current is slower than this are excluded
# from the error metric; at gyre stagnation points the normalisation
# would otherwise blow up.
SPEED_MASK_EPS = 1e-3


class DegenerateTruth(Exception):
    """True field is below the speed mask on the whole grid."""


@dataclass(frozen=True)
class RunConfig:
    hp: HyperParams
    vehicle: VehicleConfig
    em: EmConfig
    kernel: KernelKind
    grid: Grid
    trials: int
    base_seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def default_grid(waypoints, lengthscale: float, n: int = 20, include_origin: bool = True) -> Grid:
    """
    Square n x n grid over the mission bounding box (waypoints plus, by
    default, the start at the origin), padded by half a lengthscale on
    every side.
    """
    xs = [p.x for p in waypoints]
    ys = [p.y for p in waypoints]
    if include_origin:
        xs.append(0.0)
        ys.append(0.0)
    pad = 0.5 * lengthscale
    span = max(max(xs) - min(xs), max(ys) - min(ys)) + 2.0 * pad
    spacing = span / (n - 1)
    cx = 0.5 * (max(xs) + min(xs))
    cy = 0.5 * (max(ys) + min(ys))
    return Grid(Vec2(cx - span / 2.0, cy - span / 2.0), spacing, n, n)


def _masked_error(est_uv: np.ndarray, truth_uv: np.ndarray) -> float:
    speeds = np.linalg.norm(truth_uv, axis=1)
    mask = speeds > SPEED_MASK_EPS
    if not mask.any():
        raise DegenerateTruth(
            f"no grid point exceeds {SPEED_MASK_EPS} m/s true speed"
        )
    misfit = np.linalg.norm(est_uv[mask] - truth_uv[mask], axis=1)
    return float(misfit.sum() / speeds[mask].sum())


def normalized_error(est, truth: AnalyticField, grid: Grid) -> float:
    """
    Field error of the estimate `est` (callable Vec2 -> Vec2) against the
    true field, summed over the grid and normalised by the total true
    speed. Raises DegenerateTruth when the truth is effectively still.
    """
    pts = grid.points()
    est_uv = np.array([[w.x, w.y] for w in (est(Vec2(x, y)) for x, y in pts)])
    return _masked_error(est_uv, eval_field_many(truth, pts))


@dataclass(frozen=True)
class TrialResult:
    index: int
    errors: dict  # kernel value -> per-cycle error list
    final_fields: dict  # kernel value -> (G, 2) predicted currents on the grid
    excluded: str | None = None


KERNEL_ORDER = (KernelKind.INCOMPRESSIBLE, KernelKind.STANDARD_DIAGONAL)


def _run_trial(cfg: RunConfig, field_factory, t: int) -> TrialResult:
    fld = field_factory(cfg.base_seed + 2 * t)
    try:
        log = run_mission(cfg.vehicle, fld, cfg.base_seed + 2 * t + 1)
    except MissionAborted as err:
        return TrialResult(t, {}, {}, excluded=f"MissionAborted: {err}")
    pts = cfg.grid.points()
    truth_uv = eval_field_many(fld, pts)
    errors = {}
    finals = {}
    try:
        for kind in KERNEL_ORDER:
            per_cycle = []
            est_uv = np.zeros_like(pts)
            for model, _state in iter_process_mission(log, cfg.hp, kind, cfg.em):
                est_uv = model.predict_mean(pts)
                per_cycle.append(_masked_error(est_uv, truth_uv))
            errors[kind.value] = per_cycle
            finals[kind.value] = est_uv
    except DegenerateTruth as err:
        return TrialResult(t, {}, {}, excluded=f"DegenerateTruth: {err}")
    return TrialResult(t, errors, finals)


@dataclass
class ConvergenceReport:
    """Per-cycle error matrices (kept trials x cycles) for each kernel."""

    errors: dict  # kernel value -> (T, C) array
    kept_trial_indices: list
    excluded: list  # (trial index, reason)
    grid: Grid
    final_fields: dict  # kernel value -> list of (G, 2) arrays, kept-trial order

    def __post_init__(self):
        for kernel, mat in self.errors.items():
            mat = np.asarray(mat, dtype=float)
            if mat.size and mat.min() < 0:
                raise ValueError(f"negative error for kernel {kernel}")
            self.errors[kernel] = mat

    @property
    def num_cycles(self) -> int:
        for mat in self.errors.values():
            return mat.shape[1]
        return 0

    def summary(self) -> dict:
        """Median and 0.5 to 99.5 percentile band per cycle per kernel."""
        out = {"excluded_trials": len(self.excluded), "kept_trials": len(self.kept_trial_indices)}
        for kernel, mat in self.errors.items():
            if mat.size == 0:
                out[kernel] = {"median": [], "p00_5": [], "p99_5": []}
                continue
            out[kernel] = {
                "median": np.median(mat, axis=0).tolist(),
                "p00_5": np.percentile(mat, 0.5, axis=0).tolist(),
                "p99_5": np.percentile(mat, 99.5, axis=0).tolist(),
            }
        return out


def monte_carlo(cfg: RunConfig, workers: int = 1, field_factory=random_gyre) -> ConvergenceReport:
    """
    Run the full study. `workers` > 1 distributes trials over processes;
    results are identical either way. Trials whose mission aborts or
    whose truth field is degenerate are excluded from the matrices and
    listed with their reason.
    """
    run = partial(_run_trial, cfg, field_factory)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(cfg.trials)))
    else:
        results = [run(t) for t in range(cfg.trials)]
    kept = [r for r in results if r.excluded is None]
    excluded = [(r.index, r.excluded) for r in results if r.excluded is not None]
    errors = {}
    finals = {}
    for kind in KERNEL_ORDER:
        if kept:
            errors[kind.value] = np.array([r.errors[kind.value] for r in kept], dtype=float)
        else:
            errors[kind.value] = np.zeros((0, 0))
        finals[kind.value] = [r.final_fields[kind.value] for r in kept]
    return ConvergenceReport(
        errors=errors,
        kept_trial_indices=[r.index for r in kept],
        excluded=excluded,
        grid=cfg.grid,
        final_fields=finals,
    )


CONVERGENCE_HEADER = "trial,cycle,kernel,normalized_error"


def emit_report(report: ConvergenceReport, out_dir, include_fields: bool = False) -> list:
    """
    Write convergence.csv and summary.json under out_dir; with
    include_fields, also one predicted-field CSV per kept trial and
    kernel. Returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out / "convergence.csv"
    lines = [CONVERGENCE_HEADER]
    for row, trial in enumerate(report.kept_trial_indices):
        for cycle in range(report.num_cycles):
            for kernel in report.errors:
                err = report.errors[kernel][row, cycle]
                lines.append(f"{trial},{cycle + 1},{kernel},{repr(float(err))}")
    csv_path.write_text("\n".join(lines) + "\n")
    written.append(csv_path)

    summary = report.summary()
    summary["excluded"] = [{"trial": t, "reason": r} for t, r in report.excluded]
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    written.append(summary_path)

    if include_fields:
        fields_dir = out / "fields"
        fields_dir.mkdir(exist_ok=True)
        for kernel, mats in report.final_fields.items():
            for row, trial in enumerate(report.kept_trial_indices):
                p = fields_dir / f"trial{trial:03d}_{kernel}.csv"
                write_field_csv(p, report.grid, mats[row])
                written.append(p)
    return written


def read_convergence_csv(path) -> dict:
    """
    Parse convergence.csv back into {kernel: {trial: [error per cycle]}}.
    Cycle order is preserved; floats round-trip exactly.
    """
    text = Path(path).read_text().splitlines()
    if not text or text[0] != CONVERGENCE_HEADER:
        raise ValueError(f"unexpected convergence CSV header: {text[:1]}")
    out = {}
    for line in text[1:]:
        if not line:
            continue
        trial_s, cycle_s, kernel, err_s = line.split(",")
        out.setdefault(kernel, {}).setdefault(int(trial_s), []).append(
            (int(cycle_s), float(err_s))
        )
    for kernel in out:
        for trial, pairs in out[kernel].items():
            pairs.sort(key=lambda p: p[0])
            out[kernel][trial] = [e for _, e in pairs]
    return out
