"""
Waypoint mission simulator and cycle-log ingestion.

The vehicle alternates dives and surfacings. While submerged it has no
position reference: it integrates only its commanded velocity (dead
reckoning), so the ocean current silently advects the true position
away from the estimate. Each surfacing takes a GPS fix; the gap between
the fix and the dead-reckoned endpoint is the accumulated drift, which
is the estimator's only measurement of the current field.

Discrete-time model, step dt:

    truth:          p_{t+1} = p_t + (v_t + w(p_t)) * dt
    dead reckoning: e_{t+1} = e_t + v_t * dt

with w the current field and v_t the commanded velocity (constant speed
along the dead-reckoned bearing to the active waypoint). Dead reckoning
restarts from each GPS fix, so consecutive cycles chain: the next
dive-in point is the previous fix.

Cycle logs are JSON Lines, one cycle per line:

    {"dt_s": 60.0, "dead_reckoned_m": [[x, y], ...], "gps_fix_m": [x, y]}

with an optional "drift_m" field (validated against fix minus last
dead-reckoned point when present). Logs recorded in latitude/longitude
use "dead_reckoned_latlon" / "gps_fix_latlon" keys ([lat, lon] pairs)
plus an optional first header line {"origin_latlon": [lat, lon]}; they
are converted to local metres on ingestion (see `latlon_to_local`).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from driftfield.flowfield import AnalyticField, Vec2, eval_field

__all__ = [
    "VehicleConfig",
    "Cycle",
    "MissionLog",
    "MissionAborted",
    "ParseError",
    "ValidationError",
    "step_truth",
    "step_dead_reckoned",
    "run_mission",
    "write_cycles",
    "ingest_cycles",
    "latlon_to_local",
    "EARTH_RADIUS_M",
]

logger = logging.getLogger(__name__)

# Mean Earth radius for the equirectangular lat/long projection.
EARTH_RADIUS_M = 6371000.0


class MissionAborted(Exception):
    """Step budget ran out on every remaining waypoint. Carries the partial log."""

    def __init__(self, message: str, log: "MissionLog"):
        super().__init__(message)
        self.log = log


class ParseError(Exception):
    """Cycle-log line is not valid JSON or misses required fields."""


class ValidationError(Exception):
    """Cycle-log contents violate a cycle invariant."""


@dataclass(frozen=True)
class VehicleConfig:
    speed_through_water: float = 0.35
    dt: float = 60.0
    surface_tolerance: float = 100.0
    gps_noise_std: float = 3.0
    waypoints: tuple = ()
    max_steps_per_cycle: int = 1500

    def __post_init__(self):
        if self.speed_through_water <= 0:
            raise ValueError("speed_through_water must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.surface_tolerance <= 0:
            raise ValueError("surface_tolerance must be positive")
        if self.gps_noise_std < 0:
            raise ValueError("gps_noise_std must be >= 0")
        if len(self.waypoints) < 1:
            raise ValueError("at least one waypoint is required")
        if self.max_steps_per_cycle < 1:
            raise ValueError("max_steps_per_cycle must be >= 1")
        object.__setattr__(self, "waypoints", tuple(self.waypoints))


@dataclass(frozen=True)
class Cycle:
    """
    One dive: dead-reckoned track (index 0 is the dive-in fix, n further
    steps) plus the surfacing GPS fix. `drift` is derived, never stored
    independently: fix minus last dead-reckoned point.
    """

    dt: float
    dead_reckoned: tuple
    gps_fix: Vec2
    drift: Vec2 = field(init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        dr = tuple(self.dead_reckoned)
        if len(dr) < 2:
            raise ValueError("a cycle needs the dive-in fix plus at least one step")
        object.__setattr__(self, "dead_reckoned", dr)
        object.__setattr__(self, "drift", self.gps_fix - dr[-1])

    @property
    def num_steps(self) -> int:
        return len(self.dead_reckoned) - 1


@dataclass
class MissionLog:
    cycles: list
    truth_trajectories: list | None = None
    field_ref: AnalyticField | None = None

    def __post_init__(self):
        if self.truth_trajectories is not None and len(self.truth_trajectories) != len(self.cycles):
            raise ValueError("one truth trajectory per cycle")


def step_truth(p: Vec2, v: Vec2, w: Vec2, dt: float) -> Vec2:
    """Advance the true position one step under command v and current w."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Vec2(p.x + (v.x + w.x) * dt, p.y + (v.y + w.y) * dt)


def step_dead_reckoned(p: Vec2, v: Vec2, dt: float) -> Vec2:
    """Advance the onboard estimate, which assumes still water."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Vec2(p.x + v.x * dt, p.y + v.y * dt)


def _heading(frm: Vec2, to: Vec2) -> Vec2:
    d = to - frm
    n = d.norm()
    if n == 0.0:
        return Vec2(0.0, 0.0)
    return Vec2(d.x / n, d.y / n)


def run_mission(cfg: VehicleConfig, fld: AnalyticField, seed: int) -> MissionLog:
    """
    Simulate one mission from the origin through cfg.waypoints.

    Per cycle the vehicle steers at the active waypoint along the
    dead-reckoned bearing, surfaces once the dead-reckoned position is
    within surface_tolerance (taking at least one step), and fixes with
    GPS noise N(0, gps_noise_std^2 I). A cycle that runs out of steps is
    still logged; if the budget is exhausted on every waypoint from some
    point onward, MissionAborted is raised with the partial log attached.
    """
    rng = np.random.default_rng(seed)

    def gps(p: Vec2) -> Vec2:
        noise = rng.normal(0.0, cfg.gps_noise_std, size=2)
        return Vec2(p.x + noise[0], p.y + noise[1])

    truth = Vec2(0.0, 0.0)
    fix = gps(truth)
    cycles = []
    truths = []
    reached_flags = []
    for wp in cfg.waypoints:
        dr = [fix]
        truth_path = [truth]
        reached = False
        for _ in range(cfg.max_steps_per_cycle):
            v = cfg.speed_through_water * _heading(dr[-1], wp)
            truth = step_truth(truth, v, eval_field(fld, truth), cfg.dt)
            dr.append(step_dead_reckoned(dr[-1], v, cfg.dt))
            truth_path.append(truth)
            if (wp - dr[-1]).norm() <= cfg.surface_tolerance:
                reached = True
                break
        fix = gps(truth)
        cycles.append(Cycle(cfg.dt, dr, fix))
        truths.append(truth_path)
        reached_flags.append(reached)

    log = MissionLog(cycles, truth_trajectories=truths, field_ref=fld)
    if not all(reached_flags):
        first_bad = reached_flags.index(False)
        if not any(reached_flags[first_bad:]):
            raise MissionAborted(
                f"step budget exhausted from waypoint {first_bad} onward", log
            )
    return log


def write_cycles(log: MissionLog, path) -> None:
    """Write the cycle log as JSON Lines (metric keys, drift included)."""
    with open(path, "w") as fh:
        for c in log.cycles:
            fh.write(
                json.dumps(
                    {
                        "dt_s": c.dt,
                        "dead_reckoned_m": [[p.x, p.y] for p in c.dead_reckoned],
                        "gps_fix_m": [c.gps_fix.x, c.gps_fix.y],
                        "drift_m": [c.drift.x, c.drift.y],
                    }
                )
                + "\n"
            )


def latlon_to_local(lat: float, lon: float, origin_lat: float, origin_lon: float) -> Vec2:
    """
    Equirectangular projection to a local tangent plane, metres.

    x is east, y is north; accurate to first order near the origin,
    which is all short-range surfacing tracks need.
    """
    x = EARTH_RADIUS_M * math.radians(lon - origin_lon) * math.cos(math.radians(origin_lat))
    y = EARTH_RADIUS_M * math.radians(lat - origin_lat)
    return Vec2(x, y)


def _cycle_from_record(rec: dict, lineno: int, origin: tuple | None):
    if "dt_s" not in rec:
        raise ParseError(f"line {lineno}: missing 'dt_s'")
    metric = "dead_reckoned_m" in rec or "gps_fix_m" in rec
    geographic = "dead_reckoned_latlon" in rec or "gps_fix_latlon" in rec
    if metric and geographic:
        raise ParseError(f"line {lineno}: mixed metric and lat/long keys")
    if metric:
        if "dead_reckoned_m" not in rec or "gps_fix_m" not in rec:
            raise ParseError(f"line {lineno}: need both 'dead_reckoned_m' and 'gps_fix_m'")
        dr = [Vec2(float(x), float(y)) for x, y in rec["dead_reckoned_m"]]
        fix = Vec2(float(rec["gps_fix_m"][0]), float(rec["gps_fix_m"][1]))
    elif geographic:
        if "dead_reckoned_latlon" not in rec or "gps_fix_latlon" not in rec:
            raise ParseError(
                f"line {lineno}: need both 'dead_reckoned_latlon' and 'gps_fix_latlon'"
            )
        if origin is None:
            # project about the first fix when no header named an origin
            origin = tuple(rec["dead_reckoned_latlon"][0])
        dr = [latlon_to_local(lat, lon, origin[0], origin[1]) for lat, lon in rec["dead_reckoned_latlon"]]
        fix = latlon_to_local(rec["gps_fix_latlon"][0], rec["gps_fix_latlon"][1], origin[0], origin[1])
    else:
        raise ParseError(f"line {lineno}: no position keys found")
    try:
        cycle = Cycle(float(rec["dt_s"]), dr, fix)
    except ValueError as err:
        raise ValidationError(f"line {lineno}: {err}") from err
    if "drift_m" in rec:
        stated = Vec2(float(rec["drift_m"][0]), float(rec["drift_m"][1]))
        if (stated - cycle.drift).norm() > 1e-6:
            raise ValidationError(
                f"line {lineno}: stated drift {stated} disagrees with "
                f"fix minus last dead-reckoned point {cycle.drift}"
            )
    return cycle, origin


def ingest_cycles(path) -> MissionLog:
    """
    Parse a JSON Lines cycle log into a MissionLog (no truth data).

    Raises ParseError for malformed lines, ValidationError for invariant
    violations. Cycles that do not chain (dive-in fix != previous GPS
    fix) are accepted with a warning.
    """
    cycles = []
    origin = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"line {lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(rec, dict):
                raise ParseError(f"line {lineno}: expected a JSON object")
            if "origin_latlon" in rec and "dt_s" not in rec:
                origin = tuple(rec["origin_latlon"])
                continue
            cycle, origin = _cycle_from_record(rec, lineno, origin)
            cycles.append(cycle)
    for prev, nxt in zip(cycles, cycles[1:]):
        if (nxt.dead_reckoned[0] - prev.gps_fix).norm() > 1e-6:
            logger.warning(
                "cycles do not chain: dive-in %s vs previous fix %s",
                nxt.dead_reckoned[0],
                prev.gps_fix,
            )
    return MissionLog(cycles)
