"""
Current-field inversion from drift measurements by expectation
maximisation.

Each surfacing gives one drift vector: the time-integral of the unknown
current along a trajectory that is itself unknown (dead reckoning only
approximates it). EM untangles the two:

    E-step  rebuild the trajectory from the dead-reckoned track and the
            current estimates: X[m] = dr[m] + dt * sum_{j<m} W[j].
    M-step  hold the trajectory fixed and update the currents. The GP
            prior at the trajectory points (mean mu, covariance S) is
            conditioned on the single linear measurement
            drift = C W + gps noise, C = dt * [I2 I2 ... I2], giving

                W = mu + S C^T (C S C^T + sy^2 I)^(-1) (drift - C mu)

            in closed form, with the matching conditioned covariance.

Cycles are processed in order and past cycles are never revisited: the
converged currents of each cycle become fixed pseudo-targets in the GP
(thinned to a minimum spacing first, or the Gram matrix would fill with
nearly coincident rows).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from driftfield.flowfield import Vec2, as_xy, to_vec2_list
from driftfield.gp import DimensionMismatch, GpModel, downsample_targets
from driftfield.kernels import HyperParams, KernelKind
from driftfield.simulator import Cycle, MissionLog

__all__ = [
    "EmConfig",
    "EmState",
    "SingularInnovation",
    "e_step",
    "m_step",
    "run_em_cycle",
    "iter_process_mission",
    "process_mission",
]


class SingularInnovation(Exception):
    """
    The innovation covariance C S C^T + sy^2 I is singular. Only arises
    with zero GPS noise and a degenerate predictive covariance.
    """


@dataclass(frozen=True)
class EmConfig:
    """
    max_iters: EM iteration cap per cycle.
    convergence_tol: stop when no trajectory point moved more than this
        many metres in an iteration.
    pseudo_target_spacing: minimum spacing of stored targets, metres;
        None selects lengthscale / 20.
    """

    max_iters: int = 10
    convergence_tol: float = 1.0
    pseudo_target_spacing: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.pseudo_target_spacing is not None and self.pseudo_target_spacing < 0:
            raise ValueError("pseudo_target_spacing must be >= 0")

    def spacing_for(self, hp: HyperParams) -> float:
        if self.pseudo_target_spacing is None:
            return hp.lengthscale / 20.0
        return self.pseudo_target_spacing


@dataclass(frozen=True)
class EmState:
    """Result of running EM on one cycle. `error` is set when the cycle failed."""

    iteration: int
    trajectory: tuple
    currents: tuple
    converged: bool
    delta: float
    error: str | None = None

    def __post_init__(self):
        if len(self.trajectory) != len(self.currents) + 1:
            raise ValueError("trajectory must have one more point than currents")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        object.__setattr__(self, "currents", tuple(self.currents))


def e_step(dead_reckoned, currents, dt: float) -> np.ndarray:
    """
    Reconstruct the trajectory implied by the current estimates.

    Returns an (n+1, 2) array: the dead-reckoned track plus the
    accumulated current displacement, X[m] = dr[m] + dt * sum_{j<m} W[j].
    """
    dr = as_xy(dead_reckoned)
    w = as_xy(currents)
    if dr.shape[0] != w.shape[0] + 1:
        raise DimensionMismatch(
            f"{dr.shape[0]} track points need {dr.shape[0] - 1} currents, got {w.shape[0]}"
        )
    x = dr.copy()
    x[1:] += dt * np.cumsum(w, axis=0)
    return x


def m_step(model: GpModel, trajectory, drift: Vec2, dt: float):
    """
    Closed-form current update given a fixed trajectory.

    Conditions the GP predictive distribution at the trajectory's left
    endpoints on the drift measurement. Returns (W, cov): the updated
    currents as an (n, 2) array and the conditioned (2n, 2n) covariance.
    """
    x = as_xy(trajectory)
    if x.shape[0] < 2:
        raise ValueError("trajectory needs at least two points")
    n = x.shape[0] - 1
    pred = model.predict(x[:n])
    mu = pred.mean.reshape(-1)
    sigma = pred.covariance
    c = dt * np.tile(np.eye(2), n)  # (2, 2n)
    s_mat = c @ sigma @ c.T + model.hp.gps_noise_std**2 * np.eye(2)
    innov = drift.as_array() - c @ mu
    try:
        gain = sigma @ c.T @ np.linalg.inv(s_mat)  # (2n, 2)
    except np.linalg.LinAlgError as err:
        raise SingularInnovation(
            "innovation covariance is singular; zero GPS noise with a "
            "degenerate predictive covariance"
        ) from err
    w = mu + gain @ innov
    cov = sigma - gain @ c @ sigma
    cov = 0.5 * (cov + cov.T)
    return w.reshape(-1, 2), cov


def run_em_cycle(model: GpModel, cycle: Cycle, cfg: EmConfig) -> EmState:
    """
    Alternate M and E steps on one cycle, starting from the dead-reckoned
    track, until the trajectory stops moving or the iteration cap hits.
    """
    dr = as_xy(cycle.dead_reckoned)
    x = dr.copy()
    w = np.zeros((dr.shape[0] - 1, 2))
    converged = False
    delta = math.inf
    iteration = 0
    for iteration in range(1, cfg.max_iters + 1):
        w, _ = m_step(model, x, cycle.drift, cycle.dt)
        x_new = e_step(dr, w, cycle.dt)
        delta = float(np.linalg.norm(x_new - x, axis=1).max())
        x = x_new
        if delta < cfg.convergence_tol:
            converged = True
            break
    return EmState(
        iteration=iteration,
        trajectory=tuple(to_vec2_list(x)),
        currents=tuple(to_vec2_list(w)),
        converged=converged,
        delta=delta,
    )


def _failed_state(cycle: Cycle, err: Exception) -> EmState:
    n = cycle.num_steps
    return EmState(
        iteration=0,
        trajectory=tuple(cycle.dead_reckoned),
        currents=tuple(Vec2(0.0, 0.0) for _ in range(n)),
        converged=False,
        delta=0.0,
        error=f"{type(err).__name__}: {err}",
    )


def iter_process_mission(
    log: MissionLog,
    hp: HyperParams,
    kind: KernelKind = KernelKind.INCOMPRESSIBLE,
    cfg: EmConfig = EmConfig(),
):
    """
    Process cycles in order, yielding (model, state) after each one.

    The model grows by the cycle's converged currents, placed at the
    reconstructed trajectory points and thinned to the configured
    spacing. A cycle that fails numerically yields an error state and
    leaves the model unchanged; later cycles still run.
    """
    model = GpModel(hp, kind)
    spacing = cfg.spacing_for(hp)
    for cycle in log.cycles:
        try:
            state = run_em_cycle(model, cycle, cfg)
        except Exception as err:  # noqa: BLE001 - cycle isolation is the contract
            yield model, _failed_state(cycle, err)
            continue
        positions = as_xy(state.trajectory)[:-1]
        currents = as_xy(state.currents)
        kept_p, kept_w = downsample_targets(positions, currents, spacing)
        model = model.add_targets(kept_p, kept_w)
        yield model, state


def process_mission(
    log: MissionLog,
    hp: HyperParams,
    kind: KernelKind = KernelKind.INCOMPRESSIBLE,
    cfg: EmConfig = EmConfig(),
):
    """Run the full mission; returns (final model, list of per-cycle states)."""
    model = GpModel(hp, kind)
    states = []
    for model, state in iter_process_mission(log, hp, kind, cfg):
        states.append(state)
    return model, states
