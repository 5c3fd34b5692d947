"""
Gaussian process regression on current observations.

A `GpModel` holds pseudo-targets (position, current) pairs and the fixed
hyperparameters, and predicts the posterior current at query points.
Targets carry a small fixed noise floor so repeated conditioning at the
same location stays well posed. The training covariance is factorised
once (Cholesky) when the model is built and reused across predictions;
models are immutable, and conditioning on new targets returns a new
model.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from driftfield.flowfield import Vec2, as_xy, to_vec2_list
from driftfield.kernels import HyperParams, KernelKind, build_block_matrix

__all__ = [
    "GpModel",
    "Prediction",
    "FactorizationFailure",
    "DimensionMismatch",
    "downsample_targets",
    "DEFAULT_TARGET_NOISE_VAR",
]

# Noise floor on pseudo-target currents, m^2/s^2. Small relative to any
# plausible current variance but large enough to keep the Gram matrix
# factorisable with near-duplicate target positions.
DEFAULT_TARGET_NOISE_VAR = 1e-4

# Jitter escalation when the Cholesky fails: start at JITTER_START
# (relative to the current variance) and multiply by 10 up to
# JITTER_ATTEMPTS times before giving up.
JITTER_START = 1e-10
JITTER_ATTEMPTS = 7


class FactorizationFailure(Exception):
    """Training covariance could not be factorised even with jitter."""


class DimensionMismatch(Exception):
    """Positions and currents arrays disagree in length or width."""


class Prediction:
    """Posterior over currents at query points."""

    def __init__(self, mean: np.ndarray, covariance: np.ndarray):
        self.mean = np.asarray(mean, dtype=float).reshape(-1, 2)
        self.covariance = np.asarray(covariance, dtype=float)
        m = 2 * self.mean.shape[0]
        if self.covariance.shape != (m, m):
            raise DimensionMismatch(
                f"covariance shape {self.covariance.shape} does not match {self.mean.shape[0]} query points"
            )

    def mean_vectors(self) -> list[Vec2]:
        return to_vec2_list(self.mean)

    def marginal_std(self) -> np.ndarray:
        """Per-component posterior standard deviations, shape (M, 2)."""
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0)).reshape(-1, 2)


def _interleave(uv: np.ndarray) -> np.ndarray:
    """(N, 2) rows to flat [u0, v0, u1, v1, ...]."""
    return np.asarray(uv, dtype=float).reshape(-1)


class GpModel:
    """
    Immutable GP over the 2D current field.

    Zero-mean prior; the posterior is conditioned on the stored targets.
    Construct empty via `GpModel(hp, kind)` and grow with
    `add_targets`, which returns a new model.
    """

    def __init__(
        self,
        hp: HyperParams,
        kind: KernelKind = KernelKind.INCOMPRESSIBLE,
        positions=None,
        currents=None,
        target_noise_var: float = DEFAULT_TARGET_NOISE_VAR,
    ):
        self.hp = hp
        self.kind = kind
        self.positions = as_xy(positions if positions is not None else [])
        self.currents = as_xy(currents if currents is not None else [])
        if self.positions.shape != self.currents.shape:
            raise DimensionMismatch(
                f"positions {self.positions.shape} vs currents {self.currents.shape}"
            )
        if target_noise_var <= 0:
            raise ValueError("target_noise_var must be positive")
        self.target_noise_var = float(target_noise_var)
        self._factor = None
        self._alpha = None
        if self.num_targets > 0:
            self._factorize()

    @property
    def num_targets(self) -> int:
        return self.positions.shape[0]

    def _factorize(self):
        n2 = 2 * self.num_targets
        k = build_block_matrix(self.hp, self.kind, self.positions, self.positions)
        k[np.diag_indices_from(k)] += self.target_noise_var
        jitter = JITTER_START * self.hp.current_variance
        last_err = None
        for _ in range(JITTER_ATTEMPTS):
            try:
                self._factor = cho_factor(k, lower=True)
                break
            except np.linalg.LinAlgError as err:
                last_err = err
                k[np.diag_indices_from(k)] += jitter
                jitter *= 10.0
        else:
            raise FactorizationFailure(
                f"Cholesky failed for {self.num_targets} targets after "
                f"{JITTER_ATTEMPTS} jitter escalations"
            ) from last_err
        y = _interleave(self.currents)
        assert y.shape == (n2,)
        self._alpha = cho_solve(self._factor, y)

    def predict(self, query_points) -> Prediction:
        """Posterior mean and full joint covariance at the query points."""
        q = as_xy(query_points)
        k_qq = build_block_matrix(self.hp, self.kind, q, q)
        if self.num_targets == 0:
            return Prediction(np.zeros_like(q), k_qq)
        k_dq = build_block_matrix(self.hp, self.kind, self.positions, q)
        mean = k_dq.T @ self._alpha
        v = solve_triangular(self._factor[0], k_dq, lower=True)
        cov = k_qq - v.T @ v
        cov = 0.5 * (cov + cov.T)
        return Prediction(mean.reshape(-1, 2), cov)

    def predict_mean(self, query_points) -> np.ndarray:
        """Posterior mean only, skipping the query covariance. Shape (M, 2)."""
        q = as_xy(query_points)
        if self.num_targets == 0:
            return np.zeros_like(q)
        k_dq = build_block_matrix(self.hp, self.kind, self.positions, q)
        return (k_dq.T @ self._alpha).reshape(-1, 2)

    def add_targets(self, positions, currents) -> "GpModel":
        """New model conditioned on the union of old and new targets."""
        p_new = as_xy(positions)
        c_new = as_xy(currents)
        if p_new.shape != c_new.shape:
            raise DimensionMismatch(f"positions {p_new.shape} vs currents {c_new.shape}")
        return GpModel(
            self.hp,
            self.kind,
            np.vstack([self.positions, p_new]),
            np.vstack([self.currents, c_new]),
            target_noise_var=self.target_noise_var,
        )

    def to_json(self) -> str:
        """Serialise hyperparameters and targets (never the factorisation)."""
        return json.dumps(
            {
                "kernel": self.kind.value,
                "lengthscale_m": self.hp.lengthscale,
                "current_variance_m2s2": self.hp.current_variance,
                "gps_noise_std_m": self.hp.gps_noise_std,
                "target_noise_var_m2s2": self.target_noise_var,
                "positions_m": self.positions.tolist(),
                "currents_mps": self.currents.tolist(),
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "GpModel":
        d = json.loads(text)
        hp = HyperParams(
            lengthscale=d["lengthscale_m"],
            current_variance=d["current_variance_m2s2"],
            gps_noise_std=d["gps_noise_std_m"],
        )
        return GpModel(
            hp,
            KernelKind(d["kernel"]),
            np.array(d["positions_m"], dtype=float).reshape(-1, 2),
            np.array(d["currents_mps"], dtype=float).reshape(-1, 2),
            target_noise_var=d["target_noise_var_m2s2"],
        )


def downsample_targets(positions, currents, min_spacing: float):
    """
    Thin targets greedily: walk in order, keep a point only if it is at
    least `min_spacing` metres from every point already kept. Returns
    (positions, currents) arrays of the survivors.
    """
    p = as_xy(positions)
    c = as_xy(currents)
    if p.shape != c.shape:
        raise DimensionMismatch(f"positions {p.shape} vs currents {c.shape}")
    if min_spacing <= 0 or p.shape[0] == 0:
        return p, c
    kept = []
    for i in range(p.shape[0]):
        if not kept:
            kept.append(i)
            continue
        d2 = np.sum((p[kept] - p[i]) ** 2, axis=1)
        if np.min(d2) >= min_spacing**2:
            kept.append(i)
    idx = np.array(kept, dtype=int)
    return p[idx], c[idx]
