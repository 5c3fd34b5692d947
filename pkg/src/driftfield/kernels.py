"""
Covariance kernels over 2D currents.

The incompressible kernel is built by pushing a squared-exponential
covariance on the scalar streamfunction through the rotated-gradient
map w = (d(phi)/dy, -d(phi)/dx). Differentiating the scalar kernel
twice yields a matrix-valued covariance whose sample fields are exactly
divergence-free. With g(d) = sigma_phi^2 exp(-|d|^2 / (2 l^2)) and
sigma_phi^2 = sigma_w^2 l^2, the blocks reduce to

    K11 = sigma_w^2 (1 - dy^2/l^2) exp(-|d|^2 / 2l^2)
    K22 = sigma_w^2 (1 - dx^2/l^2) exp(-|d|^2 / 2l^2)
    K12 = K21 = sigma_w^2 (dx dy / l^2) exp(-|d|^2 / 2l^2)

where d = p - q is the lag in metres. The zero-lag covariance is exactly
sigma_w^2 * I. A standard diagonal kernel (independent squared-exponential
on each velocity component, no divergence constraint) is provided for
comparison runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from driftfield.flowfield import Vec2, as_xy

__all__ = [
    "HyperParams",
    "KernelKind",
    "eval_scalar_kernel",
    "eval_kernel",
    "build_block_matrix",
    "fd_consistency_report",
]


@dataclass(frozen=True)
class HyperParams:
    """
    Fixed model hyperparameters.

    lengthscale: spatial correlation scale of the current field, metres.
    current_variance: prior marginal variance of each velocity component,
        m^2/s^2. The implied streamfunction variance is
        current_variance * lengthscale^2.
    gps_noise_std: GPS fix noise standard deviation per axis, metres.
    """

    lengthscale: float
    current_variance: float
    gps_noise_std: float

    def __post_init__(self):
        if not (self.lengthscale > 0 and math.isfinite(self.lengthscale)):
            raise ValueError("lengthscale must be positive and finite")
        if not (self.current_variance > 0 and math.isfinite(self.current_variance)):
            raise ValueError("current_variance must be positive and finite")
        if self.gps_noise_std < 0 or not math.isfinite(self.gps_noise_std):
            raise ValueError("gps_noise_std must be >= 0 and finite")

    @property
    def streamfunction_variance(self) -> float:
        return self.current_variance * self.lengthscale**2


class KernelKind(Enum):
    INCOMPRESSIBLE = "incompressible"
    STANDARD_DIAGONAL = "standard_diagonal"


def eval_scalar_kernel(hp: HyperParams, p: Vec2, q: Vec2) -> float:
    """Squared-exponential streamfunction covariance g(p - q), in m^4/s^2."""
    dx = p.x - q.x
    dy = p.y - q.y
    l2 = hp.lengthscale**2
    return hp.streamfunction_variance * math.exp(-(dx * dx + dy * dy) / (2.0 * l2))


def eval_kernel(hp: HyperParams, kind: KernelKind, p: Vec2, q: Vec2) -> np.ndarray:
    """2x2 cross-covariance of the currents at p and q."""
    dx = p.x - q.x
    dy = p.y - q.y
    l2 = hp.lengthscale**2
    e = math.exp(-(dx * dx + dy * dy) / (2.0 * l2))
    s = hp.current_variance
    if kind is KernelKind.STANDARD_DIAGONAL:
        return np.array([[s * e, 0.0], [0.0, s * e]])
    k11 = s * (1.0 - dy * dy / l2) * e
    k22 = s * (1.0 - dx * dx / l2) * e
    k12 = s * (dx * dy / l2) * e
    return np.array([[k11, k12], [k12, k22]])


def build_block_matrix(hp: HyperParams, kind: KernelKind, pts_a, pts_b) -> np.ndarray:
    """
    Dense block covariance between two point sets.

    Returns a (2A, 2B) matrix of 2x2 blocks in interleaved component
    order [u0, v0, u1, v1, ...] on both axes.
    """
    a = as_xy(pts_a)
    b = as_xy(pts_b)
    na, nb = a.shape[0], b.shape[0]
    dx = a[:, 0, None] - b[None, :, 0]
    dy = a[:, 1, None] - b[None, :, 1]
    l2 = hp.lengthscale**2
    e = np.exp(-(dx * dx + dy * dy) / (2.0 * l2))
    s = hp.current_variance
    out = np.zeros((2 * na, 2 * nb))
    if kind is KernelKind.STANDARD_DIAGONAL:
        out[0::2, 0::2] = s * e
        out[1::2, 1::2] = s * e
        return out
    out[0::2, 0::2] = s * (1.0 - dy * dy / l2) * e
    out[1::2, 1::2] = s * (1.0 - dx * dx / l2) * e
    cross = s * (dx * dy / l2) * e
    out[0::2, 1::2] = cross
    out[1::2, 0::2] = cross
    return out


def fd_consistency_report(hp: HyperParams, lags=None, rel_step: float = 1e-4) -> dict:
    """
    Check the incompressible kernel against finite differences of the
    scalar kernel, block by block, at a set of lag vectors.

    The matrix kernel is a second derivative of the scalar kernel in lag
    space: K11 = -d2g/dy2, K22 = -d2g/dx2, K12 = d2g/dxdy. Each block is
    compared against a central second difference with step
    rel_step * lengthscale. Returns a dict with the worst relative error
    and per-lag details; `passed` is True when the worst error is below
    1e-6.
    """
    l = hp.lengthscale
    if lags is None:
        lags = [
            Vec2(0.0, 0.0),
            Vec2(0.3 * l, 0.0),
            Vec2(0.0, -0.7 * l),
            Vec2(0.5 * l, 0.5 * l),
            Vec2(-1.2 * l, 0.4 * l),
            Vec2(2.0 * l, -1.5 * l),
        ]
    h = rel_step * l
    origin = Vec2(0.0, 0.0)

    def g(dx: float, dy: float) -> float:
        return eval_scalar_kernel(hp, Vec2(dx, dy), origin)

    scale = hp.current_variance
    details = []
    worst = 0.0
    for d in lags:
        k = eval_kernel(hp, KernelKind.INCOMPRESSIBLE, d, origin)
        fd11 = -(g(d.x, d.y + h) - 2.0 * g(d.x, d.y) + g(d.x, d.y - h)) / (h * h)
        fd22 = -(g(d.x + h, d.y) - 2.0 * g(d.x, d.y) + g(d.x - h, d.y)) / (h * h)
        fd12 = (
            g(d.x + h, d.y + h) - g(d.x + h, d.y - h) - g(d.x - h, d.y + h) + g(d.x - h, d.y - h)
        ) / (4.0 * h * h)
        errs = {
            "k11": abs(k[0, 0] - fd11) / scale,
            "k22": abs(k[1, 1] - fd22) / scale,
            "k12": abs(k[0, 1] - fd12) / scale,
        }
        block_worst = max(errs.values())
        worst = max(worst, block_worst)
        details.append({"lag_m": [d.x, d.y], "rel_errors": errs})
    return {
        "step_m": h,
        "worst_rel_error": worst,
        "passed": bool(worst < 1e-6),
        "lags": details,
    }
