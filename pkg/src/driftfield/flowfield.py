"""
Analytic 2D incompressible flow fields.

A planar incompressible flow is the rotated gradient of a scalar
streamfunction phi:

    w(x, y) = (d(phi)/dy, -d(phi)/dx)

Three field families are provided:

    ZeroField    phi = 0, w = 0 everywhere.
    Uniform      phi = c_x*y - c_y*x, w = (c_x, c_y) constant.
    DoubleGyre   phi = A sin(pi*x/Lx - px) sin(pi*y/Ly - py), a steady
                 checkerboard of counter-rotating cells of size Lx x Ly.

All fields are exactly divergence-free by construction; `divergence_fd`
gives a central-difference estimate useful as a numerical cross-check.
Positions are metres, velocities m/s, streamfunction m^2/s.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Vec2",
    "FieldKind",
    "AnalyticField",
    "Grid",
    "eval_field",
    "eval_field_many",
    "eval_streamfunction",
    "divergence_fd",
    "random_gyre",
    "peak_speed",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Vec2:
    """2D vector: a position in metres or a velocity/current in m/s."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 components must be finite, got ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, scalar: float) -> "Vec2":
        return Vec2(self.x * scalar, self.y * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec2":
        return Vec2(float(a[0]), float(a[1]))


def as_xy(points) -> np.ndarray:
    """Coerce a sequence of Vec2 (or an (N, 2) array-like) to an (N, 2) float array."""
    if isinstance(points, np.ndarray):
        out = np.asarray(points, dtype=float)
    else:
        out = np.array([(p.x, p.y) if isinstance(p, Vec2) else tuple(p) for p in points], dtype=float)
    if out.size == 0:
        return out.reshape(0, 2)
    if out.ndim != 2 or out.shape[1] != 2:
        raise ValueError(f"expected (N, 2) points, got shape {out.shape}")
    return out


def to_vec2_list(xy: np.ndarray) -> list[Vec2]:
    return [Vec2(float(x), float(y)) for x, y in np.asarray(xy, dtype=float).reshape(-1, 2)]


class FieldKind(Enum):
    DOUBLE_GYRE = "double_gyre"
    UNIFORM = "uniform"
    ZERO = "zero"


@dataclass(frozen=True)
class AnalyticField:
    """
    Closed-form streamfunction field.

    `amplitude` scales the streamfunction for gyres (m^2/s) and is the
    current speed for uniform fields (m/s). `domain_extent` is the gyre
    cell size (Lx, Ly); `phase` shifts the cell pattern; `direction` is
    the unit flow direction for uniform fields.
    """

    kind: FieldKind
    amplitude: float = 0.0
    domain_extent: tuple[float, float] = (5.0e4, 5.0e4)
    phase: tuple[float, float] = (0.0, 0.0)
    direction: Vec2 = field(default_factory=lambda: Vec2(1.0, 0.0))

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        lx, ly = self.domain_extent
        if lx <= 0 or ly <= 0:
            raise ValueError("domain extents must be positive")
        if self.kind is FieldKind.UNIFORM and abs(self.direction.norm() - 1.0) > 1e-9:
            raise ValueError("uniform field direction must have unit norm")

    @staticmethod
    def zero() -> "AnalyticField":
        return AnalyticField(kind=FieldKind.ZERO)

    @staticmethod
    def uniform(current: Vec2) -> "AnalyticField":
        """Uniform field flowing with the given current vector (m/s)."""
        speed = current.norm()
        if speed == 0.0:
            return AnalyticField.zero()
        return AnalyticField(
            kind=FieldKind.UNIFORM,
            amplitude=speed,
            direction=Vec2(current.x / speed, current.y / speed),
        )

    @staticmethod
    def double_gyre(
        amplitude: float,
        extent: tuple[float, float] = (5.0e4, 5.0e4),
        phase: tuple[float, float] = (0.0, 0.0),
    ) -> "AnalyticField":
        return AnalyticField(
            kind=FieldKind.DOUBLE_GYRE,
            amplitude=amplitude,
            domain_extent=extent,
            phase=phase,
        )


def eval_streamfunction(f: AnalyticField, p: Vec2) -> float:
    """Streamfunction phi(p) in m^2/s; gauge fixed so the uniform field has phi(0, 0) = 0."""
    if f.kind is FieldKind.ZERO:
        return 0.0
    if f.kind is FieldKind.UNIFORM:
        cx = f.amplitude * f.direction.x
        cy = f.amplitude * f.direction.y
        return cx * p.y - cy * p.x
    lx, ly = f.domain_extent
    px, py = f.phase
    return f.amplitude * math.sin(math.pi * p.x / lx - px) * math.sin(math.pi * p.y / ly - py)


def eval_field(f: AnalyticField, p: Vec2) -> Vec2:
    """Current w(p) = (d(phi)/dy, -d(phi)/dx), evaluated analytically."""
    if f.kind is FieldKind.ZERO:
        return Vec2(0.0, 0.0)
    if f.kind is FieldKind.UNIFORM:
        return Vec2(f.amplitude * f.direction.x, f.amplitude * f.direction.y)
    lx, ly = f.domain_extent
    px, py = f.phase
    ax = math.pi * p.x / lx - px
    ay = math.pi * p.y / ly - py
    u = f.amplitude * (math.pi / ly) * math.sin(ax) * math.cos(ay)
    v = -f.amplitude * (math.pi / lx) * math.cos(ax) * math.sin(ay)
    return Vec2(u, v)


def eval_field_many(f: AnalyticField, points) -> np.ndarray:
    """Vectorised `eval_field` over an (N, 2) array (or sequence of Vec2)."""
    xy = as_xy(points)
    if f.kind is FieldKind.ZERO:
        return np.zeros_like(xy)
    if f.kind is FieldKind.UNIFORM:
        return np.broadcast_to(
            f.amplitude * np.array([f.direction.x, f.direction.y]), xy.shape
        ).copy()
    lx, ly = f.domain_extent
    px, py = f.phase
    ax = np.pi * xy[:, 0] / lx - px
    ay = np.pi * xy[:, 1] / ly - py
    u = f.amplitude * (np.pi / ly) * np.sin(ax) * np.cos(ay)
    v = -f.amplitude * (np.pi / lx) * np.cos(ax) * np.sin(ay)
    return np.column_stack([u, v])


def peak_speed(f: AnalyticField) -> float:
    """Maximum of |w| over the plane, in closed form."""
    if f.kind is FieldKind.ZERO:
        return 0.0
    if f.kind is FieldKind.UNIFORM:
        return f.amplitude
    lx, ly = f.domain_extent
    return f.amplitude * math.pi / min(lx, ly)


def divergence_fd(f, p: Vec2, h: float) -> float:
    """
    Central-difference divergence of a vector field at p.

    `f` is any callable Vec2 -> Vec2; `h` is the step in metres. Returns
    (f_x(p+h*ex) - f_x(p-h*ex) + f_y(p+h*ey) - f_y(p-h*ey)) / (2h), in 1/s.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    fx_p = f(Vec2(p.x + h, p.y)).x
    fx_m = f(Vec2(p.x - h, p.y)).x
    fy_p = f(Vec2(p.x, p.y + h)).y
    fy_m = f(Vec2(p.x, p.y - h)).y
    return (fx_p - fx_m + fy_p - fy_m) / (2.0 * h)


# Sampling ranges for random gyres. Cell extents are drawn uniformly per
# axis, phases uniformly over a full period, and the peak current speed
# log-uniformly over [PEAK_SPEED_MIN, PEAK_SPEED_MAX]; the streamfunction
# amplitude is then solved from the closed-form peak speed.
GYRE_EXTENT_RANGE = (3.0e4, 7.0e4)
PEAK_SPEED_MIN = 0.1
PEAK_SPEED_MAX = 0.5


def random_gyre(seed: int) -> AnalyticField:
    """Deterministic random double gyre with peak current speed in [0.1, 0.5] m/s."""
    rng = np.random.default_rng(seed)
    lo, hi = GYRE_EXTENT_RANGE
    lx = float(rng.uniform(lo, hi))
    ly = float(rng.uniform(lo, hi))
    px = float(rng.uniform(0.0, 2.0 * np.pi))
    py = float(rng.uniform(0.0, 2.0 * np.pi))
    speed = float(np.exp(rng.uniform(np.log(PEAK_SPEED_MIN), np.log(PEAK_SPEED_MAX))))
    amplitude = speed * min(lx, ly) / math.pi
    return AnalyticField.double_gyre(amplitude, extent=(lx, ly), phase=(px, py))


@dataclass(frozen=True)
class Grid:
    """Regular evaluation raster; points are laid out row-major (y-outer, x-inner)."""

    origin: Vec2
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must contain at least one point")

    def points(self) -> np.ndarray:
        """All grid points as an (nx*ny, 2) array in row-major order."""
        xs = self.origin.x + self.spacing * np.arange(self.nx)
        ys = self.origin.y + self.spacing * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)  # shape (ny, nx); C-order ravel is y-outer
        return np.column_stack([gx.ravel(), gy.ravel()])


FIELD_CSV_HEADER = ["x_m", "y_m", "u_mps", "v_mps"]


def write_field_csv(path, grid: Grid, velocities) -> None:
    """Write grid velocities as CSV rows `x_m,y_m,u_mps,v_mps` in grid row-major order."""
    uv = as_xy(velocities)
    pts = grid.points()
    if uv.shape != pts.shape:
        raise ValueError(f"expected {pts.shape[0]} velocity rows, got {uv.shape[0]}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELD_CSV_HEADER)
        for (x, y), (u, v) in zip(pts, uv):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(u)), repr(float(v))])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a field CSV back as (positions, velocities), both (N, 2) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != FIELD_CSV_HEADER:
            raise ValueError(f"unexpected field CSV header: {header}")
        rows = [[float(c) for c in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, 4)
    return data[:, :2], data[:, 2:]
