"""Bounded domains, volumes and exact uniform samplers.

Vectors are plain 1-d ``numpy`` arrays; batches are ``(n, d)`` arrays. Two
shapes are supported everywhere: the l2 ball (``"ball"``) and the l-infinity
cube (``"cube"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

Shape = Literal["ball", "cube"]
SHAPES = ("ball", "cube")

# log(float max) is ~709.78; above this a volume cannot be represented.
_LOG_MAX = math.log(np.finfo(float).max)
_LOG_TINY = math.log(np.finfo(float).tiny)


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Coerce ``v`` to a finite float vector, optionally checking its dimension."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite coordinates")
    return arr


def norm(v, p: str = "l2") -> float:
    """l2 or l-infinity norm of a vector."""
    arr = np.asarray(v, dtype=float)
    if p == "l2":
        return float(np.sqrt(np.sum(arr * arr)))
    if p == "linf":
        return float(np.max(np.abs(arr))) if arr.size else 0.0
    raise ValueError(f"unknown norm {p!r}; use 'l2' or 'linf'")


def _shape_norm(shape: str) -> str:
    return "l2" if shape == "ball" else "linf"


def _check_shape(shape: str) -> None:
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; use one of {SHAPES}")


def log_ball_volume(d: int, r: float) -> float:
    if d < 1 or r <= 0:
        raise ValueError("need d >= 1 and r > 0")
    return 0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0) + d * math.log(r)


def log_cube_volume(d: int, r: float) -> float:
    if d < 1 or r <= 0:
        raise ValueError("need d >= 1 and r > 0")
    return d * math.log(2.0 * r)


def _exp_checked(log_v: float) -> float:
    if log_v > _LOG_MAX or log_v < _LOG_TINY:
        raise OverflowError(f"volume exp({log_v:.1f}) outside the float range; use the log form")
    return math.exp(log_v)


def ball_volume(d: int, r: float) -> float:
    """Volume of the d-dimensional l2 ball of radius ``r``.

    Raises:
        OverflowError: if the volume is not representable as a float.
    """
    if d < 1 or r <= 0:
        raise ValueError("need d >= 1 and r > 0")
    if d * abs(math.log(r)) <= 300 and d <= 300:
        return math.pi ** (0.5 * d) / math.gamma(0.5 * d + 1.0) * r**d
    return _exp_checked(log_ball_volume(d, r))


def cube_volume(d: int, r: float) -> float:
    """Volume ``(2r)**d`` of the cube of half-side ``r``."""
    if d < 1 or r <= 0:
        raise ValueError("need d >= 1 and r > 0")
    if d * abs(math.log(2.0 * r)) <= 300:
        return (2.0 * r) ** d
    return _exp_checked(log_cube_volume(d, r))


def log_volume(shape: str, d: int, r: float) -> float:
    _check_shape(shape)
    return log_ball_volume(d, r) if shape == "ball" else log_cube_volume(d, r)


@dataclass(frozen=True)
class DomainSpec:
    """Input domain: the ball or cube of radius ``scale`` centred at the origin."""

    shape: Shape
    dim: int
    scale: float = 1.0

    def __post_init__(self):
        _check_shape(self.shape)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def norm(self) -> str:
        return _shape_norm(self.shape)

    def region(self) -> "Region":
        return Region(self.shape, np.zeros(self.dim), self.scale)

    def contains(self, x, atol: float = 1e-12) -> np.ndarray | bool:
        """Membership test for one vector or a batch of row vectors."""
        arr = np.asarray(x, dtype=float)
        if self.shape == "ball":
            r = np.sqrt(np.sum(arr * arr, axis=-1))
        else:
            r = np.max(np.abs(arr), axis=-1)
        inside = r <= self.scale + atol
        return bool(inside) if np.ndim(inside) == 0 else inside

    def project(self, x) -> np.ndarray:
        """Nearest-point truncation into the domain (coordinate clipping for cubes)."""
        arr = np.asarray(x, dtype=float)
        if self.shape == "cube":
            return np.clip(arr, -self.scale, self.scale)
        r = np.sqrt(np.sum(arr * arr, axis=-1, keepdims=True))
        factor = np.where(r > self.scale, self.scale / np.maximum(r, 1e-300), 1.0)
        return arr * factor

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return sample_uniform(self.region(), rng, size)


@dataclass(frozen=True)
class Region:
    """Ball or cube of a given radius around ``center``."""

    shape: Shape
    center: np.ndarray
    radius: float

    def __post_init__(self):
        _check_shape(self.shape)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", as_vector(self.center))

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    def contains(self, x, atol: float = 1e-12):
        diff = np.asarray(x, dtype=float) - self.center
        if self.shape == "ball":
            r = np.sqrt(np.sum(diff * diff, axis=-1))
        else:
            r = np.max(np.abs(diff), axis=-1)
        inside = r <= self.radius + atol
        return bool(inside) if np.ndim(inside) == 0 else inside

    def volume(self) -> float:
        fn = ball_volume if self.shape == "ball" else cube_volume
        return fn(self.dim, self.radius)


def unit_ball_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """``n`` uniform points in the unit l2 ball: Gaussian direction, radius U**(1/d)."""
    g = rng.standard_normal((n, d))
    nrm = np.sqrt(np.sum(g * g, axis=1, keepdims=True))
    # A Gaussian draw of exactly zero has probability zero; guard anyway.
    nrm[nrm == 0] = 1.0
    u = rng.random((n, 1))
    return g / nrm * u ** (1.0 / d)


def unit_cube_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d))


def sample_uniform(region: Region, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from a ball or cube region.

    Returns a vector when ``size`` is None, otherwise a ``(size, d)`` batch.
    """
    n = 1 if size is None else int(size)
    d = region.dim
    if region.shape == "ball":
        pts = unit_ball_points(rng, n, d)
    else:
        pts = unit_cube_points(rng, n, d)
    out = region.center + region.radius * pts
    if region.shape == "ball":
        # Rounding can push a boundary point a hair outside; pull it back.
        diff = out - region.center
        r = np.sqrt(np.sum(diff * diff, axis=1, keepdims=True))
        over = r > region.radius
        if np.any(over):
            out = np.where(over, region.center + diff * (region.radius / r), out)
    return out[0] if size is None else out


def normalize_locations(points: Sequence, source_box) -> tuple[np.ndarray, float]:
    """Affinely map points from ``source_box`` onto ``[-1, 1]`` per axis.

    Args:
        points: ``(n, d)`` array-like of source coordinates.
        source_box: pair ``(mins, maxs)`` giving the box bounds per axis.

    Returns:
        The mapped points and the factor ``2 / (max - min)`` of the first axis,
        which converts source-unit radii to normalized radii.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in source_box)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("source_box must be (mins, maxs) of equal 1-d shape")
    span = hi - lo
    if np.any(span <= 0):
        raise ValueError("degenerate source box: every axis needs max > min")
    pts = np.asarray(points, dtype=float).reshape(-1, lo.shape[0]) if len(points) else np.empty((0, lo.shape[0]))
    mapped = 2.0 * (pts - lo) / span - 1.0
    return mapped, float(2.0 / span[0])
