"""Closed-form geometry on two charts: the square torus and the round sphere.

Chart coordinates are angle pairs (u, v), reduced modulo 2*pi once at
construction of a ChartPoint and never again.  Torus metrics have constant
coefficients, so geodesics lift to straight lines in the universal cover and
distance is a minimum of one quadratic form over a few lattice shifts.  Sphere
distances come from the ambient angle formula on the colatitude/longitude
chart; evaluation is refused inside a small guard band around the poles where
the chart degenerates.

Everything here is exact up to rounding: no geometry is discretized in this
module.  Pairwise helpers (the *_sq_* functions) return squared distances for
whole arrays of points at once and are the workhorses of operator assembly;
they process row blocks to bound peak memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidParameterError, PoleChartError

TWO_PI = 2.0 * math.pi

# Sphere chart guard band, radians.  metric_at and friends refuse colatitudes
# closer than this to {0, pi}.
POLE_GUARD = 1e-6

# Row block size for pairwise kernels: caps temporaries at ~blocksize x n.
_BLOCK = 512


@dataclass(frozen=True)
class ChartPoint:
    """A point on a 2*pi-periodic chart. Coordinates are reduced on entry."""

    u: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "u", float(self.u) % TWO_PI)
        object.__setattr__(self, "v", float(self.v) % TWO_PI)

    def offset(self, du: float, dv: float) -> "ChartPoint":
        return ChartPoint(self.u + du, self.v + dv)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=np.float64)


# ---------------------------------------------------------------------------
# metric families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusMetric:
    """Constant-coefficient metric E du^2 + 2F du dv + G dv^2 on the torus.

    E, F, G are the classical first-fundamental-form coefficients.  Requires
    E > 0 and EG - F^2 > 0 (positive definiteness).
    """

    E: float
    F: float
    G: float

    def __post_init__(self):
        if not (self.E > 0.0 and self.E * self.G - self.F * self.F > 0.0):
            raise InvalidParameterError(
                f"metric coefficients not positive definite: "
                f"E={self.E}, F={self.F}, G={self.G}"
            )
        if self.anisotropy_ratio() > 256.0:
            raise InvalidParameterError(
                "anisotropy ratio beyond 256 is outside the validated "
                "lattice-shift search range"
            )

    @classmethod
    def flat(cls) -> "TorusMetric":
        return cls(1.0, 0.0, 1.0)

    @classmethod
    def anisotropic(cls, a: float) -> "TorusMetric":
        """diag(a^2, a^-2): unit volume form for every a > 0."""
        if a <= 0:
            raise InvalidParameterError("anisotropy factor must be positive")
        return cls(a * a, 0.0, 1.0 / (a * a))

    @classmethod
    def scaled_flat(cls, c: float) -> "TorusMetric":
        """c^2 * (du^2 + dv^2)."""
        if c <= 0:
            raise InvalidParameterError("scale factor must be positive")
        return cls(c * c, 0.0, c * c)

    def matrix(self) -> np.ndarray:
        return np.array([[self.E, self.F], [self.F, self.G]], dtype=np.float64)

    def sqrt_det(self) -> float:
        return math.sqrt(self.E * self.G - self.F * self.F)

    def anisotropy_ratio(self) -> float:
        """Condition number of the coefficient matrix.

        Equals max(E/G, G/E) when F = 0; with coupling the eigenvalue
        ratio is the quantity that actually controls how far the lattice
        search for closed-loop distances has to reach.
        """
        tr = self.E + self.G
        disc = math.sqrt(max(tr * tr / 4.0 - (self.E * self.G - self.F * self.F), 0.0))
        return (tr / 2.0 + disc) / (tr / 2.0 - disc)

    def shift_range(self) -> int:
        # Diagonal metrics split per axis: a parabola in the wrap count k
        # has its vertex inside (-1, 1) for any raw chart difference in
        # (-2 pi, 2 pi), so k in {-1, 0, 1} is exact at any anisotropy.
        # Coupled metrics can route loops diagonally; the reach grows with
        # the condition number.  Ladder validated by brute force against a
        # +-8 search over random forms up to ratio 256.
        kappa = self.anisotropy_ratio()
        if self.F == 0.0:
            return 2 if max(self.E / self.G, self.G / self.E) > 16.0 else 1
        if kappa <= 4.0:
            return 2
        if kappa <= 16.0:
            return 3
        if kappa <= 64.0:
            return 5
        return 7


@dataclass(frozen=True)
class SphereMetric:
    """Round sphere of a given radius in the colatitude/longitude chart."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise InvalidParameterError("sphere radius must be positive")


Metric = Union[TorusMetric, SphereMetric]


def _check_sphere_chart(u: float) -> None:
    if not (POLE_GUARD < u < math.pi - POLE_GUARD):
        raise PoleChartError(
            f"colatitude {u!r} is outside the usable chart "
            f"({POLE_GUARD}, pi - {POLE_GUARD})"
        )


def metric_at(metric: Metric, x: ChartPoint) -> np.ndarray:
    """2x2 metric tensor at x. Symmetric positive definite."""
    if isinstance(metric, TorusMetric):
        return metric.matrix()
    _check_sphere_chart(x.u)
    r2 = metric.radius * metric.radius
    s = math.sin(x.u)
    return np.array([[r2, 0.0], [0.0, r2 * s * s]], dtype=np.float64)


def volume_density(metric: Metric, x: ChartPoint) -> float:
    """sqrt(det g) at x, the chart density of the Riemannian measure."""
    if isinstance(metric, TorusMetric):
        return metric.sqrt_det()
    _check_sphere_chart(x.u)
    return metric.radius * metric.radius * math.sin(x.u)


# ---------------------------------------------------------------------------
# geodesic distance
# ---------------------------------------------------------------------------


def torus_sq_geodesic(metric: TorusMetric, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise squared geodesic distance on the constant-metric torus.

    p: (n, 2), q: (m, 2) chart coordinates.  Returns (n, m).  The distance is
    the minimum of the quadratic form over lattice shifts of the coordinate
    difference; the shift range comes from the metric's anisotropy.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    s = metric.shift_range()
    shifts = [k * TWO_PI for k in range(-s, s + 1)]
    out = np.empty((p.shape[0], q.shape[0]), dtype=np.float64)
    for lo in range(0, p.shape[0], _BLOCK):
        hi = min(lo + _BLOCK, p.shape[0])
        du = p[lo:hi, 0, None] - q[None, :, 0]
        dv = p[lo:hi, 1, None] - q[None, :, 1]
        best = None
        for a in shifts:
            x = du + a
            for b in shifts:
                y = dv + b
                cand = metric.E * x * x + 2.0 * metric.F * x * y + metric.G * y * y
                best = cand if best is None else np.minimum(best, cand, out=best)
        out[lo:hi] = best
    return out


def sphere_chart_to_unit(p: np.ndarray) -> np.ndarray:
    """(n, 2) colatitude/longitude -> (n, 3) unit vectors."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    su, cu = np.sin(p[:, 0]), np.cos(p[:, 0])
    sv, cv = np.sin(p[:, 1]), np.cos(p[:, 1])
    return np.column_stack([su * cv, su * sv, cu])


def sphere_sq_geodesic(radius: float, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise squared great-circle distance, (n, m).

    Uses atan2(|a x b|, a.b), which stays accurate for nearly equal and
    nearly antipodal pairs alike.
    """
    a = sphere_chart_to_unit(p)
    b = sphere_chart_to_unit(q)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo in range(0, a.shape[0], _BLOCK):
        hi = min(lo + _BLOCK, a.shape[0])
        blk = a[lo:hi]
        dot = blk @ b.T
        cx = np.multiply.outer(blk[:, 1], b[:, 2]) - np.multiply.outer(blk[:, 2], b[:, 1])
        cy = np.multiply.outer(blk[:, 2], b[:, 0]) - np.multiply.outer(blk[:, 0], b[:, 2])
        cz = np.multiply.outer(blk[:, 0], b[:, 1]) - np.multiply.outer(blk[:, 1], b[:, 0])
        theta = np.arctan2(np.sqrt(cx * cx + cy * cy + cz * cz), dot)
        out[lo:hi] = (radius * theta) ** 2
    return out


def metric_sq_geodesic(metric: Metric, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise squared geodesic distance for either chart."""
    if isinstance(metric, TorusMetric):
        return torus_sq_geodesic(metric, p, q)
    return sphere_sq_geodesic(metric.radius, p, q)


def geodesic_distance(metric: Metric, x: ChartPoint, y: ChartPoint) -> float:
    """Geodesic distance between two chart points."""
    if isinstance(metric, SphereMetric):
        _check_sphere_chart(x.u)
        _check_sphere_chart(y.u)
    d2 = metric_sq_geodesic(metric, x.as_array()[None, :], y.as_array()[None, :])
    return math.sqrt(float(d2[0, 0]))


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CliffordTorus:
    """(u, v) -> (cos u, sin u, cos v, sin v) in R^4. Induced metric is flat."""

    ambient_dim: int = 4


@dataclass(frozen=True)
class DonutTorus:
    """Surface of revolution in R^3; u runs around the tube, v around the axis."""

    major: float
    minor: float
    ambient_dim: int = 3

    def __post_init__(self):
        if not (self.major > self.minor > 0.0):
            raise InvalidParameterError(
                f"need major > minor > 0, got major={self.major}, minor={self.minor}"
            )


@dataclass(frozen=True)
class UnitSphere:
    """Colatitude/longitude chart onto the unit sphere in R^3."""

    ambient_dim: int = 3


Embedding = Union[CliffordTorus, DonutTorus, UnitSphere]


def embed_many(embedding: Embedding, p: np.ndarray) -> np.ndarray:
    """Map (n, 2) chart coordinates to (n, ambient_dim) ambient coordinates."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    u, v = p[:, 0], p[:, 1]
    if isinstance(embedding, CliffordTorus):
        return np.column_stack([np.cos(u), np.sin(u), np.cos(v), np.sin(v)])
    if isinstance(embedding, DonutTorus):
        ring = embedding.major + embedding.minor * np.cos(u)
        return np.column_stack(
            [ring * np.cos(v), ring * np.sin(v), embedding.minor * np.sin(u)]
        )
    su = np.sin(u)
    return np.column_stack([su * np.cos(v), su * np.sin(v), np.cos(u)])


def embed(embedding: Embedding, x: ChartPoint) -> np.ndarray:
    return embed_many(embedding, x.as_array()[None, :])[0]


def ambient_sq_dist(embedding: Embedding, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Pairwise squared chord distance of embedded points, (n, m).

    Computed from coordinate differences directly (no norm expansion), so
    nearby pairs lose no precision to cancellation.
    """
    a = embed_many(embedding, p)
    b = embed_many(embedding, q)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for lo in range(0, a.shape[0], _BLOCK):
        hi = min(lo + _BLOCK, a.shape[0])
        diff = a[lo:hi, None, :] - b[None, :, :]
        out[lo:hi] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def ambient_distance(embedding: Embedding, x: ChartPoint, y: ChartPoint) -> float:
    """Chord distance between the embedded images of two chart points."""
    d2 = ambient_sq_dist(embedding, x.as_array()[None, :], y.as_array()[None, :])
    return math.sqrt(float(d2[0, 0]))


def induced_metric(embedding: Embedding, x: ChartPoint, h: float = 1e-4) -> np.ndarray:
    """First fundamental form J^T J from a central-difference Jacobian.

    h is the chart step of the central differences; must satisfy 0 < h <= 1e-3.
    """
    if not (0.0 < h <= 1e-3):
        raise InvalidParameterError(f"difference step must be in (0, 1e-3], got {h}")
    cols = []
    for du, dv in ((h, 0.0), (0.0, h)):
        plus = embed_many(embedding, np.array([[x.u + du, x.v + dv]]))[0]
        minus = embed_many(embedding, np.array([[x.u - du, x.v - dv]]))[0]
        cols.append((plus - minus) / (2.0 * h))
    jac = np.column_stack(cols)
    return jac.T @ jac
