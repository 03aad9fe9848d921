"""Assembly and evaluation of graph Laplace operators.

Given a quadrature rule, a normalized density p, and a kernel mode, the
assembled matrix is

    L_ij = c * (delta_ij * sum_k W_ik - W_ij),      c = t^(-2)  (surface case),
    W_ij = exp(-dist(x_i, x_j)^2 / t) * p(x_j) * w_j,

where dist is geodesic distance in intrinsic mode and ambient chord distance
of an embedding in extrinsic mode.  Rows sum to zero by construction,
off-diagonal entries are nonpositive, and L annihilates constants exactly.

Dense assembly is capped at 64^2 nodes.  Above that, and for reference values
at arbitrary chart points, `continuous_value` evaluates single rows of the
operator matrix-free.  `evaluate_discrete` is the Monte-Carlo counterpart on
a sampled point cloud, normalized by 1/(n t^2).

Operators serialize to a small binary format (header + nodes + row-major
float64 entries, little-endian throughout); see save_operator for the layout.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .discretization import Density, QuadratureRule, SampleSet, density_values
from .errors import InvalidParameterError, MalformedOperatorError, NodeMismatchError
from .geometry import (
    ChartPoint,
    CliffordTorus,
    DonutTorus,
    Embedding,
    Metric,
    SphereMetric,
    TorusMetric,
    UnitSphere,
    ambient_sq_dist,
    metric_sq_geodesic,
)

DENSE_NODE_CAP = 64 * 64


@dataclass(frozen=True)
class IntrinsicKernel:
    """Gaussian kernel of geodesic distance for the given metric."""

    metric: Metric


@dataclass(frozen=True)
class ExtrinsicKernel:
    """Gaussian kernel of ambient chord distance for the given embedding."""

    embedding: Embedding


KernelMode = Union[IntrinsicKernel, ExtrinsicKernel]


def kernel_sq_dist(mode: KernelMode, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    if isinstance(mode, IntrinsicKernel):
        return metric_sq_geodesic(mode.metric, p, q)
    return ambient_sq_dist(mode.embedding, p, q)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator with the grid metadata needed to invert it later."""

    entries: np.ndarray
    nodes: np.ndarray
    t: float
    mode: KernelMode
    measure_metric: Metric
    grid_shape: tuple[int, int]
    spacing: tuple[float, float]
    dim: int = 2
    warning: Optional[str] = None

    @property
    def n(self) -> int:
        return self.nodes.shape[0]


def assemble_continuous(
    mode: KernelMode,
    density: Density,
    rule: QuadratureRule,
    t: float,
) -> OperatorMatrix:
    """Assemble the dense quadrature approximation of the kernel operator.

    The density must be normalized against `rule`.  Bandwidth t must be
    positive.  Refuses grids beyond 64^2 nodes; use continuous_value there.
    """
    if t <= 0.0:
        raise InvalidParameterError(f"bandwidth must be positive, got {t}")
    if rule.n > DENSE_NODE_CAP:
        raise InvalidParameterError(
            f"dense assembly is capped at {DENSE_NODE_CAP} nodes (got {rule.n}); "
            "matrix-free evaluation handles larger grids"
        )
    pw = density_values(density, rule.nodes) * rule.weights
    d2 = kernel_sq_dist(mode, rule.nodes, rule.nodes)
    w = np.exp(d2 / -t)
    w *= pw[None, :]
    deg = w.sum(axis=1)
    c = t ** -2.0
    diag_w = np.diagonal(w).copy()
    entries = -c * w
    np.fill_diagonal(entries, c * (deg - diag_w))

    offdiag_max = np.where(np.eye(rule.n, dtype=bool), 0.0, w).max(axis=1)
    warning = None
    dead = int((offdiag_max == 0.0).sum())
    if dead:
        warning = (
            f"{dead} rows have fully underflowed off-diagonal kernels; "
            f"bandwidth {t} is too small for the grid spacing"
        )
    return OperatorMatrix(
        entries=entries,
        nodes=rule.nodes,
        t=t,
        mode=mode,
        measure_metric=rule.metric,
        grid_shape=rule.grid_shape,
        spacing=rule.spacing,
        warning=warning,
    )


def apply_operator(op: OperatorMatrix, f: np.ndarray) -> np.ndarray:
    """Matrix-vector product L f for node values f."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (op.n,):
        raise InvalidParameterError(
            f"function values must have shape ({op.n},), got {f.shape}"
        )
    return op.entries @ f


def operator_distance(a: OperatorMatrix, b: OperatorMatrix) -> float:
    """Max-abs entrywise discrepancy between two operators on the same grid."""
    if a.t != b.t or not np.array_equal(a.nodes, b.nodes):
        raise NodeMismatchError("operators do not share nodes and bandwidth")
    return float(np.max(np.abs(a.entries - b.entries)))


def continuous_value(
    mode: KernelMode,
    density: Density,
    rule: QuadratureRule,
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    x: ChartPoint,
) -> float:
    """One matrix-free row: the quadrature operator applied to f at point x.

    x need not be a grid node.  f maps (n, 2) chart coordinates to values.
    """
    if t <= 0.0:
        raise InvalidParameterError(f"bandwidth must be positive, got {t}")
    p = x.as_array()[None, :]
    d2 = kernel_sq_dist(mode, p, rule.nodes)[0]
    k = np.exp(d2 / -t)
    pw = density_values(density, rule.nodes) * rule.weights
    fx = float(np.asarray(f(p))[0])
    return float(t ** -2.0 * np.dot(k * pw, fx - np.asarray(f(rule.nodes))))


# ---------------------------------------------------------------------------
# Monte-Carlo (point cloud) operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Empirical operator over an i.i.d. sample, bandwidth t, kernel mode."""

    samples: SampleSet
    t: float
    mode: KernelMode

    def __post_init__(self):
        if self.t <= 0.0:
            raise InvalidParameterError(f"bandwidth must be positive, got {self.t}")


def evaluate_discrete(
    dop: DiscreteOperator,
    f: Callable[[np.ndarray], np.ndarray],
    x: ChartPoint,
) -> float:
    """(1/(n t^2)) sum_j exp(-dist(x, X_j)^2/t) (f(x) - f(X_j)).

    Sample points coinciding with x contribute zero terms.
    """
    pts = dop.samples.points
    p = x.as_array()[None, :]
    d2 = kernel_sq_dist(dop.mode, p, pts)[0]
    fx = float(np.asarray(f(p))[0])
    terms = np.exp(d2 / -dop.t) * (fx - np.asarray(f(pts)))
    return float(terms.sum() / (dop.samples.n * dop.t**2))


def evaluate_discrete_with_se(
    dop: DiscreteOperator,
    f: Callable[[np.ndarray], np.ndarray],
    x: ChartPoint,
) -> tuple[float, float]:
    """Value and its standard error from the empirical term variance."""
    pts = dop.samples.points
    p = x.as_array()[None, :]
    d2 = kernel_sq_dist(dop.mode, p, pts)[0]
    fx = float(np.asarray(f(p))[0])
    terms = np.exp(d2 / -dop.t) * (fx - np.asarray(f(pts))) / dop.t**2
    n = dop.samples.n
    se = float(terms.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return float(terms.mean()), se


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"LLOP"
_VERSION = 1

# header: magic, version, mode tag, chart tag, n, nu, nv  |  t, du, dv
_HEAD = struct.Struct("<4sHBBIII")
_BAND = struct.Struct("<ddd")
# parameter block: one kind byte plus three float parameters
_PARAM = struct.Struct("<Bddd")

_KIND_TORUS_METRIC = 0
_KIND_SPHERE_METRIC = 1
_KIND_CLIFFORD = 10
_KIND_DONUT = 11
_KIND_UNIT_SPHERE = 12


def _pack_metric(metric: Metric) -> bytes:
    if isinstance(metric, TorusMetric):
        return _PARAM.pack(_KIND_TORUS_METRIC, metric.E, metric.F, metric.G)
    return _PARAM.pack(_KIND_SPHERE_METRIC, metric.radius, 0.0, 0.0)


def _unpack_metric(blob: bytes) -> Metric:
    kind, p1, p2, p3 = _PARAM.unpack(blob)
    if kind == _KIND_TORUS_METRIC:
        return TorusMetric(p1, p2, p3)
    if kind == _KIND_SPHERE_METRIC:
        return SphereMetric(p1)
    raise MalformedOperatorError(f"unknown metric kind {kind} in operator file")


def _pack_mode(mode: KernelMode) -> bytes:
    if isinstance(mode, IntrinsicKernel):
        return _pack_metric(mode.metric)
    emb = mode.embedding
    if isinstance(emb, CliffordTorus):
        return _PARAM.pack(_KIND_CLIFFORD, 0.0, 0.0, 0.0)
    if isinstance(emb, DonutTorus):
        return _PARAM.pack(_KIND_DONUT, emb.major, emb.minor, 0.0)
    return _PARAM.pack(_KIND_UNIT_SPHERE, 0.0, 0.0, 0.0)


def _unpack_mode(mode_tag: int, blob: bytes) -> KernelMode:
    kind, p1, p2, _ = _PARAM.unpack(blob)
    if mode_tag == 0:
        return IntrinsicKernel(_unpack_metric(blob))
    if kind == _KIND_CLIFFORD:
        return ExtrinsicKernel(CliffordTorus())
    if kind == _KIND_DONUT:
        return ExtrinsicKernel(DonutTorus(p1, p2))
    if kind == _KIND_UNIT_SPHERE:
        return ExtrinsicKernel(UnitSphere())
    raise MalformedOperatorError(f"unknown embedding kind {kind} in operator file")


def save_operator(op: OperatorMatrix, path) -> None:
    """Write the binary operator format.

    Layout, little-endian: magic 'LLOP', u16 version, u8 mode tag
    (0 intrinsic / 1 extrinsic), u8 chart tag (0 torus / 1 sphere), u32 node
    count, u32 x 2 grid shape; f64 bandwidth and the two chart spacings; one
    kernel parameter block and one measure-metric block (u8 kind + 3 f64);
    then the nodes as n x 2 f64 and the entries as n x n row-major f64.
    """
    chart = 0 if isinstance(op.measure_metric, TorusMetric) else 1
    mode_tag = 0 if isinstance(op.mode, IntrinsicKernel) else 1
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(_MAGIC, _VERSION, mode_tag, chart,
                            op.n, op.grid_shape[0], op.grid_shape[1]))
        fh.write(_BAND.pack(op.t, op.spacing[0], op.spacing[1]))
        fh.write(_pack_mode(op.mode))
        fh.write(_pack_metric(op.measure_metric))
        fh.write(np.ascontiguousarray(op.nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(op.entries, dtype="<f8").tobytes())


def load_operator(path) -> OperatorMatrix:
    """Read an operator written by save_operator."""
    with open(path, "rb") as fh:
        head = fh.read(_HEAD.size)
        if len(head) < _HEAD.size:
            raise MalformedOperatorError("operator file truncated in header")
        magic, version, mode_tag, chart, n, nu, nv = _HEAD.unpack(head)
        if magic != _MAGIC:
            raise MalformedOperatorError("not an operator file (bad magic)")
        if version != _VERSION:
            raise MalformedOperatorError(f"unsupported operator format version {version}")
        rest = fh.read(_BAND.size + 2 * _PARAM.size)
        if len(rest) < _BAND.size + 2 * _PARAM.size:
            raise MalformedOperatorError("operator file truncated in header")
        t, du, dv = _BAND.unpack(rest[: _BAND.size])
        mode = _unpack_mode(mode_tag, rest[_BAND.size:_BAND.size + _PARAM.size])
        measure = _unpack_metric(rest[_BAND.size + _PARAM.size:])
        node_blob = fh.read(n * 2 * 8)
        entry_blob = fh.read(n * n * 8)
        if len(node_blob) < n * 2 * 8 or len(entry_blob) < n * n * 8:
            raise MalformedOperatorError("operator file truncated in payload")
        nodes = np.frombuffer(node_blob, dtype="<f8").reshape(n, 2).copy()
        entries = np.frombuffer(entry_blob, dtype="<f8").reshape(n, n).copy()
    if (0 if isinstance(measure, TorusMetric) else 1) != chart:
        raise MalformedOperatorError("chart tag contradicts the measure metric")
    return OperatorMatrix(
        entries=entries,
        nodes=nodes,
        t=t,
        mode=mode,
        measure_metric=measure,
        grid_shape=(nu, nv),
        spacing=(du, dv),
    )


def operator_to_csv(op: OperatorMatrix, path) -> None:
    """Plain-text export for small grids: one matrix row per line."""
    mode_tag = "intrinsic" if isinstance(op.mode, IntrinsicKernel) else "extrinsic"
    header = f"n={op.n} t={op.t!r} mode={mode_tag}"
    np.savetxt(path, op.entries, fmt="%.17g", delimiter=",", header=header)


_MX_MAGIC = b"LLMX"
_MX_HEAD = struct.Struct("<4sHII")


def save_matrix(m: np.ndarray, path) -> None:
    """Bare binary matrix: magic 'LLMX', u16 version, u32 rows, u32 cols,
    then row-major little-endian float64."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(_MX_HEAD.pack(_MX_MAGIC, _VERSION, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_MX_HEAD.size)
        if len(head) < _MX_HEAD.size:
            raise MalformedOperatorError("matrix file truncated in header")
        magic, version, rows, cols = _MX_HEAD.unpack(head)
        if magic != _MX_MAGIC or version != _VERSION:
            raise MalformedOperatorError("not a laplab matrix file")
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
        if data.size != rows * cols:
            raise MalformedOperatorError("matrix file truncated in payload")
    return data.reshape(rows, cols).copy()
