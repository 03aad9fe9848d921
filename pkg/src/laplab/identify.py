"""Recovery of kernel, masses, distances, metric, and density from an operator.

The assembled operator has the form L = c (diag(W 1) - W) with
W_ij = K(x_i, x_j) m_j, where K is a symmetric Gaussian kernel of squared
distance and m_j = p(x_j) w_j is the mass carried by node j.  Off-diagonal
entries therefore hand back W directly; the diagonal of W is not observable
and is treated as unknown throughout.

Kernel symmetry gives the ratio identity W_ij / W_ji = m_j / m_i, which
propagates masses along any spanning tree of the thresholded kernel graph up
to one global factor, fixed by normalizing to total mass one.  Dividing the
masses out of W gives kernel values, a logarithm turns them into squared
distances, and a mixed second difference of squared distance across grid
neighbors yields the metric tensor:

    g_jk(x) = -1/2 * d^2/ds dt [ dist^2(x + s e_j, x + t e_k) ] at s = t = 0,

realized as the four-point cross stencil on the grid.  The density finally
falls out of the mass per chart cell divided by the recovered volume form.

For kernels built from chord distance of an embedding, the same stencil
applied to recovered squared chord distance converges to the induced metric
of the embedding (chords osculate geodesics to second order).  The chord bias
is O(h^2) with a visible constant at practical grid sizes, so that path uses
one Richardson step (stencils at spacing h and 2h) to push it to O(h^4).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretization import QuadratureRule
from .errors import (
    ConditioningError,
    InconsistencyError,
    InsufficientMaskError,
    MalformedOperatorError,
    UnrecoverableMassError,
)
from .geometry import TorusMetric
from .operators import ExtrinsicKernel, OperatorMatrix

# Off-diagonal kernel weights at or below this threshold are treated as
# absent edges: below it, log-inversion noise swamps the signal.
EDGE_THRESHOLD = 1e-12

# Recovered kernel values may exceed 1 by at most this much before the
# operator is declared inconsistent (beyond rounding of a true kernel).
KERNEL_SLACK = 1e-8

_ROW_SUM_TOL = 1e-10
_NEGATIVE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class WeightedKernel:
    """Off-diagonal kernel weights W_ij = K_ij m_j with an edge mask.

    w has NaN on the diagonal (unknown by construction); mask is True where
    an entry is usable, always False on the diagonal.
    """

    w: np.ndarray
    mask: np.ndarray
    t: float

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def sym_mask(self) -> np.ndarray:
        return self.mask & self.mask.T


@dataclass(frozen=True, eq=False)
class MetricField:
    """Recovered 2x2 tensors at a subset of grid nodes."""

    indices: np.ndarray
    tensors: np.ndarray

    def tensor_at(self, node_index: int) -> np.ndarray:
        pos = np.flatnonzero(self.indices == node_index)
        if pos.size == 0:
            raise InsufficientMaskError(
                f"no recovered tensor at node {node_index}"
            )
        return self.tensors[pos[0]]


@dataclass(eq=False)
class RecoveryReport:
    """Everything the inverse pipeline can say about one operator."""

    mass: np.ndarray
    kernel: np.ndarray
    distance: np.ndarray
    metric_field: MetricField
    density: np.ndarray
    t: float
    grid_shape: tuple[int, int]
    spacing: tuple[float, float]
    errors: dict = field(default_factory=dict)


def extract_weighted_kernel(op: OperatorMatrix) -> WeightedKernel:
    """Read W off the off-diagonal entries of a well-formed operator.

    Checks: row sums vanish to 1e-10, off-diagonal entries have the right
    sign (tiny negatives from rounding are clipped), no row is entirely
    disconnected.
    """
    entries = op.entries
    n = entries.shape[0]
    row_sums = entries @ np.ones(n)
    worst = float(np.max(np.abs(row_sums)))
    if worst > _ROW_SUM_TOL:
        raise MalformedOperatorError(
            f"row sums reach {worst:.3e}; operator does not annihilate constants"
        )
    w = entries * (-op.t**2)
    np.fill_diagonal(w, np.nan)
    off = ~np.eye(n, dtype=bool)
    low = float(np.min(w[off]))
    if low < -_NEGATIVE_TOL:
        raise MalformedOperatorError(
            f"positive off-diagonal operator entry (kernel weight {low:.3e} < 0)"
        )
    w = np.where(off & (w < 0.0), 0.0, w)
    dead = off & (w > 0.0)
    if not dead.any(axis=1).all():
        raise MalformedOperatorError("a node has an all-zero kernel row")
    mask = off & (w > EDGE_THRESHOLD)
    return WeightedKernel(w=w, mask=mask, t=op.t)


def recover_mass(wk: WeightedKernel, refine: bool = False) -> np.ndarray:
    """Node masses m_j = p(x_j) w_j up to normalization sum(m) = 1.

    Propagates log-mass differences log(W_ij / W_ji) over a breadth-first
    spanning tree of the symmetric edge mask.  With refine=True the tree
    solution is replaced by the least-squares fit over all masked edges
    (normal equations on the edge graph; O(n^3) dense solve).
    """
    n = wk.n
    sym = wk.sym_mask()
    logw = np.where(sym, np.log(np.where(sym, wk.w, 1.0)), 0.0)

    logm = np.full(n, np.nan)
    logm[0] = 0.0
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        nbrs = np.flatnonzero(sym[i] & ~seen)
        if nbrs.size == 0:
            continue
        logm[nbrs] = logm[i] + (logw[i, nbrs] - logw[nbrs, i])
        seen[nbrs] = True
        queue.extend(nbrs.tolist())
    if not seen.all():
        missing = int((~seen).sum())
        raise UnrecoverableMassError(
            f"kernel graph is disconnected; {missing} nodes unreachable from node 0"
        )

    if refine:
        ratio = logw - logw.T
        ratio[~sym] = 0.0
        deg = sym.sum(axis=1).astype(np.float64)
        lap = np.diag(deg) - sym.astype(np.float64)
        rhs = ratio.sum(axis=0)
        # gauge: the all-ones direction is null, pin it with a rank-one shift
        lap += 1.0 / n
        logm = np.linalg.solve(lap, rhs)

    m = np.exp(logm - logm.max())
    return m / m.sum()


def recover_kernel_distance(
    wk: WeightedKernel, mass: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Kernel values and pairwise distances implied by W and the masses.

    K_ij = W_ij / m_j on masked entries, clamped into (0, 1], diagonal set
    to 1.  Distances d_ij = sqrt(-t log K_ij) where both directions are
    masked, symmetrized by averaging; NaN elsewhere, zero diagonal.
    Masked kernel values above 1 + 1e-8 mean the matrix was not a kernel
    operator and raise an inconsistency error.
    """
    khat = wk.w / mass[None, :]
    masked_vals = khat[wk.mask]
    high = float(masked_vals.max())
    if high > 1.0 + KERNEL_SLACK:
        raise InconsistencyError(
            f"recovered kernel value {high} exceeds 1; not a Gaussian kernel operator"
        )
    khat = np.where(wk.mask, np.minimum(khat, 1.0), khat)
    np.fill_diagonal(khat, 1.0)

    sym = wk.sym_mask()
    sigma = np.where(sym, -wk.t * np.log(np.where(sym, khat, 1.0)), np.nan)
    dhat = np.sqrt(np.maximum(sigma, 0.0))
    dhat = 0.5 * (dhat + dhat.T)
    np.fill_diagonal(dhat, 0.0)
    return khat, dhat


# ---------------------------------------------------------------------------
# metric stencil
# ---------------------------------------------------------------------------


def _neighbor_indices(grid_shape, periodic_u: bool, steps: int):
    """Flat node indices of the four axis neighbors at +-steps, with validity."""
    nu, nv = grid_shape
    a, b = np.divmod(np.arange(nu * nv), nv)
    bp = (b + steps) % nv
    bm = (b - steps) % nv
    if periodic_u:
        ap = (a + steps) % nu
        am = (a - steps) % nu
        ok = np.ones(nu * nv, dtype=bool)
    else:
        ap = a + steps
        am = a - steps
        ok = (ap < nu) & (am >= 0)
        ap = np.clip(ap, 0, nu - 1)
        am = np.clip(am, 0, nu - 1)
    up = ap * nv + b
    um = am * nv + b
    vp = a * nv + bp
    vm = a * nv + bm
    return up, um, vp, vm, ok


def _cross_stencil(sigma, up, um, vp, vm, hu, hv):
    """-1/2 * mixed second difference of sigma for all nodes at once."""
    guu = -0.5 * (sigma[up, up] - sigma[up, um] - sigma[um, up] + sigma[um, um]) / (4 * hu * hu)
    gvv = -0.5 * (sigma[vp, vp] - sigma[vp, vm] - sigma[vm, vp] + sigma[vm, vm]) / (4 * hv * hv)
    guv = -0.5 * (sigma[up, vp] - sigma[up, vm] - sigma[um, vp] + sigma[um, vm]) / (4 * hu * hv)
    out = np.empty((sigma.shape[0], 2, 2))
    out[:, 0, 0] = guu
    out[:, 1, 1] = gvv
    out[:, 0, 1] = guv
    out[:, 1, 0] = guv
    return out


def _stencil_tensors(dist, grid_shape, spacing, periodic_u, steps=1):
    sigma = dist * dist
    hu, hv = spacing[0] * steps, spacing[1] * steps
    up, um, vp, vm, ok = _neighbor_indices(grid_shape, periodic_u, steps)
    tensors = _cross_stencil(sigma, up, um, vp, vm, hu, hv)
    valid = ok & np.isfinite(tensors).all(axis=(1, 2))
    return tensors, valid


def metric_field_from_distance(
    dist: np.ndarray,
    grid_shape: tuple[int, int],
    spacing: tuple[float, float],
    periodic_u: bool = True,
    richardson: bool = False,
) -> MetricField:
    """Run the cross stencil at every node where the distances exist.

    richardson=True combines stencils at spacing h and 2h as (4 g_h - g_2h)/3,
    canceling the O(h^2) term; used when dist is chord distance of an
    embedding rather than geodesic distance.
    """
    tensors, valid = _stencil_tensors(dist, grid_shape, spacing, periodic_u, steps=1)
    if richardson:
        wide, valid2 = _stencil_tensors(dist, grid_shape, spacing, periodic_u, steps=2)
        tensors = (4.0 * tensors - wide) / 3.0
        valid &= valid2
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        raise InsufficientMaskError("no node has a full stencil inside the edge mask")
    picked = tensors[idx]
    eigs = np.linalg.eigvalsh(picked)
    bad = np.flatnonzero(eigs[:, 0] <= 0.0)
    if bad.size:
        raise ConditioningError(
            f"recovered tensor not positive definite at node {int(idx[bad[0]])}",
            eigenvalues=eigs[bad[0]],
        )
    return MetricField(indices=idx, tensors=picked)


def recover_metric(dist: np.ndarray, rule: QuadratureRule, i: int) -> np.ndarray:
    """Metric tensor at grid node i from a pairwise distance matrix."""
    periodic_u = isinstance(rule.metric, TorusMetric)
    tensors, valid = _stencil_tensors(
        dist, rule.grid_shape, rule.spacing, periodic_u, steps=1
    )
    if not (0 <= i < tensors.shape[0]):
        raise InsufficientMaskError(f"node index {i} outside the grid")
    if not valid[i]:
        raise InsufficientMaskError(
            f"stencil at node {i} needs distance entries outside the edge mask"
        )
    g = tensors[i]
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] <= 0.0:
        raise ConditioningError(
            f"recovered tensor at node {i} is not positive definite",
            eigenvalues=eigs,
        )
    return g


def recover_density(
    mass: np.ndarray, metric_field: MetricField, cell_area: float
) -> np.ndarray:
    """Density values at the field's nodes: p_i = m_i / (sqrt(det g_i) dA)."""
    det = np.linalg.det(metric_field.tensors)
    if np.any(det <= 0.0):
        raise ConditioningError("recovered volume form is not positive")
    return mass[metric_field.indices] / (np.sqrt(det) * cell_area)


def recover_induced_metric_from_extrinsic(
    op: OperatorMatrix, rule: Optional[QuadratureRule] = None
) -> MetricField:
    """Induced metric of the embedding behind an extrinsic operator.

    Composes kernel extraction, mass recovery, and distance recovery, then
    stencils squared chord distance with a Richardson step.  The measure
    metric of the operator plays no role beyond the masses it contributed,
    which divide out: the result estimates the embedding's first fundamental
    form, the only metric an extrinsic operator determines.
    """
    wk = extract_weighted_kernel(op)
    mass = recover_mass(wk)
    _, dhat = recover_kernel_distance(wk, mass)
    grid_shape = rule.grid_shape if rule is not None else op.grid_shape
    spacing = rule.spacing if rule is not None else op.spacing
    periodic_u = isinstance(op.measure_metric, TorusMetric)
    return metric_field_from_distance(
        dhat, grid_shape, spacing, periodic_u=periodic_u, richardson=True
    )


def report_payload(
    report: RecoveryReport, externalize_dir=None, stem: str = "recovery"
) -> dict:
    """JSON-ready dict for a recovery report.

    Small vectors (mass, density, metric tensors) are embedded.  The kernel
    and distance matrices are written as binary matrix files when
    externalize_dir is given, embedded for grids up to 256 nodes otherwise,
    and dropped (with a note) beyond that.  NaN entries (pairs outside the
    edge mask) become nulls when embedded.
    """
    from . import __version__
    from .operators import save_matrix

    payload: dict = {
        "version": __version__,
        "t": report.t,
        "grid_shape": list(report.grid_shape),
        "spacing": list(report.spacing),
        "n": int(report.mass.shape[0]),
        "mass": report.mass.tolist(),
        "metric": {
            "indices": report.metric_field.indices.tolist(),
            "tensors": report.metric_field.tensors.tolist(),
        },
        "density": {
            "indices": report.metric_field.indices.tolist(),
            "values": report.density.tolist(),
        },
        "errors": dict(sorted(report.errors.items())),
    }
    if externalize_dir is not None:
        import os

        os.makedirs(externalize_dir, exist_ok=True)
        files = {}
        for name, mat in (("kernel", report.kernel), ("distance", report.distance)):
            fname = f"{stem}_{name}.llmx"
            save_matrix(mat, os.path.join(externalize_dir, fname))
            files[name] = fname
        payload["matrix_files"] = files
    elif report.mass.shape[0] <= 256:
        def _clean(mat):
            return [
                [None if not np.isfinite(x) else x for x in row]
                for row in mat.tolist()
            ]

        payload["kernel"] = _clean(report.kernel)
        payload["distance"] = _clean(report.distance)
    else:
        payload["matrix_note"] = (
            "kernel and distance matrices omitted; pass an externalize "
            "directory to keep them"
        )
    return payload


def run_recovery(op: OperatorMatrix, refine: bool = False) -> RecoveryReport:
    """Full inverse pipeline on one operator."""
    wk = extract_weighted_kernel(op)
    mass = recover_mass(wk, refine=refine)
    khat, dhat = recover_kernel_distance(wk, mass)
    periodic_u = isinstance(op.measure_metric, TorusMetric)
    richardson = isinstance(op.mode, ExtrinsicKernel)
    metric_field = metric_field_from_distance(
        dhat, op.grid_shape, op.spacing, periodic_u=periodic_u, richardson=richardson
    )
    cell = op.spacing[0] * op.spacing[1]
    density = recover_density(mass, metric_field, cell)
    return RecoveryReport(
        mass=mass,
        kernel=khat,
        distance=dhat,
        metric_field=metric_field,
        density=density,
        t=op.t,
        grid_shape=op.grid_shape,
        spacing=op.spacing,
    )
