"""Local rigid alignment of 1-ring neighbourhoods (the dividing step)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ParameterError

log = logging.getLogger(__name__)

# relative singular-value threshold below which a point set counts as collinear
_COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool = False

    def apply(self, points) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


def _canonical_svd(h):
    """Batched SVD of 3x3 matrices with a fixed sign convention.

    Each left singular vector is flipped (together with its right partner) so
    that its largest-magnitude component is positive. The product ``U S V^T``
    is unchanged by this.
    """
    u, s, vt = np.linalg.svd(h)
    pivot = np.argmax(np.abs(u), axis=1)                      # (B, 3) row index per column
    signs = np.sign(np.take_along_axis(u, pivot[:, None, :], axis=1))[:, 0, :]
    signs[signs == 0] = 1.0
    u = u * signs[:, None, :]
    vt = vt * signs[:, :, None]
    return u, s, vt


def kabsch_batch(src, dst, mask=None):
    """Least-squares rotations and translations for a batch of point sets.

    Parameters
    ----------
    src, dst : (B, K, 3) arrays
        Corresponding source and destination points.
    mask : (B, K) bool array, optional
        Valid entries; padded slots must be ``False``.

    Returns
    -------
    rotations : (B, 3, 3)
    translations : (B, 3)
    degenerate : (B,) bool
        Point sets with fewer than 3 valid points or (near) collinear
        configurations, for which the rotation about the line is arbitrary.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if mask is None:
        mask = np.ones(src.shape[:2], dtype=bool)
    w = mask.astype(np.float64)
    cnt = w.sum(axis=1)
    safe = np.maximum(cnt, 1.0)[:, None]
    cs = (src * w[..., None]).sum(axis=1) / safe
    cd = (dst * w[..., None]).sum(axis=1) / safe
    sc = (src - cs[:, None, :]) * w[..., None]
    dc = (dst - cd[:, None, :]) * w[..., None]
    h = np.einsum("bki,bkj->bij", sc, dc)

    u, s, vt = _canonical_svd(h)
    v = np.swapaxes(vt, 1, 2)
    d = np.sign(np.linalg.det(v @ np.swapaxes(u, 1, 2)))
    d[d == 0] = 1.0
    v[:, :, 2] *= d[:, None]
    rot = v @ np.swapaxes(u, 1, 2)
    trans = cd - np.einsum("bij,bj->bi", rot, cs)

    scale = np.maximum(s[:, 0], np.finfo(float).tiny)
    degenerate = (cnt < 3) | (s[:, 1] <= _COLLINEAR_TOL * scale)
    return rot, trans, degenerate


def fit_rigid(source_points, dest_points) -> RigidTransform:
    """Rotation and translation minimising ``sum |R s_j + T - d_j|^2`` over SO(3) x R^3."""
    s = np.asarray(source_points, dtype=np.float64)
    d = np.asarray(dest_points, dtype=np.float64)
    if s.shape != d.shape or s.ndim != 2 or s.shape[1] != 3:
        raise ParameterError("source and destination must be matching (k, 3) arrays")
    if len(s) < 3:
        raise ParameterError(f"rigid fit is underdetermined with {len(s)} points (need >= 3)")
    rot, trans, deg = kabsch_batch(s[None], d[None])
    return RigidTransform(rot[0], trans[0], bool(deg[0]))


def rigid_residual(transform: RigidTransform, source_points, dest_points) -> float:
    r = transform.apply(source_points) - np.asarray(dest_points)
    return float((r * r).sum())


def padded_neighbors(graph: sparse.csr_matrix, vertices) -> np.ndarray:
    """Neighbour lists of ``vertices`` as a ``(len(vertices), K)`` array padded with -1."""
    sub = graph[np.asarray(vertices)]
    counts = np.diff(sub.indptr)
    k = int(counts.max()) if len(counts) else 0
    out = np.full((len(counts), max(k, 1)), -1, dtype=np.int64)
    rows = np.repeat(np.arange(len(counts)), counts)
    cols = np.arange(len(sub.indices)) - np.repeat(sub.indptr[:-1], counts)
    out[rows, cols] = sub.indices
    return out


@dataclass(frozen=True)
class PreliminaryOffsets:
    """Per-vertex offsets ``o_i = R_i v_i^s + T_i - v_i^t`` and predictions ``p_i``.

    Arrays have one row per mesh vertex; rows outside ``active`` are zero
    (offsets) or equal to the current target position (predicted).
    """

    active: np.ndarray
    offsets: np.ndarray
    predicted: np.ndarray
    degenerate: np.ndarray


def dividing_step(pair, active_vertices, neighbor_graph, target_vertices=None) -> PreliminaryOffsets:
    """Fit each active vertex's template neighbourhood onto the target and record offsets.

    ``target_vertices`` overrides ``pair.target.vertices`` so the registration
    loop can iterate without rebuilding meshes. Vertices with fewer than three
    neighbours (or collinear neighbourhoods) get zero offset and are reported in
    ``degenerate``.
    """
    src_v = pair.template.vertices
    tgt_v = pair.target.vertices if target_vertices is None else target_vertices
    active = np.asarray(active_vertices, dtype=np.int64)
    offsets = np.zeros_like(tgt_v)
    predicted = np.array(tgt_v, copy=True)
    if active.size == 0:
        return PreliminaryOffsets(active, offsets, predicted, active)

    nbr = padded_neighbors(neighbor_graph, active)
    mask = nbr >= 0
    idx = np.where(mask, nbr, 0)
    rot, trans, deg = kabsch_batch(src_v[idx], tgt_v[idx], mask)

    p = np.einsum("bij,bj->bi", rot, src_v[active]) + trans
    o = p - tgt_v[active]
    o[deg] = 0.0
    p[deg] = tgt_v[active][deg]
    offsets[active] = o
    predicted[active] = p
    bad = active[deg]
    if bad.size:
        log.debug("%d vertices with degenerate neighbourhoods get zero offset", bad.size)
    return PreliminaryOffsets(active, offsets, predicted, bad)
