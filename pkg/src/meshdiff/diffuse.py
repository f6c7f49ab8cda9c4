"""Global smoothing of preliminary offsets (the diffusing step).

The offsets ``O`` solve ``B O = C`` with ``B = I + A``, where row ``i`` of
``A`` holds ``lambda_i * N_i`` on the diagonal and ``-lambda_i`` at each
neighbour. With fixed vertices their columns are removed and the remaining
over-determined system is solved in the least-squares sense through the normal
equations ``B^T B O = B^T C``. The normal matrix depends only on the template,
the neighbour graph and the weights, so it is reordered and factorized once and
reused for every iteration.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from .errors import ContractError, FactorizationError, ParameterError
from .mesh import Mesh, VertexClass, VertexClassification, mean_edge_length

_LEADING_MINOR = re.compile(r"(\d+)(?:-th)? leading minor|order\s+(\d+)")


class BandedCholesky:
    """Sparse SPD factorization: reverse Cuthill-McKee ordering + LAPACK band Cholesky."""

    def __init__(self, matrix: sparse.spmatrix):
        m = sparse.csr_matrix(matrix)
        n = m.shape[0]
        self.n = n
        if n == 0:
            self.perm = np.zeros(0, dtype=np.int64)
            self.factor = np.zeros((1, 0))
            self.bandwidth = 0
            return
        perm = np.asarray(reverse_cuthill_mckee(m, symmetric_mode=True), dtype=np.int64)
        mp = m[perm][:, perm].tocoo()
        low = mp.row >= mp.col
        rows, cols, vals = mp.row[low], mp.col[low], mp.data[low]
        bw = int((rows - cols).max()) if rows.size else 0
        ab = np.zeros((bw + 1, n))
        np.add.at(ab, (rows - cols, cols), vals)
        try:
            factor = linalg.cholesky_banded(ab, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            hit = _LEADING_MINOR.search(str(exc))
            pivot = int(perm[int(hit.group(1) or hit.group(2)) - 1]) if hit else None
            raise FactorizationError(f"normal matrix is not positive definite (pivot {pivot})",
                                     pivot=pivot) from exc
        self.perm = perm
        self.factor = factor
        self.bandwidth = bw

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.zeros_like(rhs)
        x = linalg.cho_solve_banded((self.factor, True), rhs[self.perm], check_finite=False)
        out = np.empty_like(x)
        out[self.perm] = x
        return out


@dataclass(frozen=True)
class DiffusionSystem:
    """Prefactorized diffusion system over one vertex subset.

    ``vertices`` are mesh indices of the system rows (local order), ``free``
    and ``fixed`` are local positions into ``vertices``. ``coefficient`` is the
    full square ``B`` (rows and columns for every system vertex).
    """

    vertices: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    lam: np.ndarray
    coefficient: sparse.csr_matrix
    reduced: sparse.csr_matrix       # B restricted to free columns
    normal: sparse.csr_matrix | None  # B_f^T B_f (Case 2 only)
    _solver: object

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def free_vertices(self) -> np.ndarray:
        return self.vertices[self.free]

    @property
    def fixed_vertices(self) -> np.ndarray:
        return self.vertices[self.fixed]

    @property
    def has_fixed(self) -> bool:
        return len(self.fixed) > 0


def assemble_coefficient(graph: sparse.csr_matrix, lam: np.ndarray) -> sparse.csr_matrix:
    """``B = I + A`` for a symmetric binary neighbour graph over the system vertices."""
    g = sparse.csr_matrix(graph, dtype=np.float64)
    g.data[:] = 1.0
    deg = np.asarray(g.sum(axis=1)).ravel()
    lam = np.asarray(lam, dtype=np.float64)
    b = sparse.diags(1.0 + lam * deg) - sparse.diags(lam) @ g
    b = sparse.csr_matrix(b)
    b.sort_indices()
    return b


def build_system(neighbor_graph, classification: VertexClassification, vertices=None) -> DiffusionSystem:
    """Assemble ``B`` over ``vertices`` (default: all interested) and factorize once.

    Non-interested vertices never enter the system. Fixed vertices keep their
    rows (they push back on their neighbours) but lose their columns.
    """
    labels = classification.labels
    if vertices is None:
        vertices = np.flatnonzero(labels != VertexClass.NON_INTERESTED)
    vertices = np.asarray(vertices, dtype=np.int64)
    lam = np.asarray(classification.lam, dtype=np.float64)[vertices]
    if np.any(~(lam > 0)):
        raise ParameterError("diffusion weights must be strictly positive")

    graph = sparse.csr_matrix(neighbor_graph)[vertices][:, vertices]
    b = assemble_coefficient(graph, lam)
    local_labels = labels[vertices]
    fixed = np.flatnonzero(local_labels == VertexClass.FIXED)
    free = np.flatnonzero(local_labels != VertexClass.FIXED)

    if fixed.size == 0:
        solver = splu(sparse.csc_matrix(b))
        return DiffusionSystem(vertices, free, fixed, lam, b, b, None, solver)

    reduced = sparse.csr_matrix(b[:, free])
    normal = sparse.csr_matrix(reduced.T @ reduced)
    normal.sort_indices()
    solver = BandedCholesky(normal)
    return DiffusionSystem(vertices, free, fixed, lam, b, reduced, normal, solver)


def _rhs(system: DiffusionSystem, offsets) -> np.ndarray:
    """Gather ``C = p - v`` rows for the system vertices."""
    arr = getattr(offsets, "offsets", offsets)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ContractError(f"offsets must have shape (k, 3), got {arr.shape}")
    if hasattr(offsets, "offsets"):
        return arr[system.vertices]
    if arr.shape[0] == system.n_vertices:
        return arr
    raise ContractError(
        f"offset rows ({arr.shape[0]}) do not match the system size ({system.n_vertices})"
    )


def diffusing_step(system: DiffusionSystem, offsets) -> np.ndarray:
    """Regularized offsets of the free vertices, shape ``(n_free, 3)``.

    ``offsets`` is a :class:`~meshdiff.rigid.PreliminaryOffsets` (rows indexed
    by mesh vertex) or an array with one row per system vertex.
    """
    c = _rhs(system, offsets)
    if system.free.size == 0:
        return np.zeros((0, 3))
    if not system.has_fixed:
        o = system._solver.solve(c)
        o += system._solver.solve(c - system.coefficient @ o)
        return o
    btc = system.reduced.T @ c
    o = system._solver.solve(btc)
    # one pass of iterative refinement on the normal equations
    o += system._solver.solve(btc - system.normal @ o)
    return o


def normal_residual(system: DiffusionSystem, offsets, solution) -> tuple[float, float]:
    """``(|B^T B O - B^T C|_inf, |B^T C|_inf)`` for a computed solution."""
    c = _rhs(system, offsets)
    btc = system.reduced.T @ c
    res = system.reduced.T @ (system.reduced @ solution) - btc
    return float(np.abs(res).max(initial=0.0)), float(np.abs(btc).max(initial=0.0))


def assign_lambda(mesh: Mesh, classification: VertexClassification, geodesic_to_fixed,
                  lam_max=1.0, lam_min=0.1, sigma=None) -> VertexClassification:
    """Diffusion weights decaying with geodesic distance to the fixed set.

    ``lambda = lam_max * exp(-d / sigma) + lam_min`` with ``sigma`` defaulting to
    five template mean edge lengths. Unreachable vertices (``d = inf``) get
    ``lam_min``.
    """
    if lam_min <= 0 or lam_max < 0:
        raise ParameterError("need lam_min > 0 and lam_max >= 0")
    if sigma is None:
        sigma = 5.0 * mean_edge_length(mesh)
    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    d = np.asarray(geodesic_to_fixed, dtype=np.float64)
    lam = lam_max * np.exp(-d / sigma) + lam_min
    return classification.with_lambda(lam)
