"""Geodesic distance fields and farthest point sampling on a template mesh."""
from __future__ import annotations

import heapq
import logging

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import splu

from .errors import ParameterError
from .mesh import Mesh

log = logging.getLogger(__name__)


def edge_length_graph(mesh: Mesh) -> sparse.csr_matrix:
    """Symmetric sparse graph weighted by Euclidean edge length."""
    e = mesh.edges
    w = mesh.edge_lengths()
    n = mesh.n_vertices
    g = sparse.csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(n, n),
    )
    g.sort_indices()
    return g


def geodesic_field(mesh: Mesh, sources, method: str = "dijkstra") -> np.ndarray:
    """Distance from every vertex to the nearest source vertex.

    ``method="dijkstra"`` gives exact shortest-path distances along mesh edges;
    ``method="heat"`` uses the heat method (smooth approximation of the
    surface geodesic). Unreachable vertices get ``inf``.
    """
    src = np.unique(np.asarray(list(sources) if not isinstance(sources, np.ndarray) else sources,
                               dtype=np.int64))
    if src.size == 0:
        raise ParameterError("geodesic_field needs at least one source vertex")
    if method == "dijkstra":
        d = dijkstra(edge_length_graph(mesh), directed=False, indices=src, min_only=True)
        d[src] = 0.0
    elif method == "heat":
        d = heat_geodesic(mesh, src)
    else:
        raise ParameterError(f"unknown geodesic method {method!r}")
    unreachable = np.isinf(d)
    if np.any(unreachable):
        log.warning("%d vertices are unreachable from the source set", int(unreachable.sum()))
    return d


# ---------------------------------------------------------------------------
# heat method

def cotan_laplacian(mesh: Mesh):
    """Cotangent stiffness matrix (positive semi-definite) and lumped vertex areas."""
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        u = v[i] - v[o]
        w = v[j] - v[o]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        cot = np.einsum("ij,ij->i", u, w) / np.maximum(cross, 1e-300)
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-0.5 * cot, -0.5 * cot, 0.5 * cot, 0.5 * cot]
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    area = 0.5 * np.linalg.norm(mesh.face_normals(normalize=False), axis=1)
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, f[:, k], area / 3.0)
    return L, mass


def heat_geodesic(mesh: Mesh, sources, t=None) -> np.ndarray:
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    L, mass = cotan_laplacian(mesh)
    if t is None:
        h = mesh.edge_lengths().mean()
        t = h * h
    delta = np.zeros(n)
    delta[np.asarray(sources)] = 1.0
    heat = splu(sparse.csc_matrix(sparse.diags(mass) + t * L)).solve(delta)

    # normalized negative gradient of the heat per face
    nrm = mesh.face_normals(normalize=False)
    dbl_area = np.linalg.norm(nrm, axis=1)
    unit_n = nrm / np.maximum(dbl_area, 1e-300)[:, None]
    grad = np.zeros((len(f), 3))
    for k in range(3):
        i, j, o = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        edge = v[o] - v[j]   # edge opposite vertex i
        grad += heat[i][:, None] * np.cross(unit_n, edge)
    grad /= np.maximum(dbl_area, 1e-300)[:, None]
    x = -grad / np.maximum(np.linalg.norm(grad, axis=1), 1e-300)[:, None]

    # integrated divergence
    div = np.zeros(n)
    for k in range(3):
        i, j, o = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        e1 = v[j] - v[i]
        e2 = v[o] - v[i]
        cot_o = _cot(v[i] - v[o], v[j] - v[o])
        cot_j = _cot(v[i] - v[j], v[o] - v[j])
        np.add.at(div, i, 0.5 * (cot_o * np.einsum("ij,ij->i", e1, x) + cot_j * np.einsum("ij,ij->i", e2, x)))

    # L phi = -div; pin one source to remove the constant null space
    pin = int(np.asarray(sources)[0])
    keep = np.setdiff1d(np.arange(n), [pin])
    Lk = sparse.csc_matrix(L[keep][:, keep])
    phi = np.zeros(n)
    phi[keep] = splu(Lk + 1e-12 * sparse.identity(len(keep), format="csc")).solve(-div[keep])
    phi -= phi[np.asarray(sources)].min()
    return np.maximum(phi, 0.0)


def _cot(a, b):
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    return np.einsum("ij,ij->i", a, b) / np.maximum(cross, 1e-300)


# ---------------------------------------------------------------------------
# farthest point sampling

def _relax_from(indptr, indices, weights, src, dist):
    """Dijkstra from ``src`` that only descends where it improves ``dist`` (a list, in place).

    Returns the vertices whose distance decreased.
    """
    dist[src] = 0.0
    changed = [src]
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            nd = d + weights[k]
            if nd < dist[w]:
                dist[w] = nd
                changed.append(w)
                heapq.heappush(heap, (nd, w))
    return changed


def farthest_point_sample(mesh: Mesh, seed, count: int, candidates=None, graph=None) -> np.ndarray:
    """Greedy max-min sampling of ``count`` vertices under graph geodesic distance.

    Each step picks the candidate farthest from everything included so far
    (seed plus previous picks; ties go to the lowest index) and updates the
    distance field incrementally. With an empty seed the first pick is the
    lowest-index candidate.
    """
    n = mesh.n_vertices
    seed = np.unique(np.asarray(list(seed) if not isinstance(seed, np.ndarray) else seed, dtype=np.int64))
    cand = np.ones(n, dtype=bool) if candidates is None else np.zeros(n, dtype=bool)
    if candidates is not None:
        cand[np.asarray(candidates, dtype=np.int64)] = True
    cand[seed] = False
    if count < 0 or count > int(cand.sum()):
        raise ParameterError(f"cannot sample {count} vertices from {int(cand.sum())} available")
    if graph is None:
        graph = edge_length_graph(mesh)
    # plain lists: the heap loop touches single elements, where numpy scalars are slow
    indptr, indices, weights = graph.indptr.tolist(), graph.indices.tolist(), graph.data.tolist()
    dist = [np.inf] * n
    for s in seed.tolist():
        _relax_from(indptr, indices, weights, s, dist)

    work = np.where(cand, np.asarray(dist), -np.inf)
    picks = []
    for _ in range(count):
        if seed.size == 0 and not picks:
            nxt = int(np.flatnonzero(cand)[0])
        else:
            nxt = int(np.argmax(work))
        picks.append(nxt)
        cand[nxt] = False
        work[nxt] = -np.inf
        changed = _relax_from(indptr, indices, weights, nxt, dist)
        ch = np.asarray(changed, dtype=np.int64)
        ch = ch[cand[ch]]
        work[ch] = [dist[c] for c in ch.tolist()]
    return np.array(picks, dtype=np.int64)
