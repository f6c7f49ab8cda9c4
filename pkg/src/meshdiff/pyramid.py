"""Multi-resolution vertex pyramid over a template mesh.

Free vertices are ordered once by farthest point sampling, seeded with the
fixed vertices. Level ``j < k`` contains the fixed vertices plus the first
``floor(N1 / 4**(k-1-j))`` sampled vertices; its free vertices are the ones
newly unlocked at that level and everything included earlier is held fixed.
The last level is the full-resolution mesh with its native 1-ring graph.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import ParameterError
from .geodesic import edge_length_graph, farthest_point_sample
from .mesh import Mesh, VertexClass, VertexClassification

INTERIOR_NEIGHBORS = 6


@dataclass(frozen=True)
class PyramidLevel:
    free_vertices: np.ndarray
    fixed_vertices: np.ndarray
    neighbor_graph: sparse.csr_matrix   # n x n, symmetric, nonzero only among level vertices

    @property
    def vertices(self) -> np.ndarray:
        return np.union1d(self.free_vertices, self.fixed_vertices)

    def classification(self, base: VertexClassification) -> VertexClassification:
        """Labels for this level: new vertices free, earlier ones fixed, the rest ignored."""
        labels = np.full(len(base.labels), VertexClass.NON_INTERESTED, dtype=np.int8)
        labels[self.fixed_vertices] = VertexClass.FIXED
        labels[self.free_vertices] = VertexClass.FREE
        return VertexClassification(labels, base.lam)


@dataclass(frozen=True)
class ResolutionPyramid:
    levels: list[PyramidLevel]
    fps_order: np.ndarray
    key: str = ""

    @property
    def k(self) -> int:
        return len(self.levels) - 1

    def free_counts(self) -> list[int]:
        return [len(lv.free_vertices) for lv in self.levels]

    def fixed_counts(self) -> list[int]:
        return [len(lv.fixed_vertices) for lv in self.levels]


def level_sizes(n_free: int, k: int) -> list[int]:
    """Cumulative free-vertex counts for MR(0)..MR(k-1); remainder lands in the last."""
    if k < 1:
        raise ParameterError("pyramid needs k >= 1")
    if n_free < 4 ** (k - 1):
        raise ParameterError(f"k={k} is too large for {n_free} free vertices (need >= {4 ** (k - 1)})")
    sizes = [n_free // 4 ** (k - 1 - j) for j in range(k)]
    sizes[-1] = n_free
    return sizes


def _nearest_included(indptr, indices, weights, src, included, count, exclude=()):
    """Up to ``count`` included vertices closest to ``src`` (geodesic, ties by index)."""
    found = []
    best = {src: 0.0}
    heap = [(0.0, src)]
    done = set()
    while heap and len(found) < count:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u != src and included[u] and u not in exclude:
            found.append(u)
            if len(found) == count:
                break
        for k in range(indptr[u], indptr[u + 1]):
            w = indices[k]
            nd = d + weights[k]
            if nd < best.get(w, np.inf):
                best[w] = nd
                heapq.heappush(heap, (nd, w))
    return found


def _along_boundary(indptr, indices, v, boundary_inc):
    """First included vertex in each direction along the boundary loop(s) through ``v``."""
    out = []
    for k in range(indptr[v], indptr[v + 1]):
        prev, cur = v, indices[k]
        steps = 0
        while not boundary_inc[cur] and steps < len(boundary_inc):
            nxt = [indices[q] for q in range(indptr[cur], indptr[cur + 1]) if indices[q] != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            steps += 1
        if cur != v and boundary_inc[cur] and cur not in out:
            out.append(cur)
    return out


def level_graph(mesh: Mesh, included, boundary, graph=None, boundary_graph=None) -> sparse.csr_matrix:
    """Custom neighbour graph over an included vertex subset.

    Boundary vertices link to the first included vertex in each direction
    along the boundary and to the nearest included interior vertex; interior vertices
    link to their six geodesically nearest included vertices. The result is
    symmetrized.
    """
    n = mesh.n_vertices
    inc = np.zeros(n, dtype=bool)
    inc[np.asarray(included)] = True
    if graph is None:
        graph = edge_length_graph(mesh)
    if boundary_graph is None:
        boundary_graph = _boundary_graph(mesh, graph)
    g = (graph.indptr.tolist(), graph.indices.tolist(), graph.data.tolist())
    bg = (boundary_graph.indptr.tolist(), boundary_graph.indices.tolist(), boundary_graph.data.tolist())
    inc_list = inc.tolist()
    interior_inc = (inc & ~boundary).tolist()
    boundary_inc = (inc & boundary).tolist()

    rows, cols = [], []
    for v in np.flatnonzero(inc).tolist():
        if boundary[v]:
            nb = _along_boundary(bg[0], bg[1], v, boundary_inc)
            nb += _nearest_included(*g, v, interior_inc, 1)
        else:
            nb = _nearest_included(*g, v, inc_list, INTERIOR_NEIGHBORS)
        rows += [v] * len(nb)
        cols += nb
    a = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    a = ((a + a.T) > 0).astype(np.int8).tocsr()
    a.sort_indices()
    return a


def _boundary_graph(mesh: Mesh, graph) -> sparse.csr_matrix:
    be = mesh.boundary_edges
    n = mesh.n_vertices
    if len(be) == 0:
        return sparse.csr_matrix((n, n))
    w = np.asarray(graph[be[:, 0], be[:, 1]]).ravel()
    g = sparse.csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([be[:, 0], be[:, 1]]), np.concatenate([be[:, 1], be[:, 0]]))),
        shape=(n, n),
    )
    g.sort_indices()
    return g


def pyramid_key(mesh: Mesh, classification: VertexClassification, k: int) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.faces).tobytes())
    h.update(np.ascontiguousarray(classification.labels).tobytes())
    h.update(str(k).encode())
    return h.hexdigest()


def build_pyramid(mesh: Mesh, classification: VertexClassification, k: int = 4) -> ResolutionPyramid:
    free = classification.free
    fixed = classification.fixed
    sizes = level_sizes(len(free), k)
    graph = edge_length_graph(mesh)
    order = farthest_point_sample(mesh, fixed, len(free), candidates=free, graph=graph)

    boundary = mesh.boundary_mask & classification.interested_mask
    bgraph = _boundary_graph(mesh, graph)
    levels = []
    prev = 0
    for size in sizes:
        included = np.concatenate([fixed, order[:size]])
        lv_graph = level_graph(mesh, included, boundary, graph, bgraph)
        levels.append(PyramidLevel(
            free_vertices=np.sort(order[prev:size]),
            fixed_vertices=np.sort(np.concatenate([fixed, order[:prev]])),
            neighbor_graph=lv_graph,
        ))
        prev = size
    native = sparse.csr_matrix(mesh.adjacency)
    levels.append(PyramidLevel(np.sort(free), np.sort(fixed), native))
    return ResolutionPyramid(levels, order, pyramid_key(mesh, classification, k))


def save_pyramid(pyramid: ResolutionPyramid, path):
    arrays = {"fps_order": pyramid.fps_order, "key": np.array(pyramid.key)}
    for j, lv in enumerate(pyramid.levels):
        g = sparse.csr_matrix(lv.neighbor_graph)
        arrays[f"free_{j}"] = lv.free_vertices
        arrays[f"fixed_{j}"] = lv.fixed_vertices
        arrays[f"indptr_{j}"] = g.indptr
        arrays[f"indices_{j}"] = g.indices
    arrays["n_levels"] = np.array(len(pyramid.levels))
    arrays["n_vertices"] = np.array(pyramid.levels[0].neighbor_graph.shape[0])
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_pyramid(path, expected_key=None) -> ResolutionPyramid:
    with np.load(Path(path), allow_pickle=False) as z:
        key = str(z["key"])
        if expected_key is not None and key != expected_key:
            raise ParameterError(f"pyramid file {path} was built for a different template/classification")
        n = int(z["n_vertices"])
        levels = []
        for j in range(int(z["n_levels"])):
            indptr, indices = z[f"indptr_{j}"], z[f"indices_{j}"]
            g = sparse.csr_matrix((np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(n, n))
            levels.append(PyramidLevel(z[f"free_{j}"], z[f"fixed_{j}"], g))
        return ResolutionPyramid(levels, z["fps_order"], key)
