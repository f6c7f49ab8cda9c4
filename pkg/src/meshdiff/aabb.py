"""Axis-aligned bounding-box tree for exact closest-point-on-surface queries.

Queries are answered in batches: every query first descends greedily to one
leaf to obtain an upper bound on its distance, then all (query, node) pairs
whose box lies within that bound are expanded level by level. Only traversal
is pruned; the final answer is the exact minimum over all surviving
triangles, ties going to the lowest triangle index.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateError
from .mesh import Mesh

LEAF_SIZE = 4


def closest_point_on_triangles(p, a, b, c):
    """Row-wise closest point on triangle ``(a, b, c)`` to ``p`` (all ``(k, 3)``).

    Classic Voronoi-region classification: vertex, edge or face interior.
    """
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom

    region_a = (d1 <= 0) & (d2 <= 0)
    region_b = (d3 >= 0) & (d4 <= d3)
    region_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    region_c = (d6 >= 0) & (d5 <= d6)
    region_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    region_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)

    out = a + ab * v_in[:, None] + ac * w_in[:, None]
    # later assignments take priority, so apply in reverse precedence
    for mask, val in (
        (region_bc, b + (c - b) * t_bc[:, None]),
        (region_ac, a + ac * t_ac[:, None]),
        (region_c, c),
        (region_ab, a + ab * t_ab[:, None]),
        (region_b, b),
        (region_a, a),
    ):
        out = np.where(mask[:, None], val, out)

    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        out[bad] = _closest_on_edges(p[bad], a[bad], b[bad], c[bad])
    return out


def _closest_on_edges(p, a, b, c):
    """Fallback for zero-area triangles: best point over the three edges."""
    best = None
    best_d = None
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        dd = np.einsum("ij,ij->i", d, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dd > 0, np.einsum("ij,ij->i", p - s, d) / dd, 0.0)
        q = s + d * np.clip(t, 0.0, 1.0)[:, None]
        dist = np.einsum("ij,ij->i", p - q, p - q)
        if best is None:
            best, best_d = q, dist
        else:
            take = dist < best_d
            best = np.where(take[:, None], q, best)
            best_d = np.where(take, dist, best_d)
    return best


def _box_dist2(p, lo, hi):
    d = np.maximum(lo - p, 0.0) + np.maximum(p - hi, 0.0)
    return np.einsum("ij,ij->i", d, d)


class AabbTree:
    """Median-split bounding-box hierarchy over the triangles of a surface."""

    def __init__(self, surface: Mesh, leaf_size: int = LEAF_SIZE):
        if surface.n_faces == 0:
            raise DegenerateError("cannot build a closest-point tree on a surface without triangles")
        self.source = surface
        v = surface.vertices
        f = surface.faces
        self._a = v[f[:, 0]]
        self._b = v[f[:, 1]]
        self._c = v[f[:, 2]]
        tri = v[f]
        tri_lo = tri.min(axis=1)
        tri_hi = tri.max(axis=1)
        cent = tri.mean(axis=1)

        lo, hi, left, right, start, count = [], [], [], [], [], []
        order = np.empty(len(f), dtype=np.int64)
        filled = 0

        def new_node(ids):
            lo.append(tri_lo[ids].min(axis=0))
            hi.append(tri_hi[ids].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return len(lo) - 1

        root = new_node(np.arange(len(f)))
        stack = [(root, np.arange(len(f)))]
        while stack:
            node, ids = stack.pop()
            if len(ids) <= leaf_size:
                start[node] = filled
                count[node] = len(ids)
                order[filled:filled + len(ids)] = np.sort(ids)
                filled += len(ids)
                continue
            axis = int(np.argmax(hi[node] - lo[node]))
            ids = ids[np.argsort(cent[ids, axis], kind="stable")]
            half = len(ids) // 2
            l_ids, r_ids = ids[:half], ids[half:]
            ln, rn = new_node(l_ids), new_node(r_ids)
            left[node], right[node] = ln, rn
            stack.append((rn, r_ids))
            stack.append((ln, l_ids))

        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.order = order
        self.leaf_size = leaf_size

    # -- introspection -----------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    def is_leaf(self, node) -> np.ndarray:
        return self.left[node] < 0

    def leaf_triangles(self, node) -> np.ndarray:
        return self.order[self.start[node]:self.start[node] + self.count[node]]

    def depth(self) -> int:
        best, stack = 0, [(0, 1)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    # -- queries -----------------------------------------------------------
    def _triangle_dist2(self, q, tri, pts):
        cp = closest_point_on_triangles(pts[q], self._a[tri], self._b[tri], self._c[tri])
        diff = pts[q] - cp
        return cp, np.einsum("ij,ij->i", diff, diff)

    def _leaf_pairs(self, q, nodes):
        cnt = self.count[nodes]
        qq = np.repeat(q, cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        tri = self.order[np.repeat(self.start[nodes], cnt) + offs]
        return qq, tri

    def _upper_bound(self, pts):
        nq = len(pts)
        node = np.zeros(nq, dtype=np.int64)
        inner = self.left[node] >= 0
        while np.any(inner):
            qi = np.flatnonzero(inner)
            l, r = self.left[node[qi]], self.right[node[qi]]
            dl = _box_dist2(pts[qi], self.lo[l], self.hi[l])
            dr = _box_dist2(pts[qi], self.lo[r], self.hi[r])
            node[qi] = np.where(dl <= dr, l, r)
            inner = self.left[node] >= 0
        qq, tri = self._leaf_pairs(np.arange(nq), node)
        _, d2 = self._triangle_dist2(qq, tri, pts)
        ub = np.full(nq, np.inf)
        np.minimum.at(ub, qq, d2)
        return ub

    def closest_points(self, queries):
        """Exact closest surface points for an ``(k, 3)`` array of queries.

        Returns ``(points, triangle_indices, distances)``.
        """
        pts = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        nq = len(pts)
        ub = self._upper_bound(pts)
        # slack keeps boxes touching the bound despite rounding in the box test
        bound = ub * (1.0 + 1e-9) + 1e-300

        cand_q, cand_t = [], []
        q = np.arange(nq)
        nodes = np.zeros(nq, dtype=np.int64)
        while q.size:
            keep = _box_dist2(pts[q], self.lo[nodes], self.hi[nodes]) <= bound[q]
            q, nodes = q[keep], nodes[keep]
            leaf = self.left[nodes] < 0
            if np.any(leaf):
                lq, lt = self._leaf_pairs(q[leaf], nodes[leaf])
                cand_q.append(lq)
                cand_t.append(lt)
            q, nodes = q[~leaf], nodes[~leaf]
            q = np.concatenate([q, q])
            nodes = np.concatenate([self.left[nodes], self.right[nodes]])

        cq = np.concatenate(cand_q)
        ct = np.concatenate(cand_t)
        cp, d2 = self._triangle_dist2(cq, ct, pts)
        sel = np.lexsort((ct, d2, cq))
        cq, first = cq[sel], np.ones(len(sel), dtype=bool)
        first[1:] = cq[1:] != cq[:-1]
        pick = sel[first]
        out_pts = np.empty_like(pts)
        out_tri = np.empty(nq, dtype=np.int64)
        out_d = np.empty(nq)
        out_pts[cq[first]] = cp[pick]
        out_tri[cq[first]] = ct[pick]
        out_d[cq[first]] = np.sqrt(d2[pick])
        return out_pts, out_tri, out_d


def build_tree(surface: Mesh, leaf_size: int = LEAF_SIZE) -> AabbTree:
    return AabbTree(surface, leaf_size)


def closest_point(tree: AabbTree, query):
    """Single-query convenience wrapper: ``(point, triangle_index, distance)``."""
    p, t, d = tree.closest_points(np.asarray(query, dtype=np.float64)[None])
    return p[0], int(t[0]), float(d[0])
