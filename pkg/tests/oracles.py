"""Slow, independent reference computations used by the tests."""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation


def _rot_residual(rotvec, sc, dc):
    r = Rotation.from_rotvec(rotvec).as_matrix()
    d = sc @ r.T - dc
    return float((d * d).sum())


def rotation_grid_fit(src, dst, n_grid=4000, seed=0):
    """Best rigid residual by dense rotation sampling plus local polishing (no SVD)."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    sc = src - src.mean(0)
    dc = dst - dst.mean(0)
    grid = Rotation.random(n_grid, random_state=seed).as_matrix()
    res = np.einsum("gij,kj->gki", grid, sc) - dc
    cost = (res ** 2).sum(axis=(1, 2))
    best = None
    for g in np.argsort(cost)[:5]:
        x0 = Rotation.from_matrix(grid[g]).as_rotvec()
        out = minimize(_rot_residual, x0, args=(sc, dc), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        if best is None or out.fun < best:
            best = out.fun
    return best


def dense_diffusion(n, edges, lam, fixed, c):
    """Least-squares minimizer of the diffusion system built entry by entry."""
    b = np.eye(n)
    nbrs = [set() for _ in range(n)]
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    for i in range(n):
        b[i, i] += lam[i] * len(nbrs[i])
        for j in nbrs[i]:
            b[i, j] -= lam[i]
    free = [i for i in range(n) if i not in set(fixed)]
    sol, *_ = np.linalg.lstsq(b[:, free], c, rcond=None)
    return sol, b


def _closest_on_segment(p, a, b):
    d = b - a
    t = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
    return a + t * d


def point_triangle_distance(p, a, b, c):
    """Plane projection if it falls inside, else the nearest of the three edges."""
    n = np.cross(b - a, c - a)
    nn = np.dot(n, n)
    if nn > 0:
        q = p - np.dot(p - a, n) / nn * n
        # barycentric inside test
        c0 = np.dot(np.cross(b - a, q - a), n)
        c1 = np.dot(np.cross(c - b, q - b), n)
        c2 = np.dot(np.cross(a - c, q - c), n)
        if c0 >= 0 and c1 >= 0 and c2 >= 0:
            return float(np.linalg.norm(p - q)), q
    cands = [_closest_on_segment(p, s, e) for s, e in ((a, b), (b, c), (c, a))]
    d = [np.linalg.norm(p - q) for q in cands]
    k = int(np.argmin(d))
    return float(d[k]), cands[k]


def brute_closest(mesh, p):
    """Linear scan over every triangle, vectorized version of :func:`point_triangle_distance`."""
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = p - (np.einsum("ij,ij->i", p - a, n) / nn)[:, None] * n
    inside = nn > 0
    for s, e in ((a, b), (b, c), (c, a)):
        inside &= np.einsum("ij,ij->i", np.cross(e - s, q - s), n) >= 0
    best_d = np.where(inside, np.linalg.norm(p - q, axis=1), np.inf)
    best_q = np.where(inside[:, None], q, np.nan)
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        t = np.clip(np.einsum("ij,ij->i", p - s, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
        cand = s + t[:, None] * d
        dist = np.linalg.norm(p - cand, axis=1)
        take = dist < best_d
        best_d = np.where(take, dist, best_d)
        best_q = np.where(take[:, None], cand, best_q)
    k = int(np.argmin(best_d))
    return float(best_d[k]), best_q[k], k


def floyd_warshall(mesh):
    n = mesh.n_vertices
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b in mesh.edges:
        w = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b])
        d[a, b] = d[b, a] = min(d[a, b], w)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def brute_fps(dist, seed, count, candidates):
    """Max-min selection recomputed from scratch at every step; ties to the lowest index."""
    included = list(seed)
    cand = sorted(candidates)
    picks = []
    for _ in range(count):
        best, arg = -1.0, None
        for c in cand:
            if c in picks:
                continue
            m = min(dist[c, i] for i in included) if included else np.inf
            if m > best:
                best, arg = m, c
        if not included:
            arg = cand[0]
        picks.append(arg)
        included.append(arg)
    return picks
