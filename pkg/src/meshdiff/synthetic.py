"""Small procedural meshes used by the benchmarks, the CLI demos and the tests."""
from __future__ import annotations

import numpy as np

from .mesh import Mesh


def grid_faces(nx: int, ny: int) -> np.ndarray:
    """Triangulate an ``nx`` by ``ny`` vertex lattice (row-major, x fastest)."""
    idx = np.arange(nx * ny).reshape(ny, nx)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    return np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])


def grid_mesh(nx=10, ny=None, spacing=1.0, origin=(0.0, 0.0)) -> Mesh:
    """Planar triangulated grid in the z=0 plane."""
    ny = nx if ny is None else ny
    xs = origin[0] + spacing * np.arange(nx)
    ys = origin[1] + spacing * np.arange(ny)
    X, Y = np.meshgrid(xs, ys)
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(nx * ny)], axis=1)
    return Mesh(v, grid_faces(nx, ny))


def height_field_mesh(nx, ny=None, spacing=1.0, height=None) -> Mesh:
    """Grid lifted by ``z = height(x, y)``."""
    g = grid_mesh(nx, ny, spacing)
    v = g.vertices.copy()
    if height is not None:
        v[:, 2] = height(v[:, 0], v[:, 1])
    return g.with_vertices(v)


def tetrahedron() -> Mesh:
    v = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh(v, f)


def icosphere(subdivisions=1, radius=1.0) -> Mesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = nf
    return Mesh(radius * np.array(verts), np.array(faces))


def random_rotation(rng) -> np.ndarray:
    """Uniformly distributed rotation matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotation_z(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_surface(rng, n_side=None, jitter=0.2) -> Mesh:
    """Jittered, bumpy grid patch with random size; always free of zero-length edges."""
    if n_side is None:
        n_side = int(rng.integers(3, 8))
    g = grid_mesh(n_side)
    v = g.vertices.copy()
    v[:, :2] += rng.uniform(-jitter, jitter, size=(len(v), 2))
    v[:, 2] = rng.normal(scale=0.3, size=len(v))
    return g.with_vertices(v)


def random_triangle_soup(rng, n_triangles=200, scale=1.0) -> Mesh:
    """Independent random triangles (each with its own three vertices)."""
    centers = rng.uniform(-scale, scale, size=(n_triangles, 1, 3))
    v = (centers + rng.normal(scale=0.15 * scale, size=(n_triangles, 3, 3))).reshape(-1, 3)
    f = np.arange(3 * n_triangles).reshape(-1, 3)
    return Mesh(v, f)
