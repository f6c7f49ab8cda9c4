"""Synthetic registration problems with known answers.

The planar benchmark stretches a unit grid by a constant factor: the exact
proportional placement of every vertex is then ``stretch * template``, the 2D
counterpart of proportional line division. Initial targets are obtained by
sliding interior vertices inside the plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CorrespondedPair, Mesh, VertexClassification, classify_vertices, mean_edge_length
from .synthetic import grid_mesh, height_field_mesh


@dataclass(frozen=True)
class Benchmark:
    pair: CorrespondedPair
    classification: VertexClassification
    expected: np.ndarray           # exact proportional positions of every vertex

    @property
    def template(self) -> Mesh:
        return self.pair.template

    @property
    def mean_edge_length(self) -> float:
        return mean_edge_length(self.pair.template)

    def with_target(self, vertices) -> "Benchmark":
        pair = CorrespondedPair(self.pair.template, self.pair.template.with_vertices(vertices),
                                self.pair.raw_target_surface)
        return Benchmark(pair, self.classification, self.expected)


def tangent_frames(normals):
    """Two unit tangent vectors per normal, deterministic."""
    n = np.asarray(normals, dtype=np.float64)
    helper = np.where(np.abs(n[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def tangential_noise(normals, sigma, rng):
    """Random in-tangent-plane vectors: uniform direction, magnitude uniform on ``[0, sigma*sqrt(3)]``."""
    t1, t2 = tangent_frames(normals)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=len(t1))
    mag = rng.uniform(0.0, sigma * np.sqrt(3.0), size=len(t1))
    return mag[:, None] * (np.cos(theta)[:, None] * t1 + np.sin(theta)[:, None] * t2)


def smooth_warp(xy, length, amplitude=0.1):
    """In-plane displacement vanishing on the square's border; bijective for amplitude < 1/(2 pi)."""
    u = xy[:, 0] / length
    v = xy[:, 1] / length
    dx = amplitude * length * np.sin(np.pi * u) * np.sin(np.pi * v)
    dy = 0.5 * amplitude * length * np.sin(2 * np.pi * u) * np.sin(np.pi * v)
    return np.stack([dx, dy, np.zeros_like(dx)], axis=1)


def grid_benchmark(n_side=10, stretch=2.0, warp=0.1, noise=0.0, seed=0) -> Benchmark:
    """Planar grid template and its ``stretch``-scaled copy with a warped interior.

    ``noise`` adds tangential noise (in template mean edge lengths) on top of
    the warp. The border is fixed at its exact position.
    """
    template = grid_mesh(n_side, spacing=1.0)
    cls = classify_vertices(template)
    exact = template.vertices * stretch
    length = stretch * (n_side - 1)
    init = exact + smooth_warp(exact, length, warp)
    free = cls.free
    if noise > 0:
        rng = np.random.default_rng(seed)
        normals = np.tile([0.0, 0.0, 1.0], (len(free), 1))
        init[free] += tangential_noise(normals, noise * mean_edge_length(template), rng)
    init[cls.fixed] = exact[cls.fixed]
    raw = grid_mesh(n_side, spacing=stretch)
    pair = CorrespondedPair(template, template.with_vertices(init), raw)
    return Benchmark(pair, cls, exact)


def random_init_benchmark(n_side=10, stretch=2.0, amplitude=0.5, seed=0) -> Benchmark:
    """Grid benchmark whose interior starts at exact positions plus tangential noise."""
    base = grid_benchmark(n_side, stretch, warp=0.0)
    rng = np.random.default_rng(seed)
    init = base.expected.copy()
    free = base.classification.free
    normals = np.tile([0.0, 0.0, 1.0], (len(free), 1))
    init[free] += tangential_noise(normals, amplitude * base.mean_edge_length, rng)
    return base.with_target(init)


def dome_benchmark(n_side=110, spacing=1.0, bump=0.15, warp=0.08, seed=0) -> Benchmark:
    """Gently curved height-field surface for scale tests.

    Template and target share the same surface (so the proportional answer is
    the template itself); the target starts from a smoothly warped
    parameterization re-projected onto the surface.
    """
    from .aabb import AabbTree

    length = spacing * (n_side - 1)

    def height(x, y):
        return bump * length * np.sin(np.pi * x / length) * np.sin(np.pi * y / length)

    template = height_field_mesh(n_side, spacing=spacing, height=height)
    cls = classify_vertices(template)
    flat = grid_mesh(n_side, spacing=spacing).vertices
    moved = flat + smooth_warp(flat, length, warp)
    moved[:, 2] = height(moved[:, 0], moved[:, 1])
    tree = AabbTree(template)
    init, _, _ = tree.closest_points(moved)
    init[cls.fixed] = template.vertices[cls.fixed]
    pair = CorrespondedPair(template, template.with_vertices(init), template)
    return Benchmark(pair, cls, template.vertices.copy())
