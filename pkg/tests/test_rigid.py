from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshdiff.errors import ParameterError
from meshdiff.mesh import CorrespondedPair, Mesh
from meshdiff.rigid import dividing_step, fit_rigid, kabsch_batch, padded_neighbors, rigid_residual
from meshdiff.synthetic import grid_mesh, random_rotation, random_surface, rotation_z
from oracles import rotation_grid_fit

seeds = st.integers(0, 2**32 - 1)


def _pts(rng, k=6):
    return rng.normal(size=(k, 3))


def test_identity_fit():
    p = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    t = fit_rigid(p, p)
    assert np.allclose(t.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(t.translation, 0, atol=1e-12)


def test_known_motion_recovered():
    p = np.random.default_rng(3).normal(size=(5, 3))
    r = rotation_z(np.pi / 2)
    t = fit_rigid(p, p @ r.T + [1, 2, 3])
    assert np.allclose(t.rotation, r, atol=1e-10)
    assert np.allclose(t.translation, [1, 2, 3], atol=1e-10)


def test_mirror_gives_proper_rotation():
    p = np.array([[1, 0, 0], [-0.5, 0.8, 0], [-0.5, -0.8, 0], [0, 0, 1.0], [0.2, 0.1, 0]])
    mirrored = p * [1, 1, -1]
    t = fit_rigid(p, mirrored)
    assert np.linalg.det(t.rotation) == pytest.approx(1.0, abs=1e-10)
    oracle = rotation_grid_fit(p, mirrored)
    assert rigid_residual(t, p, mirrored) == pytest.approx(oracle, rel=0.01, abs=1e-12)


def test_too_few_points():
    with pytest.raises(ParameterError):
        fit_rigid(np.zeros((2, 3)), np.zeros((2, 3)))


def test_collinear_flagged_but_returned():
    p = np.outer(np.arange(4.0), [1, 2, 3])
    t = fit_rigid(p, p + 1)
    assert t.degenerate
    assert np.allclose(t.apply(p), p + 1, atol=1e-10)


def test_deterministic_bits():
    rng = np.random.default_rng(0)
    s, d = _pts(rng), _pts(rng)
    a, b = fit_rigid(s, d), fit_rigid(s, d)
    assert np.array_equal(a.rotation, b.rotation) and np.array_equal(a.translation, b.translation)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_rotation_is_orthonormal_and_beats_identity(seed):
    rng = np.random.default_rng(seed)
    s, d = _pts(rng), _pts(rng)
    t = fit_rigid(s, d)
    assert np.allclose(t.rotation.T @ t.rotation, np.eye(3), atol=1e-10)
    assert np.linalg.det(t.rotation) == pytest.approx(1.0, abs=1e-10)
    ident = ((s - s.mean(0)) - (d - d.mean(0)))
    assert rigid_residual(t, s, d) <= (ident ** 2).sum() + 1e-12


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_matches_rotation_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    s, d = _pts(rng), _pts(rng)
    oracle = rotation_grid_fit(s, d)
    got = rigid_residual(fit_rigid(s, d), s, d)
    assert got <= oracle + 1e-12
    assert got == pytest.approx(oracle, rel=0.01, abs=1e-12)


def test_kabsch_batch_mask_ignores_padding():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(1, 5, 3))
    r = random_rotation(rng)
    d = s @ r.T
    s_pad = np.concatenate([s, rng.normal(size=(1, 2, 3))], axis=1)
    d_pad = np.concatenate([d, rng.normal(size=(1, 2, 3))], axis=1)
    mask = np.array([[True] * 5 + [False] * 2])
    rot, _, deg = kabsch_batch(s_pad, d_pad, mask)
    assert not deg[0]
    assert np.allclose(rot[0], r, atol=1e-10)


def test_padded_neighbors():
    g = grid_mesh(3).adjacency
    nb = padded_neighbors(g, [0, 4])
    assert sorted(nb[0][nb[0] >= 0].tolist()) == [1, 3, 4]
    assert sorted(nb[1].tolist()) == [0, 1, 3, 5, 7, 8]


def _pair(template, target):
    return CorrespondedPair(template, target, target)


def test_dividing_identity_is_zero():
    m = random_surface(np.random.default_rng(2))
    pre = dividing_step(_pair(m, m), np.arange(m.n_vertices), m.adjacency)
    assert np.allclose(pre.offsets, 0, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_dividing_global_rigid_motion_zero(seed):
    rng = np.random.default_rng(seed)
    m = random_surface(rng)
    r = random_rotation(rng)
    tgt = m.with_vertices(m.vertices @ r.T + rng.normal(size=3))
    pre = dividing_step(_pair(m, tgt), np.arange(m.n_vertices), m.adjacency)
    ok = np.setdiff1d(np.arange(m.n_vertices), pre.degenerate)
    assert np.abs(pre.offsets[ok]).max() < 1e-10


def test_star_center_displacement():
    ang = np.linspace(0, 2 * np.pi, 6)[:-1]
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(5)], 1)
    v = np.vstack([[0, 0, 0], ring])
    f = [[0, 1 + i, 1 + (i + 1) % 5] for i in range(5)]
    template = Mesh(v, f)
    d = np.array([0.13, -0.07, 0.0])
    target = template.with_vertices(v + np.vstack([d, np.zeros((5, 3))]))
    pre = dividing_step(_pair(template, target), [0], template.adjacency)
    assert np.allclose(pre.offsets[0], -d, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_dividing_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = random_surface(rng)
    tgt = m.with_vertices(m.vertices + rng.normal(scale=0.1, size=m.vertices.shape))
    r, t = random_rotation(rng), rng.normal(size=3)
    a = dividing_step(_pair(m, tgt), np.arange(m.n_vertices), m.adjacency)
    m2, tgt2 = m.with_vertices(m.vertices @ r.T + t), tgt.with_vertices(tgt.vertices @ r.T + t)
    b = dividing_step(_pair(m2, tgt2), np.arange(m.n_vertices), m.adjacency)
    assert np.allclose(np.linalg.norm(a.offsets, axis=1), np.linalg.norm(b.offsets, axis=1), atol=1e-9)


def test_low_valence_vertex_zero_offset():
    m = grid_mesh(3)
    tgt = m.with_vertices(m.vertices + np.random.default_rng(0).normal(scale=0.1, size=(9, 3)))
    # vertex 2 (a corner) has exactly two neighbours in the grid triangulation
    assert len(m.one_ring(2)) == 2
    pre = dividing_step(_pair(m, tgt), [2, 4], m.adjacency)
    assert 2 in pre.degenerate
    assert np.all(pre.offsets[2] == 0)
