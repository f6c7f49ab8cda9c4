from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from meshdiff.diffuse import BandedCholesky, assign_lambda, build_system, diffusing_step, normal_residual
from meshdiff.errors import ContractError, FactorizationError, ParameterError
from meshdiff.geodesic import geodesic_field
from meshdiff.mesh import VertexClass, VertexClassification, classify_vertices, mean_edge_length
from meshdiff.synthetic import grid_mesh
from oracles import dense_diffusion

seeds = st.integers(0, 2**32 - 1)


def graph_from_edges(n, edges):
    if not edges:
        return sparse.csr_matrix((n, n), dtype=np.int8)
    e = np.asarray(edges)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    g = sparse.csr_matrix((np.ones(len(rows), np.int8), (rows, cols)), shape=(n, n))
    g.data[:] = 1
    return g


def classification(n, fixed=(), lam=None):
    labels = np.full(n, VertexClass.FREE, dtype=np.int8)
    labels[list(fixed)] = VertexClass.FIXED
    lam = np.ones(n) if lam is None else np.asarray(lam, float)
    return VertexClassification(labels, lam)


PATH = graph_from_edges(3, [(0, 1), (1, 2)])


def test_path_coefficient():
    s = build_system(PATH, classification(3))
    assert np.array_equal(s.coefficient.toarray(), [[2, -1, 0], [-1, 3, -1], [0, -1, 2]])


def test_path_fixed_normal_scalar():
    s = build_system(PATH, classification(3, fixed=[0, 2]))
    assert s.normal.toarray().tolist() == [[11.0]]


def test_empty_graph_identity():
    s = build_system(graph_from_edges(4, []), classification(4, lam=[5, 1, 2, 3]))
    assert np.array_equal(s.coefficient.toarray(), np.eye(4))


def test_path_middle_offset_closed_form():
    s = build_system(PATH, classification(3, fixed=[0, 2]))
    c = np.zeros((3, 3))
    c[1] = [1, 0, 0]
    o = diffusing_step(s, c)
    assert o[0] == pytest.approx([3 / 11, 0, 0], abs=1e-15)
    ref, _ = dense_diffusion(3, [(0, 1), (1, 2)], np.ones(3), [0, 2], c)
    assert np.allclose(o, ref, atol=1e-14)


def test_fixed_reaction_opposite_sign():
    s = build_system(PATH, classification(3, fixed=[0, 2]))
    c = np.zeros((3, 3))
    c[0] = [1, 0, 0]
    o = diffusing_step(s, c)
    assert o[0, 0] == pytest.approx(-1 / 11, abs=1e-15)


def test_constant_offsets_preserved():
    g = grid_mesh(5).adjacency
    s = build_system(g, classification(25, lam=np.linspace(0.2, 2, 25)))
    c = np.tile([0.3, -1.0, 2.0], (25, 1))
    assert np.allclose(diffusing_step(s, c), c, atol=1e-12)
    assert np.allclose(diffusing_step(s, np.zeros((25, 3))), 0)


def test_non_positive_lambda_rejected():
    with pytest.raises(ParameterError):
        build_system(PATH, classification(3, lam=[1, 0, 1]))


def test_shape_mismatch_is_contract_error():
    s = build_system(PATH, classification(3))
    with pytest.raises(ContractError):
        diffusing_step(s, np.zeros((4, 3)))


def test_factorization_reports_pivot():
    m = sparse.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(FactorizationError) as exc:
        BandedCholesky(m)
    assert exc.value.pivot is not None


def test_repeat_solves_bit_identical():
    g = grid_mesh(6).adjacency
    cls = classify_vertices(grid_mesh(6))
    s = build_system(g, cls)
    c = np.random.default_rng(0).normal(size=(36, 3))
    assert np.array_equal(diffusing_step(s, c), diffusing_step(s, c))


def random_problem(rng, max_n=12):
    n = int(rng.integers(2, max_n + 1))
    p = rng.uniform(0.15, 0.7)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    lam = rng.uniform(0.1, 2.0, n)
    return n, edges, lam


@settings(max_examples=60, deadline=None)
@given(seeds, st.booleans())
def test_matches_dense_least_squares(seed, with_fixed):
    rng = np.random.default_rng(seed)
    n, edges, lam = random_problem(rng)
    fixed = sorted(rng.choice(n, size=int(rng.integers(1, n)), replace=False).tolist()) if with_fixed else []
    s = build_system(graph_from_edges(n, edges), classification(n, fixed, lam))
    c = rng.normal(size=(n, 3))
    ref, b = dense_diffusion(n, edges, lam, fixed, c)
    assert np.allclose(s.coefficient.toarray(), b, atol=1e-15)
    got = diffusing_step(s, c)
    assert np.abs(got - ref).max() < 1e-8
    if with_fixed:
        res, scale = normal_residual(s, c, got)
        assert res <= 1e-8 * max(scale, 1e-300)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_diagonal_dominance(seed):
    rng = np.random.default_rng(seed)
    n, edges, lam = random_problem(rng)
    b = build_system(graph_from_edges(n, edges), classification(n, lam=lam)).coefficient.toarray()
    off = np.abs(b).sum(axis=1) - np.abs(np.diag(b))
    assert np.all(np.diag(b) > off)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_case1_smoothing_contracts(seed):
    rng = np.random.default_rng(seed)
    n, edges, lam = random_problem(rng)
    if not edges:
        return
    lam = np.full(n, rng.uniform(0.1, 2.0))     # uniform weights make B symmetric
    s = build_system(graph_from_edges(n, edges), classification(n, lam=lam))
    c = rng.normal(size=(n, 3))
    o = diffusing_step(s, c)

    def energy(x):
        return sum(lam[i] * np.sum((x[i] - x[j]) ** 2) for i, j in edges)

    assert energy(o) <= energy(c) + 1e-12


def test_assign_lambda_examples():
    g = grid_mesh(10)
    cls = classify_vertices(g)
    sigma = 5.0 * mean_edge_length(g)
    d = geodesic_field(g, cls.fixed)
    lam = assign_lambda(g, cls, d).lam
    assert np.allclose(lam[cls.fixed], 1.1)
    assert assign_lambda(g, cls, np.full(100, sigma)).lam[0] == pytest.approx(np.exp(-1) + 0.1, abs=1e-12)
    assert assign_lambda(g, cls, np.full(100, np.inf)).lam[0] == pytest.approx(0.1)
    order = np.argsort(d)
    assert np.all(np.diff(lam[order]) <= 1e-15)
