"""Edge-length based scale comparison of corresponded meshes.

Every mesh sharing a template's topology is embedded as the vector of
per-edge log length ratios against that template. Distances between meshes
are then (weighted) L1 distances in that space, so they are blind to rigid
motion and satisfy the metric axioms on embeddings.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateError
from .mesh import Mesh, require_same_topology


@dataclass(frozen=True)
class ScaleEmbedding:
    values: np.ndarray      # (m,) log(e_mesh / e_reference)
    reference: str = ""

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class EdgeWeights:
    weights: np.ndarray     # (m,), non-negative, sums to one


def _checked_lengths(mesh: Mesh, what: str) -> np.ndarray:
    e = mesh.edge_lengths()
    bad = np.flatnonzero(~(e > 0))
    if bad.size:
        raise DegenerateError(f"{what} has {bad.size} zero-length edge(s), first is edge {int(bad[0])}")
    return e


def similarity_scores(template: Mesh, target: Mesh) -> np.ndarray:
    """Per-edge length ratio target / template."""
    require_same_topology(template, target)
    return _checked_lengths(target, "target") / _checked_lengths(template, "template")


def scale_embedding(mesh: Mesh, reference: Mesh, reference_id: str = "") -> ScaleEmbedding:
    return ScaleEmbedding(np.log(similarity_scores(reference, mesh)), reference_id)


def local_distance(t1: Mesh, t2: Mesh) -> np.ndarray:
    """Per-edge ``|log(e1/e2)|``; needs no reference mesh."""
    return np.abs(np.log(similarity_scores(t2, t1)))


def edge_weights(template: Mesh) -> EdgeWeights:
    """Squared template edge lengths, normalized to sum to one."""
    sq = _checked_lengths(template, "template") ** 2
    return EdgeWeights(sq / sq.sum())


def global_distance(t1: Mesh, t2: Mesh, weights: EdgeWeights | None = None) -> float:
    """``(1/m) * sum_i w_i |log(e1_i / e2_i)|``.

    The ``1/m`` factor is kept even though the weights already sum to one, so
    the value is the weighted mean divided once more by the edge count.
    Without ``weights`` they are derived from ``t1``.
    """
    d = local_distance(t1, t2)
    w = edge_weights(t1).weights if weights is None else np.asarray(weights.weights, dtype=np.float64)
    if w.shape != d.shape:
        raise DegenerateError(f"weights have {w.shape[0]} entries, mesh has {d.shape[0]} edges")
    return float(np.dot(w, d) / len(d))


def embedding_distance(s1: ScaleEmbedding, s2: ScaleEmbedding, weights: EdgeWeights) -> float:
    """Same quantity as :func:`global_distance`, computed from two embeddings."""
    d = np.abs(np.asarray(s1.values) - np.asarray(s2.values))
    return float(np.dot(weights.weights, d) / len(d))


def signed_vertex_scale(t1: Mesh, t2: Mesh) -> np.ndarray:
    """Per-vertex mean of the signed ``log(e1/e2)`` over incident edges (>0 stretch, <0 shrink)."""
    signed = np.log(similarity_scores(t2, t1))
    e = t1.edges
    n = t1.n_vertices
    acc = np.bincount(e[:, 0], signed, n) + np.bincount(e[:, 1], signed, n)
    deg = np.bincount(e[:, 0], minlength=n) + np.bincount(e[:, 1], minlength=n)
    out = np.zeros(n)
    np.divide(acc, deg, out=out, where=deg > 0)
    return out


def heatmap_export(t1: Mesh, t2: Mesh, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>_edges.csv`` and ``<prefix>_vertices.csv``; returns both paths."""
    prefix = Path(prefix)
    d = local_distance(t1, t2)
    vs = signed_vertex_scale(t1, t2)
    edge_path = prefix.with_name(prefix.name + "_edges.csv")
    vert_path = prefix.with_name(prefix.name + "_vertices.csv")
    with open(edge_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "v0", "v1", "distance"])
        for i, (a, b) in enumerate(t1.edges):
            w.writerow([i, int(a), int(b), repr(float(d[i]))])
    with open(vert_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "signed_log_scale"])
        for i, v in enumerate(vs):
            w.writerow([i, repr(float(v))])
    return edge_path, vert_path
