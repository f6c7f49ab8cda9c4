"""Indexed triangle meshes, vertex categories and OBJ / index-file I/O."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import (
    ClassificationConflictError,
    MeshFormatError,
    ParameterError,
    TopologyMismatchError,
    UnsupportedTopologyError,
)


class Mesh:
    """Triangle mesh with derived edge list and 1-ring adjacency.

    Edges are canonicalized as ``(min, max)`` and sorted lexicographically, so
    two meshes built from the same face array enumerate their edges in the same
    order. Arrays are made read-only; use :meth:`with_vertices` to obtain a
    copy with moved vertices and shared connectivity.
    """

    def __init__(self, vertices, faces, *, _topology=None):
        v = np.array(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {v.shape}")
        v.setflags(write=False)
        self._vertices = v
        if _topology is not None:
            self._faces, self._edges, self._edge_faces, self._adj = _topology
            return

        f = np.array(faces, dtype=np.int64).reshape(-1, 3) if len(faces) else np.zeros((0, 3), np.int64)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise UnsupportedTopologyError("face with repeated vertex index")
        f.setflags(write=False)

        half = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        edges, counts = np.unique(half, axis=0, return_counts=True)
        edges = edges.reshape(-1, 2)
        if np.any(counts > 2):
            bad = edges[np.argmax(counts > 2)]
            raise UnsupportedTopologyError(
                f"non-manifold edge ({bad[0]}, {bad[1]}) shared by more than two faces"
            )
        edges.setflags(write=False)
        counts.setflags(write=False)

        n = len(v)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sort_indices()
        self._faces, self._edges, self._edge_faces, self._adj = f, edges, counts, adj

    # -- basic accessors ---------------------------------------------------
    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def faces(self) -> np.ndarray:
        return self._faces

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric binary vertex adjacency (CSR, sorted column indices)."""
        return self._adj

    @property
    def n_vertices(self) -> int:
        return len(self._vertices)

    @property
    def n_faces(self) -> int:
        return len(self._faces)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def one_ring(self, i: int) -> np.ndarray:
        a = self._adj
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    @property
    def edge_face_count(self) -> np.ndarray:
        return self._edge_faces

    @property
    def boundary_edges(self) -> np.ndarray:
        return self._edges[self._edge_faces == 1]

    @property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    # -- derived geometry --------------------------------------------------
    def edge_lengths(self) -> np.ndarray:
        e = self._edges
        return np.linalg.norm(self._vertices[e[:, 1]] - self._vertices[e[:, 0]], axis=1)

    def face_normals(self, normalize=True) -> np.ndarray:
        v, f = self._vertices, self._faces
        nrm = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalize:
            ln = np.linalg.norm(nrm, axis=1, keepdims=True)
            nrm = np.divide(nrm, ln, out=np.zeros_like(nrm), where=ln > 0)
        return nrm

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unit length; zero for isolated vertices)."""
        fn = self.face_normals(normalize=False)
        vn = np.zeros_like(self._vertices)
        for k in range(3):
            np.add.at(vn, self._faces[:, k], fn)
        ln = np.linalg.norm(vn, axis=1, keepdims=True)
        return np.divide(vn, ln, out=np.zeros_like(vn), where=ln > 0)

    # -- topology sharing --------------------------------------------------
    def with_vertices(self, vertices) -> "Mesh":
        v = np.asarray(vertices, dtype=np.float64)
        if v.shape != self._vertices.shape:
            raise TopologyMismatchError(
                f"vertex array shape {v.shape} does not match {self._vertices.shape}"
            )
        return Mesh(v, None, _topology=(self._faces, self._edges, self._edge_faces, self._adj))

    def same_topology(self, other: "Mesh") -> bool:
        if self._faces is other._faces:
            return self.n_vertices == other.n_vertices
        return (
            self.n_vertices == other.n_vertices
            and self._faces.shape == other._faces.shape
            and np.array_equal(self._faces, other._faces)
        )

    def __repr__(self):
        return f"Mesh(n={self.n_vertices}, m={self.n_edges}, l={self.n_faces})"


def require_same_topology(a: Mesh, b: Mesh):
    if not a.same_topology(b):
        raise TopologyMismatchError(f"topology mismatch: {a!r} vs {b!r}")


def mean_edge_length(mesh: Mesh) -> float:
    if mesh.n_edges == 0:
        raise ValueError("mesh has no edges")
    return float(mesh.edge_lengths().mean())


# ---------------------------------------------------------------------------
# vertex categories

class VertexClass(enum.IntEnum):
    FREE = 0
    FIXED = 1
    NON_INTERESTED = 2


@dataclass(frozen=True)
class VertexClassification:
    labels: np.ndarray
    lam: np.ndarray

    @property
    def fixed_count(self) -> int:
        return int(np.count_nonzero(self.labels == VertexClass.FIXED))

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.labels == VertexClass.FREE)

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.labels == VertexClass.FIXED)

    @property
    def interested(self) -> np.ndarray:
        return np.flatnonzero(self.labels != VertexClass.NON_INTERESTED)

    @property
    def interested_mask(self) -> np.ndarray:
        return self.labels != VertexClass.NON_INTERESTED

    def with_lambda(self, lam) -> "VertexClassification":
        lam = np.asarray(lam, dtype=np.float64)
        if lam.shape != self.labels.shape:
            raise ValueError("lambda length does not match vertex count")
        return VertexClassification(self.labels, lam)

    def with_extra_fixed(self, indices) -> "VertexClassification":
        labels = self.labels.copy()
        idx = np.asarray(indices, dtype=np.int64)
        labels[idx[labels[idx] == VertexClass.FREE]] = VertexClass.FIXED
        return VertexClassification(labels, self.lam)


def _as_index_array(indices, n, what):
    idx = np.unique(np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                               dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ParameterError(f"{what} index out of range [0, {n})")
    return idx


def classify_vertices(mesh: Mesh, landmarks=(), non_interested=()) -> VertexClassification:
    """Label vertices free / fixed / non-interested.

    Fixed vertices are the landmarks, interested vertices on the mesh boundary,
    and interested vertices adjacent to a non-interested one. All weights start
    at 1.
    """
    n = mesh.n_vertices
    lm = _as_index_array(landmarks, n, "landmark")
    ni = _as_index_array(non_interested, n, "non-interested")
    both = np.intersect1d(lm, ni)
    if both.size:
        raise ClassificationConflictError(
            f"vertices listed as both landmark and non-interested: {both.tolist()[:10]}"
        )
    labels = np.full(n, VertexClass.FREE, dtype=np.int8)
    ni_mask = np.zeros(n, dtype=bool)
    ni_mask[ni] = True

    fixed = mesh.boundary_mask.copy()
    fixed[lm] = True
    if ni.size:
        # interested vertices touching the non-interested region
        touches = mesh.adjacency @ ni_mask.astype(np.int32) > 0
        fixed |= touches
    fixed &= ~ni_mask

    labels[fixed] = VertexClass.FIXED
    labels[ni_mask] = VertexClass.NON_INTERESTED
    labels.setflags(write=False)
    lam = np.ones(n, dtype=np.float64)
    return VertexClassification(labels, lam)


@dataclass(frozen=True)
class CorrespondedPair:
    """Template and initially corresponded target sharing connectivity.

    ``raw_target_surface`` is the scan onto which refined vertices are
    projected; its topology is unrelated to the template's.
    """

    template: Mesh
    target: Mesh
    raw_target_surface: Mesh

    def __post_init__(self):
        require_same_topology(self.template, self.target)


# ---------------------------------------------------------------------------
# I/O

def _parse_face_token(tok, n_vertices, lineno, path):
    head = tok.split("/", 1)[0]
    try:
        k = int(head)
    except ValueError:
        raise MeshFormatError(f"bad face index {tok!r}", lineno, path) from None
    if k > 0:
        return k - 1
    if k < 0:
        return n_vertices + k
    raise MeshFormatError("face index 0 is invalid in OBJ (indices are 1-based)", lineno, path)


def load_mesh(path, format="obj") -> Mesh:
    """Read an ASCII OBJ file (``v`` and ``f`` records; everything else ignored)."""
    if format != "obj":
        raise ValueError(f"unsupported mesh format {format!r}")
    path = Path(path)
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError("vertex record needs 3 coordinates", lineno, path)
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise MeshFormatError(f"bad vertex coordinate in {line.strip()!r}", lineno, path) from None
            elif tag == "f":
                if len(parts) != 4:
                    raise UnsupportedTopologyError(
                        f"{path}:{lineno}: face with {len(parts) - 1} vertices; only triangles are supported"
                    )
                faces.append(tuple(_parse_face_token(t, len(verts), lineno, path) for t in parts[1:]))
    if not verts:
        raise MeshFormatError("no vertices found", None, path)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(verts)):
        raise MeshFormatError("face references a vertex that does not exist", None, path)
    return Mesh(np.array(verts), f)


def save_mesh(mesh: Mesh, path):
    """Write positions and faces as OBJ at full round-trip precision."""
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_index_file(path) -> np.ndarray:
    """One 0-based vertex index per line; ``#`` starts a comment."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                out.append(int(body))
            except ValueError:
                raise MeshFormatError(f"bad vertex index {body!r}", lineno, path) from None
    return np.array(out, dtype=np.int64)


def write_index_file(indices, path):
    Path(path).write_text("".join(f"{int(i)}\n" for i in indices))
