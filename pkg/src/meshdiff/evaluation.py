"""Batch evaluation: corpus metrics, PCA shape-model scores and noise sweeps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmarks import tangential_noise
from .errors import MeshDiffError, ParameterError, TopologyMismatchError
from .mesh import CorrespondedPair, Mesh, VertexClassification, load_mesh, mean_edge_length
from .metric import edge_weights, global_distance
from .registration import RegistrationConfig, compare_refinements, prepare, refine

log = logging.getLogger(__name__)


@dataclass
class MeshCorpus:
    """Identified meshes sharing one topology, optionally split into train and test ids."""

    entries: list[tuple[str, Mesh]]
    split: dict[str, str] = field(default_factory=dict)     # id -> "train" / "test"

    @classmethod
    def from_meshes(cls, meshes, ids=None) -> "MeshCorpus":
        meshes = list(meshes)
        ids = [str(i) for i in range(len(meshes))] if ids is None else list(ids)
        return cls(list(zip(ids, meshes)))

    @classmethod
    def from_manifest(cls, path) -> "MeshCorpus":
        """Read ``id<TAB>path[<TAB>train|test]`` lines; relative paths resolve against the manifest."""
        path = Path(path)
        entries, split = [], {}
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise MeshDiffError(f"{path}:{lineno}: expected 'id<TAB>path', got {raw!r}")
            mesh_path = Path(parts[1])
            if not mesh_path.is_absolute():
                mesh_path = path.parent / mesh_path
            entries.append((parts[0], load_mesh(mesh_path)))
            if len(parts) == 3:
                split[parts[0]] = parts[2]
        return cls(entries, split)

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    @property
    def meshes(self) -> list[Mesh]:
        return [m for _, m in self.entries]

    def subset(self, part: str) -> "MeshCorpus":
        return MeshCorpus([(i, m) for i, m in self.entries if self.split.get(i) == part],
                          {i: p for i, p in self.split.items() if p == part})

    def stacked(self) -> np.ndarray:
        """``(samples, 3n)`` coordinate matrix; all meshes must share the vertex count."""
        if not self.entries:
            raise ParameterError("empty corpus")
        n = self.entries[0][1].n_vertices
        for i, m in self.entries:
            if m.n_vertices != n:
                raise TopologyMismatchError(f"mesh {i!r} has {m.n_vertices} vertices, expected {n}")
        return np.stack([m.vertices.reshape(-1) for m in self.meshes])


# ---------------------------------------------------------------------------
# global metric over a corpus

@dataclass
class MetricReport:
    ids: list[str]
    values: np.ndarray
    skipped: list[str]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else float("nan")

    def to_csv(self) -> str:
        lines = ["id,global_distance"]
        lines += [f"{i},{v!r}" for i, v in zip(self.ids, self.values.tolist())]
        lines.append(f"mean,{self.mean!r}")
        lines.append(f"skipped,{len(self.skipped)}")
        return "\n".join(lines) + "\n"


def batch_global_metric(corpus: MeshCorpus, template: Mesh) -> MetricReport:
    """Global distance of every corpus mesh to the template; mismatched meshes are skipped."""
    w = edge_weights(template)
    ids, vals, skipped = [], [], []
    for ident, mesh in corpus.entries:
        if not template.same_topology(mesh):
            log.warning("skipping %s: topology differs from the template", ident)
            skipped.append(ident)
            continue
        ids.append(ident)
        vals.append(global_distance(template, mesh, w))
    return MetricReport(ids, np.asarray(vals, dtype=np.float64), skipped)


# ---------------------------------------------------------------------------
# PCA shape model

@dataclass(frozen=True)
class PcaModel:
    mean_shape: np.ndarray      # (3n,)
    components: np.ndarray      # (k, 3n), orthonormal rows
    variances: np.ndarray       # (k,), non-increasing

    @property
    def n_components(self) -> int:
        return len(self.variances)

    def _check(self, k):
        if not 0 <= k <= self.n_components:
            raise ParameterError(f"num_components must be in [0, {self.n_components}], got {k}")

    def reconstruct(self, x, num_components) -> np.ndarray:
        """Project rows of ``x`` onto the leading components and map back."""
        self._check(num_components)
        basis = self.components[:num_components]
        c = (np.atleast_2d(x) - self.mean_shape) @ basis.T
        return self.mean_shape + c @ basis


def fit_pca(corpus: MeshCorpus) -> PcaModel:
    x = corpus.stacked()
    if len(x) < 2:
        raise ParameterError("PCA needs at least two samples")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    k = min(x.shape[1], len(x) - 1)
    var = s[:k] ** 2 / (len(x) - 1)
    return PcaModel(mean, vt[:k], var)


def compactness(model: PcaModel, num_components: int) -> float:
    """Fraction of total variance captured by the leading components."""
    model._check(num_components)
    total = model.variances.sum()
    if total <= 0:
        return 1.0
    return float(min(1.0, model.variances[:num_components].sum() / total))


def _per_vertex_error(a, b, statistic="mean") -> float:
    d = (np.atleast_2d(a) - np.atleast_2d(b)).reshape(len(np.atleast_2d(a)), -1, 3)
    norms = np.linalg.norm(d, axis=2)
    if statistic == "rms":
        return float(np.sqrt(np.mean(norms ** 2)))
    return float(norms.mean())


def generalization(model: PcaModel, test: MeshCorpus, num_components: int, statistic: str = "mean") -> float:
    """Per-vertex Euclidean error of reconstructing the test meshes.

    ``statistic="mean"`` averages the per-vertex distances; ``"rms"`` takes
    their root mean square, which (unlike the mean) can never increase when a
    component is added, since projection minimizes the summed squares.
    """
    if statistic not in ("mean", "rms"):
        raise ParameterError(f"statistic must be 'mean' or 'rms', got {statistic!r}")
    x = test.stacked()
    if x.shape[1] != model.mean_shape.shape[0]:
        raise TopologyMismatchError("test meshes do not match the model's vertex count")
    return _per_vertex_error(model.reconstruct(x, num_components), x, statistic)


def specificity(model: PcaModel, test: MeshCorpus, num_components: int, num_samples: int = 100,
                seed: int = 0) -> float:
    """Mean distance from random model instances to their nearest test mesh."""
    model._check(num_components)
    if num_samples < 1:
        raise ParameterError("num_samples must be >= 1")
    if len(test) == 0:
        raise ParameterError("specificity needs a non-empty test set")
    x = test.stacked()
    rng = np.random.default_rng(seed)
    sd = np.sqrt(np.maximum(model.variances[:num_components], 0.0))
    coeff = rng.standard_normal((num_samples, num_components)) * sd
    samples = model.mean_shape + coeff @ model.components[:num_components]
    best = np.empty(num_samples)
    for i, s in enumerate(samples):
        d = np.linalg.norm((x - s).reshape(len(x), -1, 3), axis=2).mean(axis=1)
        best[i] = d.min()
    return float(best.mean())


def pca_report(model: PcaModel, test: MeshCorpus, counts, num_samples=100, seed=0) -> str:
    lines = ["num_components,compactness,generalization,specificity"]
    for k in counts:
        lines.append(f"{k},{compactness(model, k)!r},{generalization(model, test, k)!r},"
                     f"{specificity(model, test, k, num_samples, seed)!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# noise robustness

@dataclass
class NoiseSweepRow:
    sigma: float
    mean_error: float
    std_error: float
    converged: bool
    iterations: int


def perturb_free(pair: CorrespondedPair, classification: VertexClassification, sigma: float, rng) -> Mesh:
    """Tangential noise of scale ``sigma`` (absolute units) on the target's free vertices."""
    free = classification.free
    v = np.array(pair.target.vertices, copy=True)
    if sigma > 0 and free.size:
        normals = pair.target.vertex_normals()[free]
        v[free] += tangential_noise(normals, sigma, rng)
    return pair.target.with_vertices(v)


def noise_sweep(pair: CorrespondedPair, classification: VertexClassification,
                config: RegistrationConfig | None, sigmas, seed: int = 0) -> list[NoiseSweepRow]:
    """Refine noisy copies of the target and compare with the clean refinement.

    ``sigmas`` are in template mean edge lengths; reported errors too.
    """
    config = config or RegistrationConfig()
    ctx = prepare(pair.template, classification, config)
    mel = mean_edge_length(pair.template)
    clean, _ = refine(pair, config=config, context=ctx)
    rows = []
    for k, s in enumerate(sigmas):
        rng = np.random.default_rng([seed, k])
        noisy = perturb_free(pair, classification, float(s) * mel, rng)
        out, tr = refine(CorrespondedPair(pair.template, noisy, pair.raw_target_surface), config=config,
                         context=ctx)
        cmp = compare_refinements(out, clean, normalize_by=mel)
        rows.append(NoiseSweepRow(float(s), cmp.mean, cmp.std, tr.converged, tr.iterations))
    return rows


def noise_sweep_csv(rows) -> str:
    lines = ["sigma,mean_error,std_error,converged,iterations"]
    lines += [f"{r.sigma!r},{r.mean_error!r},{r.std_error!r},{int(r.converged)},{r.iterations}" for r in rows]
    return "\n".join(lines) + "\n"
