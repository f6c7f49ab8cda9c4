"""Iterative dividing and diffusing on surfaces, full-resolution and cascaded."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .aabb import AabbTree
from .diffuse import DiffusionSystem, assign_lambda, build_system, diffusing_step
from .errors import ParameterError, TopologyMismatchError
from .geodesic import geodesic_field
from .mesh import CorrespondedPair, Mesh, VertexClassification, mean_edge_length, require_same_topology
from .pyramid import ResolutionPyramid, build_pyramid
from .rigid import dividing_step

log = logging.getLogger(__name__)

FULL = "full"
MULTIRES = "mr"


@dataclass
class RegistrationConfig:
    """Knobs for :func:`refine`.

    ``epsilon`` is relative to the template mean edge length; ``sigma`` (the
    decay length of the diffusion weights) is absolute and defaults to five
    template mean edge lengths.

    ``fixed_reaction`` feeds the fixed vertices' own rigid-fit offsets into the
    diffusion right-hand side, so a fixed vertex pushes its neighbours in the
    opposite direction. When the target is scaled relative to the template
    those offsets never vanish (a rigid fit cannot absorb scale), which shifts
    the fixed point away from the proportional placement; it is therefore off
    by default and fixed rows only act as constraints.
    """

    epsilon: float = 1e-3
    max_iterations: int = 1000
    mode: str = FULL
    lam_max: float = 1.0
    lam_min: float = 0.1
    sigma: float | None = None
    levels: int = 4
    geodesic: str = "dijkstra"
    fixed_reaction: bool = False

    def validate(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.mode not in (FULL, MULTIRES):
            raise ParameterError(f"mode must be '{FULL}' or '{MULTIRES}', got {self.mode!r}")
        if not self.lam_min > 0 or self.lam_max < 0:
            raise ParameterError("need lam_min > 0 and lam_max >= 0")
        if self.sigma is not None and not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.levels < 1:
            raise ParameterError("levels must be >= 1")
        return self


@dataclass
class TraceRecord:
    level: int
    iteration: int
    mean_offset: float
    elapsed_ms: float


@dataclass
class RegistrationTrace:
    records: list[TraceRecord] = field(default_factory=list)
    level_converged: list[bool] = field(default_factory=list)
    dividing_visits: int = 0
    mean_edge_length: float = float("nan")
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return bool(self.level_converged) and all(self.level_converged)

    @property
    def status(self) -> str:
        return "Converged" if self.converged else "MaxIterations"

    @property
    def iterations(self) -> int:
        return len(self.records)

    def iterations_per_level(self) -> list[int]:
        counts = [0] * len(self.level_converged)
        for r in self.records:
            counts[r.level] += 1
        return counts

    def to_csv(self) -> str:
        lines = ["level,iteration,mean_offset,elapsed_ms"]
        lines += [f"{r.level},{r.iteration},{r.mean_offset:.10g},{r.elapsed_ms:.3f}" for r in self.records]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Stage:
    active: np.ndarray          # vertices whose neighbourhoods are fitted
    free: np.ndarray            # vertices updated at this stage
    graph: sparse.csr_matrix
    system: DiffusionSystem


@dataclass(frozen=True)
class TemplateContext:
    """Everything that depends only on the template: weights, graphs, factorizations.

    Build once with :func:`prepare` and reuse for every target registered
    against the same template and classification.
    """

    template: Mesh
    classification: VertexClassification
    mean_edge_length: float
    stages: list[Stage]
    mode: str
    pyramid: ResolutionPyramid | None = None


def mean_offset(offsets, free_set=None) -> float:
    """Average Euclidean norm of the offsets of the free vertices."""
    o = np.asarray(offsets, dtype=np.float64)
    if free_set is not None:
        o = o[np.asarray(free_set, dtype=np.int64)]
    if len(o) == 0:
        raise ParameterError("mean offset over an empty free set")
    return float(np.linalg.norm(o, axis=1).mean())


def _restrict_graph(graph, keep_mask) -> sparse.csr_matrix:
    d = sparse.diags(keep_mask.astype(np.float64))
    g = sparse.csr_matrix(d @ sparse.csr_matrix(graph, dtype=np.float64) @ d)
    g.eliminate_zeros()
    g.sort_indices()
    return g


def weighted_classification(template: Mesh, classification: VertexClassification,
                            config: RegistrationConfig) -> VertexClassification:
    fixed = classification.fixed
    if fixed.size:
        d = geodesic_field(template, fixed, method=config.geodesic)
    else:
        d = np.full(template.n_vertices, np.inf)
    return assign_lambda(template, classification, d, config.lam_max, config.lam_min, config.sigma)


def prepare(template: Mesh, classification: VertexClassification, config: RegistrationConfig | None = None,
            pyramid: ResolutionPyramid | None = None) -> TemplateContext:
    """Precompute diffusion weights, neighbour graphs and factorized systems."""
    config = (config or RegistrationConfig()).validate()
    if len(classification.labels) != template.n_vertices:
        raise TopologyMismatchError("classification does not match the template vertex count")
    cls = weighted_classification(template, classification, config)
    interested = cls.interested_mask
    stages = []
    if config.mode == MULTIRES:
        if pyramid is None:
            pyramid = build_pyramid(template, cls, config.levels)
        for lv in pyramid.levels[:-1]:
            lcls = lv.classification(cls)
            verts = lv.vertices
            stages.append(Stage(verts, lv.free_vertices, lv.neighbor_graph,
                                build_system(lv.neighbor_graph, lcls, verts)))
    full_graph = _restrict_graph(template.adjacency, interested)
    stages.append(Stage(cls.interested, cls.free, full_graph, build_system(full_graph, cls)))
    return TemplateContext(template, cls, mean_edge_length(template), stages, config.mode, pyramid)


def refine(pair: CorrespondedPair, classification: VertexClassification | None = None,
           config: RegistrationConfig | None = None, *, context: TemplateContext | None = None,
           tree: AabbTree | None = None, callback=None):
    """Refine the target's tangential vertex placement against the template.

    Each iteration fits every active neighbourhood rigidly (dividing), smooths
    the resulting offsets with the prefactorized system (diffusing), moves the
    free vertices and projects them back onto ``pair.raw_target_surface``. A
    stage stops once the mean renewed offset of its free vertices drops below
    ``epsilon`` template mean edge lengths. In multi-resolution mode the
    pyramid levels run coarse to fine before the full-resolution stage.

    ``callback(level, iteration, vertices)`` is invoked after every iteration.
    Returns ``(refined_mesh, trace)``.
    """
    config = (config or RegistrationConfig()).validate()
    require_same_topology(pair.template, pair.target)
    if context is None:
        if classification is None:
            raise ParameterError("refine needs a classification or a prepared context")
        context = prepare(pair.template, classification, config)
    if tree is None:
        tree = AabbTree(pair.raw_target_surface)

    start = time.perf_counter()
    verts = np.array(pair.target.vertices, copy=True)
    tol = config.epsilon * context.mean_edge_length
    trace = RegistrationTrace(mean_edge_length=context.mean_edge_length)

    for level, stage in enumerate(context.stages):
        free_local = stage.system.free
        free = stage.system.vertices[free_local]
        done = False
        if free.size == 0:
            trace.level_converged.append(True)
            continue
        # without the reaction term fixed rows of the right-hand side are zero,
        # so their neighbourhoods need not be fitted at all
        active = stage.active if config.fixed_reaction else free
        for it in range(1, config.max_iterations + 1):
            prelim = dividing_step(pair, active, stage.graph, target_vertices=verts)
            trace.dividing_visits += len(active)
            rhs = prelim.offsets[stage.system.vertices]
            if not config.fixed_reaction:
                rhs[stage.system.fixed] = 0.0
            reg = diffusing_step(stage.system, rhs)
            moved = verts[free] + reg
            projected, _, _ = tree.closest_points(moved)
            renewed = projected - verts[free]
            verts[free] = projected
            ot = mean_offset(renewed)
            trace.records.append(TraceRecord(level, it, ot, 1e3 * (time.perf_counter() - start)))
            if callback is not None:
                callback(level, it, verts)
            if ot < tol:
                done = True
                break
        if not done:
            log.warning("level %d did not converge in %d iterations", level, config.max_iterations)
        trace.level_converged.append(done)

    trace.wall_time = time.perf_counter() - start
    return pair.target.with_vertices(verts), trace


@dataclass
class RefinementComparison:
    distances: np.ndarray
    mean: float
    std: float
    normalizer: float = 1.0


def compare_refinements(result_a: Mesh, result_b: Mesh, normalize_by: float | None = None) -> RefinementComparison:
    """Per-vertex distance between two refinements of the same target."""
    require_same_topology(result_a, result_b)
    d = np.linalg.norm(result_a.vertices - result_b.vertices, axis=1)
    scale = 1.0 if normalize_by is None else float(normalize_by)
    d = d / scale
    return RefinementComparison(d, float(d.mean()), float(d.std()), scale)
