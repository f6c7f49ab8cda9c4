"""Dense mesh registration refinement by local rigid dividing and global diffusing."""
from __future__ import annotations

from .errors import (ClassificationConflictError, ContractError, DegenerateError, FactorizationError,
                     MeshDiffError, MeshFormatError, ParameterError, TopologyMismatchError,
                     UnsupportedTopologyError)
from .mesh import (CorrespondedPair, Mesh, VertexClass, VertexClassification, classify_vertices, load_mesh,
                   mean_edge_length, save_mesh)
from .line import LineConfig, segment_line
from .rigid import dividing_step, fit_rigid
from .diffuse import assign_lambda, build_system, diffusing_step
from .aabb import AabbTree, build_tree, closest_point
from .geodesic import farthest_point_sample, geodesic_field
from .pyramid import build_pyramid, load_pyramid, save_pyramid
from .registration import RegistrationConfig, compare_refinements, prepare, refine
from .metric import (EdgeWeights, ScaleEmbedding, edge_weights, global_distance, heatmap_export,
                     local_distance, scale_embedding, similarity_scores)
from .evaluation import (MeshCorpus, PcaModel, batch_global_metric, compactness, fit_pca, generalization,
                         noise_sweep, specificity)

__version__ = "0.1.0"
