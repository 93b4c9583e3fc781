"""Constraint-driven speaker-diarization back-end.

Turns semantic speaker annotations into pairwise must-link/cannot-link
constraints, folds them into embedding normalization and affinity
refinement via constraint propagation, clusters spectrally, and scores the
result. Works on real embedding files or the built-in session simulator.
"""

from .affinity import (
    apply_constraints,
    cosine_affinity,
    knn_sparsify,
    normalized_laplacian,
    refine,
)
from .clustering import (
    ClusteringConfig,
    DiarizationResult,
    estimate_num_speakers,
    spectral_cluster,
)
from .constraints import (
    ConstraintSet,
    build_constraints,
    simulate_constraints,
    to_constraint_matrix,
)
from .data import EmbeddingRecord, EmbeddingSet, SegmentAnnotation
from .metrics import (
    LabeledTranscript,
    MetricsReport,
    adjusted_rand_index,
    compute_report,
    cpwer,
    normalized_mutual_information,
    speaker_count_diff,
    text_der,
)
from .pipeline import PipelineConfig, run_pipeline
from .propagation import (
    PropagationConfig,
    augment_constraints,
    e2cp,
    e2cp_iterative_oracle,
    e2cpm,
)
from .simulation import SimulationConfig, SweepSpec, generate_session, run_sweep
from .ssdr import SsdrConfig, ssdr_project, ssdr_weight_matrix

__version__ = "0.1.0"

__all__ = [
    "ClusteringConfig",
    "ConstraintSet",
    "DiarizationResult",
    "EmbeddingRecord",
    "EmbeddingSet",
    "LabeledTranscript",
    "MetricsReport",
    "PipelineConfig",
    "PropagationConfig",
    "SegmentAnnotation",
    "SimulationConfig",
    "SsdrConfig",
    "SweepSpec",
    "adjusted_rand_index",
    "apply_constraints",
    "augment_constraints",
    "build_constraints",
    "compute_report",
    "cosine_affinity",
    "cpwer",
    "e2cp",
    "e2cp_iterative_oracle",
    "e2cpm",
    "estimate_num_speakers",
    "generate_session",
    "knn_sparsify",
    "normalized_laplacian",
    "normalized_mutual_information",
    "refine",
    "run_pipeline",
    "run_sweep",
    "simulate_constraints",
    "spectral_cluster",
    "speaker_count_diff",
    "ssdr_project",
    "ssdr_weight_matrix",
    "text_der",
    "to_constraint_matrix",
]
