"""End-to-end diarization back-end: compose normalization, affinity
refinement, constraint propagation, and spectral clustering per variant."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .affinity import apply_constraints, cosine_affinity, refine
from .clustering import ClusteringConfig, DiarizationResult, spectral_cluster
from .constraints import ConstraintSet, to_constraint_matrix
from .data import EmbeddingSet
from .propagation import PropagationConfig, e2cp, e2cpm
from .ssdr import SsdrConfig, ssdr_project

VARIANTS = ("acoustic-only", "ssdr+sc", "e2cp", "e2cpm", "ssdr+e2cpm")

_ALIASES = {
    "acoustic-only": "acoustic-only",
    "acoustic_only": "acoustic-only",
    "acoustic": "acoustic-only",
    "sc": "acoustic-only",
    "ssdr+sc": "ssdr+sc",
    "ssdr-sc": "ssdr+sc",
    "e2cp": "e2cp",
    "e2cpm": "e2cpm",
    "ssdr+e2cpm": "ssdr+e2cpm",
    "ssdr-e2cpm": "ssdr+e2cpm",
}


def normalize_variant(name: str) -> str:
    key = name.strip().lower().replace(" ", "")
    if key not in _ALIASES:
        raise ValueError(
            f"unknown pipeline variant {name!r}; expected one of {', '.join(VARIANTS)}"
        )
    return _ALIASES[key]


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the back-end in one place.

    The top-level ``seed`` drives all randomness: the propagation and
    clustering stages derive their own streams from it, so a single seed
    reproduces a full run. ``constraint_rate``/``constraint_seed`` apply
    only when constraints are simulated from ground truth.
    """

    variant: str = "ssdr+e2cpm"
    row_keep_fraction: float = 0.3
    seed: int = 0
    ssdr: SsdrConfig = field(default_factory=SsdrConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    constraint_source: str = "auto"
    constraint_rate: float = 0.06

    def __post_init__(self):
        object.__setattr__(self, "variant", normalize_variant(self.variant))
        if not 0.0 < self.row_keep_fraction <= 1.0:
            raise ValueError(
                f"row_keep_fraction must be in (0, 1], got {self.row_keep_fraction}"
            )
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.constraint_source not in ("auto", "file", "annotations", "simulated", "none"):
            raise ValueError(f"unknown constraint source {self.constraint_source!r}")
        if not 0.0 <= self.constraint_rate <= 1.0:
            raise ValueError(
                f"constraint_rate must be in [0, 1], got {self.constraint_rate}"
            )

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "row_keep_fraction": self.row_keep_fraction,
            "seed": self.seed,
            "constraint_source": self.constraint_source,
            "constraint_rate": self.constraint_rate,
            "ssdr": {
                "alpha": self.ssdr.alpha,
                "beta": self.ssdr.beta,
                "out_dim": self.ssdr.out_dim,
            },
            "propagation": {
                "lambda": self.propagation.lam,
                "knn_k": self.propagation.knn_k,
                "theta_m": self.propagation.theta_m,
                "theta_c": self.propagation.theta_c,
                "augment_fraction": self.propagation.augment_fraction,
            },
            "clustering": {
                "max_speakers": self.clustering.max_speakers,
                "fixed_k": self.clustering.fixed_k,
                "kmeans_restarts": self.clustering.kmeans_restarts,
            },
        }


def _derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def run_pipeline(
    embeddings: EmbeddingSet,
    constraints: ConstraintSet | None,
    config: PipelineConfig,
    capture: dict | None = None,
) -> DiarizationResult:
    """Run the configured variant and return per-embedding speaker labels.

    Variants: "acoustic-only" clusters the refined cosine affinity;
    "ssdr+sc" projects the embeddings under constraints first; "e2cp" and
    "e2cpm" propagate constraints over the refined affinity and blend them
    in before clustering; "ssdr+e2cpm" does both. Pass ``capture`` to
    collect intermediate matrices for debugging dumps.
    """
    if constraints is None:
        constraints = ConstraintSet.empty()
    cs = constraints
    variant = config.variant

    prop_cfg = replace(config.propagation, seed=_derive_seed(config.seed, 1))
    cluster_cfg = replace(config.clustering, seed=_derive_seed(config.seed, 2))

    emb = embeddings
    if variant in ("ssdr+sc", "ssdr+e2cpm"):
        w, emb = ssdr_project(embeddings, cs, config.ssdr)
        if capture is not None:
            capture["projection"] = w

    a = refine(cosine_affinity(emb), config.row_keep_fraction)
    if capture is not None:
        capture["affinity"] = a

    if variant in ("e2cp", "e2cpm", "ssdr+e2cpm"):
        if variant == "e2cp":
            z = to_constraint_matrix(cs, len(emb))
            z_hat = e2cp(z, a, prop_cfg.lam)
        else:
            z_hat = e2cpm(cs, a, prop_cfg)
        a = apply_constraints(a, z_hat)
        if capture is not None:
            capture["z_hat"] = z_hat
            capture["adjusted_affinity"] = a

    return spectral_cluster(a, cluster_cfg)
