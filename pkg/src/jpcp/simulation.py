"""Synthetic multi-speaker sessions and the constraint-rate sweep harness.

Sessions are controllable stand-ins for real meetings: unit-norm speaker
centroids separated by a minimum angle, per-embedding tangent noise, and a
label sequence with geometric run lengths. Each embedding also carries one
synthetic word token so the text-domain metrics are exercised end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .constraints import ConstraintSet, simulate_constraints
from .data import EmbeddingSet, SegmentAnnotation
from .metrics import LabeledTranscript, compute_report
from .pipeline import PipelineConfig, normalize_variant, run_pipeline

HOP_SECONDS = 1.5
FRAME_SECONDS = 1.0

CENTROID_MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class SimulationConfig:
    """Controls for one synthetic session.

    ``intra_speaker_spread`` is a concentration: per-component tangent noise
    has scale 1/spread, so larger values give tighter speaker clouds.
    ``inter_speaker_separation`` is the minimum pairwise centroid angle in
    degrees; ``turn_structure`` the mean run length of consecutive
    same-speaker embeddings.
    """

    num_speakers: int = 4
    embeddings_per_speaker: tuple[int, int] = (15, 30)
    dim: int = 64
    intra_speaker_spread: float = 20.0
    inter_speaker_separation: float = 25.0
    turn_structure: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.num_speakers < 1:
            raise ValueError(f"num_speakers must be >= 1, got {self.num_speakers}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        lo, hi = self.embeddings_per_speaker
        if not 1 <= lo <= hi:
            raise ValueError(
                f"embeddings_per_speaker must be a nonempty range, got ({lo}, {hi})"
            )
        if self.intra_speaker_spread <= 0:
            raise ValueError("intra_speaker_spread must be positive")
        if not 0.0 < self.inter_speaker_separation < 180.0:
            raise ValueError("inter_speaker_separation must be in (0, 180) degrees")
        if self.turn_structure < 1.0:
            raise ValueError("turn_structure (mean run length) must be >= 1")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")


def _draw_centroids(rng: np.random.Generator, cfg: SimulationConfig) -> np.ndarray:
    max_cos = np.cos(np.radians(cfg.inter_speaker_separation))
    centroids: list[np.ndarray] = []
    rejections = 0
    while len(centroids) < cfg.num_speakers:
        v = rng.normal(size=cfg.dim)
        v /= np.linalg.norm(v)
        if all(float(c @ v) <= max_cos for c in centroids):
            centroids.append(v)
            continue
        rejections += 1
        if rejections > CENTROID_MAX_REJECTIONS:
            raise ValueError(
                f"could not place {cfg.num_speakers} centroids at >= "
                f"{cfg.inter_speaker_separation} degrees apart in dimension "
                f"{cfg.dim} after {CENTROID_MAX_REJECTIONS} rejections"
            )
    return np.stack(centroids)


def _label_sequence(rng: np.random.Generator, cfg: SimulationConfig) -> list[int]:
    lo, hi = cfg.embeddings_per_speaker
    quotas = {s: int(rng.integers(lo, hi + 1)) for s in range(cfg.num_speakers)}
    labels: list[int] = []
    current = -1
    while any(q > 0 for q in quotas.values()):
        candidates = sorted(s for s, q in quotas.items() if q > 0 and s != current)
        if not candidates:
            candidates = [current]
        current = int(candidates[rng.integers(len(candidates))])
        run = int(rng.geometric(1.0 / cfg.turn_structure))
        run = min(run, quotas[current])
        labels.extend([current] * run)
        quotas[current] -= run
    return labels


def generate_session(
    cfg: SimulationConfig,
) -> tuple[EmbeddingSet, list[int], list[SegmentAnnotation]]:
    """Draw one synthetic session: embeddings, truth labels, annotations.

    Each maximal same-speaker run becomes a non-dialogue segment flush with
    its embeddings; the gap between consecutive runs becomes a dialogue
    segment whose midpoint is a speaker-turn change point. Building
    constraints from these annotations therefore recovers within-run
    must-links and cross-run cannot-links. Deterministic per seed.
    """
    rng = np.random.default_rng(cfg.seed)
    centroids = _draw_centroids(rng, cfg)
    labels = _label_sequence(rng, cfg)
    n = len(labels)

    sigma = 1.0 / cfg.intra_speaker_spread
    vectors = np.empty((n, cfg.dim))
    for i, lab in enumerate(labels):
        c = centroids[lab]
        noise = rng.normal(scale=sigma, size=cfg.dim)
        noise -= (noise @ c) * c  # tangent to the sphere at the centroid
        v = c + noise
        vectors[i] = v / np.linalg.norm(v)

    starts = np.arange(n) * HOP_SECONDS
    ends = starts + FRAME_SECONDS
    words = tuple((f"w{i:04d}",) for i in range(n))
    embeddings = EmbeddingSet(
        vectors=vectors, start_times=starts, end_times=ends, words=words
    )

    annotations: list[SegmentAnnotation] = []
    seg_id = 0
    run_start = 0
    for i in range(1, n + 1):
        if i < n and labels[i] == labels[i - 1]:
            continue
        annotations.append(
            SegmentAnnotation(
                segment_id=seg_id,
                start_time=float(starts[run_start]),
                end_time=float(ends[i - 1]),
                is_dialogue=False,
                speaker_label=f"spk{labels[run_start]}",
            )
        )
        seg_id += 1
        if i < n:
            gap_start = float(ends[i - 1])
            gap_end = float(starts[i])
            annotations.append(
                SegmentAnnotation(
                    segment_id=seg_id,
                    start_time=gap_start,
                    end_time=gap_end,
                    is_dialogue=True,
                    turn_change_points=((gap_start + gap_end) / 2.0,),
                )
            )
            seg_id += 1
        run_start = i
    return embeddings, labels, annotations


def hard_instance() -> SimulationConfig:
    """Default difficult sweep instance.

    The spread is calibrated so the unconstrained pipeline (under the sweep
    defaults) lands well short of perfect, leaving headroom for constraints
    to show gains; large sessions keep per-trial scores stable.
    """
    return SimulationConfig(
        num_speakers=8,
        embeddings_per_speaker=(35, 45),
        dim=64,
        intra_speaker_spread=4.37,
        inter_speaker_separation=25.0,
        turn_structure=3.0,
    )


@dataclass(frozen=True)
class SweepSpec:
    """Grid for the constraint-rate experiment.

    Rates must be sorted ascending in [0, 1]. Trials are paired across
    rates: trial index t uses the same session and pipeline seed at every
    rate, and its constraint draws nest (a lower rate's pairs are a subset
    of a higher rate's), so the rate is the only treatment. The sweep's
    pipeline defaults disable confidence augmentation for the same reason
    and sharpen the refinement so the acoustic baseline is non-degenerate
    on the synthetic instances.
    """

    constraint_rates: tuple[float, ...] = (0.0, 0.01, 0.03, 0.06, 0.12)
    trials_per_rate: int = 20
    pipeline_variant: str = "e2cpm"
    simulation: SimulationConfig = field(default_factory=hard_instance)
    pipeline: PipelineConfig | None = None
    base_seed: int = 0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.constraint_rates)
        if not rates:
            raise ValueError("constraint_rates must not be empty")
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ValueError("constraint rates must lie in [0, 1]")
        if list(rates) != sorted(rates):
            raise ValueError("constraint rates must be sorted ascending")
        if self.trials_per_rate < 1:
            raise ValueError("trials_per_rate must be >= 1")
        object.__setattr__(self, "constraint_rates", rates)
        object.__setattr__(
            self, "pipeline_variant", normalize_variant(self.pipeline_variant)
        )
        if self.base_seed < 0:
            raise ValueError(f"base_seed must be nonnegative, got {self.base_seed}")

    def resolved_pipeline(self) -> PipelineConfig:
        if self.pipeline is not None:
            return replace(self.pipeline, variant=self.pipeline_variant)
        cfg = PipelineConfig(variant=self.pipeline_variant, row_keep_fraction=0.1)
        return replace(
            cfg,
            propagation=replace(cfg.propagation, lam=0.1, augment_fraction=0.0),
        )


def _trial_seeds(base_seed: int, trial_index: int) -> tuple[int, int, int]:
    # One deterministic stream per trial, shared by every rate, so trials
    # can run in any order and rate comparisons are paired; the three
    # children seed the session, the constraint draw, and the pipeline.
    ss = np.random.SeedSequence([base_seed, trial_index])
    state = ss.generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def run_trial(
    spec: SweepSpec, rate_index: int, trial_index: int
) -> dict:
    """Run one sweep cell and return its metric row."""
    rate = spec.constraint_rates[rate_index]
    session_seed, constraint_seed, pipeline_seed = _trial_seeds(
        spec.base_seed, trial_index
    )
    sim_cfg = replace(spec.simulation, seed=session_seed)
    embeddings, labels, _ = generate_session(sim_cfg)
    if rate > 0.0:
        cs = simulate_constraints(labels, rate, constraint_seed)
    else:
        cs = ConstraintSet.empty()
    pipe_cfg = replace(spec.resolved_pipeline(), seed=pipeline_seed)
    result = run_pipeline(embeddings, cs, pipe_cfg)

    pred_t = LabeledTranscript.from_entries(
        "trial", [int(x) for x in result.labels], embeddings.words
    )
    true_t = LabeledTranscript.from_entries("trial", labels, embeddings.words)
    report = compute_report(
        list(result.labels),
        labels,
        pred_k=result.num_speakers,
        true_k=len(set(labels)),
        pred_transcript=pred_t,
        truth_transcript=true_t,
    )
    return {
        "rate": rate,
        "trial": trial_index,
        "variant": spec.pipeline_variant,
        "ari": report.ari,
        "nmi": report.nmi,
        "spk_diff": report.spk_diff,
        "text_der": report.text_der,
    }


def run_sweep(spec: SweepSpec) -> list[dict]:
    """All sweep cells, rate-major then trial order. Deterministic per
    base seed regardless of execution order."""
    rows = []
    for ri in range(len(spec.constraint_rates)):
        for ti in range(spec.trials_per_rate):
            rows.append(run_trial(spec, ri, ti))
    return rows


def summarize_sweep(rows: Sequence[dict]) -> list[dict]:
    """Per-rate means and population standard deviations."""
    by_rate: dict[float, list[dict]] = {}
    for row in rows:
        by_rate.setdefault(row["rate"], []).append(row)
    out = []
    for rate in sorted(by_rate):
        group = by_rate[rate]
        summary = {"rate": rate, "trials": len(group)}
        for metric in ("ari", "nmi", "spk_diff", "text_der"):
            vals = np.array([g[metric] for g in group], dtype=np.float64)
            summary[f"{metric}_mean"] = float(vals.mean())
            summary[f"{metric}_std"] = float(vals.std())
        out.append(summary)
    return out


def sweep_csv_lines(rows: Sequence[dict]) -> list[str]:
    lines = ["rate,trial,variant,ari,nmi,spk_diff,text_der"]
    for r in rows:
        lines.append(
            f"{r['rate']:g},{r['trial']},{r['variant']},"
            f"{r['ari']:.6f},{r['nmi']:.6f},{r['spk_diff']},{r['text_der']:.6f}"
        )
    return lines


def summary_csv_lines(summaries: Sequence[dict]) -> list[str]:
    lines = [
        "rate,trials,ari_mean,ari_std,nmi_mean,nmi_std,"
        "spk_diff_mean,spk_diff_std,text_der_mean,text_der_std"
    ]
    for s in summaries:
        lines.append(
            f"{s['rate']:g},{s['trials']},"
            f"{s['ari_mean']:.6f},{s['ari_std']:.6f},"
            f"{s['nmi_mean']:.6f},{s['nmi_std']:.6f},"
            f"{s['spk_diff_mean']:.6f},{s['spk_diff_std']:.6f},"
            f"{s['text_der_mean']:.6f},{s['text_der_std']:.6f}"
        )
    return lines

