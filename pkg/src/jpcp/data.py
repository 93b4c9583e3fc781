"""Core session records: speaker embeddings and semantic segment annotations."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger("jpcp")

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SegmentAnnotation:
    """A time segment produced by the semantic front-end.

    ``is_dialogue`` flags multi-speaker content; ``turn_change_points`` are
    absolute times (seconds) at which the speaker changes, each strictly
    inside the segment. ``speaker_label`` is ground truth, present only for
    simulation and evaluation.
    """

    segment_id: int
    start_time: float
    end_time: float
    is_dialogue: bool
    turn_change_points: tuple[float, ...] = ()
    speaker_label: str | None = None

    def __post_init__(self):
        if not self.start_time < self.end_time:
            raise ValueError(
                f"segment {self.segment_id}: start_time {self.start_time} must be "
                f"< end_time {self.end_time}"
            )
        for t in self.turn_change_points:
            if not (self.start_time < t < self.end_time):
                raise ValueError(
                    f"segment {self.segment_id}: turn change point {t} is not "
                    f"strictly inside ({self.start_time}, {self.end_time})"
                )

    def contains(self, t: float) -> bool:
        return self.start_time <= t <= self.end_time


@dataclass(frozen=True)
class EmbeddingRecord:
    """One speaker embedding with its time extent and optional word payload."""

    index: int
    vector: np.ndarray
    start_time: float
    end_time: float
    words: tuple[str, ...] | None = None


@dataclass(frozen=True)
class EmbeddingSet:
    """N unit-norm embeddings of dimension D plus per-embedding time extents.

    ``vectors`` is (N, D) float64 with unit rows (checked to 1e-6).
    ``words`` optionally carries the tokens spoken in each embedding's span,
    used by the text-domain metrics.
    """

    vectors: np.ndarray
    start_times: np.ndarray
    end_times: np.ndarray
    words: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"vectors must be 2-D (N, D), got shape {v.shape}")
        if not np.isfinite(v).all():
            bad = int(np.argwhere(~np.isfinite(v).all(axis=1))[0][0])
            raise ValueError(f"embedding {bad} has non-finite entries")
        norms = np.linalg.norm(v, axis=1)
        off = np.abs(norms - 1.0)
        if off.size and off.max() > UNIT_NORM_TOL:
            bad = int(np.argmax(off))
            raise ValueError(
                f"embedding {bad} has norm {norms[bad]:.8f}; expected unit norm "
                f"within {UNIT_NORM_TOL:g} (normalize on load)"
            )
        st = np.asarray(self.start_times, dtype=np.float64)
        et = np.asarray(self.end_times, dtype=np.float64)
        if st.shape != (v.shape[0],) or et.shape != (v.shape[0],):
            raise ValueError("start_times/end_times must have one entry per embedding")
        if (st >= et).any():
            bad = int(np.argmax(st >= et))
            raise ValueError(f"embedding {bad}: start_time must be < end_time")
        if self.words is not None and len(self.words) != v.shape[0]:
            raise ValueError("words must have one token list per embedding")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "start_times", st)
        object.__setattr__(self, "end_times", et)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def midpoints(self) -> np.ndarray:
        return (self.start_times + self.end_times) / 2.0

    def record(self, i: int) -> EmbeddingRecord:
        return EmbeddingRecord(
            index=i,
            vector=self.vectors[i],
            start_time=float(self.start_times[i]),
            end_time=float(self.end_times[i]),
            words=self.words[i] if self.words is not None else None,
        )

    @classmethod
    def from_vectors(
        cls,
        vectors: np.ndarray,
        start_times: Sequence[float] | None = None,
        end_times: Sequence[float] | None = None,
        words: Sequence[Sequence[str]] | None = None,
        normalize: bool = False,
        hop_seconds: float = 1.5,
        frame_seconds: float | None = None,
    ) -> "EmbeddingSet":
        """Build a set from raw vectors; default time extents tile the session.

        With ``normalize=True`` rows are rescaled to unit norm (zero rows are
        an error). Without explicit times, embedding i spans
        [i * hop_seconds, i * hop_seconds + frame_seconds).
        """
        v = np.asarray(vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"vectors must be 2-D (N, D), got shape {v.shape}")
        if normalize:
            norms = np.linalg.norm(v, axis=1)
            if (norms <= 0).any():
                bad = int(np.argmax(norms <= 0))
                raise ValueError(f"embedding {bad} has zero norm; cannot normalize")
            worst = float(np.abs(norms - 1.0).max()) if norms.size else 0.0
            if worst > 1e-3:
                logger.warning(
                    "embedding norms deviate from 1 by up to %.3g; renormalizing", worst
                )
            v = v / norms[:, None]
        n = v.shape[0]
        if frame_seconds is None:
            frame_seconds = hop_seconds
        if start_times is None:
            start_times = np.arange(n) * hop_seconds
            end_times = start_times + frame_seconds
        elif end_times is None:
            raise ValueError("end_times required when start_times are given")
        w = None
        if words is not None:
            w = tuple(tuple(str(t) for t in toks) for toks in words)
        return cls(vectors=v, start_times=np.asarray(start_times),
                   end_times=np.asarray(end_times), words=w)

    def with_vectors(self, vectors: np.ndarray, normalize: bool = False) -> "EmbeddingSet":
        """Same time extents and words, new vectors (e.g. after projection)."""
        v = np.asarray(vectors, dtype=np.float64)
        if normalize:
            norms = np.linalg.norm(v, axis=1)
            if (norms <= 0).any():
                bad = int(np.argmax(norms <= 0))
                raise ValueError(f"projected embedding {bad} collapsed to zero norm")
            v = v / norms[:, None]
        return EmbeddingSet(
            vectors=v,
            start_times=self.start_times,
            end_times=self.end_times,
            words=self.words,
        )
