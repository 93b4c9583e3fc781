"""Pairwise must-link / cannot-link constraints over embedding indices.

Constraints come from three sources: semantic segment annotations (dialogue
flags and speaker-turn change points), simulation against ground-truth
labels, and affinity-confidence augmentation (see :mod:`jpcp.propagation`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import EmbeddingSet, SegmentAnnotation

logger = logging.getLogger("jpcp")

Pair = tuple[int, int]


def _canonical(i: int, j: int) -> Pair:
    if i == j:
        raise ValueError(f"constraint pair ({i}, {j}) links an index to itself")
    if i < 0 or j < 0:
        raise ValueError(f"constraint pair ({i}, {j}) has a negative index")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class ConstraintSet:
    """Symmetric must-link and cannot-link pair sets, stored canonically (i < j)."""

    must: frozenset[Pair]
    cannot: frozenset[Pair]

    def __post_init__(self):
        overlap = self.must & self.cannot
        if overlap:
            pair = sorted(overlap)[0]
            raise ValueError(
                f"pair {pair} appears in both must-link and cannot-link sets"
            )

    @classmethod
    def from_pairs(
        cls,
        must: Iterable[Sequence[int]] = (),
        cannot: Iterable[Sequence[int]] = (),
    ) -> "ConstraintSet":
        m = frozenset(_canonical(int(i), int(j)) for i, j in must)
        c = frozenset(_canonical(int(i), int(j)) for i, j in cannot)
        return cls(must=m, cannot=c)

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return cls(must=frozenset(), cannot=frozenset())

    def __len__(self) -> int:
        return len(self.must) + len(self.cannot)

    def is_empty(self) -> bool:
        return not self.must and not self.cannot

    def max_index(self) -> int:
        """Largest index referenced, or -1 when empty."""
        pairs = self.must | self.cannot
        return max((j for _, j in pairs), default=-1)


def build_constraints(
    annotations: Sequence[SegmentAnnotation], embeddings: EmbeddingSet
) -> ConstraintSet:
    """Derive pairwise constraints from semantic segment annotations.

    Two embeddings fully inside the same non-dialogue segment are must-linked;
    the last embedding ending at or before a speaker-turn change point is
    cannot-linked to the first embedding starting at or after it. A pair that
    qualifies for both resolves to cannot-link (a warning is logged): the
    cannot-link carries the discriminative information.

    Embeddings are associated to segments by midpoint; an embedding whose
    midpoint falls in no annotation is an error, as is an empty annotation
    list or annotations that overlap in time.
    """
    if not annotations:
        raise ValueError("cannot build constraints from an empty annotation list")
    anns = sorted(annotations, key=lambda a: (a.start_time, a.end_time))
    for prev, cur in zip(anns, anns[1:]):
        if cur.start_time < prev.end_time - 1e-9:
            raise ValueError(
                f"annotations overlap in time: segment {prev.segment_id} "
                f"[{prev.start_time}, {prev.end_time}] and segment "
                f"{cur.segment_id} [{cur.start_time}, {cur.end_time}]"
            )

    mids = embeddings.midpoints
    for i in range(len(embeddings)):
        if not any(a.contains(mids[i]) for a in anns):
            raise ValueError(
                f"embedding {i} (midpoint {mids[i]:.3f}s) is not covered by any "
                "annotation"
            )

    starts = embeddings.start_times
    ends = embeddings.end_times

    must: set[Pair] = set()
    for a in anns:
        if a.is_dialogue:
            continue
        inside = np.flatnonzero(
            (starts >= a.start_time - 1e-9) & (ends <= a.end_time + 1e-9)
        )
        for x in range(len(inside)):
            for y in range(x + 1, len(inside)):
                must.add(_canonical(int(inside[x]), int(inside[y])))

    cannot: set[Pair] = set()
    for a in anns:
        for t in a.turn_change_points:
            before = np.flatnonzero(ends <= t + 1e-9)
            after = np.flatnonzero(starts >= t - 1e-9)
            if before.size == 0 or after.size == 0:
                continue
            i = int(before[np.argmax(ends[before])])
            j = int(after[np.argmin(starts[after])])
            if i != j:
                cannot.add(_canonical(i, j))

    conflicts = must & cannot
    for pair in sorted(conflicts):
        logger.warning(
            "pair %s qualifies as both must-link and cannot-link; keeping the "
            "cannot-link",
            pair,
        )
    must -= conflicts
    return ConstraintSet(must=frozenset(must), cannot=frozenset(cannot))


def simulate_constraints(labels: Sequence, rate: float, seed: int) -> ConstraintSet:
    """Sample ground-truth constraints over a fraction of all embedding pairs.

    Draws floor(rate * N(N-1)/2) distinct unordered pairs uniformly without
    replacement; equal labels give a must-link, different labels a
    cannot-link. Deterministic for a fixed seed.
    """
    n = len(labels)
    if n < 2:
        raise ValueError(f"need at least 2 labeled embeddings, got {n}")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    for idx, lab in enumerate(labels):
        if lab is None:
            raise ValueError(f"embedding {idx} has no label; cannot simulate")

    ii, jj = np.triu_indices(n, k=1)
    total = ii.size
    count = int(rate * total)
    if count == 0:
        return ConstraintSet.empty()
    # Prefix of a seeded permutation: a uniform without-replacement sample,
    # and draws at a lower rate with the same seed are subsets of draws at a
    # higher rate.
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(total)[:count]
    must = []
    cannot = []
    for t in chosen:
        i, j = int(ii[t]), int(jj[t])
        if labels[i] == labels[j]:
            must.append((i, j))
        else:
            cannot.append((i, j))
    return ConstraintSet.from_pairs(must=must, cannot=cannot)


def to_constraint_matrix(cs: ConstraintSet, n: int) -> np.ndarray:
    """Encode a constraint set as the symmetric N x N matrix with entries in
    {-1, 0, +1}: +1 on must-linked pairs, -1 on cannot-linked pairs."""
    if cs.max_index() >= n:
        raise ValueError(
            f"constraint references index {cs.max_index()} but matrix has size {n}"
        )
    z = np.zeros((n, n), dtype=np.float64)
    for i, j in cs.must:
        z[i, j] = 1.0
        z[j, i] = 1.0
    for i, j in cs.cannot:
        z[i, j] = -1.0
        z[j, i] = -1.0
    return z


def matrix_to_pairs(z: np.ndarray) -> ConstraintSet:
    """Inverse of :func:`to_constraint_matrix` for round-trip checks."""
    z = np.asarray(z)
    must = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(z, 1) > 0))]
    cannot = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(z, 1) < 0))]
    return ConstraintSet.from_pairs(must=must, cannot=cannot)
