"""Spectral clustering over an affinity matrix with eigengap speaker-count
estimation and deterministic seeded k-means."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import normalized_laplacian, validate_affinity


@dataclass(frozen=True)
class ClusteringConfig:
    max_speakers: int = 16
    fixed_k: int | None = None
    kmeans_restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_speakers < 1:
            raise ValueError(f"max_speakers must be >= 1, got {self.max_speakers}")
        if self.kmeans_restarts < 1:
            raise ValueError(
                f"kmeans_restarts must be >= 1, got {self.kmeans_restarts}"
            )
        if self.fixed_k is not None and self.fixed_k < 1:
            raise ValueError(f"fixed_k must be >= 1, got {self.fixed_k}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")


@dataclass(frozen=True)
class DiarizationResult:
    """Per-embedding cluster labels in [0, k), the speaker count used, and
    the affinity spectrum that drove the count estimate."""

    labels: np.ndarray
    num_speakers: int
    eigenvalues: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        present = np.unique(labels)
        expected = np.arange(self.num_speakers)
        if labels.size and not np.array_equal(present, expected):
            raise ValueError(
                f"labels must cover every cluster id in [0, {self.num_speakers})"
            )
        object.__setattr__(self, "labels", labels)


def _descending_spectrum(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(normalized_laplacian(a))
    return vals[::-1], vecs[:, ::-1]


def estimate_num_speakers(a: np.ndarray, max_speakers: int) -> int:
    """Largest-eigengap estimate of the cluster count.

    Scans k in [1, max_speakers] for the largest drop between consecutive
    eigenvalues of the degree-normalized affinity; ties go to the smallest k.
    """
    a = validate_affinity(a)
    n = a.shape[0]
    if max_speakers < 1:
        raise ValueError(f"max_speakers must be >= 1, got {max_speakers}")
    if n < 2:
        return 1
    vals, _ = _descending_spectrum(a)
    kmax = min(max_speakers, n - 1)
    gaps = vals[:kmax] - vals[1 : kmax + 1]
    return int(np.argmax(gaps)) + 1


def _kmeans_plusplus_init(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=points.dtype)
    first = int(rng.integers(n))
    centers[0] = points[first]
    dist_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = dist_sq.sum()
        if total <= 0:
            # all remaining points coincide with a chosen center
            centers[c] = points[int(rng.integers(n))]
            continue
        probs = dist_sq / total
        pick = int(rng.choice(n, p=probs))
        centers[c] = points[pick]
        dist_sq = np.minimum(dist_sq, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    points: np.ndarray, centers: np.ndarray, max_iter: int = 300
) -> tuple[np.ndarray, float]:
    k = centers.shape[0]
    n = points.shape[0]
    prev = None
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d, axis=1)
        # Deterministic empty-cluster repair: seize the point farthest from
        # its assigned center (lowest index on ties).
        for c in range(k):
            if (labels == c).any():
                continue
            assigned = d[np.arange(n), labels]
            far = int(np.argmax(assigned))
            labels[far] = c
            centers[c] = points[far]
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    inertia = 0.0
    for c in range(k):
        members = points[labels == c]
        if members.size:
            inertia += float(((members - members.mean(axis=0)) ** 2).sum())
    return labels, inertia


def kmeans(points: np.ndarray, k: int, restarts: int, seed: int) -> np.ndarray:
    """Seeded k-means++ with restarts; returns the lowest-inertia labeling.

    Restart r draws from an independent stream derived from (seed, r); ties
    on inertia resolve to the lowest restart index, so results never depend
    on execution order.
    """
    points = np.asarray(points, dtype=np.float64)
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds number of points {points.shape[0]}")
    best_labels = None
    best_inertia = np.inf
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        centers = _kmeans_plusplus_init(points, k, rng)
        labels, inertia = _lloyd(points, centers.copy())
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    return best_labels


def _relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[int(lab)] = len(mapping)
        out[i] = mapping[int(lab)]
    return out


def spectral_cluster(a: np.ndarray, cfg: ClusteringConfig) -> DiarizationResult:
    """Cluster embeddings from their affinity matrix.

    Uses the top-k eigenvectors of the degree-normalized affinity
    (k fixed by config or eigengap-estimated), row-normalizes the spectral
    embedding, and runs seeded k-means. Cluster ids are renumbered in order
    of first appearance, so output labels are stable for a fixed seed.
    """
    a = validate_affinity(a)
    n = a.shape[0]
    if n == 1:
        return DiarizationResult(
            labels=np.zeros(1, dtype=np.int64),
            num_speakers=1,
            eigenvalues=np.ones(1),
        )
    vals, vecs = _descending_spectrum(a)
    if cfg.fixed_k is not None:
        k = cfg.fixed_k
        if k > n:
            raise ValueError(f"fixed_k={k} exceeds number of embeddings {n}")
    else:
        kmax = min(cfg.max_speakers, n - 1)
        gaps = vals[:kmax] - vals[1 : kmax + 1]
        k = int(np.argmax(gaps)) + 1

    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1)
    emb = emb / np.maximum(norms, 1e-12)[:, None]
    labels = kmeans(emb, k, cfg.kmeans_restarts, cfg.seed)
    labels = _relabel_by_first_appearance(labels)
    return DiarizationResult(labels=labels, num_speakers=k, eigenvalues=vals)
