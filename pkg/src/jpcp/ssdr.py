"""Constrained embedding normalization: linear projection that keeps the
dominant variance structure while folding in pairwise constraints.

The projection solves a trace-maximization eigenproblem over a
constraint-weighted pair matrix. Columns of the returned projection are
orthonormal eigenvectors ordered by descending eigenvalue, with a
deterministic sign convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .data import EmbeddingSet

logger = logging.getLogger("jpcp")


@dataclass(frozen=True)
class SsdrConfig:
    """Weights for the must/cannot terms and the output dimension.

    ``out_dim=None`` resolves to min(D, 32) at projection time.
    """

    alpha: float = 1.0
    beta: float = 1.0
    out_dim: int | None = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.out_dim is not None and self.out_dim < 1:
            raise ValueError(f"out_dim must be >= 1, got {self.out_dim}")

    def resolve_dim(self, input_dim: int) -> int:
        if self.out_dim is None:
            return min(input_dim, 32)
        if self.out_dim > input_dim:
            raise ValueError(
                f"out_dim {self.out_dim} exceeds embedding dimension {input_dim}"
            )
        return self.out_dim


def ssdr_weight_matrix(cs: ConstraintSet, n: int, cfg: SsdrConfig) -> np.ndarray:
    """Constraint-weighted pair matrix: uniform 1/N^2 background, must pairs
    raised by alpha/|M|, cannot pairs lowered by beta/|C|."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if cs.max_index() >= n:
        raise ValueError(f"constraint references index {cs.max_index()} but n={n}")
    s = np.full((n, n), 1.0 / n**2, dtype=np.float64)
    if cs.must:
        bump = cfg.alpha / len(cs.must)
        for i, j in cs.must:
            s[i, j] += bump
            s[j, i] += bump
    if cs.cannot:
        drop = cfg.beta / len(cs.cannot)
        for i, j in cs.cannot:
            s[i, j] -= drop
            s[j, i] -= drop
    return s


def _projection_weight_matrix(cs: ConstraintSet, n: int, cfg: SsdrConfig) -> np.ndarray:
    # Signs oriented so that maximizing the projected pair-scatter contracts
    # must-linked pairs and expands cannot-linked ones; the uniform background
    # keeps the no-constraint case equal to plain PCA.
    s = np.full((n, n), 1.0 / n**2, dtype=np.float64)
    if cs.must:
        w = cfg.alpha / len(cs.must)
        for i, j in cs.must:
            s[i, j] -= w
            s[j, i] -= w
    if cs.cannot:
        w = cfg.beta / len(cs.cannot)
        for i, j in cs.cannot:
            s[i, j] += w
            s[j, i] += w
    return s


def _fix_signs(w: np.ndarray) -> np.ndarray:
    # Largest-magnitude component of each column made positive (ties: lowest
    # row index, via argmax) so eigenvector signs are reproducible.
    out = w.copy()
    for c in range(out.shape[1]):
        lead = int(np.argmax(np.abs(out[:, c])))
        if out[lead, c] < 0:
            out[:, c] = -out[:, c]
    return out


def projection_objective(w: np.ndarray, m: np.ndarray) -> float:
    """Trace objective tr(W^T M W) maximized by the top eigenvectors of M."""
    return float(np.trace(w.T @ m @ w))


def scatter_operator(embeddings: EmbeddingSet, cs: ConstraintSet, cfg: SsdrConfig) -> np.ndarray:
    """The D x D operator whose top eigenvectors define the projection.

    Built as E L E^T where E holds the mean-centered embeddings column-wise
    and L is the unnormalized Laplacian of the constraint-weighted pair
    matrix.
    """
    x = embeddings.vectors - embeddings.vectors.mean(axis=0)
    n = x.shape[0]
    s = _projection_weight_matrix(cs, n, cfg)
    lap = np.diag(s.sum(axis=1)) - s
    m = x.T @ lap @ x
    return (m + m.T) / 2.0


def ssdr_project(
    embeddings: EmbeddingSet, cs: ConstraintSet, cfg: SsdrConfig
) -> tuple[np.ndarray, EmbeddingSet]:
    """Project embeddings to ``out_dim`` dimensions under pairwise constraints.

    Mean-centers the embeddings, forms the constraint-weighted scatter
    operator, and projects onto its top eigenvectors. With no constraints
    this reduces exactly to PCA of the centered embeddings. Projected
    vectors are re-normalized to unit length so cosine affinities stay
    valid downstream.

    Returns (W, projected) where W is D x d with orthonormal columns.
    """
    n = len(embeddings)
    if n < 2:
        raise ValueError(f"need at least 2 embeddings to project, got {n}")
    if cs.max_index() >= n:
        raise ValueError(f"constraint references index {cs.max_index()} but N={n}")
    d = cfg.resolve_dim(embeddings.dim)

    m = scatter_operator(embeddings, cs, cfg)
    eigvals, eigvecs = np.linalg.eigh(m)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]

    scale = np.abs(eigvals).max(initial=0.0)
    rank = int((np.abs(eigvals) > scale * 1e-10).sum()) if scale > 0 else 0
    if d > rank:
        logger.warning(
            "requested projection dim %d exceeds scatter rank %d; reducing", d, rank
        )
        d = max(rank, 1)

    w = _fix_signs(eigvecs[:, :d])
    x = embeddings.vectors - embeddings.vectors.mean(axis=0)
    projected = embeddings.with_vectors(x @ w, normalize=True)
    return w, projected
