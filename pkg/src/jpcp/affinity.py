"""Pairwise affinity construction and refinement for spectral clustering.

All matrices are dense float64 ndarrays. A valid affinity is symmetric,
has unit diagonal, and entries in [0, 1]; :func:`validate_affinity` checks
the contract at operation boundaries.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .data import EmbeddingSet

logger = logging.getLogger("jpcp")

SYMMETRY_TOL = 1e-9
DAMPING = 0.01


def validate_affinity(a: np.ndarray, name: str = "affinity") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric within {SYMMETRY_TOL:g}")
    if a.size and (a.min() < -1e-12 or a.max() > 1.0 + 1e-12):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    if a.size and np.abs(np.diag(a) - 1.0).max() > 1e-12:
        raise ValueError(f"{name} diagonal must be 1")
    return a


def _vectors_of(embeddings) -> np.ndarray:
    if isinstance(embeddings, EmbeddingSet):
        return embeddings.vectors
    return np.asarray(embeddings, dtype=np.float64)


def cosine_affinity(embeddings) -> np.ndarray:
    """Shifted-cosine affinity a_ij = (1 + cos(e_i, e_j)) / 2.

    The shift maps cosine similarity into [0, 1] so the constrained
    adjustment algebra (see :func:`apply_constraints`) is well-posed.
    """
    v = _vectors_of(embeddings)
    if v.ndim != 2 or v.shape[0] < 1:
        raise ValueError(f"need an (N, D) matrix with N >= 1, got shape {v.shape}")
    norms = np.linalg.norm(v, axis=1)
    if (norms <= 0).any():
        bad = int(np.argmax(norms <= 0))
        raise ValueError(f"embedding {bad} has zero norm")
    u = v / norms[:, None]
    g = u @ u.T
    a = (1.0 + g) / 2.0
    a = (a + a.T) / 2.0
    np.clip(a, 0.0, 1.0, out=a)
    np.fill_diagonal(a, 1.0)
    return a


def refine(a: np.ndarray, row_keep_fraction: float = 0.3) -> np.ndarray:
    """Damp each row's weakest entries, then symmetrize.

    Entries below the row's (1 - row_keep_fraction) quantile are multiplied
    by a small factor rather than zeroed, so the graph used downstream never
    disconnects. The result is re-symmetrized as (A + A^T)/2 with the
    diagonal reset to 1.
    """
    a = validate_affinity(a)
    if not 0.0 < row_keep_fraction <= 1.0:
        raise ValueError(
            f"row_keep_fraction must be in (0, 1], got {row_keep_fraction}"
        )
    thresh = np.quantile(a, 1.0 - row_keep_fraction, axis=1)
    out = np.where(a < thresh[:, None], a * DAMPING, a)
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 1.0)
    return out


def apply_constraints(a: np.ndarray, z_hat: np.ndarray) -> np.ndarray:
    """Blend propagated constraints into the affinity.

    Entrywise: positive z pulls the affinity toward 1 as
    1 - (1 - z)(1 - a); non-positive z scales it down as (1 + z) * a.
    z = 0 leaves the entry untouched, z = +1 forces 1, z = -1 forces 0.
    """
    a = validate_affinity(a)
    z = np.asarray(z_hat, dtype=np.float64)
    if z.shape != a.shape:
        raise ValueError(f"shape mismatch: affinity {a.shape} vs constraints {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("propagated constraint matrix contains non-finite entries")
    if np.abs(z).max(initial=0.0) > 1.0 + 1e-9:
        raise ValueError(
            "propagated constraint entries exceed [-1, 1]; clamp before applying"
        )
    z = np.clip(z, -1.0, 1.0)
    out = np.where(z > 0, 1.0 - (1.0 - z) * (1.0 - a), (1.0 + z) * a)
    out = (out + out.T) / 2.0
    np.clip(out, 0.0, 1.0, out=out)
    np.fill_diagonal(out, 1.0)
    return out


def knn_sparsify(a: np.ndarray, k: int) -> np.ndarray:
    """Keep each row's k strongest off-diagonal entries, then symmetrize.

    Ties break toward the lower index. The symmetrization (A' + A'^T)/2
    halves entries kept in only one direction; the diagonal stays 1.
    """
    a = validate_affinity(a)
    n = a.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N={n}, got {k}")
    sparse = np.zeros_like(a)
    for i in range(n):
        row = a[i].copy()
        row[i] = -np.inf
        order = np.argsort(-row, kind="stable")
        keep = order[:k]
        sparse[i, keep] = a[i, keep]
    out = (sparse + sparse.T) / 2.0
    np.fill_diagonal(out, 1.0)
    return out


def normalized_laplacian(a: np.ndarray) -> np.ndarray:
    """Degree-normalized affinity D^{-1/2} A D^{-1/2}.

    This is the operator the propagation and clustering stages diffuse over
    (in spectral-graph terms the normalized adjacency; its eigenvalues lie
    in [-1, 1]). Zero row sums are an error.
    """
    a = validate_affinity(a)
    d = a.sum(axis=1)
    if (d <= 0).any():
        bad = int(np.argmax(d <= 0))
        raise ValueError(f"row {bad} has zero degree; graph operator undefined")
    s = 1.0 / np.sqrt(d)
    return np.outer(s, s) * a


def scaled_adjacency(a: np.ndarray, isolate_zero_rows: bool = False) -> np.ndarray:
    """D^{-1/2} A D^{-1/2} with optional tolerance for isolated nodes.

    With ``isolate_zero_rows`` the unit-diagonal requirement is waived and a
    zero-degree row/column is zeroed out (with a warning) instead of
    raising, which keeps downstream linear solves well-posed.
    """
    if not isolate_zero_rows:
        return normalized_laplacian(a)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"affinity must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("affinity contains non-finite entries")
    if np.abs(a - a.T).max(initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"affinity is not symmetric within {SYMMETRY_TOL:g}")
    d = a.sum(axis=1)
    zero = d <= 0
    if zero.any():
        logger.warning(
            "%d isolated node(s) in affinity graph; zeroing their rows/columns",
            int(zero.sum()),
        )
    s = np.where(zero, 0.0, 1.0 / np.sqrt(np.where(zero, 1.0, d)))
    return np.outer(s, s) * a


def default_knn_k(n: int) -> int:
    """Neighbor count used when none is configured: max(4, ceil(N/10)),
    capped at N - 1."""
    return min(max(4, math.ceil(n / 10)), max(1, n - 1))
