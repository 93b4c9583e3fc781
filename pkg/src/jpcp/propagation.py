"""Constraint propagation: diffuse sparse pairwise constraints to all pairs.

The closed form solves two symmetric positive-definite linear systems (one
per side) instead of inverting anything; the iterative fixed point is kept
as an independent cross-check used by the tests. The enhanced variant adds
k-NN graph sparsification and affinity-confidence constraint augmentation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .affinity import default_knn_k, knn_sparsify, scaled_adjacency, validate_affinity
from .constraints import ConstraintSet, to_constraint_matrix

logger = logging.getLogger("jpcp")


@dataclass(frozen=True)
class PropagationConfig:
    """Diffusion strength, neighborhood size, and augmentation thresholds.

    ``knn_k=None`` resolves to max(4, ceil(N/10)) at call time. Pairs with
    affinity above ``theta_m`` are must-link candidates, below ``theta_c``
    cannot-link candidates; ``augment_fraction`` of each candidate pool is
    sampled by ``seed``.
    """

    lam: float = 0.5
    knn_k: int | None = None
    theta_m: float = 0.9
    theta_c: float = 0.15
    augment_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must be in (0, 1), got {self.lam}")
        if not 0.0 <= self.augment_fraction <= 1.0:
            raise ValueError(
                f"augment_fraction must be in [0, 1], got {self.augment_fraction}"
            )
        if not self.theta_c < self.theta_m:
            raise ValueError(
                f"theta_c ({self.theta_c}) must be below theta_m ({self.theta_m})"
            )
        if self.knn_k is not None and self.knn_k < 1:
            raise ValueError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")


def _check_lambda(lam: float) -> float:
    # lam = 1 makes (I - L) singular on connected graphs, so the open upper
    # bound is enforced; lam = 0 is the no-diffusion identity.
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lam must be in [0, 1), got {lam}")
    return float(lam)


def e2cp_unclamped(z: np.ndarray, a: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form propagation before clamping: (1-lam)^2 B^-1 Z B^-1 with
    B = I - lam * D^{-1/2} A D^{-1/2}. Linear in Z; used by tests that check
    linearity ahead of the clamp."""
    lam = _check_lambda(lam)
    a = validate_affinity(a)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != a.shape:
        raise ValueError(f"shape mismatch: Z {z.shape} vs A {a.shape}")
    n = a.shape[0]
    operator = scaled_adjacency(a, isolate_zero_rows=True)
    b = np.eye(n) - lam * operator
    try:
        factor = cho_factor(b, lower=True)
    except np.linalg.LinAlgError as exc:  # unreachable for lam < 1, guarded anyway
        raise ValueError(f"(I - lam*L) not positive definite (lam={lam})") from exc
    left = cho_solve(factor, z)
    full = cho_solve(factor, left.T).T
    out = (1.0 - lam) ** 2 * full
    return (out + out.T) / 2.0


def e2cp(z: np.ndarray, a: np.ndarray, lam: float) -> np.ndarray:
    """Propagate a sparse constraint matrix over the affinity graph.

    Returns the symmetric propagated matrix clamped to [-1, 1], ready for
    :func:`jpcp.affinity.apply_constraints`.
    """
    return np.clip(e2cp_unclamped(z, a, lam), -1.0, 1.0)


def e2cp_iterative_oracle(
    z: np.ndarray,
    a: np.ndarray,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Fixed-point reference implementation of :func:`e2cp`.

    Iterates the column-wise diffusion F <- lam*L@F + (1-lam)*Z to
    convergence, then the row-wise one, and clamps. Deliberately avoids the
    linear solver so the two paths are independent; intended for tests.
    """
    lam = _check_lambda(lam)
    a = validate_affinity(a)
    z = np.asarray(z, dtype=np.float64)
    operator = scaled_adjacency(a, isolate_zero_rows=True)
    # Stop when the step is small enough that the remaining geometric tail
    # (factor lam per iteration) is below tol.
    step_tol = tol * (1.0 - lam)

    f = z.copy()
    for _ in range(max_iter):
        f_next = lam * (operator @ f) + (1.0 - lam) * z
        delta = np.abs(f_next - f).max(initial=0.0)
        f = f_next
        if delta <= step_tol:
            break
    else:
        raise ValueError(f"column diffusion did not converge in {max_iter} iterations")

    g = f.copy()
    for _ in range(max_iter):
        g_next = lam * (g @ operator) + (1.0 - lam) * f
        delta = np.abs(g_next - g).max(initial=0.0)
        g = g_next
        if delta <= step_tol:
            break
    else:
        raise ValueError(f"row diffusion did not converge in {max_iter} iterations")

    return np.clip(g, -1.0, 1.0)


def augment_constraints(
    cs: ConstraintSet, a: np.ndarray, cfg: PropagationConfig
) -> ConstraintSet:
    """Add high-confidence pairs from the affinity to the constraint set.

    Unconstrained pairs with affinity strictly above ``theta_m`` are must
    candidates, strictly below ``theta_c`` cannot candidates; a seeded
    uniform sample of floor(augment_fraction * count) from each pool is
    added. Existing constraints are never overwritten.
    """
    a = validate_affinity(a)
    if not 0.0 <= cfg.theta_m <= 1.0 or not 0.0 <= cfg.theta_c <= 1.0:
        raise ValueError("augmentation thresholds must lie in [0, 1]")
    n = a.shape[0]
    if cs.max_index() >= n:
        raise ValueError(f"constraint references index {cs.max_index()} but N={n}")
    if cfg.augment_fraction == 0.0:
        return cs

    taken = np.zeros((n, n), dtype=bool)
    for i, j in cs.must | cs.cannot:
        taken[i, j] = True
        taken[j, i] = True

    ii, jj = np.triu_indices(n, k=1)
    free = ~taken[ii, jj]
    vals = a[ii, jj]
    rng = np.random.default_rng(cfg.seed)

    def sample(mask: np.ndarray) -> list[tuple[int, int]]:
        idx = np.flatnonzero(mask)
        count = int(cfg.augment_fraction * idx.size)
        if count == 0:
            return []
        picks = rng.choice(idx.size, size=count, replace=False)
        return [(int(ii[idx[p]]), int(jj[idx[p]])) for p in picks]

    extra_must = sample(free & (vals > cfg.theta_m))
    extra_cannot = sample(free & (vals < cfg.theta_c))
    if extra_must or extra_cannot:
        logger.debug(
            "augmented constraints: +%d must, +%d cannot",
            len(extra_must),
            len(extra_cannot),
        )
    return ConstraintSet(
        must=cs.must | frozenset(extra_must),
        cannot=cs.cannot | frozenset(extra_cannot),
    )


def e2cpm(cs: ConstraintSet, a: np.ndarray, cfg: PropagationConfig) -> np.ndarray:
    """Enhanced propagation: augment constraints from high-confidence
    affinities, sparsify the graph to k nearest neighbors, then propagate.

    With ``knn_k = N - 1`` and ``augment_fraction = 0`` this reduces exactly
    to :func:`e2cp` on the original affinity.
    """
    a = validate_affinity(a)
    n = a.shape[0]
    k = cfg.knn_k if cfg.knn_k is not None else default_knn_k(n)
    augmented = augment_constraints(cs, a, cfg)
    z = to_constraint_matrix(augmented, n)
    sparse = knn_sparsify(a, k)
    return e2cp(z, sparse, cfg.lam)
