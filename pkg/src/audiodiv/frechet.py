"""Gaussian summary statistics and the Frechet distance between them.

The distance between N(m1, S1) and N(m2, S2) is

    ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2))

The non-symmetric product S1 S2 is never decomposed directly: the cross term
is evaluated through the congruent symmetric form sqrt(A) S2 sqrt(A), which
has the same spectrum and keeps the eigenproblem real and stable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientData, NumericalError
from .score import LOWER_BETTER, DivergenceScore
from .tensor_io import EmbeddingSet

SYMMETRY_TOL = 1e-8
RESIDUE_FLAG_TOL = 1e-6


@dataclass(frozen=True)
class GaussianStats:
    """Mean vector, covariance matrix, and sample count of one embedding set."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DomainError(f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}")
        if self.n < 2:
            raise InsufficientData(f"Gaussian fit needs n >= 2, got {self.n}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_gaussian(embeddings: EmbeddingSet) -> GaussianStats:
    """Column means and unbiased (N-1) sample covariance, explicitly symmetrized."""
    data = embeddings.data
    if data.shape[0] < 2:
        raise InsufficientData(f"need at least 2 rows to fit a Gaussian, got {data.shape[0]}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (data.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, cov=cov, n=data.shape[0])


def matrix_sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, clamping tiny negative modes."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError(f"matrix square root needs a square matrix, got {matrix.shape}")
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if np.abs(matrix - matrix.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise DomainError("matrix is asymmetric beyond tolerance")
    try:
        eigvals, eigvecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    eigvals = np.clip(eigvals, 0.0, None)
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return (root + root.T) / 2.0


def frechet_distance(g1: GaussianStats, g2: GaussianStats) -> DivergenceScore:
    """Frechet (2-Wasserstein) distance between two Gaussian fits; lower is better."""
    if g1.dim != g2.dim:
        raise DomainError(f"dimension mismatch: {g1.dim} vs {g2.dim}")
    start = time.perf_counter()
    root1 = matrix_sqrt_psd(g1.cov)
    cross = matrix_sqrt_psd(root1 @ g2.cov @ root1)
    mean_term = float(np.sum((g1.mean - g2.mean) ** 2))
    trace_term = float(np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    flags = []
    if trace_term < 0.0:
        # Rounding can leave a small negative trace residue; clamp, and flag
        # when it is large enough to hint at ill-conditioning.
        if abs(trace_term) > RESIDUE_FLAG_TOL:
            flags.append("negative_trace_residue_clamped")
        trace_term = 0.0
    value = max(mean_term + trace_term, 0.0)
    return DivergenceScore(
        metric="fad",
        value=value,
        orientation=LOWER_BETTER,
        config={"covariance": "unbiased", "flags": flags},
        n_reference=g1.n,
        n_candidate=g2.n,
        wall_time_s=time.perf_counter() - start,
    )


def frechet_distance_from_sets(reference: EmbeddingSet, candidate: EmbeddingSet) -> DivergenceScore:
    """Convenience wrapper: fit both Gaussians, then take their Frechet distance."""
    return frechet_distance(fit_gaussian(reference), fit_gaussian(candidate))
