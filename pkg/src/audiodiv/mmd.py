"""Unbiased squared Maximum Mean Discrepancy with a Gaussian RBF kernel.

    MMD^2 = 1/(m(m-1)) sum_{i!=j} k(x_i, x_j)
          + 1/(n(n-1)) sum_{i!=j} k(y_i, y_j)
          - 2/(mn)     sum_{i,j}  k(x_i, y_j)

with k(a, b) = exp(-||a - b||^2 / (2 sigma^2)). The signed estimate is
reported by default: flooring at zero would bias the null distribution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DomainError, InsufficientData
from .score import LOWER_BETTER, DivergenceScore
from .tensor_io import EmbeddingSet

_BLOCK = 1024  # rows per kernel block; fixed so reduction order is deterministic


@dataclass(frozen=True)
class MmdConfig:
    """Bandwidth policy ("median" or a fixed sigma > 0) and negative-value handling."""

    bandwidth: str | float = "median"
    clamp_negative: bool = False

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise DomainError(f"bandwidth must be 'median' or a positive float, got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise DomainError(f"fixed bandwidth must be > 0, got {self.bandwidth}")


def median_bandwidth(x: EmbeddingSet, y: EmbeddingSet) -> tuple[float, bool]:
    """Median pairwise distance over the pooled sample (self-pairs excluded).

    Returns (sigma, degenerate); degenerate means every point coincided and
    sigma fell back to 1.
    """
    pooled = np.vstack([x.data, y.data])
    if pooled.shape[0] < 2:
        raise InsufficientData("median bandwidth needs at least 2 pooled points")
    med = float(np.median(pdist(pooled)))
    if med == 0.0:
        return 1.0, True
    return med, False


def _offdiag_kernel_sum(a: np.ndarray, sigma: float) -> float:
    """Sum of k(a_i, a_j) over i != j, blocked with a fixed schedule."""
    gamma = 1.0 / (2.0 * sigma * sigma)
    m = a.shape[0]
    total = 0.0
    for start in range(0, m, _BLOCK):
        block = a[start : start + _BLOCK]
        sq = cdist(block, a, "sqeuclidean")
        k = np.exp(-gamma * sq)
        total += float(k.sum()) - float(np.trace(k[:, start : start + block.shape[0]]))
    return total


def _cross_kernel_sum(a: np.ndarray, b: np.ndarray, sigma: float) -> float:
    gamma = 1.0 / (2.0 * sigma * sigma)
    total = 0.0
    for start in range(0, a.shape[0], _BLOCK):
        sq = cdist(a[start : start + _BLOCK], b, "sqeuclidean")
        total += float(np.exp(-gamma * sq).sum())
    return total


def mmd2_unbiased(x: EmbeddingSet, y: EmbeddingSet, cfg: MmdConfig | None = None) -> DivergenceScore:
    """Unbiased squared MMD between two embedding sets; lower is better."""
    cfg = cfg or MmdConfig()
    if x.dim != y.dim:
        raise DomainError(f"dimension mismatch: {x.dim} vs {y.dim}")
    m, n = x.n, y.n
    if m < 2 or n < 2:
        raise InsufficientData(f"unbiased MMD needs >= 2 points per set, got {m} and {n}")
    start = time.perf_counter()
    flags = []
    if cfg.bandwidth == "median":
        sigma, degenerate = median_bandwidth(x, y)
        if degenerate:
            flags.append("degenerate_bandwidth")
    else:
        sigma = float(cfg.bandwidth)
    xx = _offdiag_kernel_sum(x.data, sigma) / (m * (m - 1))
    yy = _offdiag_kernel_sum(y.data, sigma) / (n * (n - 1))
    xy = _cross_kernel_sum(x.data, y.data, sigma) / (m * n)
    value = xx + yy - 2.0 * xy
    if value < 0.0:
        flags.append("negative_estimate")
        if cfg.clamp_negative:
            value = 0.0
    return DivergenceScore(
        metric="mmd",
        value=value,
        orientation=LOWER_BETTER,
        config={
            "kernel": "rbf",
            "bandwidth": sigma,
            "bandwidth_policy": cfg.bandwidth if isinstance(cfg.bandwidth, str) else "fixed",
            "clamp_negative": cfg.clamp_negative,
            "flags": flags,
        },
        n_reference=m,
        n_candidate=n,
        wall_time_s=time.perf_counter() - start,
    )
