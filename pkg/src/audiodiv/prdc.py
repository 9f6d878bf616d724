"""Precision, Recall, Density, Coverage from k-NN support estimates.

Balls use the inclusive boundary (distance <= radius), so comparing a set
against an identical copy of itself yields precision = recall = coverage = 1.
Distances are exact and brute-force; set sizes here never justify an index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .tensor_io import EmbeddingSet

_BLOCK = 512


@dataclass(frozen=True)
class PrdcResult:
    precision: float
    recall: float
    density: float
    coverage: float
    k: int


def knn_radii(points: EmbeddingSet | np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbor within the set (self excluded)."""
    data = points.data if isinstance(points, EmbeddingSet) else np.asarray(points, dtype=np.float64)
    n = data.shape[0]
    if not 1 <= k <= n - 1:
        raise DomainError(f"k must satisfy 1 <= k <= N-1, got k={k} with N={n}")
    radii = np.empty(n)
    for start in range(0, n, _BLOCK):
        block = slice(start, min(start + _BLOCK, n))
        dists = cdist(data[block], data)
        # Exclude each point's own index, not every zero distance: duplicates
        # legitimately yield radius 0.
        dists[np.arange(block.stop - block.start), np.arange(start, block.stop)] = np.inf
        radii[block] = np.partition(dists, k - 1, axis=1)[:, k - 1]
    return radii


def prdc(reference: EmbeddingSet, generated: EmbeddingSet, k: int = 5) -> PrdcResult:
    """All four support-based metrics for one reference/generated pair; higher is better."""
    if reference.dim != generated.dim:
        raise DomainError(f"dimension mismatch: {reference.dim} vs {generated.dim}")
    if not 1 <= k <= min(reference.n, generated.n) - 1:
        raise DomainError(
            f"k must satisfy 1 <= k <= min(N_ref, N_gen)-1, got k={k} "
            f"with N_ref={reference.n}, N_gen={generated.n}"
        )
    ref, gen = reference.data, generated.data
    ref_radii = knn_radii(ref, k)
    gen_radii = knn_radii(gen, k)

    in_ref_ball_count = np.zeros(gen.shape[0])   # per gen point: ref balls containing it
    covered_by_gen = np.zeros(ref.shape[0], dtype=bool)   # ref point near some gen point (own radius)
    recalled = np.zeros(ref.shape[0], dtype=bool)         # ref point inside some gen ball
    for start in range(0, gen.shape[0], _BLOCK):
        block = slice(start, min(start + _BLOCK, gen.shape[0]))
        dists = cdist(ref, gen[block])
        inside = dists <= ref_radii[:, None]
        in_ref_ball_count[block] = inside.sum(axis=0)
        covered_by_gen |= inside.any(axis=1)
        recalled |= (dists <= gen_radii[None, block]).any(axis=1)

    return PrdcResult(
        precision=float((in_ref_ball_count > 0).mean()),
        recall=float(recalled.mean()),
        density=float(in_ref_ball_count.sum() / (k * gen.shape[0])),
        coverage=float(covered_by_gen.mean()),
        k=k,
    )
