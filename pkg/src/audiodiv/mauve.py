"""MAUVE through k-means quantization and divergence frontiers, and MAD = -ln(MAUVE).

Pipeline: pool reference and candidate embeddings, quantize them jointly with
seeded k-means, turn the cluster assignments into two histograms, trace the
frontier of KL divergences against mixtures R = lam*p + (1-lam)*q, and report
the area under that curve. MAUVE is the area (higher better, in (0, 1]);
MAD is its negative log (lower better, 0 at p == q).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, DomainError
from .score import LOWER_BETTER, DivergenceScore
from .tensor_io import EmbeddingSet

AUTO = "auto"
MAX_AUTO_CLUSTERS = 500


@dataclass(frozen=True)
class MauveConfig:
    num_clusters: str | int = AUTO       # "auto" = one bin per ~10 samples, capped
    scale_c: float = 5.0
    grid_size: int = 25
    seed: int = 0
    kmeans_restarts: int = 3
    max_iters: int = 100
    pca_dims: str | int = "off"

    def __post_init__(self):
        if isinstance(self.num_clusters, int) and self.num_clusters < 2:
            raise DomainError(f"fixed cluster count must be >= 2, got {self.num_clusters}")
        if isinstance(self.num_clusters, str) and self.num_clusters != AUTO:
            raise DomainError(f"num_clusters must be 'auto' or an int, got {self.num_clusters!r}")
        if not self.scale_c > 0:
            raise DomainError(f"scale_c must be > 0, got {self.scale_c}")
        if self.grid_size < 3:
            raise DomainError(f"grid_size must be >= 3, got {self.grid_size}")
        if self.kmeans_restarts < 1 or self.max_iters < 1:
            raise DomainError("kmeans_restarts and max_iters must be >= 1")
        if isinstance(self.pca_dims, int) and self.pca_dims < 1:
            raise DomainError(f"pca_dims must be >= 1, got {self.pca_dims}")
        if isinstance(self.pca_dims, str) and self.pca_dims != "off":
            raise DomainError(f"pca_dims must be 'off' or an int, got {self.pca_dims!r}")

    def snapshot(self) -> dict:
        return {
            "num_clusters": self.num_clusters,
            "scale_c": self.scale_c,
            "grid_size": self.grid_size,
            "seed": self.seed,
            "kmeans_restarts": self.kmeans_restarts,
            "max_iters": self.max_iters,
            "pca_dims": self.pca_dims,
        }


@dataclass(frozen=True)
class DivergenceCurve:
    """Frontier points (x, y) sorted by x, with the mixture weight of each point.

    Anchor points (0, 1) and (1, 0) are always present and carry lambda = NaN.
    """

    points: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] != lam.size:
            raise DomainError("curve needs matching (x, y) points and lambdas")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise DomainError("curve coordinates must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "lambdas", lam)


# ---------------------------------------------------------------------------
# Seeded k-means

def _plusplus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ initial centroids: proportional-to-squared-distance sampling."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = cdist(points, centroids[:1], "sqeuclidean")[:, 0]
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass sits on chosen centroids; spread over duplicates.
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, cdist(points, centroids[i : i + 1], "sqeuclidean")[:, 0])
    return centroids


def _lloyd(points, centroids, max_iters):
    n, k = points.shape[0], centroids.shape[0]
    assignments = np.zeros(n, dtype=np.intp)
    for _ in range(max_iters):
        d2 = cdist(points, centroids, "sqeuclidean")
        assignments = d2.argmin(axis=1)
        counts = np.bincount(assignments, minlength=k)
        new_centroids = np.zeros_like(centroids)
        for dim in range(points.shape[1]):
            new_centroids[:, dim] = np.bincount(
                assignments, weights=points[:, dim], minlength=k
            )
        nonempty = counts > 0
        new_centroids[nonempty] /= counts[nonempty, None]
        # Re-seed each empty cluster to the point currently farthest from its centroid.
        for idx in np.flatnonzero(~nonempty):
            to_own = d2[np.arange(n), assignments]
            far = int(np.argmax(to_own))
            new_centroids[idx] = points[far]
            assignments[far] = idx
            d2[far] = np.inf
            d2[far, idx] = 0.0
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < 1e-6:
            break
    d2 = cdist(points, centroids, "sqeuclidean")
    assignments = d2.argmin(axis=1)
    wcss = float(d2[np.arange(n), assignments].sum())
    return assignments, centroids, wcss


def kmeans(
    points: np.ndarray, k: int, cfg: MauveConfig, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Best-of-restarts seeded k-means. Returns (assignments, centroids).

    Fully deterministic for a given (data, seed, restarts): restart r uses the
    generator keyed by (seed, r) and the winner is the lowest within-cluster
    sum of squares, ties broken by restart index.
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    n_distinct = np.unique(points, axis=0).shape[0]
    if k > n_distinct:
        raise DomainError(f"k={k} exceeds the {n_distinct} distinct points")

    def run(restart: int):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, restart))))
        return _lloyd(points, _plusplus_seed(points, k, rng), cfg.max_iters)

    if threads > 1 and cfg.kmeans_restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trials = list(pool.map(run, range(cfg.kmeans_restarts)))
    else:
        trials = [run(r) for r in range(cfg.kmeans_restarts)]
    best = min(range(len(trials)), key=lambda r: (trials[r][2], r))
    assignments, centroids, _ = trials[best]
    return assignments, centroids


# ---------------------------------------------------------------------------
# Histograms and frontier

def histograms(assignments: np.ndarray, split_index: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster frequency vectors for the first split_index points and the rest."""
    assignments = np.asarray(assignments)
    p_hat = np.bincount(assignments[:split_index], minlength=k) / split_index
    q_hat = np.bincount(assignments[split_index:], minlength=k) / (assignments.size - split_index)
    return p_hat, q_hat


def _kl(a: np.ndarray, r: np.ndarray) -> float:
    """KL(a || r) with the 0 * ln(0/x) = 0 convention; a's support must lie in r's."""
    mask = a > 0.0
    assert np.all(r[mask] > 0.0), "mixture lost support present in the histogram"
    return max(float(np.sum(a[mask] * np.log(a[mask] / r[mask]))), 0.0)


def divergence_curve(p_hat: np.ndarray, q_hat: np.ndarray, c: float, grid_size: int) -> DivergenceCurve:
    """Frontier of (exp(-c KL(q||R)), exp(-c KL(p||R))) over a uniform open mixture grid."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    q_hat = np.asarray(q_hat, dtype=np.float64)
    if p_hat.shape != q_hat.shape:
        raise DomainError("histograms must share the same bins")
    lambdas = np.arange(1, grid_size + 1) / (grid_size + 1)
    xs = np.empty(grid_size)
    ys = np.empty(grid_size)
    for i, lam in enumerate(lambdas):
        mixture = lam * p_hat + (1.0 - lam) * q_hat
        xs[i] = np.exp(-c * _kl(q_hat, mixture))
        ys[i] = np.exp(-c * _kl(p_hat, mixture))
    points = np.column_stack(
        [np.concatenate([xs, [0.0, 1.0]]), np.concatenate([ys, [1.0, 0.0]])]
    )
    lambdas = np.concatenate([lambdas, [np.nan, np.nan]])
    order = np.argsort(points[:, 0], kind="stable")
    return DivergenceCurve(points=points[order], lambdas=lambdas[order])


def mauve_score(curve: DivergenceCurve) -> float:
    """Area under the x-sorted piecewise-linear frontier by the trapezoid rule."""
    x, y = curve.points[:, 0], curve.points[:, 1]
    return float(np.trapezoid(y, x))


def curve_to_csv(curve: DivergenceCurve) -> str:
    lines = ["lambda,x,y"]
    for lam, (x, y) in zip(curve.lambdas, curve.points):
        lines.append(f"{'' if np.isnan(lam) else repr(float(lam))},{x!r},{y!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# MAD

def _auto_clusters(n_total: int, n_distinct: int) -> int:
    return max(2, min(n_total // 10, MAX_AUTO_CLUSTERS, n_distinct))


def _pca_project(pooled: np.ndarray, dims: int) -> np.ndarray:
    centered = pooled - pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:dims].T


def mad(
    reference: EmbeddingSet,
    generated: EmbeddingSet,
    cfg: MauveConfig | None = None,
    threads: int = 1,
    return_curve: bool = False,
):
    """MAD = -ln(MAUVE) between two embedding sets; lower is better, 0 at identity."""
    cfg = cfg or MauveConfig()
    if reference.dim != generated.dim:
        raise DomainError(f"dimension mismatch: {reference.dim} vs {generated.dim}")
    start = time.perf_counter()
    pooled = np.vstack([reference.data, generated.data])
    if not np.any(pooled != pooled[0]):
        raise DataError("pooled embeddings are rank 0 (all points identical)")
    if isinstance(cfg.pca_dims, int):
        pooled = _pca_project(pooled, min(cfg.pca_dims, pooled.shape[1]))
    if cfg.num_clusters == AUTO:
        n_distinct = np.unique(pooled, axis=0).shape[0]
        k = _auto_clusters(pooled.shape[0], n_distinct)
    else:
        k = int(cfg.num_clusters)
    assignments, _ = kmeans(pooled, k, cfg, threads=threads)
    p_hat, q_hat = histograms(assignments, reference.n, k)
    curve = divergence_curve(p_hat, q_hat, cfg.scale_c, cfg.grid_size)
    area = mauve_score(curve)
    score = DivergenceScore(
        metric="mad",
        value=float(-np.log(area)),
        orientation=LOWER_BETTER,
        config={**cfg.snapshot(), "effective_clusters": k, "mauve": area, "flags": []},
        n_reference=reference.n,
        n_candidate=generated.n,
        wall_time_s=time.perf_counter() - start,
    )
    if return_curve:
        return score, curve
    return score
