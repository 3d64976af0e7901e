"""Two-sample discrepancy between feature populations (Gaussian-kernel MMD).

Feature clouds are (n, d) float64 matrices, one row per sample. The kernel
bandwidth comes from the median heuristic: sigma is the median Euclidean
distance over all distinct unordered pairs of the pooled sample (self-pairs
excluded, since their zero distances would bias sigma down). The kernel is
k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DataError, DimensionError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureCloud:
    rows: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionError(f"feature cloud must be 2D (n, d), got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise DataError("feature cloud contains non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def median_sigma(a: FeatureCloud, b: FeatureCloud) -> float:
    """Median pairwise distance of the pooled sample (self-pairs excluded).

    Returns 0.0 (with a warning) when all points coincide; that degenerate
    value is rejected by mmd2_unbiased, so callers must handle it explicitly.
    """
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")
    pooled = np.vstack([a.rows, b.rows])
    if pooled.shape[0] < 2:
        raise DataError("median heuristic needs at least two points")
    distances = pdist(pooled)
    sigma = float(np.median(distances))
    if sigma == 0.0:
        logger.warning("median_sigma: all points identical; sigma is degenerate (0)")
    return sigma


def mmd2_unbiased(a: FeatureCloud, b: FeatureCloud, sigma: float) -> float:
    """Unbiased (U-statistic) squared MMD with a Gaussian kernel.

    Mean kernel over distinct within-a pairs + mean over distinct within-b
    pairs - 2 * mean over cross pairs. With equal sample sizes the
    index-matched cross pairs (i, i) are excluded as well (the paired
    U-statistic), which makes identical clouds evaluate to exactly 0; with
    unequal sizes all cross pairs enter. Either way the estimator is
    unbiased and may come out slightly negative.
    """
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if a.d != b.d:
        raise DimensionError(f"dimension mismatch: {a.d} vs {b.d}")
    if a.n < 2 or b.n < 2:
        raise DataError(f"mmd2_unbiased needs n >= 2 per cloud, got {a.n} and {b.n}")
    gamma = 1.0 / (2.0 * sigma**2)
    kaa = np.exp(-gamma * cdist(a.rows, a.rows, "sqeuclidean"))
    kbb = np.exp(-gamma * cdist(b.rows, b.rows, "sqeuclidean"))
    kab = np.exp(-gamma * cdist(a.rows, b.rows, "sqeuclidean"))
    within_a = (kaa.sum() - np.trace(kaa)) / (a.n * (a.n - 1))
    within_b = (kbb.sum() - np.trace(kbb)) / (b.n * (b.n - 1))
    if a.n == b.n:
        cross = (kab.sum() - np.trace(kab)) / (a.n * (a.n - 1))
    else:
        cross = kab.mean()
    return float(within_a + within_b - 2.0 * cross)


def mmd2_median_heuristic(a: FeatureCloud, b: FeatureCloud) -> tuple[float, float]:
    """Convenience: (sigma, mmd2) with the median-heuristic bandwidth.

    A degenerate sigma of 0 means every pooled point coincides, in which case
    both distributions are the same point mass and mmd2 is 0.
    """
    sigma = median_sigma(a, b)
    if sigma == 0.0:
        return 0.0, 0.0
    return sigma, mmd2_unbiased(a, b, sigma)
