"""Internal PCA basis shared by outlier detection and reconstruction error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaBasis:
    """Centered principal-component basis fitted on a reference matrix.

    ``components`` holds the retained components as rows, ordered by
    descending variance; ``variances`` are the matching per-component
    sample variances (ddof=1).
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray
    n_features: int

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X - self.mean) @ self.components.T

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.transform(X) @ self.components + self.mean

    def reconstruction_errors(self, X: np.ndarray) -> np.ndarray:
        """Per-row squared Euclidean distance between X and its projection."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.sum((X - self.reconstruct(X)) ** 2, axis=1)


def fit_pca(X: np.ndarray, variance_fraction: float = 0.95) -> PcaBasis:
    """Fit a PCA basis retaining the smallest component count whose
    cumulative explained variance reaches ``variance_fraction``.

    Rank-deficient inputs retain all nonzero-variance components, never
    more. Component signs are fixed (largest-magnitude loading positive)
    so repeated fits are identical.
    """
    if not 0 < variance_fraction <= 1:
        raise ValueError("variance_fraction must be in (0, 1]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    mean = X.mean(axis=0)
    centered = X - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variances = s**2 / max(n - 1, 1)

    nonzero = s > (s[0] * 1e-12 if s.size and s[0] > 0 else 0)
    n_nonzero = int(np.count_nonzero(nonzero))
    if n_nonzero == 0:
        # constant data: keep an empty basis, reconstruction is the mean
        return PcaBasis(mean=mean, components=np.empty((0, d)), variances=np.empty(0), n_features=d)

    total = variances[:n_nonzero].sum()
    cumulative = np.cumsum(variances[:n_nonzero]) / total
    k = int(np.searchsorted(cumulative, variance_fraction - 1e-12) + 1)
    k = min(k, n_nonzero)

    components = vt[:k].copy()
    # sign convention: largest-magnitude loading of each component positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1
    return PcaBasis(
        mean=mean, components=components, variances=variances[:k].copy(), n_features=d
    )
