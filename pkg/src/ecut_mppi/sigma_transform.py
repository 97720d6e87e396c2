"""Sigma-point sets and the expansion-compression unscented transform.

A distribution is carried as a weighted particle set whose first two
empirical moments match a Gaussian. Stochastic transitions are handled by
expanding every particle into its own sigma-point cloud and compressing the
enlarged set back to 2n+1 points by moment matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

WEIGHT_TOL = 1e-9
SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9
JITTER = 1e-9


class SigmaPointError(ValueError):
    """Raised when a covariance cannot be factored into sigma points."""


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean dimension {mean.size}"
            )
        scale = max(1.0, float(np.max(np.abs(cov), initial=0.0)))
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError(f"covariance is not symmetric:\n{cov}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class SigmaPointSet:
    """Weighted particles; ``points`` has shape (N, n), ``weights`` shape (N,)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if points.ndim != 2:
            raise ValueError(f"points must be (N, n), got shape {points.shape}")
        if points.shape[0] < 1 or points.shape[0] != weights.size:
            raise ValueError(
                f"need N >= 1 points with one weight each, got {points.shape[0]} points "
                f"and {weights.size} weights"
            )
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


# A one-step transition: state vector -> moments of the next state.
StochasticMap = Callable[[np.ndarray], GaussianMoments]


def default_kappa(n: int) -> float:
    return 3.0 - n


def ut_weights(n: int, kappa: Optional[float] = None) -> np.ndarray:
    """Julier weights for 2n+1 points. Negative centre weight when n > 3."""
    k = default_kappa(n) if kappa is None else float(kappa)
    if n + k <= 0:
        raise SigmaPointError(f"n + kappa must be positive, got n={n}, kappa={k}")
    w = np.full(2 * n + 1, 0.5 / (n + k))
    w[0] = k / (n + k)
    return w


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == cov.

    LAPACK Cholesky for positive definite input. Semidefinite input (which
    LAPACK rejects) goes through a pivot-free Cholesky that zeroes columns
    with vanishing pivots.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.all(np.isfinite(cov)):
        raise SigmaPointError(f"covariance has non-finite entries:\n{cov}")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    n = cov.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(cov)))))
    L = np.zeros_like(cov)
    for j in range(n):
        d = cov[j, j] - L[j, :j] @ L[j, :j]
        if d < -PSD_TOL * scale:
            raise SigmaPointError(
                f"covariance is not positive semidefinite (pivot {j} = {d:.3e}):\n{cov}"
            )
        if d <= 1e-14 * scale:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (cov[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    if np.max(np.abs(L @ L.T - cov)) > PSD_TOL * scale:
        raise SigmaPointError(f"covariance is not positive semidefinite:\n{cov}")
    return L


def generate_ut_points(moments: GaussianMoments, kappa: Optional[float] = None) -> SigmaPointSet:
    n = moments.dim
    k = default_kappa(n) if kappa is None else float(kappa)
    weights = ut_weights(n, k)
    root = psd_sqrt((n + k) * moments.covariance)
    points = np.empty((2 * n + 1, n))
    points[0] = moments.mean
    points[1 : n + 1] = moments.mean + root.T
    points[n + 1 :] = moments.mean - root.T
    return SigmaPointSet(points, weights)


def empirical_moments(sps: SigmaPointSet) -> GaussianMoments:
    w = sps.weights
    mean = w @ sps.points
    dev = sps.points - mean
    cov = (dev * w[:, None]).T @ dev
    return GaussianMoments(mean, 0.5 * (cov + cov.T))


def expand_sigma_points(
    fmap: StochasticMap, sps: SigmaPointSet, kappa: Optional[float] = None
) -> SigmaPointSet:
    """Replace every point by the UT cloud of its one-step conditional law.

    Child weights are parent weight times UT weight, so the expanded set
    carries the law-of-total-variance moments.
    """
    children, child_weights = [], []
    for i, (point, w) in enumerate(zip(sps.points, sps.weights)):
        out = fmap(point)
        if out.dim != sps.dim:
            raise ValueError(f"map changed state dimension {sps.dim} -> {out.dim}")
        try:
            cloud = generate_ut_points(out, kappa)
        except SigmaPointError as exc:
            raise SigmaPointError(f"expansion of parent point {i}: {exc}") from exc
        children.append(cloud.points)
        child_weights.append(w * cloud.weights)
    weights = np.concatenate(child_weights)
    # renormalise round-off only; the product weights already sum to one
    return SigmaPointSet(np.vstack(children), weights / weights.sum())


def compress(sps: SigmaPointSet, kappa: Optional[float] = None) -> SigmaPointSet:
    moments = empirical_moments(sps)
    try:
        return generate_ut_points(moments, kappa)
    except SigmaPointError:
        jittered = GaussianMoments(moments.mean, moments.covariance + JITTER * np.eye(moments.dim))
        return generate_ut_points(jittered, kappa)


def ecut_step(fmap: StochasticMap, sps: SigmaPointSet, kappa: Optional[float] = None) -> SigmaPointSet:
    return compress(expand_sigma_points(fmap, sps, kappa), kappa)
