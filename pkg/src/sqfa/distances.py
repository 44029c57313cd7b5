"""Dissimilarity measures between Gaussian class distributions.

All measures operate on (mean, covariance) pairs. The Fisher-Rao distance
between arbitrary Gaussians has no closed form; this module provides the
zero-mean exact expression, the general-case lower bound obtained by
embedding the parameters into SPD(m+1), and the Bhattacharyya / Hellinger
/ Mahalanobis alternatives, together with analytic gradients for all of
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import DegenerateDistance, DimensionMismatch, NotPositiveDefinite
from .spd import (
    SpdMatrix,
    affine_invariant_distance,
    affine_invariant_distance_and_gradient,
    as_spd_array,
    generalized_eigen,
    symmetrize,
)

SQRT2 = math.sqrt(2.0)
DEGENERATE_DISTANCE_TOL = 1e-12


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector and covariance of one class in feature space."""

    mean: np.ndarray
    covariance: SpdMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = self.covariance
        if not isinstance(cov, SpdMatrix):
            cov = SpdMatrix(cov)
        if mean.shape[0] != cov.dim:
            raise DimensionMismatch(
                f"mean length {mean.shape[0]} != covariance dim {cov.dim}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.covariance.dim


class DistanceKind(Enum):
    """Selector for the pairwise class-dissimilarity measure."""

    FISHER_RAO_CALVO_OLLER = "fisher_rao_calvo_oller"
    FISHER_RAO_ZERO_MEAN = "fisher_rao_zero_mean"
    BHATTACHARYYA = "bhattacharyya"
    HELLINGER = "hellinger"
    MAHALANOBIS_SQ = "mahalanobis_sq"


def _logdet_cholesky(a: np.ndarray) -> float:
    # sum of log pivots, never a raw determinant (overflows by dim ~ 20)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("log-det of a non-SPD matrix") from None
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def calvo_oller_embedding(p: GaussianParams) -> SpdMatrix:
    """Embed (mean, covariance) into SPD(m+1).

    Returns the block matrix [[cov + mean mean^T, mean], [mean^T, 1]],
    which is SPD whenever the covariance is (its Schur complement with
    respect to the trailing 1 is the covariance itself).
    """
    m = p.dim
    omega = np.empty((m + 1, m + 1))
    omega[:m, :m] = p.covariance.mat + np.outer(p.mean, p.mean)
    omega[:m, m] = p.mean
    omega[m, :m] = p.mean
    omega[m, m] = 1.0
    return SpdMatrix(omega)


def calvo_oller_distance(p: GaussianParams, q: GaussianParams) -> float:
    """Closed-form lower bound on the Gaussian Fisher-Rao distance.

    Measures the affine-invariant distance between the SPD(m+1) embeddings
    of p and q, divided by sqrt(2). It is a true metric, is invariant to
    invertible linear maps of the feature space, and equals the exact
    Fisher-Rao distance when the means coincide.
    """
    op = calvo_oller_embedding(p)
    oq = calvo_oller_embedding(q)
    return affine_invariant_distance(op, oq) / SQRT2


def fisher_rao_zero_mean(a, b) -> float:
    """Exact Fisher-Rao distance between zero-mean Gaussians N(0,a), N(0,b)."""
    return affine_invariant_distance(a, b) / SQRT2


def mahalanobis_sq(mu1, mu2, sigma) -> float:
    """Squared Mahalanobis distance (mu1-mu2)^T sigma^{-1} (mu1-mu2)."""
    s = as_spd_array(sigma)
    d1 = np.asarray(mu1, dtype=float).reshape(-1)
    d2 = np.asarray(mu2, dtype=float).reshape(-1)
    if d1.shape[0] != s.shape[0] or d2.shape[0] != s.shape[0]:
        raise DimensionMismatch(
            f"mean lengths {d1.shape[0]}, {d2.shape[0]} vs matrix dim {s.shape[0]}"
        )
    delta = d1 - d2
    sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(s, lower=True), delta)
    return float(delta @ sol)


def fisher_rao_equal_cov(mu1, mu2, sigma) -> float:
    """Exact Fisher-Rao distance between Gaussians sharing one covariance.

    Equals sqrt(2) * arccosh(1 + d_M^2 / 4) with d_M the Mahalanobis
    distance between the means.
    """
    dm2 = mahalanobis_sq(mu1, mu2, sigma)
    return SQRT2 * math.acosh(1.0 + 0.25 * dm2)


def bhattacharyya(p: GaussianParams, q: GaussianParams) -> float:
    """Bhattacharyya distance between two Gaussians.

    (1/8) d_M^2(mu_p, mu_q; S) + (1/2) log(det S / sqrt(det cov_p det cov_q))
    with S the average of the two covariances. Nonnegative; zero iff p = q.
    """
    _check_same_dim(p, q)
    sbar = 0.5 * (p.covariance.mat + q.covariance.mat)
    term1 = 0.125 * mahalanobis_sq(p.mean, q.mean, sbar)
    term2 = 0.5 * (
        _logdet_cholesky(sbar)
        - 0.5 * _logdet_cholesky(p.covariance.mat)
        - 0.5 * _logdet_cholesky(q.covariance.mat)
    )
    return max(term1 + term2, 0.0)


def bhattacharyya_zero_mean_spectral(a, b) -> float:
    """Spectral form of the zero-mean Bhattacharyya distance.

    (1/2) * sum_k [log((1 + lambda_k)/2) - (1/2) log lambda_k] over the
    generalized eigenvalues of the pair. The leading 1/2 makes this agree
    with the covariance-form bhattacharyya() at zero means.
    """
    lam = generalized_eigen(a, b).eigenvalues
    return 0.5 * float(np.sum(np.log(0.5 * (1.0 + lam)) - 0.5 * np.log(lam)))


def hellinger(p: GaussianParams, q: GaussianParams) -> float:
    """Hellinger distance sqrt(1 - exp(-d_B)); a bounded metric in [0, 1)."""
    return math.sqrt(max(0.0, 1.0 - math.exp(-bhattacharyya(p, q))))


def distance(kind: DistanceKind, p: GaussianParams, q: GaussianParams) -> float:
    """Dissimilarity of the requested kind between two parameter pairs.

    For FISHER_RAO_ZERO_MEAN the means are ignored and the covariance
    slots are interpreted as second-moment matrices. MAHALANOBIS_SQ uses
    the average of the two covariances as its metric, so every kind is
    symmetric in (p, q).
    """
    _check_same_dim(p, q)
    if kind is DistanceKind.FISHER_RAO_CALVO_OLLER:
        return calvo_oller_distance(p, q)
    if kind is DistanceKind.FISHER_RAO_ZERO_MEAN:
        return fisher_rao_zero_mean(p.covariance, q.covariance)
    if kind is DistanceKind.BHATTACHARYYA:
        return bhattacharyya(p, q)
    if kind is DistanceKind.HELLINGER:
        return hellinger(p, q)
    if kind is DistanceKind.MAHALANOBIS_SQ:
        sbar = 0.5 * (p.covariance.mat + q.covariance.mat)
        return mahalanobis_sq(p.mean, q.mean, sbar)
    raise ValueError(f"unknown distance kind {kind!r}")


def distance_gradient(kind: DistanceKind, p: GaussianParams, q: GaussianParams):
    """Analytic gradients of distance() with respect to all four slots.

    Returns (d_mean_p, d_cov_p, d_mean_q, d_cov_q); the covariance
    gradients are symmetric matrices.

    Raises
    ------
    DegenerateDistance
        For the Fisher-Rao kinds and Hellinger at (numerically)
        coincident parameters, where the distance is not differentiable.
        The caller must zero this pair's contribution.
    """
    _, grads = distance_and_gradient(kind, p, q)
    return grads


def distance_and_gradient(kind: DistanceKind, p: GaussianParams, q: GaussianParams):
    """Fused distance + gradient evaluation (shares the eigendecomposition)."""
    _check_same_dim(p, q)
    if kind is DistanceKind.FISHER_RAO_CALVO_OLLER:
        return _calvo_oller_and_gradient(p, q)
    if kind is DistanceKind.FISHER_RAO_ZERO_MEAN:
        d_ai, ga, gb = affine_invariant_distance_and_gradient(
            p.covariance, q.covariance
        )
        zero = np.zeros(p.dim)
        return d_ai / SQRT2, (zero, ga / SQRT2, zero.copy(), gb / SQRT2)
    if kind is DistanceKind.BHATTACHARYYA:
        return _bhattacharyya_and_gradient(p, q)
    if kind is DistanceKind.HELLINGER:
        db, grads = _bhattacharyya_and_gradient(p, q)
        dh = math.sqrt(max(0.0, 1.0 - math.exp(-db)))
        if dh <= DEGENERATE_DISTANCE_TOL:
            raise DegenerateDistance("Hellinger distance too small to differentiate")
        factor = math.exp(-db) / (2.0 * dh)
        return dh, tuple(factor * g for g in grads)
    if kind is DistanceKind.MAHALANOBIS_SQ:
        return _mahalanobis_sq_and_gradient(p, q)
    raise ValueError(f"unknown distance kind {kind!r}")


def _check_same_dim(p: GaussianParams, q: GaussianParams) -> None:
    if p.dim != q.dim:
        raise DimensionMismatch(f"parameter dims differ: {p.dim} vs {q.dim}")


def _calvo_oller_and_gradient(p: GaussianParams, q: GaussianParams):
    m = p.dim
    op = calvo_oller_embedding(p)
    oq = calvo_oller_embedding(q)
    # may raise DegenerateDistance at coincident parameters
    d_ai, ga, gb = affine_invariant_distance_and_gradient(op, oq)
    d = d_ai / SQRT2

    def unpack(g: np.ndarray, mean: np.ndarray):
        # Omega blocks: [[cov + mean mean^T, mean], [mean^T, 1]], so
        # d(dist) = tr(g11 dcov) + 2 (g11 mean + g12)^T dmean, all over sqrt2.
        g11 = g[:m, :m]
        g12 = g[:m, m]
        dmean = (2.0 * (g11 @ mean) + 2.0 * g12) / SQRT2
        dcov = g11 / SQRT2
        return dmean, symmetrize(dcov)

    dmu_p, dcov_p = unpack(ga, p.mean)
    dmu_q, dcov_q = unpack(gb, q.mean)
    return d, (dmu_p, dcov_p, dmu_q, dcov_q)


def _bhattacharyya_and_gradient(p: GaussianParams, q: GaussianParams):
    sp = p.covariance.mat
    sq = q.covariance.mat
    sbar = 0.5 * (sp + sq)
    cho = scipy.linalg.cho_factor(sbar, lower=True)
    delta = p.mean - q.mean
    u = scipy.linalg.cho_solve(cho, delta)
    pbar = scipy.linalg.cho_solve(cho, np.eye(sp.shape[0]))
    d = 0.125 * float(delta @ u) + 0.5 * (
        _logdet_cholesky(sbar)
        - 0.5 * _logdet_cholesky(sp)
        - 0.5 * _logdet_cholesky(sq)
    )
    d = max(d, 0.0)

    dmu_p = 0.25 * u
    dmu_q = -0.25 * u
    # d/dsbar = -(1/8) u u^T + (1/2) sbar^{-1}; chain via dsbar/dcov = 1/2,
    # plus the -(1/4) log-det terms on each covariance.
    dsbar = -0.125 * np.outer(u, u) + 0.5 * pbar
    dcov_p = symmetrize(0.5 * dsbar - 0.25 * _spd_inverse(sp))
    dcov_q = symmetrize(0.5 * dsbar - 0.25 * _spd_inverse(sq))
    return d, (dmu_p, dcov_p, dmu_q, dcov_q)


def _spd_inverse(a: np.ndarray) -> np.ndarray:
    cho = scipy.linalg.cho_factor(a, lower=True)
    return scipy.linalg.cho_solve(cho, np.eye(a.shape[0]))


def _mahalanobis_sq_and_gradient(p: GaussianParams, q: GaussianParams):
    sbar = 0.5 * (p.covariance.mat + q.covariance.mat)
    cho = scipy.linalg.cho_factor(sbar, lower=True)
    delta = p.mean - q.mean
    u = scipy.linalg.cho_solve(cho, delta)
    d = float(delta @ u)
    duu = -0.5 * np.outer(u, u)
    return d, (2.0 * u, symmetrize(duu), -2.0 * u, symmetrize(duu.copy()))
