"""PCA, LDA, and a posterior-maximizing baseline for head-to-head comparisons.

LDA here is the closed-form generalized-eigenvector solution; maximizing
its Fisher criterion is equivalent to maximizing the summed pairwise
squared Mahalanobis distances between class means under a shared
covariance (an identity the test suite checks numerically). The
posterior baseline ("AMA-Gauss" in the CLI) learns filters by gradient
ascent on the mean log-posterior of the correct class under a Gaussian
decoder, giving an upper-reference for quadratic decodability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from .errors import DimensionMismatch, NotPositiveDefinite
from .spd import SpdMatrix, symmetrize
from .stats import ClassEnsemble, LabeledDataset, estimate_class_statistics
from .trainer import FilterBank, TrainConfig, TrainLog, fit_filters


def _fix_signs(filters: np.ndarray) -> np.ndarray:
    # deterministic sign convention: largest-magnitude entry positive
    idx = np.argmax(np.abs(filters), axis=0)
    signs = np.sign(filters[idx, np.arange(filters.shape[1])])
    signs[signs == 0] = 1.0
    return filters * signs


def pooled_total_covariance(ens: ClassEnsemble) -> np.ndarray:
    """Count-weighted covariance of the pooled (mixture) distribution."""
    w = ens.counts / ens.counts.sum()
    grand_mean = w @ ens.means
    total = np.einsum("c,cij->ij", w, ens.second_moments)
    return symmetrize(total - np.outer(grand_mean, grand_mean))


def pca(ens: ClassEnsemble, m: int) -> FilterBank:
    """Top-m eigenvectors of the pooled total covariance, descending."""
    if m > ens.n_dims:
        raise DimensionMismatch(f"cannot extract {m} components in {ens.n_dims} dims")
    evals, evecs = np.linalg.eigh(pooled_total_covariance(ens))
    order = np.argsort(evals)[::-1][:m]
    return FilterBank(_fix_signs(evecs[:, order]))


@dataclass
class LdaModel:
    """LDA solution: filters plus the scatter matrices that produced them."""

    filters: FilterBank
    within_class_cov: SpdMatrix
    between_scatter: np.ndarray
    fisher_criterion: float


def lda(ens: ClassEnsemble, m: int, shrinkage: float = 0.1) -> LdaModel:
    """Closed-form LDA with shrinkage-regularized within-class covariance.

    Filters are the top-m generalized eigenvectors of (between-class
    scatter, within-class covariance), rescaled to unit Euclidean norm.
    At most c - 1 filters carry signal, so m > c - 1 is rejected.
    """
    c = ens.n_classes
    if m > c - 1:
        raise DimensionMismatch(f"LDA can learn at most c-1 = {c - 1} filters, got m={m}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    w = ens.counts / ens.counts.sum()
    within = np.einsum("c,cij->ij", w, ens.covariances)
    within = (1.0 - shrinkage) * within + shrinkage * (
        np.trace(within) / ens.n_dims
    ) * np.eye(ens.n_dims)
    within = symmetrize(within)
    grand_mean = w @ ens.means
    centered = ens.means - grand_mean
    between = symmetrize(np.einsum("c,ci,cj->ij", w, centered, centered))
    try:
        evals, evecs = scipy.linalg.eigh(between, within)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NotPositiveDefinite(
            f"within-class covariance is singular (shrinkage={shrinkage}): {exc}"
        ) from None
    order = np.argsort(evals)[::-1][:m]
    filters = evecs[:, order]
    filters = _fix_signs(filters / np.linalg.norm(filters, axis=0))
    return LdaModel(
        filters=FilterBank(filters),
        within_class_cov=SpdMatrix(within),
        between_scatter=between,
        fisher_criterion=float(np.sum(evals[order])),
    )


@dataclass
class AmaGaussModel:
    """Filters plus the Gaussian decoder moments of the noisy responses."""

    filters: FilterBank
    sigma2: float
    response_means: np.ndarray  # (c, m)
    response_covs: np.ndarray   # (c, m, m), F^T cov_i F + sigma2 I

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("response noise variance must be positive")


def ama_gauss_fit(
    data: LabeledDataset, cfg: TrainConfig
) -> tuple[AmaGaussModel, TrainLog]:
    """Learn filters maximizing the mean log-posterior of the correct class.

    The decoder treats the response z = F^T x plus isotropic N(0, sigma2)
    readout noise as class-conditionally Gaussian with moments
    mu_i = F^T gamma_i and cov_i = F^T Phi_i F + sigma2 I; the noise is
    folded into the decoder covariance analytically, so training is
    deterministic. Priors are flat. Optimization (trivialized unit-norm
    columns, L-BFGS, optional pairwise staging) matches the
    dissimilarity trainer.
    """
    if cfg.sigma2 <= 0:
        raise ValueError("the posterior baseline requires sigma2 > 0")
    ens = estimate_class_statistics(data)
    x = data.samples
    labels = data.labels
    n_samples = x.shape[0]
    onehot_cols = [labels == i for i in range(ens.n_classes)]

    def value_and_grad(filters: np.ndarray):
        return _posterior_value_and_grad(
            filters, x, onehot_cols, ens, cfg.sigma2, n_samples
        )

    bank, log = fit_filters(value_and_grad, ens.n_dims, cfg)
    means = ens.means @ bank.filters
    covs = bank.filters.T @ (ens.covariances @ bank.filters) + cfg.sigma2 * np.eye(
        bank.m
    )
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    model = AmaGaussModel(
        filters=bank,
        sigma2=cfg.sigma2,
        response_means=means,
        response_covs=covs,
    )
    return model, log


def _posterior_value_and_grad(filters, x, onehot_cols, ens, sigma2, n_samples):
    """Mean correct-class log-posterior and its gradient in the filters."""
    c = ens.n_classes
    n, m = filters.shape
    z = x @ filters                       # (N, m)
    mus = ens.means @ filters             # (c, m)
    ridge = sigma2 * np.eye(m)

    precisions = []
    loglik = np.empty((n_samples, c))
    resid_prec = []                       # per class: (z - mu_i) cov_i^{-1}
    for i in range(c):
        cov = symmetrize(filters.T @ ens.covariances[i] @ filters) + ridge
        cho = scipy.linalg.cho_factor(cov, lower=True)
        prec = scipy.linalg.cho_solve(cho, np.eye(m))
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        diff = z - mus[i]
        a = diff @ prec                   # (N, m)
        quad = np.einsum("nj,nj->n", diff, a)
        loglik[:, i] = -0.5 * logdet - 0.5 * quad
        precisions.append(prec)
        resid_prec.append(a)

    lse = scipy.special.logsumexp(loglik, axis=1)
    value = 0.0
    weights = scipy.special.softmax(loglik, axis=1)  # posterior p(i | z_t)
    for i, mask in enumerate(onehot_cols):
        value += float(np.sum(loglik[mask, i]))
        weights[mask, i] -= 1.0
    value = (value - float(np.sum(lse))) / n_samples
    weights /= -n_samples                 # d(value)/d loglik[t, i]

    grad = np.zeros((n, m))
    dz = np.zeros_like(z)
    for i in range(c):
        wi = weights[:, i]
        a = resid_prec[i]
        dz -= wi[:, None] * a
        dmu = a.T @ wi
        grad += np.outer(ens.means[i], dmu)
        dcov = -0.5 * np.sum(wi) * precisions[i] + 0.5 * (a.T * wi) @ a
        grad += 2.0 * ens.covariances[i] @ filters @ symmetrize(dcov)
    grad += x.T @ dz
    return value, grad
