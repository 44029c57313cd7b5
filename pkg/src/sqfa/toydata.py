"""Synthetic datasets with known discriminative structure, plus sweep tables.

Each generator builds explicit per-class Gaussian parameters and samples
from them, so the same data can feed both statistics-based training and
sample-based evaluation. The numeric parameter choices are this module's
own; what matters (and what the tests assert) is the qualitative
structure: which 2D subspace carries covariance differences, mean
differences, or plain variance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distances import (
    GaussianParams,
    bhattacharyya,
    calvo_oller_distance,
    fisher_rao_equal_cov,
    fisher_rao_zero_mean,
    hellinger,
)
from .errors import UnknownSpec, UnknownSweep
from .evaluation import bayes_1d_closed_form, monte_carlo_bayes
from .stats import ClassEnsemble, LabeledDataset

TOY_NAMES = ("toy6d", "toy4d", "covcode")
SWEEP_NAMES = ("bayes1d", "bayes2d", "co_gap_equalcov", "co_gap_dataset")

COVCODE_CLASSES = 8
COVCODE_DIMS = 30


@dataclass(frozen=True)
class ToySpec:
    """Which toy dataset to draw, how many samples per class, which seed."""

    name: str
    samples_per_class: int
    seed: int

    def __post_init__(self):
        if self.name not in TOY_NAMES:
            raise UnknownSpec(
                f"unknown toy dataset {self.name!r}; valid names: {', '.join(TOY_NAMES)}"
            )
        if self.samples_per_class < 2:
            raise ValueError("samples_per_class must be at least 2")


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _rotated(template: np.ndarray, theta: float) -> np.ndarray:
    r = _rotation(theta)
    return r @ template @ r.T


def _embed_block(full: np.ndarray, block: np.ndarray, offset: int) -> None:
    d = block.shape[0]
    full[offset : offset + d, offset : offset + d] = block


def class_parameters(name: str) -> tuple[np.ndarray, np.ndarray, dict]:
    """Ground-truth per-class (means, covariances) and subspace markers."""
    if name == "toy6d":
        # dims 0-1: strongly different class covariances, equal (zero) means
        # dims 2-3: slightly different means, shared identity covariance
        # dims 4-5: identical classes with the largest variance
        c, n = 3, 6
        means = np.zeros((c, n))
        covs = np.zeros((c, n, n))
        cov_template = np.diag([9.0, 1.0])
        for i in range(c):
            _embed_block(covs[i], _rotated(cov_template, math.radians(60.0 * i)), 0)
            phi = math.radians(90.0 + 120.0 * i)
            means[i, 2:4] = 0.5 * np.array([math.cos(phi), math.sin(phi)])
            _embed_block(covs[i], np.eye(2), 2)
            _embed_block(covs[i], 16.0 * np.eye(2), 4)
        truth = {
            "name": name,
            "n": n,
            "subspaces": {
                "covariance_coded": [0, 1],
                "mean_coded": [2, 3],
                "high_variance": [4, 5],
            },
        }
        return means, covs, truth
    if name == "toy4d":
        # dims 0-1: well-separated means (the most discriminative subspace)
        # dims 2-3: zero means but second moments farther apart than dims 0-1
        c, n = 3, 4
        means = np.zeros((c, n))
        covs = np.zeros((c, n, n))
        cov_template = np.diag([4.0, 0.25])
        for i in range(c):
            phi = math.radians(90.0 + 120.0 * i)
            means[i, 0:2] = 2.0 * np.array([math.cos(phi), math.sin(phi)])
            _embed_block(covs[i], 0.5 * np.eye(2), 0)
            _embed_block(covs[i], _rotated(cov_template, math.radians(60.0 * i)), 2)
        truth = {
            "name": name,
            "n": n,
            "subspaces": {"mean_coded": [0, 1], "covariance_coded": [2, 3]},
        }
        return means, covs, truth
    if name == "covcode":
        # zero-mean classes; a rotating anisotropic 2D template carries all
        # the signal while the remaining dims share a larger variance, so
        # plain variance ranking points away from the signal
        c, n = COVCODE_CLASSES, COVCODE_DIMS
        means = np.zeros((c, n))
        covs = np.zeros((c, n, n))
        cov_template = np.diag([3.0, 0.3])
        for i in range(c):
            _embed_block(covs[i], _rotated(cov_template, math.pi * i / c), 0)
            covs[i, 2:, 2:] = 4.0 * np.eye(n - 2)
        truth = {"name": name, "n": n, "subspaces": {"signal": [0, 1]}}
        return means, covs, truth
    raise UnknownSpec(
        f"unknown toy dataset {name!r}; valid names: {', '.join(TOY_NAMES)}"
    )


def generate(spec: ToySpec) -> tuple[LabeledDataset, dict]:
    """Sample the requested toy dataset; bitwise deterministic per spec."""
    means, covs, truth = class_parameters(spec.name)
    c, n = means.shape
    rng = np.random.default_rng(spec.seed)
    per = spec.samples_per_class
    rows = np.empty((c * per, n))
    labels = np.repeat(np.arange(c), per)
    for i in range(c):
        chol = np.linalg.cholesky(covs[i])
        rows[i * per : (i + 1) * per] = (
            means[i] + rng.standard_normal((per, n)) @ chol.T
        )
    return LabeledDataset(labels=labels, samples=rows, n_classes=c), truth


@dataclass
class SweepTable:
    """Column-ordered numeric table, written as headed CSV."""

    name: str
    columns: list[str]
    rows: list[list[float]]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows])


def sweep_grid(
    name: str,
    seed: int = 0,
    ens: ClassEnsemble | None = None,
    mc_samples: int = 100_000,
) -> SweepTable:
    """Validation tables comparing distances against Bayes-error references.

    co_gap_dataset requires an ensemble and reports, per class pair, the
    closed-form bound alongside the exact Fisher-Rao distance whenever the
    pair has (numerically) equal means or equal covariances.
    """
    if name == "bayes1d":
        rows = []
        for idx, log_s2 in enumerate(np.linspace(-2.0, 2.0, 17)):
            s2 = 10.0**log_s2
            classes = [
                GaussianParams(np.zeros(1), np.array([[1.0]])),
                GaussianParams(np.zeros(1), np.array([[s2]])),
            ]
            mc_acc, log_odds = monte_carlo_bayes(classes, mc_samples, seed + idx)
            rows.append(
                [
                    float(log_s2),
                    bayes_1d_closed_form(s2),
                    mc_acc,
                    log_odds,
                    fisher_rao_zero_mean([[s2]], [[1.0]]),
                ]
            )
        return SweepTable(
            name=name,
            columns=[
                "log10_sigma2",
                "closed_form_accuracy",
                "mc_accuracy",
                "log_odds",
                "d_fr",
            ],
            rows=rows,
        )
    if name == "bayes2d":
        rows = []
        grid = np.linspace(-1.2, 1.2, 9)
        eye = np.eye(2)
        idx = 0
        for log_s1 in grid:
            for log_s2 in grid:
                cov = np.diag([10.0**log_s1, 10.0**log_s2])
                p = GaussianParams(np.zeros(2), cov)
                q = GaussianParams(np.zeros(2), eye)
                n_mc = min(mc_samples, 50_000)
                mc_acc, log_odds = monte_carlo_bayes([p, q], n_mc, seed + idx)
                rows.append(
                    [
                        float(log_s1),
                        float(log_s2),
                        mc_acc,
                        log_odds,
                        fisher_rao_zero_mean(cov, eye),
                        bhattacharyya(p, q),
                        hellinger(p, q),
                    ]
                )
                idx += 1
        return SweepTable(
            name=name,
            columns=[
                "log10_sigma1",
                "log10_sigma2",
                "mc_accuracy",
                "log_odds",
                "d_fr",
                "d_b",
                "d_h",
            ],
            rows=rows,
        )
    if name == "co_gap_equalcov":
        rows = []
        one = np.array([[1.0]])
        for d_m in np.linspace(0.0, 20.0, 41):
            exact = fisher_rao_equal_cov([0.0], [d_m], one)
            bound = calvo_oller_distance(
                GaussianParams(np.zeros(1), one),
                GaussianParams(np.array([d_m]), one),
            )
            rows.append([float(d_m), exact, bound])
        return SweepTable(
            name=name,
            columns=["d_m", "exact_fisher_rao", "calvo_oller_bound"],
            rows=rows,
        )
    if name == "co_gap_dataset":
        if ens is None:
            raise ValueError("co_gap_dataset requires class statistics")
        rows = []
        params = [
            GaussianParams(ens.means[i], ens.covariances[i])
            for i in range(ens.n_classes)
        ]
        for i in range(ens.n_classes):
            for j in range(i + 1, ens.n_classes):
                bound = calvo_oller_distance(params[i], params[j])
                exact = _exact_fisher_rao_if_special(params[i], params[j])
                rows.append([float(i), float(j), bound, exact])
        return SweepTable(
            name=name,
            columns=["class_i", "class_j", "calvo_oller_bound", "exact_fisher_rao"],
            rows=rows,
        )
    raise UnknownSweep(
        f"unknown sweep {name!r}; valid names: {', '.join(SWEEP_NAMES)}"
    )


def _exact_fisher_rao_if_special(p: GaussianParams, q: GaussianParams) -> float:
    """Exact distance for equal-mean or equal-covariance pairs, else NaN."""
    scale = max(
        1.0,
        float(np.max(np.abs(p.mean))),
        float(np.max(np.abs(q.mean))),
    )
    if np.allclose(p.mean, q.mean, rtol=0.0, atol=1e-9 * scale):
        return fisher_rao_zero_mean(p.covariance, q.covariance)
    cov_scale = max(
        float(np.max(np.abs(p.covariance.mat))),
        float(np.max(np.abs(q.covariance.mat))),
    )
    if np.allclose(
        p.covariance.mat, q.covariance.mat, rtol=0.0, atol=1e-9 * cov_scale
    ):
        return fisher_rao_equal_cov(p.mean, q.mean, p.covariance)
    return math.nan
