"""Dataset ingestion, per-class moment estimation, and feature-space projection.

Covariances use the 1/N (population) normalization throughout, so the
trainer, QDA, and the statistics files all share one convention. Training
consumes class statistics, never raw samples; sample-level access is
confined to evaluation and the posterior-based baseline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyClass,
    LabelOutOfRange,
    NotPositiveDefinite,
    ParseError,
    SingleSampleClass,
)


@dataclass
class LabeledDataset:
    """Labeled samples in data space.

    labels are 0-based contiguous integers in [0, n_classes); covariance
    estimation additionally requires at least two samples per class.
    """

    labels: np.ndarray
    samples: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2:
            raise DimensionMismatch(
                f"samples must be 2-d (N, n), got shape {self.samples.shape}"
            )
        if self.labels.shape[0] != self.samples.shape[0]:
            raise DimensionMismatch(
                f"{self.labels.shape[0]} labels for {self.samples.shape[0]} samples"
            )
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_classes
        ):
            raise LabelOutOfRange(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def n_dims(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass
class ClassEnsemble:
    """Per-class counts, means, and centered covariances in data space."""

    counts: np.ndarray       # (c,) int
    means: np.ndarray        # (c, n)
    covariances: np.ndarray  # (c, n, n), 1/N normalization

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int).reshape(-1)
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        c = self.counts.shape[0]
        n = self.means.shape[1] if self.means.ndim == 2 else -1
        if self.means.shape != (c, n) or self.covariances.shape != (c, n, n):
            raise DimensionMismatch(
                f"inconsistent ensemble shapes: counts {self.counts.shape}, "
                f"means {self.means.shape}, covariances {self.covariances.shape}"
            )

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_dims(self) -> int:
        return self.means.shape[1]

    @cached_property
    def second_moments(self) -> np.ndarray:
        """Raw second moments cov_i + mean_i mean_i^T, shape (c, n, n)."""
        outer = np.einsum("ci,cj->cij", self.means, self.means)
        return self.covariances + outer


@dataclass
class FeatureStats:
    """Projected class statistics with ridge regularization.

    means[i] = F^T gamma_i, covariances[i] = F^T cov_i F + sigma2 I, and
    second_moments[i] = F^T M_i F + sigma2 I, all symmetric; SPD whenever
    sigma2 > 0.
    """

    means: np.ndarray           # (c, m)
    covariances: np.ndarray     # (c, m, m)
    second_moments: np.ndarray  # (c, m, m)
    sigma2: float


def estimate_class_statistics(data: LabeledDataset) -> ClassEnsemble:
    """Per-class sample means and 1/N-normalized covariances.

    Raises EmptyClass/SingleSampleClass when a label has too few samples
    for its covariance to be estimable.
    """
    c = data.n_classes
    n = data.n_dims
    counts = np.zeros(c, dtype=int)
    means = np.zeros((c, n))
    covs = np.zeros((c, n, n))
    for i in range(c):
        rows = data.samples[data.labels == i]
        counts[i] = rows.shape[0]
        if counts[i] == 0:
            raise EmptyClass(f"class {i} has no samples")
        if counts[i] == 1:
            raise SingleSampleClass(f"class {i} has a single sample")
        mean = rows.mean(axis=0)
        centered = rows - mean
        means[i] = mean
        covs[i] = (centered.T @ centered) / counts[i]
    return ClassEnsemble(counts=counts, means=means, covariances=covs)


def project_statistics(
    ens: ClassEnsemble, filters: np.ndarray, sigma2: float
) -> FeatureStats:
    """Map data-space class statistics into feature space through filters.

    Adds sigma2 * I to every projected covariance and second moment; with
    sigma2 > 0 the outputs are SPD regardless of filter rank.
    """
    f = np.asarray(filters, dtype=float)
    if f.ndim != 2 or f.shape[0] != ens.n_dims:
        raise DimensionMismatch(
            f"filters shape {f.shape} incompatible with data dim {ens.n_dims}"
        )
    if sigma2 < 0:
        raise ValueError(f"sigma2 must be nonnegative, got {sigma2}")
    m = f.shape[1]
    ridge = sigma2 * np.eye(m)
    means = ens.means @ f
    covs = f.T @ (ens.covariances @ f) + ridge
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    moments = covs + np.einsum("ci,cj->cij", means, means)
    if sigma2 == 0.0:
        for i, cov in enumerate(covs):
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise NotPositiveDefinite(
                    f"projected covariance of class {i} is singular at sigma2=0"
                ) from None
    return FeatureStats(
        means=means, covariances=covs, second_moments=moments, sigma2=sigma2
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
#
# Dataset CSV: UTF-8, header "label,x0,...,x{n-1}", one sample per row.
# Labels are 0-based contiguous integers; gaps are rejected rather than
# remapped. Statistics JSON: {"n": int, "classes": [{"label", "count",
# "mean", "covariance"}, ...]}; second moments are derived on load.
# Floats are written with repr(), which round-trips exactly.


def save_dataset(data: LabeledDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label"] + [f"x{j}" for j in range(data.n_dims)])
        for label, row in zip(data.labels, data.samples):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        n = len(header) - 1
        expected = ["label"] + [f"x{j}" for j in range(n)]
        if n < 1 or header != expected:
            raise ParseError(
                f"{path}: bad header {header!r}, expected label,x0,...,x{{n-1}}"
            )
        labels = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n + 1:
                raise ParseError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {n + 1}"
                )
            try:
                labels.append(int(row[0]))
            except ValueError:
                raise ParseError(
                    f"{path}: row {lineno} has non-integer label {row[0]!r}"
                ) from None
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}: row {lineno} has a non-numeric value") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    labels = np.asarray(labels, dtype=int)
    if labels.min() < 0:
        raise LabelOutOfRange(f"{path}: negative label {labels.min()}")
    c = int(labels.max()) + 1
    present = np.unique(labels)
    if present.size != c:
        missing = sorted(set(range(c)) - set(present.tolist()))
        raise LabelOutOfRange(
            f"{path}: labels must be contiguous from 0; missing {missing}"
        )
    return LabeledDataset(labels=labels, samples=np.asarray(rows), n_classes=c)


def save_stats(ens: ClassEnsemble, path) -> None:
    payload = {
        "n": ens.n_dims,
        "classes": [
            {
                "label": i,
                "count": int(ens.counts[i]),
                "mean": ens.means[i].tolist(),
                "covariance": ens.covariances[i].tolist(),
            }
            for i in range(ens.n_classes)
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_stats(path) -> ClassEnsemble:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    try:
        n = int(payload["n"])
        classes = payload["classes"]
        labels = [int(entry["label"]) for entry in classes]
        counts = [int(entry["count"]) for entry in classes]
        means = [entry["mean"] for entry in classes]
        covs = [entry["covariance"] for entry in classes]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: missing field {exc}") from None
    if labels != list(range(len(labels))):
        raise LabelOutOfRange(f"{path}: class labels must be 0..c-1, got {labels}")
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if means.shape != (len(labels), n) or covs.shape != (len(labels), n, n):
        raise ParseError(f"{path}: mean/covariance shapes inconsistent with n={n}")
    return ClassEnsemble(counts=np.asarray(counts), means=means, covariances=covs)
