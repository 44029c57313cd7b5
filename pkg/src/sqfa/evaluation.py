"""Classifiers over projected features and Bayes-error references.

QDA is the optimal Bayes classifier when the class conditionals are
Gaussian; the Monte-Carlo routine estimates the Bayes accuracy of known
Gaussian classes directly, and the 1D closed form provides an exact
cross-check via the error function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .distances import GaussianParams
from .errors import (
    DimensionMismatch,
    EmptyClass,
    NonPositiveVariance,
    NotPositiveDefinite,
    TrainSmallerThanK,
)
from .stats import LabeledDataset
from .trainer import FilterBank


@dataclass
class EvalReport:
    """Accuracy plus per-class confusion counts for one evaluation run."""

    classifier: str
    accuracy: float
    confusion: np.ndarray  # (c, c) ints, rows are true classes
    n_test: int
    seed: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "accuracy": self.accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "n_test": self.n_test,
            "seed": self.seed,
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2), encoding="utf-8"
        )


def _report(classifier, true_labels, predicted, n_classes, seed=None) -> EvalReport:
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (true_labels, predicted), 1)
    accuracy = float(np.trace(confusion)) / max(1, len(true_labels))
    return EvalReport(
        classifier=classifier,
        accuracy=accuracy,
        confusion=confusion,
        n_test=len(true_labels),
        seed=seed,
    )


@dataclass
class QdaModel:
    """Per-class Gaussian moments with count-proportional priors."""

    priors: np.ndarray       # (c,)
    means: np.ndarray        # (c, m)
    covariances: np.ndarray  # (c, m, m), ridge already added

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        if abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1, got {self.priors.sum()!r}")
        self._cho = []
        self._logdet = np.empty(len(self.priors))
        for i, cov in enumerate(self.covariances):
            try:
                cho = scipy.linalg.cho_factor(cov, lower=True)
            except (scipy.linalg.LinAlgError, np.linalg.LinAlgError):
                raise NotPositiveDefinite(
                    f"class {i} covariance is singular; increase the ridge"
                ) from None
            self._cho.append(cho)
            self._logdet[i] = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))

    @property
    def n_classes(self) -> int:
        return len(self.priors)

    def log_scores(self, z: np.ndarray) -> np.ndarray:
        """Discriminant log prior - 0.5 logdet - 0.5 Mahalanobis, per class.

        Omits the shared -m/2 log(2 pi) constant, which cancels in argmax.
        """
        z = np.atleast_2d(z)
        scores = np.empty((z.shape[0], self.n_classes))
        for i in range(self.n_classes):
            diff = z - self.means[i]
            sol = scipy.linalg.cho_solve(self._cho[i], diff.T).T
            quad = np.einsum("nj,nj->n", diff, sol)
            scores[:, i] = (
                math.log(self.priors[i]) - 0.5 * self._logdet[i] - 0.5 * quad
            )
        return scores

    def predict_features(self, z: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum: ties break toward the lowest class
        return np.argmax(self.log_scores(z), axis=1)


def qda_fit(train: LabeledDataset, bank: FilterBank, ridge: float = 0.0) -> QdaModel:
    """Fit per-class Gaussian moments to projected training samples.

    Moments use the same 1/N convention as the statistics module; ridge
    is added to each covariance. Priors are count-proportional.
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    z = train.samples @ bank.filters
    c = train.n_classes
    m = bank.m
    priors = np.empty(c)
    means = np.empty((c, m))
    covs = np.empty((c, m, m))
    for i in range(c):
        rows = z[train.labels == i]
        if rows.shape[0] == 0:
            raise EmptyClass(f"class {i} has no training samples")
        priors[i] = rows.shape[0] / z.shape[0]
        means[i] = rows.mean(axis=0)
        centered = rows - means[i]
        covs[i] = (centered.T @ centered) / rows.shape[0] + ridge * np.eye(m)
    return QdaModel(priors=priors, means=means, covariances=covs)


def qda_predict(model: QdaModel, x: np.ndarray, bank: FilterBank) -> int:
    """Predict the label of a single data-space sample."""
    z = np.asarray(x, dtype=float).reshape(1, -1) @ bank.filters
    return int(model.predict_features(z)[0])


def qda_evaluate(
    model: QdaModel, test: LabeledDataset, bank: FilterBank
) -> EvalReport:
    z = test.samples @ bank.filters
    predicted = model.predict_features(z)
    return _report("qda", test.labels, predicted, test.n_classes)


def _knn_vote(neighbor_labels: np.ndarray, n_classes: int) -> int:
    counts = np.bincount(neighbor_labels, minlength=n_classes)
    winners = np.flatnonzero(counts == counts.max())
    if len(winners) == 1:
        return int(winners[0])
    # vote tie: the nearest neighbor whose label is among the tied wins
    for label in neighbor_labels:
        if label in winners:
            return int(label)
    return int(neighbor_labels[0])  # pragma: no cover - first branch always hits


def knn_predict_features(
    z_train: np.ndarray,
    train_labels: np.ndarray,
    z_test: np.ndarray,
    n_classes: int,
    k: int = 3,
) -> np.ndarray:
    """k-nearest-neighbor labels in feature space (Euclidean metric).

    Distance ties are broken by training-set order (stable sort); vote
    ties by the nearest neighbor's label.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if z_train.shape[0] < k:
        raise TrainSmallerThanK(
            f"k={k} exceeds the {z_train.shape[0]} training samples"
        )
    d2 = (
        np.sum(z_test**2, axis=1)[:, None]
        - 2.0 * z_test @ z_train.T
        + np.sum(z_train**2, axis=1)[None, :]
    )
    predictions = np.empty(z_test.shape[0], dtype=int)
    for t in range(z_test.shape[0]):
        order = np.argsort(d2[t], kind="stable")[:k]
        predictions[t] = _knn_vote(train_labels[order], n_classes)
    return predictions


def knn_predict(
    train: LabeledDataset, test: LabeledDataset, bank: FilterBank, k: int = 3
) -> EvalReport:
    """Project both sets through the filters and kNN-classify the test set."""
    if train.n_dims != test.n_dims:
        raise DimensionMismatch(
            f"train dim {train.n_dims} != test dim {test.n_dims}"
        )
    z_train = train.samples @ bank.filters
    z_test = test.samples @ bank.filters
    predicted = knn_predict_features(
        z_train, train.labels, z_test, test.n_classes, k=k
    )
    return _report(f"knn{k}", test.labels, predicted, test.n_classes)


def gaussian_log_densities(z: np.ndarray, classes: list[GaussianParams]) -> np.ndarray:
    """Exact Gaussian log densities of feature rows under each class.

    Shared normalizing constants are kept so the values are true log
    densities (up to machine precision), not just discriminants.
    """
    z = np.atleast_2d(z)
    out = np.empty((z.shape[0], len(classes)))
    const = -0.5 * z.shape[1] * math.log(2.0 * math.pi)
    for i, params in enumerate(classes):
        cho = scipy.linalg.cho_factor(params.covariance.mat, lower=True)
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        diff = z - params.mean
        sol = scipy.linalg.cho_solve(cho, diff.T).T
        quad = np.einsum("nj,nj->n", diff, sol)
        out[:, i] = const - 0.5 * logdet - 0.5 * quad
    return out


def sample_gaussian(
    params: GaussianParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n samples via the Cholesky factor times standard normals."""
    chol = np.linalg.cholesky(params.covariance.mat)
    return params.mean + rng.standard_normal((n, params.dim)) @ chol.T


def monte_carlo_bayes(
    classes: list[GaussianParams], n_per_class: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo Bayes accuracy of known Gaussian classes, equal priors.

    Samples n_per_class points from every class, classifies them by exact
    log-density argmax with the true parameters, and returns (accuracy,
    log-odds of a correct classification). A zero error rate in sample
    reports the log-odds as +inf.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = np.random.default_rng(seed)
    correct = 0
    total = 0
    for i, params in enumerate(classes):
        z = sample_gaussian(params, n_per_class, rng)
        predicted = np.argmax(gaussian_log_densities(z, classes), axis=1)
        correct += int(np.sum(predicted == i))
        total += n_per_class
    accuracy = correct / total
    error = 1.0 - accuracy
    log_odds = math.inf if error == 0.0 else math.log(accuracy / error)
    return accuracy, log_odds


def bayes_1d_closed_form(sigma2: float) -> float:
    """Exact Bayes accuracy for equal-prior classes N(0,1) vs N(0,sigma2).

    The equal-density threshold satisfies t^2 = log(s2) / (1 - 1/s2); the
    accuracy follows from the normal CDF. Written for s2 > 1 (the unit
    class wins inside the threshold); sigma2 < 1 is mapped through the
    relabeling symmetry accuracy(sigma2) = accuracy(1/sigma2).
    """
    if sigma2 <= 0:
        raise NonPositiveVariance(f"sigma2 must be positive, got {sigma2}")
    if sigma2 == 1.0:
        return 0.5
    s2 = sigma2 if sigma2 > 1.0 else 1.0 / sigma2
    t = math.sqrt(math.log(s2) / (1.0 - 1.0 / s2))

    def ncdf(v: float) -> float:
        return 0.5 * (1.0 + math.erf(v / math.sqrt(2.0)))

    return 0.5 * ((2.0 * ncdf(t) - 1.0) + 2.0 * (1.0 - ncdf(t / math.sqrt(s2))))


def gaussian_resample_eval(
    train: LabeledDataset,
    test: LabeledDataset,
    bank: FilterBank,
    classifier: str = "qda",
    seed: int = 0,
    ridge: float = 0.0,
    k: int = 3,
) -> EvalReport:
    """Evaluate on synthetic test data resampled from per-class Gaussian fits.

    Replaces each test class with the same number of draws from a Gaussian
    matching that class's feature-space mean and covariance, then runs the
    requested classifier (trained on the real training set) on the
    synthetic samples. Deterministic per seed.
    """
    z_train = train.samples @ bank.filters
    z_test = test.samples @ bank.filters
    rng = np.random.default_rng(seed)
    synth_rows = []
    synth_labels = []
    for i in range(test.n_classes):
        rows = z_test[test.labels == i]
        if rows.shape[0] == 0:
            raise EmptyClass(f"test class {i} has no samples")
        mean = rows.mean(axis=0)
        centered = rows - mean
        cov = (centered.T @ centered) / rows.shape[0]
        chol = _psd_cholesky(cov)
        synth_rows.append(mean + rng.standard_normal(rows.shape) @ chol.T)
        synth_labels.append(np.full(rows.shape[0], i))
    z_synth = np.vstack(synth_rows)
    labels_synth = np.concatenate(synth_labels)

    if classifier == "qda":
        model = QdaModel(
            priors=np.bincount(train.labels, minlength=train.n_classes)
            / train.n_samples,
            means=np.vstack(
                [
                    z_train[train.labels == i].mean(axis=0)
                    for i in range(train.n_classes)
                ]
            ),
            covariances=np.stack(
                [
                    _class_cov(z_train[train.labels == i]) + ridge * np.eye(bank.m)
                    for i in range(train.n_classes)
                ]
            ),
        )
        predicted = model.predict_features(z_synth)
        name = "qda-gaussian-resample"
    elif classifier == "knn":
        predicted = knn_predict_features(
            z_train, train.labels, z_synth, test.n_classes, k=k
        )
        name = f"knn{k}-gaussian-resample"
    else:
        raise ValueError(f"unknown classifier {classifier!r}, expected qda or knn")
    return _report(name, labels_synth, predicted, test.n_classes, seed=seed)


def _class_cov(rows: np.ndarray) -> np.ndarray:
    centered = rows - rows.mean(axis=0)
    return (centered.T @ centered) / rows.shape[0]


def _psd_cholesky(cov: np.ndarray) -> np.ndarray:
    # sample covariances can be rank deficient; jitter minimally until
    # the factorization succeeds
    jitter = 0.0
    scale = max(float(np.max(np.diag(cov))), 1e-300)
    for _ in range(12):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12 * scale)
    raise NotPositiveDefinite("could not factor a test-class covariance")
