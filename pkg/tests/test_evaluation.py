"""QDA, kNN, Monte-Carlo Bayes accuracy, and Gaussian-resampled evaluation."""

import math

import numpy as np
import pytest

from sqfa.distances import GaussianParams
from sqfa.errors import EmptyClass, NonPositiveVariance, TrainSmallerThanK
from sqfa.evaluation import (
    EvalReport,
    QdaModel,
    bayes_1d_closed_form,
    gaussian_resample_eval,
    knn_predict,
    knn_predict_features,
    monte_carlo_bayes,
    qda_evaluate,
    qda_fit,
    qda_predict,
)
from sqfa.stats import LabeledDataset, estimate_class_statistics, project_statistics
from sqfa.trainer import FilterBank

from conftest import rand_invertible, rand_spd


def identity_bank(n):
    return FilterBank(np.eye(n))


def gaussian_dataset(rng, means, covs, per_class):
    c, n = means.shape
    rows, labels = [], []
    for i in range(c):
        chol = np.linalg.cholesky(covs[i])
        rows.append(means[i] + rng.standard_normal((per_class, n)) @ chol.T)
        labels.append(np.full(per_class, i))
    return LabeledDataset(
        labels=np.concatenate(labels), samples=np.vstack(rows), n_classes=c
    )


class TestQda:
    def test_single_class_predicts_it(self, rng):
        data = LabeledDataset(
            labels=np.zeros(10, dtype=int),
            samples=rng.standard_normal((10, 2)),
            n_classes=1,
        )
        model = qda_fit(data, identity_bank(2), ridge=0.1)
        assert qda_predict(model, rng.standard_normal(2) * 100, identity_bank(2)) == 0

    def test_moments_match_projection(self, rng):
        data = gaussian_dataset(
            rng,
            rng.standard_normal((3, 4)),
            np.stack([rand_spd(4, rng) for _ in range(3)]),
            per_class=50,
        )
        f = rng.standard_normal((4, 2))
        bank = FilterBank.from_unconstrained(f)
        model = qda_fit(data, bank, ridge=0.0)
        ens = estimate_class_statistics(data)
        stats = project_statistics(ens, bank.filters, 0.0)
        np.testing.assert_allclose(model.means, stats.means, atol=1e-10)
        np.testing.assert_allclose(model.covariances, stats.covariances, atol=1e-10)

    def test_large_ridge_tends_to_nearest_mean(self, rng):
        # equal-trace covariances so the residual logdet differences
        # vanish with the ridge at the same rate as the quadratic term
        means = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
        covs = np.stack([rand_spd(2, rng) for _ in range(3)])
        covs = np.stack([c * (2.0 / np.trace(c)) for c in covs])
        data = gaussian_dataset(rng, means, covs, per_class=100)
        model = qda_fit(data, identity_bank(2), ridge=1e6)
        test = rng.standard_normal((200, 2)) * 3.0
        class_means = np.stack(
            [data.samples[data.labels == i].mean(axis=0) for i in range(3)]
        )
        d2 = ((test[:, None, :] - class_means[None]) ** 2).sum(axis=2)
        margin = np.partition(d2, 1, axis=1)
        # keep points whose distance margin dominates the residual
        # sample-trace differences (both scale as 1/ridge)
        clear = (margin[:, 1] - margin[:, 0]) > 1.0
        assert clear.sum() > 100
        got = model.predict_features(test[clear])
        nearest = np.argmin(d2[clear], axis=1)
        assert np.array_equal(got, nearest)

    def test_two_class_variance_boundary(self):
        # equal priors, N(0,1) vs N(0,s2): the densities cross at
        # z^2 = log(s2) / (1 - 1/s2)
        s2 = 4.0
        model = QdaModel(
            priors=[0.5, 0.5],
            means=np.zeros((2, 1)),
            covariances=np.array([[[1.0]], [[s2]]]),
        )
        t = math.sqrt(math.log(s2) / (1.0 - 1.0 / s2))
        inside = model.predict_features(np.array([[t - 1e-6]]))
        outside = model.predict_features(np.array([[t + 1e-6]]))
        assert inside[0] == 0 and outside[0] == 1

    def test_tie_breaks_to_lowest_class(self):
        model = QdaModel(
            priors=[0.5, 0.5],
            means=np.array([[-1.0], [1.0]]),
            covariances=np.array([[[1.0]], [[1.0]]]),
        )
        # the midline scores both classes identically
        assert model.predict_features(np.array([[0.0]]))[0] == 0

    def test_empty_class_raises(self, rng):
        data = LabeledDataset(
            labels=np.zeros(5, dtype=int),
            samples=rng.standard_normal((5, 2)),
            n_classes=2,
        )
        with pytest.raises(EmptyClass):
            qda_fit(data, identity_bank(2), ridge=0.1)


class TestKnn:
    def test_exact_training_point(self, rng):
        z = rng.standard_normal((10, 2))
        labels = np.arange(10) % 3
        got = knn_predict_features(z, labels, z[4:5], 3, k=1)
        assert got[0] == labels[4]

    def test_majority_vote(self):
        z_train = np.array([[0.0], [0.1], [5.0]])
        labels = np.array([0, 0, 1])
        got = knn_predict_features(z_train, labels, np.array([[0.05]]), 2, k=3)
        assert got[0] == 0

    def test_three_way_tie_takes_nearest(self):
        z_train = np.array([[1.0], [2.0], [3.0]])
        labels = np.array([2, 1, 0])
        got = knn_predict_features(z_train, labels, np.array([[0.0]]), 3, k=3)
        assert got[0] == 2  # the single nearest neighbor's label

    def test_distance_ties_break_by_training_order(self):
        # two training points equidistant from the query: the earlier wins
        z_train = np.array([[1.0], [-1.0], [30.0]])
        labels = np.array([1, 0, 0])
        got = knn_predict_features(z_train, labels, np.array([[0.0]]), 2, k=1)
        assert got[0] == 1

    def test_train_smaller_than_k(self, rng):
        z = rng.standard_normal((2, 2))
        with pytest.raises(TrainSmallerThanK):
            knn_predict_features(z, np.array([0, 1]), z, 2, k=3)

    def test_report_shape(self, rng):
        data = gaussian_dataset(
            rng,
            np.array([[0.0, 0.0], [6.0, 0.0]]),
            np.tile(np.eye(2), (2, 1, 1)),
            per_class=30,
        )
        report = knn_predict(data, data, identity_bank(2), k=3)
        assert report.classifier == "knn3"
        assert report.confusion.sum() == report.n_test == 60
        assert report.accuracy > 0.9


class TestEvalReport:
    def test_confusion_consistency(self, rng):
        data = gaussian_dataset(
            rng,
            np.array([[0.0], [2.0], [5.0]]),
            np.tile(np.eye(1), (3, 1, 1)),
            per_class=40,
        )
        model = qda_fit(data, identity_bank(1), ridge=0.01)
        report = qda_evaluate(model, data, identity_bank(1))
        # row sums equal per-class test counts, accuracy equals trace/total
        np.testing.assert_array_equal(report.confusion.sum(axis=1), [40, 40, 40])
        assert report.accuracy == pytest.approx(
            np.trace(report.confusion) / report.n_test
        )

    def test_json_schema(self, tmp_path, rng):
        report = EvalReport(
            classifier="qda", accuracy=0.5, confusion=np.eye(2, dtype=int),
            n_test=2, seed=7,
        )
        path = tmp_path / "m.json"
        report.save(path)
        import json

        payload = json.loads(path.read_text())
        assert set(payload) == {"classifier", "accuracy", "confusion", "n_test", "seed"}
        assert payload["confusion"] == [[1, 0], [0, 1]]


class TestMonteCarloBayes:
    def test_identical_classes_are_chance(self, rng):
        params = GaussianParams(np.zeros(2), np.eye(2))
        same = GaussianParams(np.zeros(2), np.eye(2))
        acc, _ = monte_carlo_bayes([params, same], 20_000, seed=0)
        assert acc == pytest.approx(0.5, abs=3.0 * math.sqrt(0.25 / 40_000))

    def test_1d_matches_closed_form(self):
        classes = [
            GaussianParams(np.zeros(1), [[1.0]]),
            GaussianParams(np.zeros(1), [[math.e**2]]),
        ]
        acc, log_odds = monte_carlo_bayes(classes, 100_000, seed=1)
        expected = bayes_1d_closed_form(math.e**2)
        assert acc == pytest.approx(expected, abs=0.005)
        assert log_odds == pytest.approx(math.log(acc / (1 - acc)))

    def test_invariant_under_joint_linear_map(self, rng):
        classes = [
            GaussianParams(rng.standard_normal(2), rand_spd(2, rng))
            for _ in range(3)
        ]
        g = rand_invertible(2, rng)
        moved = [
            GaussianParams(g.T @ p.mean, g.T @ p.covariance.mat @ g) for p in classes
        ]
        a0, _ = monte_carlo_bayes(classes, 50_000, seed=3)
        a1, _ = monte_carlo_bayes(moved, 50_000, seed=3)
        assert a1 == pytest.approx(a0, abs=0.01)

    def test_perfect_separation_infinite_log_odds(self):
        classes = [
            GaussianParams(np.array([0.0]), [[0.001]]),
            GaussianParams(np.array([1000.0]), [[0.001]]),
        ]
        acc, log_odds = monte_carlo_bayes(classes, 1000, seed=0)
        assert acc == 1.0
        assert log_odds == math.inf

    def test_deterministic_per_seed(self):
        classes = [
            GaussianParams(np.zeros(1), [[1.0]]),
            GaussianParams(np.zeros(1), [[3.0]]),
        ]
        assert monte_carlo_bayes(classes, 10_000, seed=5) == monte_carlo_bayes(
            classes, 10_000, seed=5
        )


class TestBayes1dClosedForm:
    def test_indistinguishable(self):
        assert bayes_1d_closed_form(1.0) == 0.5

    def test_e_squared_value(self):
        # threshold algebra evaluated numerically, cross-checked by MC above
        assert bayes_1d_closed_form(math.e**2) == pytest.approx(0.7237651, abs=1e-6)

    def test_relabeling_symmetry(self):
        for s2 in (0.1, 0.37, 2.2, 9.0):
            assert bayes_1d_closed_form(s2) == pytest.approx(
                bayes_1d_closed_form(1.0 / s2), abs=1e-12
            )

    def test_nonpositive_variance(self):
        with pytest.raises(NonPositiveVariance):
            bayes_1d_closed_form(0.0)

    def test_accuracy_increases_away_from_one(self):
        values = [bayes_1d_closed_form(10.0**t) for t in np.linspace(0.0, 2.0, 9)]
        assert all(b >= a for a, b in zip(values, values[1:]))


class TestQdaApproachesBayes:
    def test_fitted_qda_matches_true_bayes_accuracy(self, rng):
        classes = [
            GaussianParams(np.array([0.0, 0.0]), np.diag([1.0, 1.0])),
            GaussianParams(np.array([1.5, 0.0]), np.diag([3.0, 0.5])),
        ]
        train = gaussian_dataset(
            rng,
            np.stack([p.mean for p in classes]),
            np.stack([p.covariance.mat for p in classes]),
            per_class=10_000,
        )
        test = gaussian_dataset(
            rng,
            np.stack([p.mean for p in classes]),
            np.stack([p.covariance.mat for p in classes]),
            per_class=20_000,
        )
        model = qda_fit(train, identity_bank(2), ridge=0.0)
        report = qda_evaluate(model, test, identity_bank(2))
        bayes_acc, _ = monte_carlo_bayes(classes, 100_000, seed=11)
        assert report.accuracy == pytest.approx(bayes_acc, abs=0.01)


class TestGaussianResample:
    def test_matches_real_accuracy_on_gaussian_data(self, rng):
        means = np.array([[0.0, 0.0], [2.5, 0.0]])
        covs = np.stack([np.eye(2), np.diag([0.5, 2.0])])
        train = gaussian_dataset(rng, means, covs, per_class=2000)
        test = gaussian_dataset(rng, means, covs, per_class=2000)
        bank = identity_bank(2)
        model = qda_fit(train, bank, ridge=0.0)
        real = qda_evaluate(model, test, bank)
        synth = gaussian_resample_eval(train, test, bank, "qda", seed=3, ridge=0.0)
        assert synth.accuracy == pytest.approx(real.accuracy, abs=0.02)

    def test_deterministic_per_seed(self, rng):
        means = np.array([[0.0], [1.0]])
        covs = np.tile(np.eye(1), (2, 1, 1))
        train = gaussian_dataset(rng, means, covs, per_class=100)
        r1 = gaussian_resample_eval(train, train, identity_bank(1), "qda", seed=9)
        r2 = gaussian_resample_eval(train, train, identity_bank(1), "qda", seed=9)
        assert r1.accuracy == r2.accuracy
        np.testing.assert_array_equal(r1.confusion, r2.confusion)

    def test_knn_variant(self, rng):
        means = np.array([[0.0, 0.0], [5.0, 0.0]])
        covs = np.tile(np.eye(2), (2, 1, 1))
        train = gaussian_dataset(rng, means, covs, per_class=200)
        report = gaussian_resample_eval(train, train, identity_bank(2), "knn", seed=2)
        assert report.classifier == "knn3-gaussian-resample"
        assert report.accuracy > 0.95

    def test_unknown_classifier(self, rng):
        means = np.array([[0.0], [1.0]])
        covs = np.tile(np.eye(1), (2, 1, 1))
        train = gaussian_dataset(rng, means, covs, per_class=50)
        with pytest.raises(ValueError):
            gaussian_resample_eval(train, train, identity_bank(1), "svm", seed=0)
