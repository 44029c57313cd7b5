"""Objective, filter gradient, trivialized optimization, and staging."""

import json
import math

import numpy as np
import pytest

from sqfa.distances import DistanceKind
from sqfa.errors import DimensionMismatch, NoImprovingStep
from sqfa.stats import ClassEnsemble
from sqfa.trainer import (
    FilterBank,
    TrainConfig,
    fit,
    fit_sequential_pairs,
    load_filters,
    objective,
    objective_gradient,
    orthogonalize,
    save_filters,
)

from conftest import rand_ensemble, rand_invertible, rand_spd

TRAIN_KINDS = [
    DistanceKind.FISHER_RAO_CALVO_OLLER,
    DistanceKind.FISHER_RAO_ZERO_MEAN,
    DistanceKind.BHATTACHARYYA,
    DistanceKind.HELLINGER,
]


def cfg_for(kind, m=2, **kw):
    defaults = dict(sigma2=0.05, seed=0, restarts=2, tol=1e-6, max_iters=500)
    defaults.update(kw)
    return TrainConfig(kind=kind, m=m, **defaults)


class TestFilterBank:
    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError):
            FilterBank(np.array([[2.0], [0.0]]))

    def test_more_filters_than_dims_rejected(self):
        with pytest.raises(DimensionMismatch):
            FilterBank(np.eye(2, 3) if False else np.ones((2, 3)) / math.sqrt(2))

    def test_from_unconstrained_normalizes(self, rng):
        w = rng.standard_normal((5, 3)) * 7.0
        bank = FilterBank.from_unconstrained(w)
        np.testing.assert_allclose(np.linalg.norm(bank.filters, axis=0), 1.0, atol=1e-12)


class TestTrainConfig:
    def test_odd_m_with_pairs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(
                kind=DistanceKind.FISHER_RAO_CALVO_OLLER,
                sigma2=0.1,
                m=3,
                sequential_pairs=True,
            )

    def test_nonpositive_tol_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(
                kind=DistanceKind.FISHER_RAO_CALVO_OLLER, sigma2=0.1, m=2, tol=0.0
            )


class TestObjective:
    def test_single_class_is_zero(self, rng):
        ens = rand_ensemble(4, 1, rng)
        cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER)
        assert objective(rng.standard_normal((4, 2)), ens, cfg) == 0.0

    def test_identical_classes_are_zero(self, rng):
        cov = rand_spd(4, rng)
        mean = rng.standard_normal(4)
        ens = ClassEnsemble(
            counts=np.full(3, 10),
            means=np.tile(mean, (3, 1)),
            covariances=np.tile(cov, (3, 1, 1)),
        )
        cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER)
        assert objective(rng.standard_normal((4, 2)), ens, cfg) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_two_class_1d_hand_value(self):
        # zero means, projected variances e^2 and 1: each ordered pair
        # contributes |log e^2| / sqrt(2) = sqrt(2), so the sum is 2 sqrt(2)
        ens = ClassEnsemble(
            counts=[10, 10],
            means=np.zeros((2, 1)),
            covariances=np.array([[[math.e**2]], [[1.0]]]),
        )
        cfg = TrainConfig(
            kind=DistanceKind.FISHER_RAO_ZERO_MEAN, sigma2=0.0, m=1, restarts=1
        )
        value = objective(np.array([[1.0]]), ens, cfg)
        assert value == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-12)


class TestObjectiveGradient:
    @pytest.mark.parametrize("kind", TRAIN_KINDS)
    def test_finite_difference_oracle(self, kind, rng):
        h = 1e-5
        for _ in range(3):
            n = int(rng.integers(3, 8))
            m = int(rng.integers(1, 4))
            c = int(rng.integers(2, 5))
            ens = rand_ensemble(n, c, rng)
            cfg = cfg_for(kind, m=m)
            f = rng.standard_normal((n, m))
            grad = objective_gradient(f, ens, cfg)
            for i in range(n):
                for j in range(m):
                    e = np.zeros((n, m))
                    e[i, j] = h
                    fd = (
                        objective(f + e, ens, cfg) - objective(f - e, ens, cfg)
                    ) / (2.0 * h)
                    assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_identical_classes_zero_gradient(self, rng):
        cov = rand_spd(3, rng)
        ens = ClassEnsemble(
            counts=[10, 10],
            means=np.zeros((2, 3)),
            covariances=np.stack([cov, cov.copy()]),
        )
        cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER)
        grad = objective_gradient(rng.standard_normal((3, 2)), ens, cfg)
        np.testing.assert_array_equal(grad, 0.0)

    def test_radial_directional_derivative_vanishes_after_trivialization(self, rng):
        # scaling a column is invisible through the normalization map, so
        # the trivialized gradient has no component along the column
        ens = rand_ensemble(4, 3, rng)
        cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2)
        w = rng.standard_normal((4, 2))
        norms = np.linalg.norm(w, axis=0)
        cols = w / norms
        g = objective_gradient(cols, ens, cfg)
        gw = (g - cols * np.sum(cols * g, axis=0)) / norms
        for k in range(2):
            assert abs(gw[:, k] @ w[:, k]) <= 1e-10 * np.linalg.norm(g)
        # while the unconstrained gradient generally does have one
        assert any(abs(g[:, k] @ cols[:, k]) > 1e-8 for k in range(2))


class TestFit:
    def test_deterministic_given_seed(self, rng):
        ens = rand_ensemble(5, 3, rng)
        cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2, restarts=3)
        bank1, log1 = fit(ens, cfg)
        bank2, log2 = fit(ens, cfg)
        np.testing.assert_array_equal(bank1.filters, bank2.filters)
        assert log1.restart_objectives == log2.restart_objectives

    def test_unit_norm_columns(self, rng):
        ens = rand_ensemble(5, 3, rng)
        bank, _ = fit(ens, cfg_for(DistanceKind.BHATTACHARYYA, m=3))
        np.testing.assert_allclose(
            np.linalg.norm(bank.filters, axis=0), 1.0, atol=1e-10
        )

    def test_objective_non_decreasing_and_converged(self, rng):
        ens = rand_ensemble(5, 4, rng)
        bank, log = fit(ens, cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2))
        values = [rec.objective for rec in log.iterations]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert log.converged
        assert len(log.restart_objectives) == 2

    def test_m_larger_than_n_rejected(self, rng):
        ens = rand_ensemble(3, 2, rng)
        with pytest.raises(DimensionMismatch):
            fit(ens, cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=4))

    def test_coincident_classes_converge_at_zero(self, rng):
        # a zero-gradient start is a stationary point, not a failure
        cov = rand_spd(3, rng)
        ens = ClassEnsemble(
            counts=[10, 10],
            means=np.zeros((2, 3)),
            covariances=np.stack([cov, cov.copy()]),
        )
        bank, log = fit(ens, cfg_for(DistanceKind.BHATTACHARYYA, m=2, restarts=2))
        assert log.converged
        assert log.restart_objectives == [0.0, 0.0]

    def test_no_improving_step_reports_partial_log(self, rng, monkeypatch):
        import sqfa.trainer as trainer_mod
        from sqfa.optim import IterationRecord, MinimizeResult

        def broken_minimize(fun, x0, **kw):
            f0, g0 = fun(x0)
            return MinimizeResult(
                x=np.asarray(x0), fun=f0, grad=g0, converged=False, n_iters=0,
                line_search_failed=True, first_step_failed=True,
                history=[IterationRecord(0, f0, float(np.linalg.norm(g0)), 0.0)],
            )

        monkeypatch.setattr(trainer_mod, "minimize_lbfgs", broken_minimize)
        ens = rand_ensemble(4, 3, rng)
        with pytest.raises(NoImprovingStep) as excinfo:
            fit(ens, cfg_for(DistanceKind.BHATTACHARYYA, m=2, restarts=2))
        assert excinfo.value.log.iterations
        assert excinfo.value.log.line_search_failed


class TestUnregularizedInvariance:
    @pytest.mark.parametrize(
        "kind",
        [DistanceKind.FISHER_RAO_CALVO_OLLER, DistanceKind.FISHER_RAO_ZERO_MEAN],
    )
    def test_full_rank_objective_matches_identity(self, kind, rng):
        # m = n at sigma2 = 0: any invertible filter bank scores the same
        ens = rand_ensemble(4, 3, rng)
        cfg = TrainConfig(kind=kind, sigma2=0.0, m=4, restarts=1)
        ref = objective(np.eye(4), ens, cfg)
        for _ in range(10):
            f = rand_invertible(4, rng)
            assert objective(f, ens, cfg) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize(
        "kind",
        [DistanceKind.FISHER_RAO_CALVO_OLLER, DistanceKind.FISHER_RAO_ZERO_MEAN],
    )
    def test_span_preserving_map_keeps_objective(self, kind, rng):
        ens = rand_ensemble(5, 3, rng)
        cfg = TrainConfig(kind=kind, sigma2=0.0, m=3, restarts=1)
        f = rng.standard_normal((5, 3))
        ref = objective(f, ens, cfg)
        for _ in range(10):
            g = rand_invertible(3, rng)
            fg = f @ g
            fg = fg / np.linalg.norm(fg, axis=0)
            assert objective(fg, ens, cfg) == pytest.approx(ref, rel=1e-8)

    def test_regularization_breaks_invariance(self, rng):
        # a column-mixing map changes the regularized objective (a pure
        # column rescaling would be undone by the unit-norm constraint)
        ens = rand_ensemble(5, 3, rng)
        cfg = TrainConfig(
            kind=DistanceKind.FISHER_RAO_CALVO_OLLER, sigma2=0.5, m=3, restarts=1
        )
        f = rng.standard_normal((5, 3))
        g = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
        fg = f @ g
        fg = fg / np.linalg.norm(fg, axis=0)
        ref = objective(f / np.linalg.norm(f, axis=0), ens, cfg)
        assert abs(objective(fg, ens, cfg) - ref) / ref > 1e-3


class TestSequentialPairs:
    def test_single_stage_matches_plain_fit(self, rng):
        ens = rand_ensemble(5, 3, rng)
        cfg2 = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2, restarts=2)
        plain, _ = fit(ens, cfg2)
        staged, _ = fit_sequential_pairs(
            ens, cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2, restarts=2)
        )
        np.testing.assert_array_equal(staged.filters, plain.filters)

    def test_first_pair_frozen_into_larger_fit(self, rng):
        ens = rand_ensemble(6, 3, rng)
        pair_cfg = cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2, restarts=2)
        pair, _ = fit(ens, pair_cfg)
        four_cfg = cfg_for(
            DistanceKind.FISHER_RAO_CALVO_OLLER, m=4, restarts=2,
            sequential_pairs=True,
        )
        four, log = fit_sequential_pairs(ens, four_cfg)
        np.testing.assert_array_equal(four.filters[:, :2], pair.filters)
        assert four.m == 4
        assert len(log.stage_logs) == 2

    def test_staged_objective_monotone(self, rng):
        ens = rand_ensemble(6, 3, rng)
        cfg = cfg_for(
            DistanceKind.FISHER_RAO_CALVO_OLLER, m=4, restarts=2,
            sequential_pairs=True,
        )
        bank, _ = fit_sequential_pairs(ens, cfg)
        o2 = objective(bank.filters[:, :2], ens, cfg)
        o4 = objective(bank.filters, ens, cfg)
        assert o2 <= o4 + 1e-12

    def test_fit_dispatches_on_config_flag(self, rng):
        ens = rand_ensemble(5, 3, rng)
        cfg = cfg_for(
            DistanceKind.FISHER_RAO_CALVO_OLLER, m=4, restarts=2,
            sequential_pairs=True,
        )
        via_fit, _ = fit(ens, cfg)
        direct, _ = fit_sequential_pairs(ens, cfg)
        np.testing.assert_array_equal(via_fit.filters, direct.filters)


class TestOrthogonalize:
    def test_span_preserved_and_orthonormal(self, rng):
        ens = rand_ensemble(5, 3, rng)
        bank, _ = fit(ens, cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2))
        ortho = orthogonalize(bank)
        np.testing.assert_allclose(
            ortho.filters.T @ ortho.filters, np.eye(2), atol=1e-10
        )
        # same span: projection onto the original columns is lossless
        proj = bank.filters @ np.linalg.lstsq(bank.filters, ortho.filters, rcond=None)[0]
        np.testing.assert_allclose(proj, ortho.filters, atol=1e-8)


class TestFilterJson:
    def test_round_trip(self, tmp_path, rng):
        ens = rand_ensemble(4, 3, rng)
        bank, _ = fit(ens, cfg_for(DistanceKind.HELLINGER, m=2))
        path = tmp_path / "filters.json"
        save_filters(bank, path, kind="sqfa-h", sigma2=0.05)
        back, kind, sigma2 = load_filters(path)
        np.testing.assert_array_equal(back.filters, bank.filters)
        assert kind == "sqfa-h"
        assert sigma2 == 0.05

    def test_schema_fields(self, tmp_path, rng):
        ens = rand_ensemble(4, 2, rng)
        bank, _ = fit(ens, cfg_for(DistanceKind.FISHER_RAO_CALVO_OLLER, m=2))
        path = tmp_path / "filters.json"
        save_filters(bank, path, kind="sqfa", sigma2=0.01)
        payload = json.loads(path.read_text())
        assert set(payload) == {"n", "m", "sigma2", "kind", "filters"}
        assert payload["n"] == 4 and payload["m"] == 2
        assert len(payload["filters"]) == 4
        assert len(payload["filters"][0]) == 2
