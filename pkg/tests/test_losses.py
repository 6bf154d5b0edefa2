"""Tests for smoothed cross-entropy, imputation MSE and infomax."""

from __future__ import annotations

import numpy as np
import pytest

from mapu_lab.diffmath import Tensor, grad_check, ops
from mapu_lab.errors import DomainError, ShapeError
from mapu_lab.losses import (
    SmoothingConfig,
    imputation_mse,
    infomax_loss,
    one_hot,
    row_entropy,
    smoothed_ce,
)

TOL = 1e-6


class TestSmoothing:
    """Label smoothing targets."""

    def test_targets_rows_sum_to_one(self):
        targets = SmoothingConfig(0.1).targets(np.array([0, 2]), 4)
        np.testing.assert_allclose(targets.sum(axis=1), 1.0)
        assert targets[0, 0] == pytest.approx(0.9 + 0.025)
        assert targets[0, 1] == pytest.approx(0.025)

    @pytest.mark.parametrize("eta", [-0.1, 1.0])
    def test_eta_range(self, eta):
        with pytest.raises(DomainError):
            SmoothingConfig(eta)

    def test_one_hot_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            one_hot([0, 3], 3)


class TestSmoothedCrossEntropy:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(5, 4))
        labels = np.array([0, 1, 2, 3, 1])
        eta = 0.2
        log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        targets = (1 - eta) * np.eye(4)[labels] + eta / 4
        expected = -np.mean(np.sum(targets * log_p, axis=1))
        assert smoothed_ce(Tensor(logits), labels, eta).item() == pytest.approx(expected, abs=1e-12)

    def test_without_smoothing_is_plain_nll(self):
        logits = np.log(np.array([[0.7, 0.2, 0.1]]))
        assert smoothed_ce(Tensor(logits), [0], 0.0).item() == pytest.approx(-np.log(0.7))

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            smoothed_ce(Tensor(np.zeros((3, 2))), [0, 1])

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient(self, seed):
        labels = np.array([1, 0, 2, 2])
        point = np.random.default_rng(seed).normal(scale=2.0, size=(4, 3))
        assert grad_check(lambda x: smoothed_ce(x, labels, 0.1), point) < TOL


class TestImputationMse:
    def test_value(self):
        a = Tensor(np.zeros((1, 2, 2)))
        b = Tensor(np.array([[[1.0, 2.0], [0.0, 1.0]]]))
        assert imputation_mse(a, b).item() == pytest.approx(6.0 / 4.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            imputation_mse(Tensor(np.zeros((1, 2, 3))), Tensor(np.zeros((1, 3, 2))))

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_both_sides(self, seed):
        rng = np.random.default_rng(100 + seed)
        other = rng.normal(size=(2, 3, 4))
        point = rng.normal(size=(2, 3, 4))
        assert grad_check(lambda x: imputation_mse(x, Tensor(other)), point) < TOL
        assert grad_check(lambda x: imputation_mse(Tensor(other), x), point) < TOL


class TestEntropyAndInfomax:
    """Row entropy and the information-maximization objective."""

    def test_row_entropy_of_uniform_and_one_hot(self):
        probs = Tensor(np.array([[0.25, 0.25, 0.25, 0.25], [1.0, 0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(row_entropy(probs).data, [np.log(4.0), 0.0], atol=1e-12)

    def test_infomax_confident_and_diverse_is_minimal(self):
        """One-hot rows covering every class reach -ln K."""
        assert infomax_loss(Tensor(np.eye(3))).item() == pytest.approx(-np.log(3.0), abs=1e-10)

    def test_infomax_collapsed_predictions_score_zero(self):
        probs = np.tile([[1.0, 0.0, 0.0]], (4, 1))
        assert infomax_loss(Tensor(probs)).item() == pytest.approx(0.0, abs=1e-10)

    def test_infomax_rejects_non_probability_rows(self):
        with pytest.raises(DomainError):
            infomax_loss(Tensor(np.array([[0.6, 0.6]])))

    @pytest.mark.parametrize("seed", range(20))
    def test_infomax_gradient_through_softmax(self, seed):
        point = np.random.default_rng(200 + seed).normal(size=(6, 4))
        assert grad_check(lambda x: infomax_loss(ops.softmax(x)), point) < TOL
