"""Calibrator fitting/application and label-shift EM behavior."""

import json

import numpy as np
import pytest

from abstainkit import (
    Calibrator,
    PriorEstimate,
    ProbabilityMatrix,
    adapt_label_shift_em,
    apply_calibrator,
    fit_calibrator,
)
from abstainkit.errors import (
    DegenerateLabels,
    DimensionMismatch,
    NonpositiveTrainPrior,
)


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _sample_categorical(rng, probs):
    return (rng.random(probs.shape[0])[:, None] >= probs.cumsum(axis=1)).sum(axis=1).clip(
        0, probs.shape[1] - 1
    )


class TestFitCalibrator:
    def test_platt_identity_recovery(self):
        # scores already equal to the true log-odds: the NLL optimum is the
        # identity map, so slope ~ 1 and intercept ~ 0
        rng = np.random.default_rng(5)
        scores = rng.normal(0.0, 2.0, 10000)
        labels = (rng.random(10000) < 1.0 / (1.0 + np.exp(-scores))).astype(int)
        cal = fit_calibrator("platt", scores, labels)
        assert cal.scale == pytest.approx(1.0, abs=0.1)
        assert cal.offset[0] == pytest.approx(0.0, abs=0.1)

    def test_temperature_recovery(self):
        # logits are a calibrated reference times 2.5, so the fitted
        # temperature should recover 2.5 within 5%
        rng = np.random.default_rng(6)
        reference = rng.normal(0.0, 3.0, (10000, 4))
        labels = _sample_categorical(rng, _softmax(reference))
        cal = fit_calibrator("temperature", reference * 2.5, labels)
        assert cal.temperature == pytest.approx(2.5, rel=0.05)
        assert np.all(cal.offset == 0.0)

    def test_temperature_recovery_verified_by_grid_scan(self):
        rng = np.random.default_rng(16)
        reference = rng.normal(0.0, 2.0, (4000, 3))
        labels = _sample_categorical(rng, _softmax(reference))
        logits = reference * 2.5
        cal = fit_calibrator("temperature", logits, labels)

        def nll(temperature):
            z = logits / temperature
            shifted = z - z.max(axis=1, keepdims=True)
            log_norm = np.log(np.exp(shifted).sum(axis=1))
            return float(np.mean(log_norm - shifted[np.arange(labels.size), labels]))

        grid = np.linspace(0.5, 8.0, 301)
        best = grid[int(np.argmin([nll(t) for t in grid]))]
        assert cal.temperature == pytest.approx(best, abs=0.05)

    def test_bias_corrected_recovers_shift(self):
        rng = np.random.default_rng(7)
        reference = rng.normal(0.0, 3.0, (10000, 3))
        labels = _sample_categorical(rng, _softmax(reference))
        bias = np.array([1.0, -0.5, 0.0])
        cal = fit_calibrator("bias_corrected_temperature", reference * 2.0 + bias, labels)
        assert cal.temperature == pytest.approx(2.0, rel=0.1)
        # offsets are identified only up to an additive constant
        centered = cal.offset - cal.offset.mean()
        expected = -(bias - bias.mean())
        np.testing.assert_allclose(centered, expected, atol=0.15)

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            fit_calibrator("platt", np.linspace(-1, 1, 20), np.ones(20, dtype=int))

    def test_missing_class_rejected(self):
        rng = np.random.default_rng(8)
        logits = rng.normal(0, 1, (30, 4))
        labels = rng.integers(0, 2, 30)  # classes 2 and 3 never appear
        with pytest.raises(DegenerateLabels):
            fit_calibrator("temperature", logits, labels)

    def test_too_few_examples(self):
        with pytest.raises(ValueError, match="at least 10"):
            fit_calibrator("platt", np.linspace(-1, 1, 5), np.array([0, 1, 0, 1, 0]))

    def test_fit_is_deterministic(self):
        rng = np.random.default_rng(9)
        logits = rng.normal(0, 2, (500, 3))
        labels = _sample_categorical(rng, _softmax(logits))
        first = fit_calibrator("temperature", logits, labels)
        second = fit_calibrator("temperature", logits, labels)
        assert first.scale == second.scale

    def test_fitted_nll_beats_identity(self):
        rng = np.random.default_rng(10)
        logits = rng.normal(0, 4, (2000, 3))
        labels = _sample_categorical(rng, _softmax(logits / 3.0))
        cal = fit_calibrator("temperature", logits, labels)

        def nll(matrix):
            return -float(np.mean(np.log(matrix[np.arange(labels.size), labels])))

        fitted = nll(apply_calibrator(cal, logits).entries)
        identity = nll(_softmax(logits))
        assert fitted <= identity + 1e-12


class TestApplyCalibrator:
    def test_identity_temperature_is_softmax(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(0, 2, (50, 4))
        cal = Calibrator(kind="temperature", scale=1.0, offset=np.zeros(4))
        np.testing.assert_allclose(apply_calibrator(cal, logits).entries, _softmax(logits), atol=1e-12)

    def test_platt_midpoint(self):
        cal = Calibrator(kind="platt", scale=1.0, offset=[0.0])
        assert apply_calibrator(cal, np.array([0.0]))[0] == 0.5

    def test_large_temperature_flattens_rows(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(0, 2, (20, 5))
        for temperature in (1e2, 1e4):
            cal = Calibrator(kind="temperature", scale=1.0 / temperature, offset=np.zeros(5))
            rows = apply_calibrator(cal, logits).entries
            np.testing.assert_allclose(rows, 0.2, atol=10.0 / temperature)

    def test_rows_always_on_simplex(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(0, 30, (200, 6))
        cal = Calibrator(kind="bias_corrected_temperature", scale=0.37, offset=rng.normal(0, 1, 6))
        rows = apply_calibrator(cal, logits).entries
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)

    def test_argmax_preserved_by_plain_temperature(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(0, 3, (1000, 5))
        cal = Calibrator(kind="temperature", scale=1.0 / 3.7, offset=np.zeros(5))
        rows = apply_calibrator(cal, logits).entries
        np.testing.assert_array_equal(rows.argmax(axis=1), logits.argmax(axis=1))

    def test_dimension_mismatch(self):
        cal = Calibrator(kind="temperature", scale=1.0, offset=np.zeros(3))
        with pytest.raises(DimensionMismatch):
            apply_calibrator(cal, np.zeros((4, 5)))
        platt = Calibrator(kind="platt", scale=1.0, offset=[0.0])
        with pytest.raises(DimensionMismatch):
            apply_calibrator(platt, np.zeros((4, 2)))

    def test_json_roundtrip_exact_field_names(self, tmp_path):
        cal = Calibrator(kind="bias_corrected_temperature", scale=0.4, offset=[0.1, -0.1, 0.0])
        path = tmp_path / "cal.json"
        cal.to_json(path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"kind", "scale", "offset"}
        restored = Calibrator.from_json(path)
        assert restored.kind == cal.kind
        assert restored.scale == cal.scale
        np.testing.assert_array_equal(restored.offset, cal.offset)


class TestLabelShiftEM:
    def test_no_shift_is_near_fixed_point(self):
        rng = np.random.default_rng(20)
        logits = rng.normal(0, 2, (10000, 3))
        probs = _softmax(logits)
        labels = _sample_categorical(rng, probs)
        train = PriorEstimate(np.bincount(labels, minlength=3) / labels.size)
        result = adapt_label_shift_em(ProbabilityMatrix(probs), train)
        np.testing.assert_allclose(result.test_priors.priors, train.priors, atol=0.02)
        np.testing.assert_allclose(result.adapted_probs.entries, probs, atol=0.06)

    def test_one_hot_rows_give_empirical_frequencies_in_one_step(self):
        rows = np.eye(3)[np.array([0, 0, 1, 2, 2, 2])]
        result = adapt_label_shift_em(
            ProbabilityMatrix(rows), PriorEstimate(np.ones(3) / 3), max_iter=1
        )
        np.testing.assert_allclose(result.test_priors.priors, [2 / 6, 1 / 6, 3 / 6], atol=1e-12)
        np.testing.assert_allclose(result.adapted_probs.entries, rows, atol=1e-12)

    def test_rows_stay_on_simplex(self):
        rng = np.random.default_rng(21)
        probs = _softmax(rng.normal(0, 2, (500, 4)))
        result = adapt_label_shift_em(ProbabilityMatrix(probs), PriorEstimate(np.full(4, 0.25)))
        np.testing.assert_allclose(result.adapted_probs.entries.sum(axis=1), 1.0, atol=1e-9)

    def test_one_more_step_changes_priors_below_tol(self):
        rng = np.random.default_rng(22)
        probs = _softmax(rng.normal(0, 2, (2000, 3)))
        train = PriorEstimate(np.array([0.5, 0.3, 0.2]))
        tol = 1e-6
        result = adapt_label_shift_em(ProbabilityMatrix(probs), train, tol=tol)
        assert result.converged
        weighted = probs * (result.test_priors.priors / train.priors)
        next_priors = (weighted / weighted.sum(axis=1, keepdims=True)).mean(axis=0)
        assert np.abs(next_priors - result.test_priors.priors).max() < tol

    def test_max_iter_flags_nonconvergence(self):
        rng = np.random.default_rng(23)
        probs = _softmax(rng.normal(0, 2, (200, 3)))
        result = adapt_label_shift_em(
            ProbabilityMatrix(probs), PriorEstimate(np.array([0.2, 0.3, 0.5])), tol=1e-15, max_iter=3
        )
        assert not result.converged
        assert result.iterations == 3

    def test_nonpositive_train_prior(self):
        probs = ProbabilityMatrix(np.array([[0.5, 0.5]]))
        with pytest.raises(NonpositiveTrainPrior):
            adapt_label_shift_em(probs, PriorEstimate(np.array([1.0, 0.0])))
