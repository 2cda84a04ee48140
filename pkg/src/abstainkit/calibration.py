"""Probability calibration and label-shift adaptation.

Calibrators map raw scores or logits to calibrated probabilities:

- ``platt``: sigmoid(scale * score + offset) for a binary score
- ``temperature``: softmax(logits * scale) with scale = 1/T
- ``bias_corrected_temperature``: softmax((logits + offset) * scale) with a
  per-class additive offset fit jointly with the temperature

Fits minimize the negative log-likelihood with a deterministic start
(scale=1, offset=0) refined by bounded quasi-Newton steps; the temperature
kinds additionally scan a fixed log-spaced grid so a bad start cannot leave
the fit in a poor local basin. Identical inputs always give identical fits.

Label-shift adaptation reweights calibrated test-set posteriors by iterating
expectation/maximization over the unknown test priors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateLabels,
    DidNotConverge,
    DimensionMismatch,
    NonpositiveTrainPrior,
)
from .metrics import ProbabilityMatrix

__all__ = [
    "Calibrator",
    "PriorEstimate",
    "LabelShiftResult",
    "fit_calibrator",
    "apply_calibrator",
    "adapt_label_shift_em",
]

CALIBRATOR_KINDS = ("platt", "temperature", "bias_corrected_temperature")

_GRAD_TOL = 1e-5
_MAX_ITER = 500


@dataclass(frozen=True)
class PriorEstimate:
    """Per-class prior probabilities (training priors or EM-estimated)."""

    priors: np.ndarray

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        if priors.ndim != 1:
            raise ValueError("priors must be a vector")
        if priors.size and (priors.min() < 0 or abs(priors.sum() - 1.0) > 1e-9):
            raise ValueError("priors must be nonnegative and sum to 1 within 1e-9")
        object.__setattr__(self, "priors", priors)

    @classmethod
    def from_labels(cls, labels, class_count: int) -> "PriorEstimate":
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=class_count)
        return cls(counts / counts.sum())

    @property
    def class_count(self) -> int:
        return self.priors.size


@dataclass(frozen=True)
class Calibrator:
    """Fitted calibration parameters; immutable and safe to share."""

    kind: str
    scale: float
    offset: np.ndarray

    def __post_init__(self):
        if self.kind not in CALIBRATOR_KINDS:
            raise ValueError(f"unknown calibrator kind {self.kind!r}")
        if self.kind != "platt" and self.scale <= 0:
            raise ValueError("temperature kinds require scale > 0")
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(-1))

    @property
    def temperature(self) -> float:
        """T such that logits are divided by T (temperature kinds only)."""
        if self.kind == "platt":
            raise ValueError("platt calibrators have no temperature")
        return 1.0 / self.scale

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": float(self.scale), "offset": self.offset.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "Calibrator":
        return cls(kind=payload["kind"], scale=float(payload["scale"]), offset=payload["offset"])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Calibrator":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def _platt_nll(params, scores, labels):
    a, b = params
    z = a * scores + b
    nll = float(np.mean(np.logaddexp(0.0, z) - labels * z))
    resid = 1.0 / (1.0 + np.exp(-z)) - labels
    return nll, np.array([np.mean(resid * scores), np.mean(resid)])

def _temp_nll(logits, labels, scale, offset):
    z = (logits + offset) * scale
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(labels.size), labels]
    nll = float(np.mean(log_norm - picked))
    q = _softmax(z)
    q[np.arange(labels.size), labels] -= 1.0
    grad_scale = float(np.mean(np.sum(q * (logits + offset), axis=1)))
    grad_offset = scale * q.mean(axis=0)
    return nll, grad_scale, grad_offset


def _minimize(fun, x0, bounds):
    return minimize(fun, x0=np.asarray(x0, dtype=float), jac=True, method="L-BFGS-B",
                    bounds=bounds, options={"maxiter": _MAX_ITER})


def fit_calibrator(kind: str, raw_scores, labels) -> Calibrator:
    """Fit calibration parameters by maximum likelihood.

    ``raw_scores`` is an N-vector of scores for ``platt`` and an N x C logit
    matrix for the temperature kinds; ``labels`` are class indices.
    """
    if kind not in CALIBRATOR_KINDS:
        raise ValueError(f"unknown calibrator kind {kind!r}")
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(raw_scores, dtype=float)
    if labels.size < 10:
        raise ValueError("need at least 10 examples to fit a calibrator")
    if np.unique(labels).size < 2:
        raise DegenerateLabels("labels contain a single class")

    if kind == "platt":
        if scores.ndim != 1 or scores.size != labels.size:
            raise DimensionMismatch("platt expects an aligned 1-D score vector")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("platt labels must be binary 0/1")
        y = labels.astype(float)
        res = _minimize(lambda p: _platt_nll(p, scores, y), [1.0, 0.0], bounds=None)
        if not res.success and np.linalg.norm(res.jac) > _GRAD_TOL:
            raise DidNotConverge(f"platt fit stopped with gradient norm {np.linalg.norm(res.jac):.2e}")
        return Calibrator(kind="platt", scale=float(res.x[0]), offset=[float(res.x[1])])

    if scores.ndim != 2 or scores.shape[0] != labels.size:
        raise DimensionMismatch("temperature kinds expect an N x C logit matrix")
    n_classes = scores.shape[1]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    if np.unique(labels).size < n_classes:
        raise DegenerateLabels("every class must appear at least once")

    if kind == "temperature":
        zeros = np.zeros(n_classes)

        def objective(params):
            nll, grad_scale, _ = _temp_nll(scores, labels, params[0], zeros)
            return nll, np.array([grad_scale])

        candidates = [1.0]
        grid = np.logspace(-3.0, 3.0, 61)
        candidates.append(float(grid[np.argmin([objective([s])[0] for s in grid])]))
        best = None
        for start in candidates:
            res = _minimize(objective, [start], bounds=[(1e-6, 1e6)])
            if best is None or res.fun < best.fun:
                best = res
        if not best.success and np.linalg.norm(best.jac) > _GRAD_TOL:
            raise DidNotConverge(f"temperature fit stopped with gradient norm {np.linalg.norm(best.jac):.2e}")
        return Calibrator(kind="temperature", scale=float(best.x[0]), offset=zeros)

    def objective(params):
        nll, grad_scale, grad_offset = _temp_nll(scores, labels, params[0], params[1:])
        return nll, np.concatenate([[grad_scale], grad_offset])

    x0 = np.concatenate([[1.0], np.zeros(n_classes)])
    bounds = [(1e-6, 1e6)] + [(None, None)] * n_classes
    res = _minimize(objective, x0, bounds=bounds)
    if not res.success and np.linalg.norm(res.jac) > _GRAD_TOL:
        raise DidNotConverge(f"bias-corrected fit stopped with gradient norm {np.linalg.norm(res.jac):.2e}")
    return Calibrator(kind="bias_corrected_temperature", scale=float(res.x[0]), offset=res.x[1:])


def apply_calibrator(cal: Calibrator, raw_scores):
    """Map raw scores through a fitted calibrator.

    Returns a probability vector for ``platt`` and a
    :class:`~abstainkit.metrics.ProbabilityMatrix` for the temperature kinds.
    """
    scores = np.asarray(raw_scores, dtype=float)
    if cal.kind == "platt":
        if scores.ndim != 1:
            raise DimensionMismatch("platt calibrators apply to 1-D score vectors")
        z = cal.scale * scores + cal.offset[0]
        return 1.0 / (1.0 + np.exp(-z))
    if scores.ndim != 2 or scores.shape[1] != cal.offset.size:
        raise DimensionMismatch(
            f"expected an N x {cal.offset.size} logit matrix, got shape {scores.shape}"
        )
    return ProbabilityMatrix(_softmax((scores + cal.offset) * cal.scale))


@dataclass(frozen=True)
class LabelShiftResult:
    adapted_probs: ProbabilityMatrix
    test_priors: PriorEstimate
    iterations: int
    converged: bool


def adapt_label_shift_em(
    test_probs: ProbabilityMatrix,
    train_priors: PriorEstimate,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> LabelShiftResult:
    """Adapt calibrated posteriors to an unknown shift in class priors.

    Alternates reweighting each row by the current prior ratio (E-step) with
    re-estimating the priors as the mean reweighted row (M-step) until the
    max-abs prior change drops below ``tol``. Hitting ``max_iter`` is not an
    error; the result is returned with ``converged=False``.
    """
    train = train_priors.priors
    if np.any(train <= 0):
        raise NonpositiveTrainPrior("train priors must be strictly positive")
    probs = test_probs.entries
    if probs.shape[1] != train.size:
        raise DimensionMismatch("test_probs and train_priors disagree on class count")

    priors = train.copy()
    adapted = probs
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        weighted = probs * (priors / train)
        row_sums = weighted.sum(axis=1, keepdims=True)
        if np.any(row_sums <= 0):
            raise ValueError("a row lost all probability mass during adaptation")
        adapted = weighted / row_sums
        new_priors = adapted.mean(axis=0)
        delta = float(np.abs(new_priors - priors).max())
        priors = new_priors
        if delta < tol:
            converged = True
            break
    return LabelShiftResult(
        adapted_probs=ProbabilityMatrix(adapted),
        test_priors=PriorEstimate(priors / priors.sum()),
        iterations=iterations,
        converged=converged,
    )
