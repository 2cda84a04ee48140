"""Exact post-hoc metrics on calibrated predictions plus the shared count types.

Everything here is a pure function of immutable inputs: values may be shared
freely across threads. Counts are carried as float64 arrays whose entries are
exact integers (safe below 2**53), so ratio computations are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDenominator,
    InvalidSpecificity,
    NoNegatives,
    NoPositives,
)

__all__ = [
    "SortedPredictionSet",
    "ProbabilityMatrix",
    "PenaltyWeightMatrix",
    "SuffixCounts",
    "KappaAggregates",
    "running_counts",
    "specificity_threshold_index",
    "sensitivity_at_specificity",
    "auroc",
    "weighted_kappa",
    "kappa_aggregates",
]


@dataclass(frozen=True)
class SortedPredictionSet:
    """Binary predictions sorted ascending, optionally with ground-truth labels.

    probs[i] <= probs[i+1] is enforced; ties keep their given order, and every
    rank-based quantity downstream treats that order as the ranking.
    """

    probs: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("probs must be a 1-D vector")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ValueError("probs must lie in [0, 1]")
        if np.any(np.diff(probs) < 0):
            raise ValueError("probs must be sorted ascending; use from_unsorted()")
        object.__setattr__(self, "probs", probs)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != probs.shape:
                raise ValueError("labels must align with probs")
            if labels.size and not np.isin(labels, (0, 1)).all():
                raise ValueError("labels must be binary 0/1")
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @classmethod
    def from_unsorted(cls, probs, labels=None) -> "SortedPredictionSet":
        """Stable-sort probs ascending and carry labels along."""
        probs = np.asarray(probs, dtype=float)
        order = np.argsort(probs, kind="stable")
        labels = None if labels is None else np.asarray(labels)[order]
        return cls(probs[order], labels)

    @property
    def n(self) -> int:
        return self.probs.size

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("this operation needs ground-truth labels")
        return self.labels


@dataclass(frozen=True)
class ProbabilityMatrix:
    """N x C calibrated class probabilities; every row lives on the simplex."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError("entries must be an N x C matrix")
        if entries.size and (entries.min() < 0.0 or entries.max() > 1.0):
            raise ValueError("entries must lie in [0, 1]")
        row_sums = entries.sum(axis=1)
        if entries.size and np.abs(row_sums - 1.0).max() > 1e-9:
            raise ValueError("rows must sum to 1 within 1e-9")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def class_count(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def from_binary(cls, positive_probs) -> "ProbabilityMatrix":
        """Lift a vector of positive-class probabilities to a 2-column matrix."""
        p = np.asarray(positive_probs, dtype=float)
        return cls(np.column_stack([1.0 - p, p]))


@dataclass(frozen=True)
class PenaltyWeightMatrix:
    """C x C nonnegative penalties: weights[i, j] is the cost of predicting
    class j for an example whose true class is i."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise ValueError("weights must be square")
        if weights.size and weights.min() < 0:
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "weights", weights)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def quadratic(cls, class_count: int) -> "PenaltyWeightMatrix":
        """The (i - j)^2 penalty used for ordinal rating agreement."""
        idx = np.arange(class_count)
        return cls((idx[:, None] - idx[None, :]).astype(float) ** 2)


@dataclass(frozen=True)
class SuffixCounts:
    """Running positive/negative counts over a sorted prediction vector.

    All six arrays are derived from one pass of cumulative sums:

    - ``pos_suffix[i]`` / ``neg_suffix[i]``: mass at indices >= i (length N+1)
    - ``pos_prefix[i]`` / ``neg_prefix[i]``: mass at indices < i (length N+1)
    - ``window_pos[i]`` / ``window_neg[i]``: mass inside [i, i+d) (length N+1-d)

    "Mass" is a 0/1 count when built from labels and an expected count when
    built from probabilities.
    """

    pos_suffix: np.ndarray
    neg_suffix: np.ndarray
    pos_prefix: np.ndarray
    neg_prefix: np.ndarray
    window_pos: np.ndarray
    window_neg: np.ndarray

    @property
    def total_pos(self) -> float:
        return float(self.pos_suffix[0])

    @property
    def total_neg(self) -> float:
        return float(self.neg_suffix[0])


def running_counts(values, window: int) -> SuffixCounts:
    """Build :class:`SuffixCounts` from labels (0/1) or probabilities.

    ``window`` is the abstention window size d with 1 <= d <= N.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if not 1 <= window <= n:
        raise ValueError(f"window must satisfy 1 <= d <= {n}, got {window}")
    pos_prefix = np.zeros(n + 1)
    np.cumsum(v, out=pos_prefix[1:])
    neg_prefix = np.zeros(n + 1)
    np.cumsum(1.0 - v, out=neg_prefix[1:])
    pos_suffix = pos_prefix[-1] - pos_prefix
    neg_suffix = neg_prefix[-1] - neg_prefix
    return SuffixCounts(
        pos_suffix=pos_suffix,
        neg_suffix=neg_suffix,
        pos_prefix=pos_prefix,
        neg_prefix=neg_prefix,
        window_pos=pos_suffix[: n + 1 - window] - pos_suffix[window:],
        window_neg=neg_suffix[: n + 1 - window] - neg_suffix[window:],
    )


def specificity_threshold_index(neg_suffix, denom, target_specificity, removed_above=0.0):
    """Smallest index i with ``1 - (neg_suffix[i] - removed_above)/denom >= s``.

    ``denom`` is the total negative count after any abstention and
    ``removed_above`` the number of abstained negatives that sat at or above
    index i. Both may be vectors (broadcast together), in which case a vector
    of indices is returned. The comparison is evaluated in exactly this
    floating-point form everywhere in the package so that threshold decisions
    agree bit-for-bit across the fast paths and the definitional ones.
    """
    neg_suffix = np.asarray(neg_suffix, dtype=float)
    denom = np.asarray(denom, dtype=float)
    removed_above = np.asarray(removed_above, dtype=float)
    if np.any(denom <= 0):
        raise NoNegatives("no negatives remain; specificity threshold undefined")
    shape = np.broadcast_shapes(denom.shape, removed_above.shape)
    denom, removed_above = np.broadcast_to(denom, shape), np.broadcast_to(removed_above, shape)
    n = neg_suffix.size - 1
    # The predicate is monotone in i (neg_suffix is nonincreasing), and always
    # true at i = N where neg_suffix is 0, so binary search is exact.
    lo = np.zeros(shape, dtype=np.int64)
    hi = np.full(shape, n, dtype=np.int64)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        ok = 1.0 - (neg_suffix[mid] - removed_above) / denom >= target_specificity
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid + 1)
    return lo if shape else int(lo)


def sensitivity_at_specificity(preds: SortedPredictionSet, target_specificity: float) -> float:
    """Fraction of positives ranked at or above the specificity threshold.

    The threshold index is the smallest i whose below-i negatives make up at
    least ``target_specificity`` of all negatives; no interpolation between
    candidate thresholds is performed.
    """
    if not 0.0 < target_specificity < 1.0:
        raise InvalidSpecificity(f"target specificity must be in (0, 1), got {target_specificity}")
    labels = preds.require_labels()
    counts = running_counts(labels, window=1) if preds.n else None
    if counts is None or counts.total_pos == 0:
        raise NoPositives("at least one positive example is required")
    if counts.total_neg == 0:
        raise NoNegatives("at least one negative example is required")
    t_star = specificity_threshold_index(counts.neg_suffix, counts.total_neg, target_specificity)
    return float(counts.pos_suffix[t_star] / counts.total_pos)


def auroc(preds: SortedPredictionSet) -> float:
    """Area under the ROC curve via the rank-sum identity.

    Equals the probability that a randomly chosen positive is ranked above a
    randomly chosen negative; tied probabilities are ranked by their position
    in the ascending sort.
    """
    labels = preds.require_labels()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0:
        raise NoPositives("at least one positive example is required")
    if n_neg == 0:
        raise NoNegatives("at least one negative example is required")
    neg_below = np.concatenate([[0.0], np.cumsum(1.0 - labels)])[:-1]
    rank_sum = float(np.sum(labels * neg_below))
    return rank_sum / (n_neg * n_pos)


def weighted_kappa(pred_labels, true_labels, weights: PenaltyWeightMatrix) -> float:
    """Chance-corrected penalty agreement between two label vectors.

    Returns ``1 - observed_penalty / expected_penalty`` where the expectation
    keeps the predicted class proportions fixed but pairs them with true
    classes at random. 1 means perfect agreement; values below 0 are possible.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("pred_labels and true_labels must be aligned vectors")
    n = pred.size
    if n < 2:
        raise ValueError("need at least 2 examples")
    c = weights.class_count
    if pred.min() < 0 or pred.max() >= c or true.min() < 0 or true.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    w = weights.weights
    observed = float(w[true, pred].sum())
    true_counts = np.bincount(true, minlength=c).astype(float)
    pred_counts = np.bincount(pred, minlength=c).astype(float)
    expected = float(w @ pred_counts @ (true_counts / n))
    if expected == 0.0:
        raise DegenerateDenominator("expected penalty is zero; kappa undefined")
    return 1.0 - observed / expected


@dataclass(frozen=True)
class KappaAggregates:
    """Shared sums used to evaluate kappa after removing one example.

    With ``N`` examples, true-class mass ``class_true_counts`` (exact counts or
    expected mass), predicted counts ``class_pred_counts`` and penalties ``w``:

    - ``total_penalty``: sum over examples of the realized/expected penalty
    - ``denom_base``: sum_ij w[i,j] * true[i] * pred[j] / (N-1)
    - ``denom_row_adjust[i]``: sum_j w[i,j] * pred[j] / (N-1)
    - ``denom_col_adjust[j]``: sum_i w[i,j] * true[i] / (N-1)

    so the chance penalty after dropping an example with true class k and
    predicted class f is ``denom_base - denom_row_adjust[k] -
    denom_col_adjust[f] + w[k, f]/(N-1)``.
    """

    class_true_counts: np.ndarray
    class_pred_counts: np.ndarray
    pred_labels: np.ndarray
    total_penalty: float
    denom_base: float
    denom_row_adjust: np.ndarray
    denom_col_adjust: np.ndarray
    n: int = 0


def kappa_aggregates(
    weights: PenaltyWeightMatrix,
    class_true_counts,
    pred_labels,
    total_penalty: float,
) -> KappaAggregates:
    """Assemble :class:`KappaAggregates` for hard or expected true counts."""
    w = weights.weights
    true_counts = np.asarray(class_true_counts, dtype=float)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    n = pred_labels.size
    if n < 2:
        raise ValueError("need at least 2 examples")
    pred_counts = np.bincount(pred_labels, minlength=weights.class_count).astype(float)
    scale = 1.0 / (n - 1)
    return KappaAggregates(
        class_true_counts=true_counts,
        class_pred_counts=pred_counts,
        pred_labels=pred_labels,
        total_penalty=float(total_penalty),
        denom_base=float((w @ pred_counts) @ true_counts * scale),
        denom_row_adjust=(w @ pred_counts) * scale,
        denom_col_adjust=(w.T @ true_counts) * scale,
        n=n,
    )
