"""Abstention scoring: budgeted window and marginal scorers plus baselines.

The window scorers estimate, for every contiguous interval [i, i+d) of the
ascending-sorted predictions, the value a binary metric would take if that
interval were abstained on. The marginal scorer does the analogous thing per
example for weighted kappa. Estimates treat the calibrated probabilities as
the distribution of the unknown labels, either by Monte-Carlo sampling of
label vectors or by substituting expected counts directly into the same
running-sum formulas.

Monte-Carlo streams are keyed by (seed, sample index) through
``numpy.random.SeedSequence.spawn``, so scores depend only on the config and
never on scheduling. One label vector is shared by all windows within a
sample; windows whose complement lost an entire class skip that sample and
are normalized by their own valid-sample count.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    AbstainkitError,
    BudgetMismatch,
    BudgetTooLarge,
    DegenerateDenominator,
    DegenerateExpectedCounts,
    EvenWindow,
    InvalidSpecificity,
    MissingPriors,
    MissingVariance,
    WindowTooLarge,
)
from .metrics import (
    PenaltyWeightMatrix,
    ProbabilityMatrix,
    SortedPredictionSet,
    kappa_aggregates,
    running_counts,
    specificity_threshold_index,
)

__all__ = [
    "AbstentionBudget",
    "MonteCarloConfig",
    "WindowScoreVector",
    "MarginalScoreVector",
    "ThresholdVectors",
    "AurocSums",
    "SMOOTH_WINDOW",
    "SMOOTH_POLYORDER",
    "specificity_threshold_vectors",
    "score_windows_sens_at_spec",
    "auroc_rank_sums",
    "score_windows_auroc",
    "score_examples_kappa",
    "smooth_savitzky_golay",
    "baseline_scores",
    "fumera_threshold_search",
    "select_abstentions",
]

# Post-hoc smoothing applied to Monte-Carlo window scores.
SMOOTH_WINDOW = 11
SMOOTH_POLYORDER = 1

_DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class AbstentionBudget:
    """How many examples may be abstained on and how they are selected.

    ``window`` budgets abstain one contiguous interval of the sorted binary
    predictions; ``top_k`` budgets abstain the examples with the highest
    scores. Exactly one of ``fraction`` / ``count`` must be given; a fraction
    resolves to ``floor(fraction * n)``.
    """

    mode: str
    fraction: float | None = None
    count: int | None = None

    def __post_init__(self):
        if self.mode not in ("window", "top_k"):
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if (self.fraction is None) == (self.count is None):
            raise ValueError("specify exactly one of fraction or count")
        if self.fraction is not None and not 0.0 <= self.fraction < 1.0:
            raise ValueError("fraction must lie in [0, 1)")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be nonnegative")

    def count_for(self, n: int) -> int:
        if self.count is not None:
            return int(self.count)
        return int(np.floor(self.fraction * n))


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sample count, stream seed and whether to smooth the averaged scores."""

    samples: int
    seed: int = 0
    smooth: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


@dataclass(frozen=True)
class WindowScoreVector:
    """scores[i] estimates the metric if indices [i, i+window_size) are abstained."""

    scores: np.ndarray
    window_size: int
    metric: str

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class MarginalScoreVector:
    """scores[x] estimates the metric after abstaining on example x alone."""

    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))

    def __len__(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class ThresholdVectors:
    """Specificity threshold indices under hypothetical negative removals.

    ``left_shift[j]`` / ``right_shift[j]`` are the threshold indices after j
    negatives below / above the threshold are abstained on. Removing negatives
    below the threshold can only push it up, removing negatives above can only
    pull it down, so ``right_shift[j] <= pre_threshold <= left_shift[j]``.
    """

    pre_threshold: int
    left_shift: np.ndarray
    right_shift: np.ndarray


@dataclass(frozen=True)
class AurocSums:
    """Rank sums behind the windowed auROC identity.

    ``post_sums[i] = total_rank_sum - window_rank_sum[i] -
    (remaining positives above the window) * (negatives inside the window)``
    holds exactly; dividing ``post_sums[i]`` by the product of remaining
    negative and positive mass gives the post-abstention auROC.
    """

    total_rank_sum: float
    window_rank_sum: np.ndarray
    post_sums: np.ndarray


def _window_count(budget, n: int) -> int:
    d = budget.count_for(n) if isinstance(budget, AbstentionBudget) else int(budget)
    if not 1 <= d < n:
        raise BudgetTooLarge(f"abstention count must satisfy 1 <= d < {n}, got {d}")
    return d


def _sample_rngs(seed: int, samples: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(samples)]


def _finalize_window_scores(sums, valid, smooth: bool, window_size: int, metric: str):
    scores = np.divide(sums, valid, out=np.full_like(sums, np.nan), where=valid > 0)
    if smooth:
        if not np.isfinite(scores).all():
            raise ValueError(
                "cannot smooth scores: some windows never had a valid sample"
            )
        scores = smooth_savitzky_golay(scores, SMOOTH_WINDOW, SMOOTH_POLYORDER)
    return WindowScoreVector(scores=scores, window_size=window_size, metric=metric)


def specificity_threshold_vectors(neg_suffix, total_neg, target_specificity, max_removed: int) -> ThresholdVectors:
    """Thresholds under 0..max_removed abstained negatives on either side.

    ``max_removed`` must stay below ``total_neg`` so at least one negative
    remains in every hypothetical.
    """
    if max_removed >= total_neg:
        raise ValueError("cannot remove all negatives and keep a threshold")
    j = np.arange(max_removed + 1, dtype=float)
    denom = float(total_neg) - j
    left = specificity_threshold_index(neg_suffix, denom, target_specificity)
    right = specificity_threshold_index(neg_suffix, denom, target_specificity, removed_above=j)
    return ThresholdVectors(pre_threshold=int(left[0]), left_shift=left, right_shift=right)


def _sens_window_sample(labels, d: int, target_specificity: float):
    """One-sample window sensitivities; returns (values, valid) or None."""
    counts = running_counts(labels, d)
    n_pos, n_neg = counts.total_pos, counts.total_neg
    if n_pos == 0 or n_neg == 0:
        return None
    w_pos, w_neg = counts.window_pos, counts.window_neg
    valid = (w_pos < n_pos) & (w_neg < n_neg)
    if not valid.any():
        return np.zeros(w_pos.size), valid
    max_removed = int(min(d, n_neg - 1))
    thresholds = specificity_threshold_vectors(
        counts.neg_suffix, n_neg, target_specificity, max_removed
    )
    removed = np.minimum(w_neg.astype(np.int64), max_removed)  # windows at the cap are invalid
    t_right = thresholds.right_shift[removed]
    t_left = thresholds.left_shift[removed]
    starts = np.arange(w_pos.size)
    # The adjusted threshold either sits at or below the window start (all
    # removed negatives were above it) or is pushed past the window end.
    t_new = np.where(t_right <= starts, t_right, np.maximum(t_left, starts + d))
    numer = counts.pos_suffix[t_new] - (t_new <= starts) * w_pos
    denom = np.where(valid, n_pos - w_pos, 1.0)
    return np.where(valid, numer / denom, 0.0), valid


def score_windows_sens_at_spec(
    preds: SortedPredictionSet,
    target_specificity: float,
    budget,
    mc: MonteCarloConfig,
) -> WindowScoreVector:
    """Estimate post-abstention sensitivity at a target specificity per window.

    For each Monte-Carlo sample a label vector is drawn from the calibrated
    probabilities, suffix counts and shifted specificity thresholds are formed
    by running sums, and every window's surviving-positive fraction above its
    adjusted threshold is accumulated. Runs in O(N) per sample.
    """
    if not 0.0 < target_specificity < 1.0:
        raise InvalidSpecificity(f"target specificity must be in (0, 1), got {target_specificity}")
    n = preds.n
    d = _window_count(budget, n)
    sums = np.zeros(n + 1 - d)
    valid_counts = np.zeros(n + 1 - d)
    for rng in _sample_rngs(mc.seed, mc.samples):
        labels = (rng.random(n) < preds.probs).astype(float)
        sample = _sens_window_sample(labels, d, target_specificity)
        if sample is None:
            continue
        values, valid = sample
        sums[valid] += values[valid]
        valid_counts[valid] += 1.0
    return _finalize_window_scores(sums, valid_counts, mc.smooth, d, "sens_at_spec")


def auroc_rank_sums(values, window: int) -> AurocSums:
    """Total, in-window and post-abstention rank sums for sorted label mass.

    ``values`` may be 0/1 labels or probabilities standing in for them.
    """
    v = np.asarray(values, dtype=float)
    counts = running_counts(v, window)
    n = v.size
    contrib = v * counts.neg_prefix[:-1]
    cum = np.concatenate([[0.0], np.cumsum(contrib)])
    total = float(cum[-1])
    window_rank = cum[window:] - cum[: n + 1 - window]
    above_pos = counts.total_pos - counts.pos_prefix[window:]
    post = total - window_rank - above_pos * counts.window_neg
    return AurocSums(total_rank_sum=total, window_rank_sum=window_rank, post_sums=post)


def _auroc_window_sample(values, d: int):
    """Per-window post-abstention rank sums and remaining class mass."""
    counts = running_counts(values, d)
    sums = auroc_rank_sums(values, d)
    return sums.post_sums, counts.total_neg - counts.window_neg, counts.total_pos - counts.window_pos


def score_windows_auroc(
    preds: SortedPredictionSet,
    budget,
    mode: str = "deterministic",
    mc: MonteCarloConfig | None = None,
) -> WindowScoreVector:
    """Estimate post-abstention auROC per window.

    ``monte_carlo`` draws label vectors and averages the windowed rank-sum
    estimate over samples (optionally smoothing); ``deterministic`` runs the
    identical formulas once with each probability substituted for its label,
    in O(N) total, with no sampling and no smoothing (``mc`` is ignored).
    """
    n = preds.n
    d = _window_count(budget, n)
    if mode == "deterministic":
        post, rem_neg, rem_pos = _auroc_window_sample(preds.probs, d)
        if rem_pos.min() <= _DEGENERATE_EPS or rem_neg.min() <= _DEGENERATE_EPS:
            raise DegenerateExpectedCounts(
                "expected positive/negative mass left after abstention is ~0"
            )
        return WindowScoreVector(post / (rem_neg * rem_pos), d, "auroc")
    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if mc is None:
        raise ValueError("monte_carlo mode needs a MonteCarloConfig")
    sums = np.zeros(n + 1 - d)
    valid_counts = np.zeros(n + 1 - d)
    for rng in _sample_rngs(mc.seed, mc.samples):
        labels = (rng.random(n) < preds.probs).astype(float)
        post, rem_neg, rem_pos = _auroc_window_sample(labels, d)
        denom = rem_neg * rem_pos
        valid = denom > 0
        sums[valid] += post[valid] / denom[valid]
        valid_counts[valid] += 1.0
    return _finalize_window_scores(sums, valid_counts, mc.smooth, d, "auroc")


def _sample_class_labels(rng, probs: np.ndarray) -> np.ndarray:
    cum = probs.cumsum(axis=1)
    draws = rng.random(probs.shape[0])
    labels = (draws[:, None] >= cum).sum(axis=1)
    return np.minimum(labels, probs.shape[1] - 1)


def score_examples_kappa(
    probs: ProbabilityMatrix,
    weights: PenaltyWeightMatrix,
    mode: str = "deterministic",
    mc: MonteCarloConfig | None = None,
) -> MarginalScoreVector:
    """Estimate weighted kappa after abstaining on each single example.

    Predicted labels are the per-row argmax of ``probs`` throughout.
    ``monte_carlo`` samples true-label vectors from the rows and averages the
    leave-one-out kappa; ``deterministic`` substitutes each row's class
    probabilities for its label indicator, running in O(NC).
    """
    p = probs.entries
    n, n_classes = p.shape
    if n < 2:
        raise ValueError("need at least 2 examples")
    if weights.class_count != n_classes:
        raise ValueError("weights dimension must equal the class count")
    w = weights.weights
    pred = p.argmax(axis=1)
    rows = np.arange(n)
    scale = 1.0 / (n - 1)

    if mode == "deterministic":
        expected_true = p.sum(axis=0)
        w_by_pred = w[:, pred].T  # [x, i] -> penalty if x's true class were i
        agg = kappa_aggregates(weights, expected_true, pred, float((p * w_by_pred).sum()))
        denom = (
            agg.denom_base
            - agg.denom_col_adjust[pred][:, None]
            - agg.denom_row_adjust[None, :]
            + w_by_pred * scale
        )
        if np.abs(denom).min() < _DEGENERATE_EPS:
            raise DegenerateDenominator("leave-one-out chance penalty is ~0")
        terms = 1.0 - (agg.total_penalty - w_by_pred) / denom
        return MarginalScoreVector((p * terms).sum(axis=1))

    if mode != "monte_carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if mc is None:
        raise ValueError("monte_carlo mode needs a MonteCarloConfig")
    totals = np.zeros(n)
    for rng in _sample_rngs(mc.seed, mc.samples):
        sampled = _sample_class_labels(rng, p)
        true_counts = np.bincount(sampled, minlength=n_classes).astype(float)
        penalties = w[sampled, pred]
        agg = kappa_aggregates(weights, true_counts, pred, float(penalties.sum()))
        denom = (
            agg.denom_base
            - agg.denom_row_adjust[sampled]
            - agg.denom_col_adjust[pred]
            + penalties * scale
        )
        if np.abs(denom).min() < _DEGENERATE_EPS:
            raise DegenerateDenominator("leave-one-out chance penalty is ~0")
        totals += 1.0 - (agg.total_penalty - penalties) / denom
    return MarginalScoreVector(totals / mc.samples)


def _center_fit_weights(half: int, polyorder: int) -> np.ndarray:
    """Weights whose dot with a centered window gives the LS poly fit there."""
    x = np.arange(-half, half + 1, dtype=float)
    design = x[:, None] ** np.arange(polyorder + 1)[None, :]
    return np.linalg.pinv(design)[0]


def smooth_savitzky_golay(values, window: int, polyorder: int) -> np.ndarray:
    """Least-squares local polynomial smoothing with shrinking edge windows.

    Each interior point is replaced by the value at the center of a
    polynomial fit over its ``window`` neighbors. Near the edges the window
    shrinks symmetrically to the largest centered one that fits (the
    polynomial order drops with it when fewer points than coefficients
    remain), so no values outside the input ever influence the result.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if window < 1 or window % 2 == 0:
        raise EvenWindow(f"window must be a positive odd integer, got {window}")
    if window > n:
        raise WindowTooLarge(f"window {window} exceeds input length {n}")
    if not 0 <= polyorder < window:
        raise ValueError("polyorder must satisfy 0 <= polyorder < window")
    half = window // 2
    out = np.empty(n)
    # Center-row weights are symmetric, so convolution needs no kernel flip.
    out[half : n - half] = np.convolve(v, _center_fit_weights(half, polyorder), mode="valid")
    for i in range(half):
        weights = _center_fit_weights(i, min(polyorder, 2 * i))
        out[i] = weights @ v[: 2 * i + 1]
        out[n - 1 - i] = weights @ v[n - 1 - 2 * i :]
    return out


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1)


def _js_divergence_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    mid = 0.5 * (p + q)

    def half_kl(a):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(a > 0, a * (np.log(a) - np.log(mid)), 0.0)
        return terms.sum(axis=1)

    return 0.5 * (half_kl(p) + half_kl(q))


def baseline_scores(
    probs: ProbabilityMatrix,
    priors=None,
    method: str = "max_class_prob",
    variance=None,
) -> np.ndarray:
    """Abstention priorities for the reference rules; higher = abstain first.

    - ``max_class_prob``: least-confident argmax first
    - ``entropy``: highest predictive entropy first
    - ``js_divergence_from_priors``: rows closest (Jensen-Shannon) to the
      class priors first
    - ``external_variance``: highest externally supplied variance first
    """
    p = probs.entries
    if method == "max_class_prob":
        return -p.max(axis=1)
    if method == "entropy":
        return _entropy_rows(p)
    if method == "js_divergence_from_priors":
        if priors is None:
            raise MissingPriors("js_divergence_from_priors needs class priors")
        prior_row = np.asarray(getattr(priors, "priors", priors), dtype=float)[None, :]
        return -_js_divergence_rows(p, np.broadcast_to(prior_row, p.shape))
    if method == "external_variance":
        if variance is None:
            raise MissingVariance("external_variance needs a variance vector")
        variance = np.asarray(variance, dtype=float)
        if variance.shape != (p.shape[0],):
            raise ValueError("variance must align with the prediction rows")
        return variance.copy()
    raise ValueError(f"unknown baseline method {method!r}")


def fumera_threshold_search(
    val_probs: ProbabilityMatrix,
    val_labels,
    metric,
    budget,
    grid=51,
):
    """Per-class abstention thresholds by exhaustive validation-set search.

    An example is abstained when the probability of its argmax class falls
    below that class's threshold. Among all threshold tuples on the grid whose
    abstained fraction stays within the budget, the one maximizing
    ``metric(retained_probs, retained_labels)`` is returned; ties prefer fewer
    abstentions, then the lexicographically smallest tuple. Tuples whose
    retained set leaves the metric undefined are skipped, and if nothing is
    feasible the all-zero tuple (abstain nothing) is returned.

    The search visits ``grid ** class_count`` tuples; keep the grid coarse
    beyond a few classes.
    """
    p = val_probs.entries
    labels = np.asarray(val_labels)
    n, n_classes = p.shape
    if labels.shape != (n,):
        raise ValueError("validation labels must align with probabilities")
    grid_values = np.linspace(0.0, 1.0, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    if grid_values.size < 2:
        raise ValueError("grid needs at least 2 points per class")
    max_abstained = budget.count_for(n) if isinstance(budget, AbstentionBudget) else int(budget)

    top_class = p.argmax(axis=1)
    top_prob = p[np.arange(n), top_class]
    best_score = -np.inf
    best_count = None
    best_tuple = None
    for thresholds in itertools.product(grid_values, repeat=n_classes):
        abstain = top_prob < np.asarray(thresholds)[top_class]
        count = int(abstain.sum())
        if count > max_abstained:
            continue
        keep = ~abstain
        try:
            score = float(metric(p[keep], labels[keep]))
        except (AbstainkitError, ValueError):
            continue
        if score > best_score or (score == best_score and count < best_count):
            best_score, best_count, best_tuple = score, count, thresholds
    if best_tuple is None:
        return np.zeros(n_classes)
    return np.asarray(best_tuple, dtype=float)


def select_abstentions(scores, budget: AbstentionBudget) -> np.ndarray:
    """Turn a score vector into the abstained index set for a budget.

    Window scores: the best-scoring window [i*, i*+d), earliest on ties.
    Marginal/top-k scores: the d highest-scoring indices, lower index on ties.
    Returned indices are sorted ascending.
    """
    if isinstance(scores, WindowScoreVector):
        if budget.mode != "window":
            raise BudgetMismatch("window scores need a window-mode budget")
        n = len(scores) + scores.window_size - 1
        if budget.count_for(n) != scores.window_size:
            raise BudgetMismatch(
                f"budget resolves to {budget.count_for(n)} but scores use window {scores.window_size}"
            )
        start = int(np.nanargmax(scores.scores))
        return np.arange(start, start + scores.window_size)
    if isinstance(scores, MarginalScoreVector):
        if budget.mode != "top_k":
            raise BudgetMismatch("marginal scores need a top_k-mode budget")
        n = len(scores)
        d = budget.count_for(n)
        if not 0 <= d <= n:
            raise BudgetMismatch(f"cannot abstain on {d} of {n} examples")
        order = np.lexsort((np.arange(n), -scores.scores))
        return np.sort(order[:d])
    raise TypeError("scores must be a WindowScoreVector or MarginalScoreVector")
