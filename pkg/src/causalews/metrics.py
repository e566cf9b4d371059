"""Ranking metrics, calibration, bootstrap intervals, and graph-recovery scores.

AUROC uses the Mann-Whitney convention (ties get half credit); AUPRC is the
step-wise average-precision integral. Both are checked against O(n^2)
brute-force oracles in the test suite. Ambiguous-label points must be
excluded before anything here is called.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import SeededRng


class UndefinedMetric(ValueError):
    """Metric is undefined for the given set (e.g. a single class present)."""


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores/labels must be matching 1-D arrays, got {scores.shape} vs {labels.shape}")
    return scores, labels.astype(np.int64)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; ties between classes count one half."""
    scores, labels = _validate(scores, labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric(f"auroc undefined: n_pos={n_pos}, n_neg={n_neg}")
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc(scores, labels) -> float:
    """Average precision: sum of (recall step) * precision at each threshold."""
    scores, labels = _validate(scores, labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0 or (labels == 0).sum() == 0:
        raise UndefinedMetric(f"auprc undefined: n_pos={n_pos}, n_neg={int((labels == 0).sum())}")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    ap = 0.0
    tp = 0
    fp = 0
    prev_recall = 0.0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        tp += int(y[i : j + 1].sum())
        fp += (j - i + 1) - int(y[i : j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def brier(scores, labels) -> float:
    scores, labels = _validate(scores, labels)
    if len(scores) == 0:
        raise UndefinedMetric("brier undefined on an empty set")
    return float(np.mean((scores - labels) ** 2))


# ---------------------------------------------------------------------------
# isotonic calibration (pool-adjacent-violators)


@dataclass
class IsotonicMap:
    """Monotone step map fit by PAV: thresholds (sorted scores) -> fitted values."""

    thresholds: np.ndarray
    values: np.ndarray

    def apply(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        idx = np.searchsorted(self.thresholds, scores, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        return self.values[idx]


def isotonic_fit(scores, labels) -> IsotonicMap:
    """Pool-adjacent-violators regression of labels onto score order."""
    scores, labels = _validate(scores, labels)
    order = np.argsort(scores, kind="mergesort")
    x = scores[order]
    y = labels[order].astype(np.float64)
    # collapse duplicate scores first so the map is a function of the score
    ux, inverse = np.unique(x, return_inverse=True)
    sums = np.bincount(inverse, weights=y)
    cnts = np.bincount(inverse).astype(np.float64)
    vals = sums / cnts
    # PAV with weights
    level_val = list(vals)
    level_w = list(cnts)
    level_end = list(range(len(vals)))
    k = 0
    while k < len(level_val) - 1:
        if level_val[k] > level_val[k + 1] + 1e-15:
            tot = level_w[k] + level_w[k + 1]
            avg = (level_val[k] * level_w[k] + level_val[k + 1] * level_w[k + 1]) / tot
            level_val[k] = avg
            level_w[k] = tot
            level_end[k] = level_end[k + 1]
            del level_val[k + 1], level_w[k + 1], level_end[k + 1]
            while k > 0 and level_val[k - 1] > level_val[k] + 1e-15:
                tot = level_w[k - 1] + level_w[k]
                avg = (level_val[k - 1] * level_w[k - 1] + level_val[k] * level_w[k]) / tot
                level_val[k - 1] = avg
                level_w[k - 1] = tot
                level_end[k - 1] = level_end[k]
                del level_val[k], level_w[k], level_end[k]
                k -= 1
        else:
            k += 1
    fitted = np.empty(len(ux))
    start = 0
    for v, end in zip(level_val, level_end):
        fitted[start : end + 1] = v
        start = end + 1
    return IsotonicMap(thresholds=ux, values=fitted)


def isotonic_apply(mapping: IsotonicMap, scores) -> np.ndarray:
    return mapping.apply(scores)


# ---------------------------------------------------------------------------
# bootstrap confidence intervals


def bootstrap_ci(scores, labels, metric, n_resamples: int = 1000, seed: int = 0):
    """Percentile [2.5%, 97.5%] interval of ``metric`` over resamples.

    Resamples that collapse to a single class are skipped; the skip count is
    returned so degenerate sets are visible to the caller.
    """
    scores, labels = _validate(scores, labels)
    rng = SeededRng(seed, ("bootstrap",))
    n = len(scores)
    stats = []
    skipped = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, (n,))
        ls = labels[idx]
        try:
            stats.append(metric(scores[idx], ls))
        except UndefinedMetric:
            skipped += 1
    if not stats:
        raise UndefinedMetric("all bootstrap resamples were single-class")
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi), skipped


# ---------------------------------------------------------------------------
# graph recovery scoring


@dataclass
class RecoveryScore:
    auroc: float
    precision: float
    recall: float
    f1: float
    threshold: float
    n_true_edges: int
    n_instances: int

    def as_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "n_true_edges": self.n_true_edges,
            "n_instances": self.n_instances,
        }


def graph_recovery_score(probs: np.ndarray, truth: np.ndarray, threshold: float = 0.5) -> RecoveryScore:
    """Score edge probabilities against ground-truth booleans, one instance
    per (chunk, source, target) cell."""
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if probs.shape != truth.shape:
        raise ValueError(f"probability/truth shapes differ: {probs.shape} vs {truth.shape}")
    p = probs.reshape(-1)
    t = truth.reshape(-1).astype(np.int64)
    score_auroc = auroc(p, t)
    pred = p >= threshold
    tp = int((pred & (t == 1)).sum())
    fp = int((pred & (t == 0)).sum())
    fn = int((~pred & (t == 1)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RecoveryScore(
        auroc=score_auroc,
        precision=precision,
        recall=recall,
        f1=f1,
        threshold=threshold,
        n_true_edges=int(t.sum()),
        n_instances=len(t),
    )


# ---------------------------------------------------------------------------
# per-outcome evaluation reports


@dataclass
class OutcomeMetrics:
    n_pos: int
    n_neg: int
    auroc: float | None = None
    auprc: float | None = None
    brier: float | None = None
    auroc_ci: tuple[float, float] | None = None
    auprc_ci: tuple[float, float] | None = None
    reason: str | None = None

    def as_dict(self) -> dict:
        return {
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "auroc": self.auroc,
            "auprc": self.auprc,
            "brier": self.brier,
            "auroc_ci": list(self.auroc_ci) if self.auroc_ci else None,
            "auprc_ci": list(self.auprc_ci) if self.auprc_ci else None,
            "reason": self.reason,
        }


def evaluate_outcome(scores, labels, ci_resamples: int = 0, seed: int = 0) -> OutcomeMetrics:
    """Point metrics (and optional bootstrap CIs) for one outcome's scored set."""
    scores, labels = _validate(scores, labels)
    keep = labels >= 0  # drop ambiguous (-1) defensively
    scores, labels = scores[keep], labels[keep]
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    out = OutcomeMetrics(n_pos=n_pos, n_neg=n_neg)
    if n_pos == 0 or n_neg == 0:
        out.reason = f"single-class set (n_pos={n_pos}, n_neg={n_neg})"
        if n_pos + n_neg > 0:
            out.brier = brier(scores, labels)
        return out
    out.auroc = auroc(scores, labels)
    out.auprc = auprc(scores, labels)
    out.brier = brier(scores, labels)
    if ci_resamples > 0:
        lo, hi, _ = bootstrap_ci(scores, labels, auroc, ci_resamples, seed)
        out.auroc_ci = (lo, hi)
        lo, hi, _ = bootstrap_ci(scores, labels, auprc, ci_resamples, seed)
        out.auprc_ci = (lo, hi)
    return out


@dataclass
class MetricsReport:
    """Per-split, per-outcome metric rows."""

    rows: dict = field(default_factory=dict)  # split -> outcome -> OutcomeMetrics

    def add(self, split: str, outcome: str, metrics: OutcomeMetrics) -> None:
        self.rows.setdefault(split, {})[outcome] = metrics

    def as_dict(self) -> dict:
        return {
            split: {name: om.as_dict() for name, om in sorted(outcomes.items())}
            for split, outcomes in sorted(self.rows.items())
        }

    def table(self) -> str:
        header = f"{'split':<14}{'outcome':<22}{'auroc':>8}{'auprc':>8}{'brier':>8}{'n_pos':>8}{'n_neg':>8}"
        lines = [header, "-" * len(header)]
        for split in sorted(self.rows):
            for name in sorted(self.rows[split]):
                om = self.rows[split][name]
                fmt = lambda v: f"{v:8.4f}" if v is not None else f"{'--':>8}"
                lines.append(
                    f"{split:<14}{name:<22}{fmt(om.auroc)}{fmt(om.auprc)}{fmt(om.brier)}"
                    f"{om.n_pos:>8}{om.n_neg:>8}"
                )
        return "\n".join(lines)
