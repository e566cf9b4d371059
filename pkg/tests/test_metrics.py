import numpy as np
import pytest

from causalews import metrics as M
from causalews.rng import SeededRng


def brute_force_auroc(scores, labels):
    """O(n^2) pair counting: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_auprc(scores, labels):
    """Step integral over distinct-score thresholds, computed naively."""
    n_pos = int((labels == 1).sum())
    ap = 0.0
    prev_recall = 0.0
    for thr in sorted(set(scores), reverse=True):
        pred = scores >= thr
        tp = int(((labels == 1) & pred).sum())
        fp = int(((labels == 0) & pred).sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def test_auroc_perfect_separation():
    assert M.auroc([0.9, 0.1], [1, 0]) == 1.0


def test_auroc_all_ties_is_half():
    assert M.auroc([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0]) == 0.5


def test_auroc_single_class_undefined():
    with pytest.raises(M.UndefinedMetric, match="n_neg=0"):
        M.auroc([0.1, 0.2], [1, 1])


def test_rank_metrics_match_brute_force():
    rng = SeededRng(21)
    for trial in range(200):
        n = 20
        scores = np.round(rng.uniform((n,)), 2)  # rounding forces ties
        labels = (rng.uniform((n,)) < 0.4).astype(int)
        if labels.sum() in (0, n):
            continue
        assert M.auroc(scores, labels) == pytest.approx(brute_force_auroc(scores, labels), abs=1e-12)
        assert M.auprc(scores, labels) == pytest.approx(brute_force_auprc(scores, labels), abs=1e-12)


def test_auroc_invariant_under_monotone_transform():
    rng = SeededRng(22)
    scores = rng.uniform((50,))
    labels = (rng.uniform((50,)) < 0.5).astype(int)
    base = M.auroc(scores, labels)
    for f in (lambda s: 3 * s + 1, np.exp, lambda s: s**3 + s):
        assert M.auroc(f(scores), labels) == pytest.approx(base, abs=1e-12)


def test_auprc_perfect_ranker_is_one():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    assert M.auprc(scores, labels) == 1.0


def test_brier_values():
    assert M.brier([1.0, 0.0], [1, 0]) == 0.0
    assert M.brier([0.5, 0.5, 0.5], [1, 0, 1]) == 0.25


def test_pav_pools_single_violation():
    mapping = M.isotonic_fit([0.2, 0.8], [1, 0])
    np.testing.assert_allclose(mapping.values, [0.5, 0.5])


def test_isotonic_never_increases_training_brier():
    rng = SeededRng(23)
    for trial in range(20):
        n = 60
        scores = rng.uniform((n,))
        labels = (rng.uniform((n,)) < scores * 0.7 + 0.1).astype(int)
        mapping = M.isotonic_fit(scores, labels)
        cal = mapping.apply(scores)
        assert M.brier(cal, labels) <= M.brier(scores, labels) + 1e-12


def test_isotonic_idempotent():
    rng = SeededRng(24)
    scores = rng.uniform((40,))
    labels = (rng.uniform((40,)) < 0.5).astype(int)
    mapping = M.isotonic_fit(scores, labels)
    once = mapping.apply(scores)
    second = M.isotonic_fit(once, labels)
    np.testing.assert_allclose(second.apply(once), once, atol=1e-12)


def test_isotonic_is_monotone_step_map():
    rng = SeededRng(25)
    scores = rng.uniform((30,))
    labels = (rng.uniform((30,)) < 0.5).astype(int)
    mapping = M.isotonic_fit(scores, labels)
    assert np.all(np.diff(mapping.values) >= -1e-12)


def test_bootstrap_zero_variance_fixture():
    scores = np.array([0.9, 0.9, 0.1, 0.1] * 10)
    labels = np.array([1, 1, 0, 0] * 10)
    lo, hi, skipped = M.bootstrap_ci(scores, labels, M.auroc, n_resamples=200, seed=5)
    assert lo == hi == M.auroc(scores, labels)


def test_bootstrap_deterministic():
    rng = SeededRng(26)
    scores = rng.uniform((30,))
    labels = (rng.uniform((30,)) < 0.5).astype(int)
    a = M.bootstrap_ci(scores, labels, M.auroc, 100, seed=3)
    b = M.bootstrap_ci(scores, labels, M.auroc, 100, seed=3)
    assert a == b


def test_bootstrap_interval_contains_point_estimate():
    rng = SeededRng(27)
    for trial in range(20):
        scores = rng.uniform((100,))
        labels = (rng.uniform((100,)) < 0.3 + 0.4 * scores).astype(int)
        if labels.sum() in (0, len(labels)):
            continue
        point = M.auroc(scores, labels)
        lo, hi, _ = M.bootstrap_ci(scores, labels, M.auroc, 500, seed=trial)
        assert lo <= point <= hi


def test_graph_recovery_perfect_and_constant():
    truth = np.zeros((3, 4, 2), dtype=bool)
    truth[0, 1, 0] = truth[1, 2, 1] = True
    probs = np.where(truth, 1 - 1e-6, 1e-6)
    score = M.graph_recovery_score(probs, truth)
    assert score.auroc == 1.0 and score.f1 == 1.0
    const = M.graph_recovery_score(np.full(truth.shape, 0.4), truth)
    assert const.auroc == 0.5
    assert const.recall == 0.0


def test_evaluate_outcome_single_class_has_reason():
    om = M.evaluate_outcome([0.3, 0.7], [1, 1])
    assert om.auroc is None and "single-class" in om.reason


def test_report_table_formats():
    rep = M.MetricsReport()
    rep.add("test-id", "outcome_0", M.evaluate_outcome([0.9, 0.1], [1, 0]))
    text = rep.table()
    assert "test-id" in text and "outcome_0" in text and "1.0000" in text
