"""Model evaluation over splits, intervention environments, and noise sweeps.

Ambiguous labels are dropped per outcome before any metric. The
intervention-robustness report contrasts a causal-input variant against an
all-input variant: distribution shift from valid interventions should degrade
the all-input model more (the property behind training on causal parents
only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SampleSet
from .metrics import MetricsReport, auroc, brier, evaluate_outcome, isotonic_apply, isotonic_fit
from .model import NumpyModel
from .rng import SeededRng


@dataclass
class ModelVariant:
    """A frozen model plus the input masks it is served with."""

    name: str
    npm: NumpyModel
    out_masks: np.ndarray  # (M, T, N)
    out_static: np.ndarray  # (M, S_enc)


def risks_for(
    variant: ModelVariant,
    samples: SampleSet,
    noise_sigma: float = 0.0,
    noise_rng: SeededRng | None = None,
) -> np.ndarray:
    """(n, M) risks; optional Gaussian noise on observed input cells only."""
    values = samples.values
    if noise_sigma > 0.0:
        if noise_rng is None:
            raise ValueError("noise_rng required when noise_sigma > 0")
        noise = noise_rng.normal(values.shape) * noise_sigma
        values = values + np.where(samples.missing, 0.0, noise)
    return variant.npm.predict_risks(
        values, samples.missing, samples.statics, variant.out_masks, variant.out_static
    )


def scored_split(
    variant: ModelVariant,
    samples: SampleSet,
    outcome_names,
    ci_resamples: int = 0,
    seed: int = 0,
    noise_sigma: float = 0.0,
    noise_rng: SeededRng | None = None,
):
    """Per-outcome metrics for one split; returns {outcome: OutcomeMetrics}."""
    risks = risks_for(variant, samples, noise_sigma, noise_rng)
    out = {}
    for j, name in enumerate(outcome_names):
        keep = samples.labels[:, j] != -1
        out[name] = evaluate_outcome(risks[keep, j], samples.labels[keep, j], ci_resamples, seed)
    return out


def split_report(
    variant: ModelVariant,
    splits: dict[str, SampleSet],
    outcome_names,
    ci_resamples: int = 0,
    seed: int = 0,
) -> MetricsReport:
    report = MetricsReport()
    for split_name, samples in splits.items():
        for outcome, om in scored_split(variant, samples, outcome_names, ci_resamples, seed).items():
            report.add(split_name, outcome, om)
    return report


def mean_auroc(variant: ModelVariant, samples: SampleSet) -> float | None:
    risks = risks_for(variant, samples)
    vals = []
    for j in range(samples.labels.shape[1]):
        keep = samples.labels[:, j] != -1
        labels = samples.labels[keep, j]
        if (labels == 1).any() and (labels == 0).any():
            vals.append(auroc(risks[keep, j], labels))
    return float(np.mean(vals)) if vals else None


def intervention_robustness(
    variants: list[ModelVariant],
    baseline: SampleSet,
    intervened: SampleSet,
) -> dict:
    """Mean-AUROC drop from baseline to intervened data, per variant."""
    rows = {}
    for variant in variants:
        base = mean_auroc(variant, baseline)
        shifted = mean_auroc(variant, intervened)
        rows[variant.name] = {
            "auroc_baseline": base,
            "auroc_intervened": shifted,
            "drop": None if base is None or shifted is None else base - shifted,
        }
    return rows


def noise_sweep(
    variant: ModelVariant,
    samples: SampleSet,
    outcome_names,
    sigmas=(0.0, 0.1, 0.2, 0.5),
    seed: int = 0,
) -> dict:
    """Mean AUROC per noise level; sigma 0 reproduces the clean metrics."""
    out = {}
    for sigma in sigmas:
        rng = SeededRng(seed, ("noise", f"{sigma}")) if sigma > 0 else None
        per = scored_split(variant, samples, outcome_names, noise_sigma=sigma, noise_rng=rng)
        vals = [om.auroc for om in per.values() if om.auroc is not None]
        out[f"{sigma:g}"] = {
            "mean_auroc": float(np.mean(vals)) if vals else None,
            "per_outcome": {name: om.auroc for name, om in per.items()},
        }
    return out


def calibration_summary(
    variant: ModelVariant, fit_on: SampleSet, apply_on: SampleSet, outcome_names
) -> dict:
    """Isotonic calibration fitted per outcome; reports Brier before/after."""
    risks_fit = risks_for(variant, fit_on)
    risks_apply = risks_for(variant, apply_on)
    out = {}
    for j, name in enumerate(outcome_names):
        keep_f = fit_on.labels[:, j] != -1
        keep_a = apply_on.labels[:, j] != -1
        labels_f = fit_on.labels[keep_f, j]
        labels_a = apply_on.labels[keep_a, j]
        if len(labels_f) == 0 or len(labels_a) == 0 or len(set(labels_f.tolist())) < 2:
            out[name] = {"brier_before": None, "brier_after": None}
            continue
        mapping = isotonic_fit(risks_fit[keep_f, j], labels_f)
        before = brier(risks_apply[keep_a, j], labels_a)
        after = brier(isotonic_apply(mapping, risks_apply[keep_a, j]), labels_a)
        out[name] = {"brier_before": before, "brier_after": after}
    return out


def ood_report(
    variants: list[ModelVariant],
    splits: dict[str, SampleSet],
    outcome_names,
    intervened: SampleSet | None = None,
    intervention_baseline: SampleSet | None = None,
    noise_sigmas=(),
    ci_resamples: int = 0,
    seed: int = 0,
) -> dict:
    """Everything the generalizability story needs, as one JSON-able dict."""
    doc: dict = {"variants": {}}
    for variant in variants:
        entry: dict = {
            "splits": split_report(variant, splits, outcome_names, ci_resamples, seed).as_dict()
        }
        if "test-id" in splits and "test-ood" in splits:
            a = mean_auroc(variant, splits["test-id"])
            b = mean_auroc(variant, splits["test-ood"])
            entry["id_to_ood_drop"] = None if a is None or b is None else a - b
        if noise_sigmas and "test-id" in splits:
            entry["noise"] = noise_sweep(variant, splits["test-id"], outcome_names, noise_sigmas, seed)
        doc["variants"][variant.name] = entry
    if intervened is not None and intervention_baseline is not None:
        doc["intervention"] = intervention_robustness(variants, intervention_baseline, intervened)
    return doc
