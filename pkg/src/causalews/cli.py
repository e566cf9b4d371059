"""Command-line pipeline: synth | ingest | train | discover-report | eval | cde | serve.

Every command writes into a fixed subdirectory of ``--out`` and appends one
entry to the run manifest at the root, so a whole pipeline shares one
manifest and two identical runs produce byte-identical artifacts.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
``CDEEP_LOG`` controls verbosity (debug, info, warning, error).
"""

from __future__ import annotations

import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    DataError,
    DatasetSplits,
    NormStats,
    VariableCatalog,
    bin_observations,
    build_samples,
    default_catalog,
    load_cohort_csv,
    load_sample_set,
    normalize_apply,
    normalize_fit,
    save_sample_set,
    split_by_age,
    split_by_time,
    stack_samples,
)
from .jsonio import dump_canonical, dumps_canonical
from .manifest import RunManifest, sha256_file, sha256_text
from .metrics import graph_recovery_score
from .model import ModelConfig
from .params import ParamStore
from .rng import SeededRng
from .training import NumericFailure, TrainConfig

log = logging.getLogger("causalews")


def _setup_logging() -> None:
    level = os.environ.get("CDEEP_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _config_hash(params: dict) -> str:
    return sha256_text(dumps_canonical(params))


@click.group()
@click.version_option(__version__)
def cli() -> None:
    """Causal-discovery-driven early warning toolkit."""


# ---------------------------------------------------------------------------
# synth


@cli.command()
@click.option("--n", "n_dyn", default=10, show_default=True, help="Dynamic variables.")
@click.option("--m", "n_outcomes", default=2, show_default=True, help="Outcomes.")
@click.option("--lag", default=3, show_default=True, help="Max causal lag in bins.")
@click.option("--density", default=0.1, show_default=True)
@click.option("--patients", default=200, show_default=True)
@click.option("--bins", default=500, show_default=True, help="Bins per patient stay.")
@click.option("--missing-rate", default=0.05, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--shift", "shifts", multiple=True, help="Intervention VAR_IDX:MAGNITUDE (sigma units).")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def synth(n_dyn, n_outcomes, lag, density, patients, bins, missing_rate, seed, shifts, out):
    """Generate a synthetic cohort plus its ground-truth graphs."""
    from .data import export_cohort_csv
    from .synth import EnvironmentSpec, Intervention, export_ground_truth, generate_system, simulate_cohort

    cohort_dir = out / "cohort"
    cohort_dir.mkdir(parents=True, exist_ok=True)
    system = generate_system(n_dyn, n_outcomes, lag, density, seed=seed)
    env = None
    if shifts:
        env = EnvironmentSpec(
            [Intervention(int(s.split(":")[0]), "shift", float(s.split(":")[1])) for s in shifts]
        )
    records = simulate_cohort(system, patients, bins, env=env, missing_rate=missing_rate, seed=seed)
    catalog = system.catalog()
    export_cohort_csv(records, catalog, cohort_dir)
    export_ground_truth(system, cohort_dir / "ground_truth.json")
    params = {
        "command": "synth", "n": n_dyn, "m": n_outcomes, "lag": lag, "density": density,
        "patients": patients, "bins": bins, "missing_rate": missing_rate, "seed": seed,
        "shifts": list(shifts),
    }
    artifacts = sorted(cohort_dir.glob("*"))
    RunManifest(out).append("synth", _config_hash(params), {}, artifacts)
    click.echo(f"synth: wrote {len(records)} patients to {cohort_dir}")


# ---------------------------------------------------------------------------
# ingest


def _catalog_for(cohort_dir: Path) -> VariableCatalog:
    gt = cohort_dir / "ground_truth.json"
    if gt.exists():
        doc = json.loads(gt.read_text())
        from .data import Variable

        nodes = doc["v2o"]["nodes"]
        dynamic = tuple(Variable(nd["id"]) for nd in nodes if nd["kind"] == "variable")
        outcomes = tuple(nd["id"] for nd in nodes if nd["kind"] == "outcome")
        from .data import Variable as V

        return VariableCatalog(
            dynamic=dynamic,
            static=(V("age", "Age", "years"), V("gender"), V("ethnicity")),
            outcomes=outcomes,
        )
    return default_catalog()


def _samples_for_records(records, catalog, window, stride, max_per_patient):
    out = []
    for rec in records:
        series = bin_observations(rec, catalog)
        samples = build_samples(series, window=window, stride=stride)
        if max_per_patient > 0 and len(samples) > max_per_patient:
            # deterministic thinning: evenly spaced prediction points
            idx = np.linspace(0, len(samples) - 1, max_per_patient).astype(int)
            samples = [samples[i] for i in idx]
        out.extend(samples)
    return out


@cli.command()
@click.option("--cohort", type=click.Path(exists=True, path_type=Path), default=None,
              help="Cohort CSV directory; defaults to OUT/cohort.")
@click.option("--split", "split_kind", type=click.Choice(["age", "time"]), default="age", show_default=True)
@click.option("--age-threshold", default=75.0, show_default=True)
@click.option("--cutoff", default="2014-01-01", show_default=True, help="Admission-time OOD cutoff (time split).")
@click.option("--window", default=168, show_default=True)
@click.option("--stride", default=1, show_default=True)
@click.option("--max-per-patient", default=0, show_default=True, help="Cap samples per patient (0 = all).")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def ingest(cohort, split_kind, age_threshold, cutoff, window, stride, max_per_patient, seed, out):
    """Bin, window, label, normalize, and split a cohort into a dataset cache."""
    cohort = cohort or out / "cohort"
    cache = out / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    catalog = _catalog_for(cohort)
    records, diags = load_cohort_csv(cohort, catalog)
    for d in diags:
        log.warning("%s", d)
    if not records:
        raise DataError(f"no parsable records in {cohort}")
    if split_kind == "age":
        splits = split_by_age(records, threshold=age_threshold, seed=seed)
    else:
        cutoff_ts = datetime.fromisoformat(cutoff).replace(tzinfo=timezone.utc)
        splits = split_by_time(records, cutoff_ts, seed=seed)

    raw = {
        "train": _samples_for_records(splits.train, catalog, window, stride, max_per_patient),
        "val": _samples_for_records(splits.val, catalog, window, stride, max_per_patient),
        "test-id": _samples_for_records(splits.test_id, catalog, window, stride, max_per_patient),
        "test-ood": _samples_for_records(splits.test_ood, catalog, window, stride, max_per_patient),
    }
    if not raw["train"]:
        raise DataError("empty training partition after windowing")
    stats = normalize_fit(raw["train"])
    artifacts = []
    counts = {}
    for name, samples in raw.items():
        normalized = [normalize_apply(s, stats) for s in samples]
        counts[name] = len(normalized)
        if normalized:
            save_sample_set(stack_samples(normalized), cache, name.replace("-", "_"))
            artifacts.extend(sorted(cache.glob(f"{name.replace('-', '_')}_*")))
    (cache / "catalog.json").write_text(json.dumps(catalog.as_dict(), indent=1, sort_keys=True))
    (cache / "norm.json").write_text(json.dumps(stats.as_dict(), indent=1, sort_keys=True))
    meta = {
        "window": window,
        "counts": counts,
        "split": split_kind,
        "patients": splits.as_id_dict(),
        "static_slices": [[s.start, s.stop] for s in stats.static_group_slices()],
    }
    (cache / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    artifacts += [cache / "catalog.json", cache / "norm.json", cache / "meta.json"]
    params = {
        "command": "ingest", "split": split_kind, "age_threshold": age_threshold, "cutoff": cutoff,
        "window": window, "stride": stride, "max_per_patient": max_per_patient, "seed": seed,
    }
    inputs = {p.name: p for p in sorted(cohort.glob("*.csv"))}
    RunManifest(out).append("ingest", _config_hash(params), inputs, artifacts)
    click.echo(f"ingest: samples per split {counts}")


def load_cache(cache: Path):
    catalog = VariableCatalog.from_dict(json.loads((cache / "catalog.json").read_text()))
    stats = NormStats.from_dict(json.loads((cache / "norm.json").read_text()))
    meta = json.loads((cache / "meta.json").read_text())
    splits = {}
    for name in ("train", "val", "test-id", "test-ood"):
        prefix = name.replace("-", "_")
        if (cache / f"{prefix}_values.npy").exists():
            splits[name] = load_sample_set(cache, prefix)
    static_slices = [slice(a, b) for a, b in meta["static_slices"]]
    return catalog, stats, meta, splits, static_slices


# ---------------------------------------------------------------------------
# train


@cli.command()
@click.option("--data", type=click.Path(exists=True, path_type=Path), default=None,
              help="Dataset cache; defaults to OUT/cache.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="TrainConfig TOML/JSON file.")
@click.option("--embed-dim", default=32, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--ff-dim", default=64, show_default=True)
@click.option("--static-dim", default=16, show_default=True)
@click.option("--static-hidden", default=16, show_default=True)
@click.option("--decoder-hidden", default=32, show_default=True)
@click.option("--dropout", default=0.0, show_default=True)
@click.option("--chunk-bins", default=12, show_default=True)
@click.option("--finetune-epochs", default=0, show_default=True,
              help="Also finetune on all inputs, producing the 'full' checkpoint.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def train(data, config_path, embed_dim, heads, ff_dim, static_dim, static_hidden,
          decoder_hidden, dropout, chunk_bins, finetune_epochs, out):
    """Alternating causal-discovery training; writes checkpoints and a report."""
    from .training import finetune_full, fit_alternating

    data = data or out / "cache"
    run_dir = out / "train"
    run_dir.mkdir(parents=True, exist_ok=True)
    catalog, stats, meta, splits, static_slices = load_cache(data)
    train_cfg = TrainConfig.from_file(config_path) if config_path else TrainConfig()
    window = meta["window"]
    if window % chunk_bins != 0:
        raise DataError(f"window {window} not divisible by chunk width {chunk_bins}")
    model_cfg = ModelConfig(
        n_dyn=catalog.n_dyn,
        n_static_encoded=stats.n_static_encoded,
        n_outcomes=catalog.n_outcomes,
        t_window=window,
        n_chunks=window // chunk_bins,
        chunk_bins=chunk_bins,
        embed_dim=embed_dim,
        heads=heads,
        ff_dim=ff_dim,
        static_dim=static_dim,
        static_hidden=static_hidden,
        decoder_hidden=decoder_hidden,
        dropout=dropout,
    )
    if "train" not in splits or "val" not in splits:
        raise DataError("cache must contain train and val partitions")
    report_path = run_dir / "report.jsonl"
    result = fit_alternating(splits["train"], splits["val"], model_cfg, train_cfg,
                             static_slices, report_path=report_path)
    ckpt = run_dir / "checkpoint.bin"
    result.store.serialize(ckpt)
    (run_dir / "model_config.json").write_text(json.dumps(model_cfg.as_dict(), indent=1, sort_keys=True))
    (run_dir / "train_config.json").write_text(json.dumps(train_cfg.as_dict(), indent=1, sort_keys=True))
    artifacts = [run_dir / "model_config.json", run_dir / "train_config.json", report_path]
    checkpoints = [ckpt]
    if finetune_epochs > 0:
        tuned = finetune_full(result.store, splits["train"], model_cfg, train_cfg,
                              static_slices, epochs=finetune_epochs)
        full_ckpt = run_dir / "checkpoint_full.bin"
        tuned.serialize(full_ckpt)
        checkpoints.append(full_ckpt)
    try:
        from .report import save_training_curves

        artifacts.append(save_training_curves(result.report.epochs, run_dir / "training_curves.png"))
    except Exception as e:  # rendering must never fail the run
        log.warning("training-curve figure failed: %s", e)
    params = {"command": "train", "config": train_cfg.as_dict(), "model": model_cfg.as_dict(),
              "finetune_epochs": finetune_epochs}
    inputs = {p.name: p for p in sorted(data.glob("*.json"))}
    RunManifest(out).append("train", _config_hash(params), inputs, artifacts, checkpoints)
    best = result.report.best_epoch()
    click.echo(f"train: best epoch {best.get('epoch')} val mean AUROC {best.get('val_mean_auroc')}")


def _load_checkpoint(run_dir: Path, tagged_full: bool = False):
    ckpt = run_dir / ("checkpoint_full.bin" if tagged_full else "checkpoint.bin")
    store = ParamStore.deserialize(ckpt)
    cfg = ModelConfig.from_dict(json.loads((run_dir / "model_config.json").read_text()))
    return store, cfg, ckpt


# ---------------------------------------------------------------------------
# discover-report


@cli.command("discover-report")
@click.option("--run", "run_dir", type=click.Path(path_type=Path), default=None,
              help="Training output dir; defaults to OUT/train.")
@click.option("--data", type=click.Path(path_type=Path), default=None)
@click.option("--ground-truth", "ground_truth", type=click.Path(path_type=Path), default=None,
              help="Defaults to OUT/cohort/ground_truth.json when present.")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def discover_report(run_dir, data, ground_truth, threshold, out):
    """Export discovered graphs, score them against ground truth, render figures."""
    from .graph import GraphParams, binarize, compute_probs, graph_document, summarize
    from .report import save_probability_matrix_figure, save_summary_graph_figure, write_recovery_csv
    from .synth import load_ground_truth

    run_dir = run_dir or out / "train"
    data = data or out / "cache"
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    store, cfg, ckpt = _load_checkpoint(run_dir)
    catalog, stats, meta, splits, static_slices = load_cache(data)
    gp = GraphParams(
        q_v2o=store.get("graph/q_v2o"), q_v2v=store.get("graph/q_v2v"), q_static=store.get("graph/q_static")
    )
    probs = compute_probs(gp)
    v2o = binarize(probs.v2o, threshold)
    v2v = binarize(probs.v2v, threshold)
    artifacts = []
    for name, bwg, kind in (("v2o", v2o, "v2o"), ("v2v", v2v, "v2v")):
        doc = graph_document(bwg.adjacency, bwg.probs, catalog, kind, threshold, cfg.chunk_bins)
        path = report_dir / f"{name}_graph.json"
        dump_canonical(doc, path)
        artifacts.append(path)
    summary = summarize(v2o, v2v, catalog)

    scores = {}
    if ground_truth is None and (out / "cohort" / "ground_truth.json").exists():
        ground_truth = out / "cohort" / "ground_truth.json"
    if ground_truth is not None and Path(ground_truth).exists():
        t_v2o, t_v2v = load_ground_truth(ground_truth, cfg.n_chunks, catalog)
        scores["v2o"] = graph_recovery_score(probs.v2o, t_v2o, threshold).as_dict()
        scores["v2v"] = graph_recovery_score(probs.v2v, t_v2v, threshold).as_dict()
        combined_p = np.concatenate([probs.v2o.reshape(-1), probs.v2v.reshape(-1)])
        combined_t = np.concatenate([t_v2o.reshape(-1), t_v2v.reshape(-1)])
        scores["combined"] = graph_recovery_score(combined_p, combined_t, threshold).as_dict()
        path = report_dir / "recovery.json"
        dump_canonical(scores, path)
        artifacts.append(path)
        artifacts.append(write_recovery_csv(scores, report_dir / "recovery.csv"))
        click.echo(
            "discover-report: combined edge AUROC "
            f"{scores['combined']['auroc']:.4f} F1 {scores['combined']['f1']:.4f}"
        )
    artifacts.append(save_probability_matrix_figure(probs, catalog, report_dir / "prob_matrix.png"))
    artifacts.append(save_summary_graph_figure(summary, report_dir / "summary_graph.png"))
    params = {"command": "discover-report", "threshold": threshold}
    RunManifest(out).append("discover-report", _config_hash(params), {"checkpoint": ckpt}, artifacts)


# ---------------------------------------------------------------------------
# eval


@cli.command("eval")
@click.option("--run", "run_dir", type=click.Path(path_type=Path), default=None)
@click.option("--data", type=click.Path(path_type=Path), default=None)
@click.option("--ci", "ci_resamples", default=0, show_default=True, help="Bootstrap resamples (0 = off).")
@click.option("--noise", default="", help="Comma-separated noise sigmas, e.g. 0.1,0.2,0.5.")
@click.option("--isotonic/--no-isotonic", default=False, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def eval_cmd(run_dir, data, ci_resamples, noise, isotonic, seed, out):
    """Metrics per split (and per variant when a full checkpoint exists)."""
    from .evaluation import ModelVariant, calibration_summary, ood_report, risks_for, split_report
    from .model import NumpyModel
    from .report import save_roc_pr_figure, write_metrics_csv
    from .training import all_ones_masks, deployed_masks

    run_dir = run_dir or out / "train"
    data = data or out / "cache"
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    catalog, stats, meta, splits, static_slices = load_cache(data)
    store, cfg, ckpt = _load_checkpoint(run_dir)
    out_masks, out_static, _, _, _ = deployed_masks(store, cfg, static_slices)
    variants = [ModelVariant("causal", NumpyModel(store, cfg), out_masks, out_static)]
    inputs = {"checkpoint": ckpt}
    full_path = run_dir / "checkpoint_full.bin"
    if full_path.exists():
        store_full, _, _ = _load_checkpoint(run_dir, tagged_full=True)
        ones_out, ones_static, _ = all_ones_masks(cfg)
        variants.append(ModelVariant("full", NumpyModel(store_full, cfg), ones_out, ones_static))
        inputs["checkpoint_full"] = full_path

    eval_splits = {k: v for k, v in splits.items() if k != "train"}
    sigmas = tuple(float(s) for s in noise.split(",") if s.strip()) if noise else ()
    doc = ood_report(variants, eval_splits, catalog.outcomes, noise_sigmas=sigmas,
                     ci_resamples=ci_resamples, seed=seed)
    if isotonic and "val" in splits and "test-id" in eval_splits:
        doc["calibration"] = {
            v.name: calibration_summary(v, splits["val"], eval_splits["test-id"], catalog.outcomes)
            for v in variants
        }
    artifacts = []
    path = eval_dir / "metrics.json"
    dump_canonical(doc, path)
    artifacts.append(path)

    causal = variants[0]
    report = split_report(causal, eval_splits, catalog.outcomes, ci_resamples, seed)
    artifacts.append(write_metrics_csv(report, eval_dir / "metrics.csv"))
    (eval_dir / "metrics.txt").write_text(report.table() + "\n")
    artifacts.append(eval_dir / "metrics.txt")
    for split_name, samples in eval_splits.items():
        risks = risks_for(causal, samples)
        scored = {}
        for j, name in enumerate(catalog.outcomes):
            keep = samples.labels[:, j] != -1
            labels = samples.labels[keep, j]
            if (labels == 1).any() and (labels == 0).any():
                scored[name] = (risks[keep, j], labels)
        if scored:
            artifacts.append(save_roc_pr_figure(scored, eval_dir / f"roc_pr_{split_name}.png"))
    params = {"command": "eval", "ci": ci_resamples, "noise": list(sigmas), "isotonic": isotonic, "seed": seed}
    RunManifest(out).append("eval", _config_hash(params), inputs, artifacts)
    click.echo(report.table())


# ---------------------------------------------------------------------------
# cde


@cli.command("cde")
@click.option("--run", "run_dir", type=click.Path(path_type=Path), default=None)
@click.option("--data", type=click.Path(path_type=Path), default=None)
@click.option("--split", "split_name", default="test-id", show_default=True)
@click.option("--sample", "sample_idx", default=0, show_default=True)
@click.option("--outcome", "outcome_idx", default=0, show_default=True)
@click.option("--rule", type=click.Choice(["to_mean", "plus_sigma", "minus_sigma"]), default="to_mean",
              show_default=True)
@click.option("--naive/--accelerated", "naive", default=False, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def cde_cmd(run_dir, data, split_name, sample_idx, outcome_idx, rule, naive, out):
    """Perturbation effects for one sample: pathway JSON plus the effect matrix."""
    from .cde import build_pathways, export_viz, make_deployed, variable_cde_matrix

    run_dir = run_dir or out / "train"
    data = data or out / "cache"
    cde_dir = out / "cde"
    cde_dir.mkdir(parents=True, exist_ok=True)
    catalog, stats, meta, splits, static_slices = load_cache(data)
    store, cfg, ckpt = _load_checkpoint(run_dir)
    if split_name not in splits:
        raise DataError(f"split {split_name!r} not in cache (have {sorted(splits)})")
    samples = splits[split_name]
    if not (0 <= sample_idx < len(samples)):
        raise DataError(f"sample {sample_idx} out of range (split has {len(samples)})")
    if not (0 <= outcome_idx < catalog.n_outcomes):
        raise DataError(f"outcome {outcome_idx} out of range")
    deployed = make_deployed(store, cfg, catalog, static_slices)
    values = samples.values[sample_idx]
    missing = samples.missing[sample_idx]
    statics = samples.statics[sample_idx]
    effects = variable_cde_matrix(deployed, values, missing, statics, rule=rule, accelerate=not naive)
    ref = f"{split_name}:{sample_idx}"
    pathway = build_pathways(effects, deployed, values, missing, outcome_idx, sample_ref=ref)
    doc = export_viz(pathway)
    path = cde_dir / "pathway.json"
    dump_canonical(doc, path)
    artifacts = [path]
    with open(cde_dir / "effects.csv", "w", newline="") as fh:
        import csv as _csv

        w = _csv.writer(fh)
        names = [v.name for v in catalog.dynamic] + list(catalog.outcomes)
        w.writerow(["perturbed"] + names)
        for i, var in enumerate(catalog.dynamic):
            w.writerow([var.name] + [f"{x:.9g}" for x in effects.matrix[i]])
    artifacts.append(cde_dir / "effects.csv")
    counters = {
        "full_units": effects.full_units,
        "fast_units": effects.fast_units,
        "accelerated": effects.accelerated,
        "wall_clock_s": effects.wall_clock_s,
    }
    dump_canonical(counters, cde_dir / "counters.json")
    artifacts.append(cde_dir / "counters.json")
    params = {"command": "cde", "split": split_name, "sample": sample_idx, "outcome": outcome_idx,
              "rule": rule, "naive": naive}
    RunManifest(out).append("cde", _config_hash(params), {"checkpoint": ckpt}, artifacts)
    click.echo(f"cde: pathway with {len(pathway.nodes)} nodes, {len(pathway.edges)} edges -> {path}")


# ---------------------------------------------------------------------------
# serve


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True,
              help="checkpoint.bin (model_config.json sibling required).")
@click.option("--data", type=click.Path(exists=True, path_type=Path), required=True,
              help="Dataset cache directory.")
@click.option("--split", "split_name", default="test-id", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None,
              help="Static UI assets to serve at /.")
def serve(checkpoint, data, split_name, port, host, ui_dir):
    """Serve graphs, samples, risks, and what-if queries over HTTP."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint, data, split_name=split_name, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level=os.environ.get("CDEEP_LOG", "warning").lower())


def main() -> int:
    _setup_logging()
    try:
        cli.main(standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return 1
    except DataError as e:
        click.echo(f"data error: {e}", err=True)
        return 2
    except (NumericFailure, FloatingPointError) as e:
        click.echo(f"numeric failure: {e}", err=True)
        return 3
    except FileNotFoundError as e:
        click.echo(f"data error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
