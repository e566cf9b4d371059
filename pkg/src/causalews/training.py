"""Alternating optimization: prediction network under hard sampled graphs,
then graph parameters under relaxed Gumbel masks.

Each phase owns its optimizer group. Network steps freshly hard-sample both
graphs per batch and update only ``model/`` parameters; graph steps sample
relaxed masks at the current temperature, add the edge-probability
regularizers, and update only ``graph/`` parameters (network parameters have
gradient tracking switched off entirely, so phase isolation is structural,
not just an optimizer filter).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import SampleSet
from .graph import (
    GraphParams,
    binarize,
    chunk_expand_matrix,
    compute_probs,
    cumulative_probs,
    hard_sample,
    init_graph_params,
    regularizer_value,
    sample_relaxed,
    static_probs,
)
from .metrics import UndefinedMetric, auroc
from .model import ModelConfig, NumpyModel, init_model_params
from .params import ParamStore
from .rng import SeededRng


@dataclass
class TrainConfig:
    epochs: int = 16
    batch_size: int = 48
    lr_network: float = 3e-3
    lr_graph: float = 5e-2
    lambda_v2o: float = 2e-3
    lambda_v2v: float = 2e-3
    temp_start: float = 2.0
    temp_end: float = 0.3
    alternation_period: int = 1
    warm_epochs: int = 2
    patience: int = 0  # 0 disables early stopping
    seed: int = 0
    pos_weighting: bool = False
    v2v_loss_weight: float = 1.0
    graph_momentum: float = 0.9
    v2v_targets_per_step: int = 0  # 0 = every variable target each step
    max_batches_per_epoch: int = 0  # 0 = full epoch
    graph_batch_size: int = 0  # 0 = use batch_size

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.alternation_period < 1:
            raise ValueError("epochs, batch_size, alternation_period must be positive")
        if self.lr_network <= 0 or self.lr_graph <= 0:
            raise ValueError("learning rates must be positive")
        if self.temp_end > self.temp_start:
            raise ValueError("temperature schedule must not increase")
        if min(self.temp_start, self.temp_end) <= 0:
            raise ValueError("temperatures must be positive")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_dict(json.loads(path.read_text()))
        try:
            import tomllib  # py >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return cls.from_dict(tomllib.loads(path.read_text()))


# ---------------------------------------------------------------------------
# losses


def bce_with_logits(logits: T.Tensor, targets: np.ndarray, weights: np.ndarray) -> T.Tensor:
    """Weighted binary cross-entropy, numerically stable at large |logit|."""
    z = logits
    relu_z = T.relu(z)
    abs_z = T.add(relu_z, T.relu(T.mul_scalar(z, -1.0)))
    softplus = T.log(T.add_scalar(T.exp(T.mul_scalar(abs_z, -1.0)), 1.0))
    per = T.add(T.sub(relu_z, T.mul(z, T.constant(targets))), softplus)
    return T.sum_reduce(T.mul(per, T.constant(weights)))


def outcome_loss(
    logits: T.Tensor, labels: np.ndarray, pos_weight: np.ndarray | None = None
) -> T.Tensor:
    """Cross-entropy over non-ambiguous outcome labels, averaged per sample.

    ``logits`` is (M, B); ``labels`` is (M, B) tri-state. Ambiguous entries
    contribute exactly zero. Positive reweighting multiplies positive terms
    by the per-outcome weight when given.
    """
    labels = np.asarray(labels)
    y = (labels == 1).astype(np.float64)
    w = (labels != -1).astype(np.float64)
    if pos_weight is not None:
        w = w * np.where(labels == 1, pos_weight[:, None], 1.0)
    batch = labels.shape[1]
    return T.mul_scalar(bce_with_logits(logits, y, w), 1.0 / batch)


def v2v_loss(preds: T.Tensor, next_values: np.ndarray, next_missing: np.ndarray) -> T.Tensor:
    """Per-sample mean squared error over observed next-bin cells, averaged
    over the batch; samples with no observed next bin contribute zero.

    ``preds`` is (N_sel, B) aligned with rows of ``next_values``.
    """
    obs = ~np.asarray(next_missing)
    counts = obs.sum(axis=0).astype(np.float64)  # per sample
    w = np.where(obs, 1.0 / np.maximum(counts, 1.0)[None, :], 0.0)
    batch = obs.shape[1]
    diff = T.sub(preds, T.constant(next_values))
    sq = T.mul(diff, diff)
    return T.mul_scalar(T.sum_reduce(T.mul(sq, T.constant(w))), 1.0 / batch)


# ---------------------------------------------------------------------------
# mask assembly


class _MaskBundle:
    """Per-target window masks as tensors, ready to multiply onto inputs."""

    def __init__(self, out_masks: T.Tensor, out_static: T.Tensor, var_masks: T.Tensor):
        self.out_masks = out_masks  # (M, T, N)
        self.out_static = out_static  # (M, S_enc)
        self.var_masks = var_masks  # (N_sel, T, N)


def _static_group_matrix(static_slices, n_encoded: int) -> np.ndarray:
    """(S_raw, S_enc) 0/1 matrix mapping raw static variables to encoded channels."""
    g = np.zeros((len(static_slices), n_encoded))
    for row, sl in enumerate(static_slices):
        g[row, sl] = 1.0
    return g


def expand_chunk_mask(mask_wn: np.ndarray, t_window: int, chunk_bins: int) -> np.ndarray:
    """(W, N) chunk mask -> (T, N) per-bin mask (chunk 0 = most recent bins)."""
    idx = (t_window - 1 - np.arange(t_window)) // chunk_bins
    return np.asarray(mask_wn, dtype=np.float64)[idx]


def hard_mask_bundle(
    probs,
    cfg: ModelConfig,
    static_slices,
    rng: SeededRng,
    var_targets: np.ndarray,
    all_ones: bool = False,
):
    """Freshly sampled hard masks (plain arrays) for one network-step batch."""
    t_len, n, m = cfg.t_window, cfg.n_dyn, cfg.n_outcomes
    s_enc = cfg.n_static_encoded
    if all_ones:
        out_masks = np.ones((m, t_len, n))
        out_static = np.ones((m, s_enc))
        var_masks = np.ones((len(var_targets), t_len, n))
        return out_masks, out_static, var_masks
    v2o = hard_sample(probs.v2o, rng.child("v2o"))  # (W, N, M)
    v2v = hard_sample(probs.v2v, rng.child("v2v"))  # (W, N, N)
    stat = hard_sample(probs.static, rng.child("static"))  # (S, M)
    out_masks = np.stack(
        [expand_chunk_mask(v2o[:, :, j], t_len, cfg.chunk_bins) for j in range(m)]
    )
    gmat = _static_group_matrix(static_slices, s_enc)
    out_static = stat.T.astype(np.float64) @ gmat
    var_masks = np.stack(
        [expand_chunk_mask(v2v[:, :, i], t_len, cfg.chunk_bins) for i in var_targets]
    )
    return out_masks, out_static, var_masks


def relaxed_mask_bundle(
    graph_params: GraphParams,
    cfg: ModelConfig,
    static_slices,
    temperature: float,
    rng: SeededRng,
    var_targets: np.ndarray,
) -> tuple[_MaskBundle, T.Tensor]:
    """Differentiable Gumbel-relaxed masks plus the probability regularizer
    pieces (returned unscaled as a dict of tensors for the loss site)."""
    p_v2o = cumulative_probs(graph_params.q_v2o)  # (W, N, M)
    p_v2v = cumulative_probs(graph_params.q_v2v)  # (W, N, N)
    p_stat = static_probs(graph_params.q_static)  # (S, M)

    s_v2o = sample_relaxed(p_v2o, temperature, rng.child("v2o"))
    s_v2v = sample_relaxed(p_v2v, temperature, rng.child("v2v"))
    s_stat = sample_relaxed(p_stat, temperature, rng.child("static"))

    t_len, n, m = cfg.t_window, cfg.n_dyn, cfg.n_outcomes
    e = T.constant(chunk_expand_matrix(t_len, cfg.n_chunks, cfg.chunk_bins))

    def to_window(s, count):
        # (W, N, C) -> (C, W, N) -> (C, T, N) via shared chunk-expansion matmul
        per_target = T.transpose(s, (2, 0, 1))
        return T.matmul(T.expand(T.reshape(e, (1, t_len, cfg.n_chunks)), (count, t_len, cfg.n_chunks)), per_target)

    out_masks = to_window(s_v2o, m)
    gmat = T.constant(_static_group_matrix(static_slices, cfg.n_static_encoded))
    out_static = T.matmul(T.transpose(s_stat, (1, 0)), gmat)  # (M, S_enc)
    var_all = to_window(s_v2v, n)
    var_masks = T.gather_axis(var_all, 0, var_targets) if len(var_targets) != n else var_all
    bundle = _MaskBundle(out_masks, out_static, var_masks)
    regs = {
        "v2o": T.add(regularizer_value(p_v2o), regularizer_value(p_stat)),
        "v2v": regularizer_value(p_v2v),
    }
    return bundle, regs


# ---------------------------------------------------------------------------
# forward pass shared by both steps


def _stacked_forward(
    store: ParamStore,
    cfg: ModelConfig,
    batch: SampleSet,
    out_masks,
    out_static,
    var_masks,
    var_targets: np.ndarray,
    pos_weight: np.ndarray | None,
    dropout_rng: SeededRng | None = None,
    v2v_weight: float = 1.0,
):
    """Masked per-target encoder passes -> (outcome loss, v2v loss) tensors.

    Targets are batched along the leading axis: the first M rows are outcome
    targets, the rest the selected variable targets.
    """
    from .model import decode_outcomes, decode_variables, encode  # cycle-safe

    b = len(batch)
    t_len, n, m = cfg.t_window, cfg.n_dyn, cfg.n_outcomes
    n_sel = len(var_targets)
    k = m + n_sel

    def as_tensor(x):
        return x if isinstance(x, T.Tensor) else T.constant(np.asarray(x, dtype=np.float64))

    masks = T.concat([as_tensor(out_masks), as_tensor(var_masks)], 0)  # (K, T, N)
    masks = T.expand(T.reshape(masks, (k, 1, t_len, n)), (k, b, t_len, n))

    values = T.expand(T.reshape(T.constant(batch.values), (1, b, t_len, n)), (k, b, t_len, n))
    presence = (~batch.missing).astype(np.float64)
    presence = T.expand(T.reshape(T.constant(presence), (1, b, t_len, n)), (k, b, t_len, n))
    x = T.concat([T.mul(values, masks), T.mul(presence, masks)], -1)

    s_enc = cfg.n_static_encoded
    statics = T.constant(batch.statics)  # (B, S)
    out_static_full = T.mul(
        T.expand(T.reshape(as_tensor(out_static), (m, 1, s_enc)), (m, b, s_enc)),
        T.expand(T.reshape(statics, (1, b, s_enc)), (m, b, s_enc)),
    )
    var_static_full = T.expand(T.reshape(statics, (1, b, s_enc)), (n_sel, b, s_enc))
    statics_stacked = T.concat([out_static_full, var_static_full], 0)

    latent = encode(x, statics_stacked, store, cfg, dropout_rng)
    out_latent = T.slice_axis(latent, 0, 0, m)
    var_latent = T.slice_axis(latent, 0, m, k)

    logits = decode_outcomes(out_latent, store)  # (M, B)
    loss_out = outcome_loss(logits, batch.labels.T, pos_weight)

    if n_sel == n:
        preds = decode_variables(var_latent, store)
    else:
        w1 = T.gather_axis(store.get("model/dec_variable_w1"), 0, var_targets)
        b1 = T.gather_axis(store.get("model/dec_variable_b1"), 0, var_targets)
        w2 = T.gather_axis(store.get("model/dec_variable_w2"), 0, var_targets)
        b2 = T.gather_axis(store.get("model/dec_variable_b2"), 0, var_targets)
        hidden = T.relu(T.add(T.matmul(var_latent, w1), T.expand(b1, (n_sel, b, cfg.decoder_hidden))))
        preds = T.reshape(T.add(T.matmul(hidden, w2), T.expand(b2, (n_sel, b, 1))), (n_sel, b))
    loss_v2v = v2v_loss(preds, batch.next_values.T[var_targets], batch.next_missing.T[var_targets])
    if v2v_weight != 1.0:
        loss_v2v = T.mul_scalar(loss_v2v, v2v_weight)
    return loss_out, loss_v2v


# ---------------------------------------------------------------------------
# optimization steps


def network_step(
    store: ParamStore,
    graph_params: GraphParams,
    cfg: ModelConfig,
    batch: SampleSet,
    static_slices,
    train_cfg: TrainConfig,
    rng: SeededRng,
    all_ones: bool = False,
    dropout_rng: SeededRng | None = None,
    pos_weight: np.ndarray | None = None,
) -> dict:
    """Update network parameters under freshly hard-sampled graphs."""
    var_targets = _select_var_targets(cfg.n_dyn, train_cfg, rng)
    probs = compute_probs(graph_params)
    out_masks, out_static, var_masks = hard_mask_bundle(
        probs, cfg, static_slices, rng.child("hard"), var_targets, all_ones=all_ones
    )
    with T.Tape() as tape:
        loss_out, loss_v2v = _stacked_forward(
            store, cfg, batch, out_masks, out_static, var_masks, var_targets,
            pos_weight, dropout_rng, v2v_weight=train_cfg.v2v_loss_weight,
        )
        total = T.add(loss_out, loss_v2v)
        _check_finite(total)
        T.backward(tape, total)
    store.adam_step(train_cfg.lr_network, prefix="model/")
    store.zero_grads()
    return {"outcome": loss_out.item(), "v2v": loss_v2v.item(), "total": total.item()}


def graph_step(
    store: ParamStore,
    graph_params: GraphParams,
    cfg: ModelConfig,
    batch: SampleSet,
    static_slices,
    train_cfg: TrainConfig,
    temperature: float,
    rng: SeededRng,
    pos_weight: np.ndarray | None = None,
) -> dict:
    """Update graph parameters through relaxed masks; network stays frozen."""
    var_targets = _select_var_targets(cfg.n_dyn, train_cfg, rng)
    store.set_requires_grad(False, prefix="model/")
    try:
        with T.Tape() as tape:
            bundle, regs = relaxed_mask_bundle(
                graph_params, cfg, static_slices, temperature, rng.child("gumbel"), var_targets
            )
            loss_out, loss_v2v = _stacked_forward(
                store, cfg, batch, bundle.out_masks, bundle.out_static, bundle.var_masks,
                var_targets, pos_weight, v2v_weight=train_cfg.v2v_loss_weight,
            )
            reg = T.add(
                T.mul_scalar(regs["v2o"], train_cfg.lambda_v2o),
                T.mul_scalar(regs["v2v"], train_cfg.lambda_v2v),
            )
            total = T.add(T.add(loss_out, loss_v2v), reg)
            _check_finite(total)
            T.backward(tape, total)
    finally:
        store.set_requires_grad(True, prefix="model/")
    store.sgd_step(train_cfg.lr_graph, momentum=train_cfg.graph_momentum, prefix="graph/")
    store.zero_grads()
    return {
        "outcome": loss_out.item(),
        "v2v": loss_v2v.item(),
        "reg": reg.item(),
        "total": total.item(),
    }


def _select_var_targets(n_dyn: int, train_cfg: TrainConfig, rng: SeededRng) -> np.ndarray:
    k = train_cfg.v2v_targets_per_step
    if k <= 0 or k >= n_dyn:
        return np.arange(n_dyn)
    return np.sort(rng.child("var_targets").choice(n_dyn, size=k, replace=False))


class NumericFailure(RuntimeError):
    pass


def _check_finite(loss: T.Tensor) -> None:
    if not np.isfinite(loss.data).all():
        raise NumericFailure("non-finite training loss; aborting step")


# ---------------------------------------------------------------------------
# the full schedule


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)

    def append(self, row: dict, path: Path | None = None) -> None:
        self.epochs.append(row)
        if path is not None:
            with open(path, "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    def best_epoch(self) -> dict:
        scored = [r for r in self.epochs if r.get("val_mean_auroc") is not None]
        if not scored:
            return self.epochs[-1]
        return max(scored, key=lambda r: r["val_mean_auroc"])


@dataclass
class FitResult:
    store: ParamStore
    config: ModelConfig
    report: TrainReport

    def graph_params(self) -> GraphParams:
        return GraphParams(
            q_v2o=self.store.get("graph/q_v2o"),
            q_v2v=self.store.get("graph/q_v2v"),
            q_static=self.store.get("graph/q_static"),
        )


def deployed_masks(store: ParamStore, cfg: ModelConfig, static_slices, threshold: float = 0.5):
    """Hard masks for serving/eval: thresholded probabilities per target."""
    gp = GraphParams(
        q_v2o=store.get("graph/q_v2o"),
        q_v2v=store.get("graph/q_v2v"),
        q_static=store.get("graph/q_static"),
    )
    probs = compute_probs(gp)
    v2o = binarize(probs.v2o, threshold)
    v2v = binarize(probs.v2v, threshold)
    stat = probs.static >= threshold
    out_masks = np.stack(
        [
            expand_chunk_mask(v2o.adjacency[:, :, j].astype(np.float64), cfg.t_window, cfg.chunk_bins)
            for j in range(cfg.n_outcomes)
        ]
    )
    gmat = _static_group_matrix(static_slices, cfg.n_static_encoded)
    out_static = stat.T.astype(np.float64) @ gmat
    var_masks = np.stack(
        [
            expand_chunk_mask(v2v.adjacency[:, :, i].astype(np.float64), cfg.t_window, cfg.chunk_bins)
            for i in range(cfg.n_dyn)
        ]
    )
    return out_masks, out_static, var_masks, v2o, v2v


def all_ones_masks(cfg: ModelConfig):
    return (
        np.ones((cfg.n_outcomes, cfg.t_window, cfg.n_dyn)),
        np.ones((cfg.n_outcomes, cfg.n_static_encoded)),
        np.ones((cfg.n_dyn, cfg.t_window, cfg.n_dyn)),
    )


def _validation_auroc(store, cfg, val: SampleSet, static_slices, use_all_ones: bool):
    npm = NumpyModel(store, cfg)
    if use_all_ones:
        out_masks, out_static, _ = all_ones_masks(cfg)
    else:
        out_masks, out_static, _, _, _ = deployed_masks(store, cfg, static_slices)
    risks = npm.predict_risks(val.values, val.missing, val.statics, out_masks, out_static)
    per_outcome = {}
    vals = []
    for j in range(cfg.n_outcomes):
        keep = val.labels[:, j] != -1
        try:
            a = auroc(risks[keep, j], val.labels[keep, j])
        except (UndefinedMetric, ValueError):
            a = None
        per_outcome[f"outcome_{j}"] = a
        if a is not None:
            vals.append(a)
    return per_outcome, (float(np.mean(vals)) if vals else None)


def fit_alternating(
    train: SampleSet,
    val: SampleSet,
    cfg: ModelConfig,
    train_cfg: TrainConfig,
    static_slices,
    report_path: str | Path | None = None,
) -> FitResult:
    """Warm-start ERM epochs, then alternate network/graph phases per config;
    the checkpoint with the best validation mean AUROC wins."""
    if len(train) == 0:
        raise ValueError("empty training partition")
    if len(val) == 0:
        raise ValueError("empty validation partition")
    if report_path is not None:
        report_path = Path(report_path)
        report_path.write_text("")

    store = ParamStore()
    rng = SeededRng(train_cfg.seed, ("fit",))
    init_model_params(store, cfg, rng)
    graph_params = init_graph_params(
        store, cfg.n_chunks, cfg.n_dyn, cfg.n_outcomes, len(static_slices)
    )

    pos_weight = None
    if train_cfg.pos_weighting:
        labels = train.labels
        n_pos = np.maximum((labels == 1).sum(axis=0), 1)
        n_neg = np.maximum((labels == 0).sum(axis=0), 1)
        pos_weight = n_neg / n_pos

    # phase plan: warm epochs, then alternating blocks
    phases = ["warm"] * train_cfg.warm_epochs
    toggle = 0
    while len(phases) < train_cfg.epochs:
        phases.extend(["network" if toggle == 0 else "graph"] * train_cfg.alternation_period)
        toggle ^= 1
    phases = phases[: train_cfg.epochs]
    n_graph_epochs = max(1, phases.count("graph"))
    decay = (train_cfg.temp_end / train_cfg.temp_start) ** (1.0 / max(1, n_graph_epochs - 1))

    report = TrainReport()
    best_bytes: ParamStore | None = None
    best_score = -np.inf
    best_epoch = -1
    dropout_rng = rng.child("dropout") if cfg.dropout > 0 else None
    graph_epoch = 0
    started = time.time()

    for epoch, phase in enumerate(phases):
        erng = rng.child(f"epoch_{epoch}")
        order = erng.permutation(len(train))
        n_batches = int(np.ceil(len(train) / train_cfg.batch_size))
        if train_cfg.max_batches_per_epoch > 0:
            n_batches = min(n_batches, train_cfg.max_batches_per_epoch)
        sums: dict[str, float] = {}
        for bi in range(n_batches):
            sel = order[bi * train_cfg.batch_size : (bi + 1) * train_cfg.batch_size]
            batch = train.subset(sel)
            brng = erng.child(f"batch_{bi}")
            if phase == "graph":
                temp = train_cfg.temp_start * decay**graph_epoch
                if train_cfg.graph_batch_size > len(sel):
                    extra = erng.child(f"extra_{bi}").choice(
                        len(train), size=train_cfg.graph_batch_size - len(sel)
                    )
                    batch = train.subset(np.concatenate([sel, extra]))
                losses = graph_step(
                    store, graph_params, cfg, batch, static_slices, train_cfg, temp, brng, pos_weight
                )
            else:
                losses = network_step(
                    store, graph_params, cfg, batch, static_slices, train_cfg, brng,
                    all_ones=(phase == "warm"), dropout_rng=dropout_rng, pos_weight=pos_weight,
                )
            for key, value in losses.items():
                sums[key] = sums.get(key, 0.0) + value
        if phase == "graph":
            graph_epoch += 1

        probs = compute_probs(graph_params)
        val_per_outcome, val_mean = _validation_auroc(
            store, cfg, val, static_slices, use_all_ones=(phase == "warm")
        )
        row = {
            "epoch": epoch,
            "phase": phase,
            **{f"loss_{key}": value / n_batches for key, value in sums.items()},
            "density_v2o": float((probs.v2o >= 0.5).mean()),
            "density_v2v": float((probs.v2v >= 0.5).mean()),
            "val_auroc": val_per_outcome,
            "val_mean_auroc": val_mean,
            "wall_clock_s": round(time.time() - started, 3),
        }
        report.append(row, report_path)

        score = val_mean if val_mean is not None else -np.inf
        if phase != "warm" and score >= best_score:
            best_score = score
            best_bytes = store.clone()
            best_epoch = epoch
        if (
            train_cfg.patience > 0
            and best_epoch >= 0
            and epoch - best_epoch >= train_cfg.patience
        ):
            break

    final = best_bytes if best_bytes is not None else store.clone()
    return FitResult(store=final, config=cfg, report=report)


def finetune_full(
    store: ParamStore,
    train: SampleSet,
    cfg: ModelConfig,
    train_cfg: TrainConfig,
    static_slices,
    epochs: int,
) -> ParamStore:
    """Continue training with all-ones masks (every variable visible);
    graph parameters are untouched. Returns a new store."""
    tuned = store.clone()
    graph_params = GraphParams(
        q_v2o=tuned.get("graph/q_v2o"),
        q_v2v=tuned.get("graph/q_v2v"),
        q_static=tuned.get("graph/q_static"),
    )
    rng = SeededRng(train_cfg.seed, ("finetune",))
    for epoch in range(epochs):
        erng = rng.child(f"epoch_{epoch}")
        order = erng.permutation(len(train))
        n_batches = int(np.ceil(len(train) / train_cfg.batch_size))
        if train_cfg.max_batches_per_epoch > 0:
            n_batches = min(n_batches, train_cfg.max_batches_per_epoch)
        for bi in range(n_batches):
            sel = order[bi * train_cfg.batch_size : (bi + 1) * train_cfg.batch_size]
            network_step(
                tuned, graph_params, cfg, train.subset(sel), static_slices, train_cfg,
                erng.child(f"batch_{bi}"), all_ones=True,
            )
    return tuned
