"""Attention encoder-decoder over masked binned windows.

One shared encoder (per-bin projection + learned positions + one multi-head
self-attention block + pooled feed-forward) feeds two decoder families:
per-outcome risk heads and per-variable next-bin heads. Causal-graph masks
enter multiplicatively on both input channels of a cell, so a hard zero is
indistinguishable from "never measured" and relaxed masks interpolate
continuously between present and absent.

Value/presence channel convention: channel i carries the (normalized) value,
channel N+i carries 1 for observed cells and 0 for missing ones; the dataset
layer's missing mask is inverted here so that a zero causal mask reproduces
the all-missing encoding exactly.

Both a taped (trainable) forward and a frozen numpy forward live here; the
test suite pins them to each other bit-for-bit modulo float associativity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .params import ParamStore
from .rng import SeededRng

DEFAULT_WINDOW = 168
DEFAULT_CHUNKS = 14
DEFAULT_CHUNK_BINS = 12


@dataclass
class ModelConfig:
    n_dyn: int
    n_static_encoded: int
    n_outcomes: int
    t_window: int = DEFAULT_WINDOW
    n_chunks: int = DEFAULT_CHUNKS
    chunk_bins: int = DEFAULT_CHUNK_BINS
    embed_dim: int = 32
    heads: int = 4
    ff_dim: int = 64
    static_dim: int = 16
    static_hidden: int = 16
    recent_dim: int = 16
    decoder_hidden: int = 32
    dropout: float = 0.0

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.t_window != self.n_chunks * self.chunk_bins:
            raise ValueError(
                f"t_window {self.t_window} != n_chunks*chunk_bins "
                f"{self.n_chunks}*{self.chunk_bins}"
            )
        for name in ("embed_dim", "heads", "ff_dim", "static_dim", "static_hidden", "recent_dim", "decoder_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def latent_dim(self) -> int:
        return self.embed_dim + self.recent_dim + self.static_dim

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _sinusoidal_positions(t_window: int, dim: int) -> np.ndarray:
    # learned thereafter; the sinusoidal start makes positions separable from
    # step one, which tiny cohorts need to pick up lag structure at all
    pos = np.arange(t_window)[:, None]
    idx = np.arange(dim)[None, :]
    angles = pos / np.power(10_000.0, (2 * (idx // 2)) / dim)
    enc = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
    return enc


def init_model_params(store: ParamStore, cfg: ModelConfig, rng: SeededRng) -> None:
    """Register encoder/decoder weights under the ``model/`` prefix."""

    def dense(name, fan_in, fan_out, stream):
        scale = 1.0 / np.sqrt(fan_in)
        store.create(f"model/{name}_w", stream.normal((fan_in, fan_out)) * scale)
        store.create(f"model/{name}_b", np.zeros(fan_out))

    r = rng.child("model_init")
    dense("in_proj", 2 * cfg.n_dyn, cfg.embed_dim, r.child("in_proj"))
    store.create("model/pos", _sinusoidal_positions(cfg.t_window, cfg.embed_dim))
    for name in ("attn_q", "attn_k", "attn_v", "attn_o"):
        dense(name, cfg.embed_dim, cfg.embed_dim, r.child(name))
    store.create("model/ln1_g", np.ones(cfg.embed_dim))
    store.create("model/ln1_b", np.zeros(cfg.embed_dim))
    dense("ff1", cfg.embed_dim, cfg.ff_dim, r.child("ff1"))
    dense("ff2", cfg.ff_dim, cfg.embed_dim, r.child("ff2"))
    store.create("model/ln2_g", np.ones(cfg.embed_dim))
    store.create("model/ln2_b", np.zeros(cfg.embed_dim))
    dense("static1", cfg.n_static_encoded, cfg.static_hidden, r.child("static1"))
    dense("static2", cfg.static_hidden, cfg.static_dim, r.child("static2"))
    dense("recent", cfg.chunk_bins * 2 * cfg.n_dyn, cfg.recent_dim, r.child("recent"))

    def heads(name, count, stream):
        scale_1 = 1.0 / np.sqrt(cfg.latent_dim)
        store.create(
            f"model/{name}_w1", stream.normal((count, cfg.latent_dim, cfg.decoder_hidden)) * scale_1
        )
        store.create(f"model/{name}_b1", np.zeros((count, 1, cfg.decoder_hidden)))
        scale_2 = 1.0 / np.sqrt(cfg.decoder_hidden)
        store.create(f"model/{name}_w2", stream.normal((count, cfg.decoder_hidden, 1)) * scale_2)
        store.create(f"model/{name}_b2", np.zeros((count, 1, 1)))

    heads("dec_outcome", cfg.n_outcomes, r.child("dec_outcome"))
    heads("dec_variable", cfg.n_dyn, r.child("dec_variable"))


def apply_input_mask(values: T.Tensor, presence: T.Tensor, mask: T.Tensor) -> T.Tensor:
    """Multiply both channels of every cell by the causal mask and stack them.

    All operands share shape (..., T, N); output is (..., T, 2N).
    """
    return T.concat([T.mul(values, mask), T.mul(presence, mask)], -1)


def _dense(x, store, name, leading):
    # flatten leading dims so the projection is one large gemm
    w = store.get(f"model/{name}_w")
    b = store.get(f"model/{name}_b")
    fan_in, fan_out = w.shape
    flat = T.reshape(x, (-1, fan_in)) if x.data.ndim > 2 else x
    y = T.add(T.matmul(flat, w), T.expand(b, (flat.shape[0], fan_out)))
    return T.reshape(y, leading + (fan_out,))


def _dropout(x: T.Tensor, rate: float, rng: SeededRng | None) -> T.Tensor:
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.uniform(x.shape) >= rate) / (1.0 - rate)
    return T.mul(x, T.constant(keep))


def encode(
    x: T.Tensor,
    statics: T.Tensor,
    store: ParamStore,
    cfg: ModelConfig,
    dropout_rng: SeededRng | None = None,
) -> T.Tensor:
    """(K, B, T, 2N) masked input + (K, B, S) statics -> (K, B, d + d_s) latent.

    Deterministic unless a dropout stream is supplied (training only).
    """
    if x.data.ndim != 4:
        raise T.ShapeError(f"encode: expected rank-4 input (K,B,T,2N), got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise ValueError("encode: non-finite input")
    kb = x.shape[:2]
    t_len, d, h, hd = cfg.t_window, cfg.embed_dim, cfg.heads, cfg.head_dim

    h0 = _dense(x, store, "in_proj", kb + (t_len,))
    h1 = T.add(h0, T.expand(store.get("model/pos"), kb + (t_len, d)))

    q = _dense(h1, store, "attn_q", kb + (t_len,))
    k = _dense(h1, store, "attn_k", kb + (t_len,))
    v = _dense(h1, store, "attn_v", kb + (t_len,))

    def split(z):
        return T.transpose(T.reshape(z, kb + (t_len, h, hd)), (0, 1, 3, 2, 4))

    qh, kh, vh = split(q), split(k), split(v)
    ctx = T.attention(qh, kh, vh, 1.0 / np.sqrt(hd))
    ctx = T.reshape(T.transpose(ctx, (0, 1, 3, 2, 4)), kb + (t_len, d))
    a_out = _dense(ctx, store, "attn_o", kb + (t_len,))
    a_out = _dropout(a_out, cfg.dropout, dropout_rng)

    h2 = T.layer_norm(T.add(h1, a_out))
    h2 = T.add(
        T.mul(h2, T.expand(store.get("model/ln1_g"), kb + (t_len, d))),
        T.expand(store.get("model/ln1_b"), kb + (t_len, d)),
    )
    pooled = T.mean_reduce(h2, axis=-2)

    ff = T.relu(_dense(pooled, store, "ff1", kb))
    ff = _dropout(ff, cfg.dropout, dropout_rng)
    ff = _dense(ff, store, "ff2", kb)
    z = T.layer_norm(T.add(pooled, ff))
    z = T.add(
        T.mul(z, T.expand(store.get("model/ln2_g"), kb + (d,))),
        T.expand(store.get("model/ln2_b"), kb + (d,)),
    )

    # the most recent chunk feeds the latent directly: pooled attention alone
    # cannot expose short-lag structure at small data scales
    recent = T.reshape(
        T.slice_axis(x, -2, t_len - cfg.chunk_bins, t_len),
        kb + (cfg.chunk_bins * 2 * cfg.n_dyn,),
    )
    rec = T.relu(_dense(recent, store, "recent", kb))

    se = T.relu(_dense(statics, store, "static1", kb))
    se = _dense(se, store, "static2", kb)
    return T.concat([z, rec, se], -1)


def _decode_heads(latent: T.Tensor, store: ParamStore, name: str) -> T.Tensor:
    """(K, B, D) latent through K stacked two-layer heads -> (K, B)."""
    w1 = store.get(f"model/{name}_w1")
    b1 = store.get(f"model/{name}_b1")
    w2 = store.get(f"model/{name}_w2")
    b2 = store.get(f"model/{name}_b2")
    kb = latent.shape[:2]
    hidden = T.relu(T.add(T.matmul(latent, w1), T.expand(b1, kb + (w1.shape[2],))))
    out = T.add(T.matmul(hidden, w2), T.expand(b2, kb + (1,)))
    return T.reshape(out, kb)


def decode_outcomes(latent: T.Tensor, store: ParamStore) -> T.Tensor:
    """Per-outcome logits from per-outcome latents: (M, B, D) -> (M, B)."""
    return _decode_heads(latent, store, "dec_outcome")


def decode_variables(latent: T.Tensor, store: ParamStore) -> T.Tensor:
    """Per-variable next-bin predictions from per-variable latents: (N, B, D) -> (N, B)."""
    return _decode_heads(latent, store, "dec_variable")


def predict_outcome_risks(logits: T.Tensor) -> T.Tensor:
    return T.sigmoid(logits)


# ---------------------------------------------------------------------------
# frozen numpy inference


def _np_sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _np_layer_norm(x, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


@dataclass
class EncoderState:
    """Everything cde_fast needs to redo one bin's worth of attention work."""

    x: np.ndarray  # (T, 2N) masked input
    h1: np.ndarray  # (T, d)
    k: np.ndarray  # (h, T, hd)
    v: np.ndarray  # (h, T, hd)
    q: np.ndarray  # (h, T, hd)
    scores: np.ndarray  # (h, T, T) scaled raw scores
    row_max: np.ndarray  # (h, T)
    denom: np.ndarray  # (h, T)
    numer: np.ndarray  # (h, T, hd)
    static_enc: np.ndarray  # (d_s,)
    recent_enc: np.ndarray  # (d_r,)
    latent: np.ndarray  # (D,)


class NumpyModel:
    """Frozen-parameter forward pass on plain arrays (no tape, thread-safe)."""

    def __init__(self, store: ParamStore, cfg: ModelConfig):
        self.cfg = cfg
        g = lambda name: store.get(f"model/{name}").data
        self.in_w, self.in_b = g("in_proj_w"), g("in_proj_b")
        self.pos = g("pos")
        self.q_w, self.q_b = g("attn_q_w"), g("attn_q_b")
        self.k_w, self.k_b = g("attn_k_w"), g("attn_k_b")
        self.v_w, self.v_b = g("attn_v_w"), g("attn_v_b")
        self.o_w, self.o_b = g("attn_o_w"), g("attn_o_b")
        self.ln1_g, self.ln1_b = g("ln1_g"), g("ln1_b")
        self.ff1_w, self.ff1_b = g("ff1_w"), g("ff1_b")
        self.ff2_w, self.ff2_b = g("ff2_w"), g("ff2_b")
        self.ln2_g, self.ln2_b = g("ln2_g"), g("ln2_b")
        self.s1_w, self.s1_b = g("static1_w"), g("static1_b")
        self.s2_w, self.s2_b = g("static2_w"), g("static2_b")
        self.rec_w, self.rec_b = g("recent_w"), g("recent_b")
        self.do_w1, self.do_b1 = g("dec_outcome_w1"), g("dec_outcome_b1")
        self.do_w2, self.do_b2 = g("dec_outcome_w2"), g("dec_outcome_b2")
        self.dv_w1, self.dv_b1 = g("dec_variable_w1"), g("dec_variable_b1")
        self.dv_w2, self.dv_b2 = g("dec_variable_w2"), g("dec_variable_b2")

    # -- batched paths ------------------------------------------------------

    def encode(self, x: np.ndarray, statics: np.ndarray) -> np.ndarray:
        """(..., T, 2N) + (..., S) -> (..., D); mirrors the taped encoder."""
        cfg = self.cfg
        h, hd = cfg.heads, cfg.head_dim
        h1 = x @ self.in_w + self.in_b + self.pos
        q = h1 @ self.q_w + self.q_b
        k = h1 @ self.k_w + self.k_b
        v = h1 @ self.v_w + self.v_b

        def split(z):
            zh = z.reshape(z.shape[:-1] + (h, hd))
            return np.moveaxis(zh, -2, -3)  # (..., h, T, hd)

        qh, kh, vh = split(q), split(k), split(v)
        scores = qh @ np.swapaxes(kh, -1, -2) * (1.0 / np.sqrt(hd))
        m = scores.max(axis=-1, keepdims=True)
        e = np.exp(scores - m)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = attn @ vh
        ctx = np.moveaxis(ctx, -3, -2).reshape(x.shape[:-1] + (cfg.embed_dim,))
        a_out = ctx @ self.o_w + self.o_b
        h2 = _np_layer_norm(h1 + a_out) * self.ln1_g + self.ln1_b
        pooled = h2.mean(axis=-2)
        ff = np.maximum(pooled @ self.ff1_w + self.ff1_b, 0.0) @ self.ff2_w + self.ff2_b
        z = _np_layer_norm(pooled + ff) * self.ln2_g + self.ln2_b
        recent = x[..., -cfg.chunk_bins :, :].reshape(x.shape[:-2] + (cfg.chunk_bins * x.shape[-1],))
        rec = np.maximum(recent @ self.rec_w + self.rec_b, 0.0)
        se = np.maximum(statics @ self.s1_w + self.s1_b, 0.0) @ self.s2_w + self.s2_b
        return np.concatenate([z, rec, se], axis=-1)

    def outcome_logit(self, latent: np.ndarray, j: int) -> np.ndarray:
        hidden = np.maximum(latent @ self.do_w1[j] + self.do_b1[j, 0], 0.0)
        return (hidden @ self.do_w2[j] + self.do_b2[j, 0]).squeeze(-1)

    def variable_pred(self, latent: np.ndarray, i: int) -> np.ndarray:
        hidden = np.maximum(latent @ self.dv_w1[i] + self.dv_b1[i, 0], 0.0)
        return (hidden @ self.dv_w2[i] + self.dv_b2[i, 0]).squeeze(-1)

    def masked_input(self, values, missing, mask):
        """Stack masked value/presence channels: (..., T, N) -> (..., T, 2N)."""
        presence = (~missing).astype(np.float64)
        return np.concatenate([values * mask, presence * mask], axis=-1)

    def predict_risks(
        self,
        values: np.ndarray,  # (B, T, N)
        missing: np.ndarray,
        statics: np.ndarray,  # (B, S)
        outcome_masks: np.ndarray,  # (M, T, N)
        static_masks: np.ndarray,  # (M, S)
        batch: int = 256,
    ) -> np.ndarray:
        """Per-outcome risks under per-outcome masked encoders: (B, M)."""
        m = self.cfg.n_outcomes
        b_total = values.shape[0]
        risks = np.zeros((b_total, m))
        for lo in range(0, b_total, batch):
            hi = min(lo + batch, b_total)
            for j in range(m):
                x = self.masked_input(values[lo:hi], missing[lo:hi], outcome_masks[j])
                latent = self.encode(x, statics[lo:hi] * static_masks[j])
                risks[lo:hi, j] = _np_sigmoid(self.outcome_logit(latent, j))
        return risks

    def predict_next_values(
        self,
        values: np.ndarray,
        missing: np.ndarray,
        statics: np.ndarray,
        variable_masks: np.ndarray,  # (N, T, N)
        batch: int = 256,
    ) -> np.ndarray:
        n = self.cfg.n_dyn
        b_total = values.shape[0]
        preds = np.zeros((b_total, n))
        for lo in range(0, b_total, batch):
            hi = min(lo + batch, b_total)
            for i in range(n):
                x = self.masked_input(values[lo:hi], missing[lo:hi], variable_masks[i])
                latent = self.encode(x, statics[lo:hi])
                preds[lo:hi, i] = self.variable_pred(latent, i)
        return preds

    # -- cached single-sample path (accelerated perturbation inference) -----

    def encode_cached(self, x: np.ndarray, statics_masked: np.ndarray) -> EncoderState:
        """Single-sample encoder keeping attention internals for reuse."""
        cfg = self.cfg
        h, hd, t_len = cfg.heads, cfg.head_dim, cfg.t_window
        h1 = x @ self.in_w + self.in_b + self.pos

        def split(z):
            return np.moveaxis(z.reshape(t_len, h, hd), 1, 0)

        q = split(h1 @ self.q_w + self.q_b)
        k = split(h1 @ self.k_w + self.k_b)
        v = split(h1 @ self.v_w + self.v_b)
        scores = q @ np.swapaxes(k, -1, -2) * (1.0 / np.sqrt(hd))
        row_max = scores.max(axis=-1)
        e = np.exp(scores - row_max[..., None])
        denom = e.sum(axis=-1)
        numer = e @ v
        se = np.maximum(statics_masked @ self.s1_w + self.s1_b, 0.0) @ self.s2_w + self.s2_b
        recent = x[-cfg.chunk_bins :].reshape(-1)
        rec = np.maximum(recent @ self.rec_w + self.rec_b, 0.0)
        state = EncoderState(
            x=x,
            h1=h1,
            k=k,
            v=v,
            q=q,
            scores=scores,
            row_max=row_max,
            denom=denom,
            numer=numer,
            static_enc=se,
            recent_enc=rec,
            latent=np.zeros(cfg.latent_dim),
        )
        state.latent = self._finish_latent(state.h1, state.numer, state.denom, se, rec)
        return state

    def _finish_latent(self, h1, numer, denom, static_enc, recent_enc) -> np.ndarray:
        cfg = self.cfg
        ctx = numer / denom[..., None]  # (h, T, hd)
        ctx = np.moveaxis(ctx, 0, 1).reshape(cfg.t_window, cfg.embed_dim)
        a_out = ctx @ self.o_w + self.o_b
        h2 = _np_layer_norm(h1 + a_out) * self.ln1_g + self.ln1_b
        pooled = h2.mean(axis=0)
        ff = np.maximum(pooled @ self.ff1_w + self.ff1_b, 0.0) @ self.ff2_w + self.ff2_b
        z = _np_layer_norm(pooled + ff) * self.ln2_g + self.ln2_b
        return np.concatenate([z, recent_enc, static_enc])

    def perturbed_latent(self, state: EncoderState, t: int, new_row: np.ndarray) -> np.ndarray:
        """Latent after replacing input row ``t``, touching only the affected
        attention rows/columns instead of redoing the full pass."""
        cfg = self.cfg
        h, hd = cfg.heads, cfg.head_dim
        inv_sqrt = 1.0 / np.sqrt(hd)

        h1_t = new_row @ self.in_w + self.in_b + self.pos[t]
        q_t = (h1_t @ self.q_w + self.q_b).reshape(h, hd)
        k_t = (h1_t @ self.k_w + self.k_b).reshape(h, hd)
        v_t = (h1_t @ self.v_w + self.v_b).reshape(h, hd)

        # new score column t (every row attends to the changed key)
        col_new = np.einsum("hsd,hd->hs", state.q, k_t) * inv_sqrt  # (h, T)
        # new score row t (changed query attends to all keys, incl. itself)
        row_new = np.einsum("hd,hsd->hs", q_t, state.k) * inv_sqrt  # (h, T)
        row_new[:, t] = np.einsum("hd,hd->h", q_t, k_t) * inv_sqrt

        e_old = np.exp(state.scores[:, :, t] - state.row_max)
        col_clip = np.minimum(col_new, state.row_max + 60.0)  # overflow guard
        e_new = np.exp(col_clip - state.row_max)
        numer = state.numer + e_new[..., None] * v_t[:, None, :] - e_old[..., None] * state.v[:, t][:, None, :]
        denom = state.denom + e_new - e_old

        # rows whose max is invalidated get a full refresh from cached scores
        stale = np.where(col_new > state.row_max)
        if len(stale[0]):
            v_upd = state.v.copy()
            v_upd[:, t] = v_t
            for hh, s in zip(*stale):
                row = state.scores[hh, s].copy()
                row[t] = col_new[hh, s]
                mrow = row.max()
                erow = np.exp(row - mrow)
                denom[hh, s] = erow.sum()
                numer[hh, s] = erow @ v_upd[hh]

        # row t always recomputed in full
        m_t = row_new.max(axis=-1)
        e_t = np.exp(row_new - m_t[:, None])
        v_upd_t = state.v.copy()
        v_upd_t[:, t] = v_t
        denom[:, t] = e_t.sum(axis=-1)
        numer[:, t] = np.einsum("hs,hsd->hd", e_t, v_upd_t)

        h1 = state.h1.copy()
        h1[t] = h1_t
        rec = state.recent_enc
        first_recent = cfg.t_window - cfg.chunk_bins
        if t >= first_recent:
            recent = state.x[first_recent:].copy()
            recent[t - first_recent] = new_row
            rec = np.maximum(recent.reshape(-1) @ self.rec_w + self.rec_b, 0.0)
        return self._finish_latent(h1, numer, denom, state.static_enc, rec)
