import numpy as np
import pytest

from causalews.data import SampleSet
from causalews.graph import init_graph_params
from causalews.model import ModelConfig, init_model_params
from causalews.params import ParamStore
from causalews.rng import SeededRng

STATIC_SLICES = [slice(0, 1), slice(1, 4), slice(4, 7)]  # age, gender, ethnicity


def tiny_config(n_dyn=4, n_outcomes=2, **overrides) -> ModelConfig:
    base = dict(
        n_dyn=n_dyn,
        n_static_encoded=7,
        n_outcomes=n_outcomes,
        t_window=24,
        n_chunks=2,
        chunk_bins=12,
        embed_dim=8,
        heads=2,
        ff_dim=16,
        static_dim=4,
        static_hidden=4,
        decoder_hidden=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


def build_store(cfg: ModelConfig, seed=0) -> ParamStore:
    store = ParamStore()
    init_model_params(store, cfg, SeededRng(seed))
    init_graph_params(store, cfg.n_chunks, cfg.n_dyn, cfg.n_outcomes, len(STATIC_SLICES))
    return store


def toy_batch(cfg: ModelConfig, n=32, seed=0, signal_var=None, missing_rate=0.1) -> SampleSet:
    """Random windows; when signal_var is set, outcome labels and next-bin
    values are driven by that variable's most recent observations."""
    rng = SeededRng(seed, ("toy",))
    vals = rng.normal((n, cfg.t_window, cfg.n_dyn))
    miss = rng.uniform((n, cfg.t_window, cfg.n_dyn)) < missing_rate
    stat = np.zeros((n, cfg.n_static_encoded))
    stat[:, 0] = rng.normal((n,))
    stat[:, 1] = stat[:, 4] = 1.0
    nxt = rng.normal((n, cfg.n_dyn))
    nxtm = rng.uniform((n, cfg.n_dyn)) < missing_rate
    if signal_var is None:
        labels = rng.integers(0, 2, (n, cfg.n_outcomes)).astype(np.int8)
    else:
        recent = vals[:, -4:, signal_var].mean(axis=1)
        labels = np.tile((recent > 0).astype(np.int8)[:, None], (1, cfg.n_outcomes))
        nxt[:, :] = 0.0
        nxt[:, (signal_var + 1) % cfg.n_dyn] = vals[:, -1, signal_var]
        nxtm[:] = False
        miss[:, -4:, signal_var] = False
    return SampleSet(
        values=vals,
        missing=miss,
        statics=stat,
        labels=labels,
        next_values=nxt,
        next_missing=nxtm,
        patient_ids=[f"p{i}" for i in range(n)],
        t_ends=np.full(n, cfg.t_window - 1, dtype=np.int64),
    )


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def tiny_store(tiny_cfg):
    return build_store(tiny_cfg, seed=0)
