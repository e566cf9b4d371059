import numpy as np
import pytest

from causalews import tensor as T
from causalews.model import (
    ModelConfig,
    NumpyModel,
    apply_input_mask,
    decode_outcomes,
    decode_variables,
    encode,
    init_model_params,
)
from causalews.params import ParamStore
from causalews.rng import SeededRng

from conftest import build_store, tiny_config, toy_batch


def _encode_single(store, cfg, x_np, statics_np):
    x = T.constant(x_np[None, None])
    s = T.constant(statics_np[None, None])
    return encode(x, s, store, cfg).numpy()[0, 0]


class TestInputMask:
    def test_all_ones_is_identity(self):
        rng = SeededRng(1)
        vals = T.constant(rng.normal((2, 6, 3)))
        pres = T.constant((rng.uniform((2, 6, 3)) > 0.3).astype(float))
        ones = T.constant(np.ones((2, 6, 3)))
        out = apply_input_mask(vals, pres, ones).numpy()
        np.testing.assert_array_equal(out[..., :3], vals.numpy())
        np.testing.assert_array_equal(out[..., 3:], pres.numpy())

    def test_all_zeros_equals_all_missing_window(self, tiny_cfg, tiny_store):
        rng = SeededRng(2)
        vals = rng.normal((tiny_cfg.t_window, tiny_cfg.n_dyn))
        pres = np.ones_like(vals)
        stat = rng.normal((tiny_cfg.n_static_encoded,))
        zeros = np.zeros_like(vals)
        masked = apply_input_mask(T.constant(vals), T.constant(pres), T.constant(zeros)).numpy()
        # an all-missing window: values 0, presence 0
        missing_x = np.zeros((tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
        lat_masked = _encode_single(tiny_store, tiny_cfg, masked, stat)
        lat_missing = _encode_single(tiny_store, tiny_cfg, missing_x, stat)
        np.testing.assert_array_equal(lat_masked, lat_missing)

    def test_half_mask_halves_both_channels(self):
        vals = T.constant(np.full((1, 1, 1), 4.0))
        pres = T.constant(np.ones((1, 1, 1)))
        half = T.constant(np.full((1, 1, 1), 0.5))
        out = apply_input_mask(vals, pres, half).numpy()
        assert out[0, 0, 0] == 2.0 and out[0, 0, 1] == 0.5

    def test_mask_dominance_zero_cell_blocks_value(self, tiny_cfg, tiny_store):
        rng = SeededRng(3)
        vals = rng.normal((tiny_cfg.t_window, tiny_cfg.n_dyn))
        stat = rng.normal((tiny_cfg.n_static_encoded,))
        mask = np.ones_like(vals)
        mask[5, 2] = 0.0
        npm = NumpyModel(tiny_store, tiny_cfg)
        x_a = npm.masked_input(vals, np.zeros_like(vals, dtype=bool), mask)
        vals_b = vals.copy()
        vals_b[5, 2] = 1e6  # wild value under the zero mask
        x_b = npm.masked_input(vals_b, np.zeros_like(vals, dtype=bool), mask)
        np.testing.assert_array_equal(
            _encode_single(tiny_store, tiny_cfg, x_a, stat),
            _encode_single(tiny_store, tiny_cfg, x_b, stat),
        )


class TestEncode:
    def test_deterministic(self, tiny_cfg, tiny_store):
        rng = SeededRng(4)
        x = rng.normal((1, 2, tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
        s = rng.normal((1, 2, tiny_cfg.n_static_encoded))
        a = encode(T.constant(x), T.constant(s), tiny_store, tiny_cfg).numpy()
        b = encode(T.constant(x), T.constant(s), tiny_store, tiny_cfg).numpy()
        np.testing.assert_array_equal(a, b)

    def test_positional_encoding_breaks_time_symmetry(self, tiny_cfg, tiny_store):
        rng = SeededRng(5)
        x = rng.normal((tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
        stat = rng.normal((tiny_cfg.n_static_encoded,))
        swapped = x.copy()
        swapped[[3, 17]] = swapped[[17, 3]]
        lat_a = _encode_single(tiny_store, tiny_cfg, x, stat)
        lat_b = _encode_single(tiny_store, tiny_cfg, swapped, stat)
        assert np.abs(lat_a - lat_b).max() > 1e-8

    def test_rejects_nonfinite_input(self, tiny_cfg, tiny_store):
        x = np.zeros((1, 1, tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            encode(T.constant(x), T.constant(np.zeros((1, 1, 7))), tiny_store, tiny_cfg)

    def test_gradient_through_encode_decode(self):
        cfg = tiny_config(n_dyn=3)
        store = build_store(cfg, seed=6)
        rng = SeededRng(6)
        x0 = rng.normal((cfg.t_window, 2 * cfg.n_dyn)) * 0.5
        stat = rng.normal((cfg.n_static_encoded,))

        def f(x):
            latent = encode(
                T.reshape(x, (1, 1, cfg.t_window, 2 * cfg.n_dyn)),
                T.constant(stat[None, None]),
                store,
                cfg,
            )
            logits = decode_outcomes(T.expand(T.reshape(latent, (1, 1, cfg.latent_dim)), (cfg.n_outcomes, 1, cfg.latent_dim)), store)
            return T.sum_reduce(T.sigmoid(logits))

        err = T.gradient_check(f, x0.reshape(-1), eps=1e-5, max_coords=40, rng=SeededRng(7))
        assert err < 1e-4


class TestDecoders:
    def test_zero_init_heads_give_half_risk(self, tiny_cfg):
        store = ParamStore()
        init_model_params(store, tiny_cfg, SeededRng(8))
        for name in ("dec_outcome_w1", "dec_outcome_b1", "dec_outcome_w2", "dec_outcome_b2"):
            store.get(f"model/{name}").data[...] = 0.0
        latent = T.constant(SeededRng(9).normal((tiny_cfg.n_outcomes, 3, tiny_cfg.latent_dim)))
        logits = decode_outcomes(latent, store)
        risks = T.sigmoid(logits).numpy()
        np.testing.assert_array_equal(risks, np.full((tiny_cfg.n_outcomes, 3), 0.5))

    def test_risks_strictly_inside_unit_interval(self, tiny_cfg, tiny_store):
        latent = T.constant(SeededRng(10).normal((tiny_cfg.n_outcomes, 5, tiny_cfg.latent_dim)) * 3)
        risks = T.sigmoid(decode_outcomes(latent, tiny_store)).numpy()
        assert np.all(risks > 0) and np.all(risks < 1)

    def test_zero_init_variable_heads_predict_zero(self, tiny_cfg):
        store = ParamStore()
        init_model_params(store, tiny_cfg, SeededRng(11))
        for name in ("dec_variable_w1", "dec_variable_b1", "dec_variable_w2", "dec_variable_b2"):
            store.get(f"model/{name}").data[...] = 0.0
        latent = T.constant(SeededRng(12).normal((tiny_cfg.n_dyn, 4, tiny_cfg.latent_dim)))
        preds = decode_variables(latent, store).numpy()
        np.testing.assert_array_equal(preds, np.zeros((tiny_cfg.n_dyn, 4)))


class TestNumpyModelParity:
    def test_batched_numpy_matches_taped_forward(self, tiny_cfg, tiny_store):
        rng = SeededRng(13)
        batch = toy_batch(tiny_cfg, n=5, seed=13)
        npm = NumpyModel(tiny_store, tiny_cfg)
        masks = (rng.uniform((tiny_cfg.n_outcomes, tiny_cfg.t_window, tiny_cfg.n_dyn)) > 0.4).astype(float)
        smasks = np.ones((tiny_cfg.n_outcomes, tiny_cfg.n_static_encoded))
        risks_np = npm.predict_risks(batch.values, batch.missing, batch.statics, masks, smasks)
        for j in range(tiny_cfg.n_outcomes):
            x = npm.masked_input(batch.values, batch.missing, masks[j])
            latent = encode(
                T.constant(x[None]),
                T.constant(batch.statics[None]),
                tiny_store,
                tiny_cfg,
            )
            logit_t = decode_outcomes(
                T.expand(latent, (tiny_cfg.n_outcomes, len(batch), tiny_cfg.latent_dim)), tiny_store
            ).numpy()[j]
            np.testing.assert_allclose(risks_np[:, j], 1 / (1 + np.exp(-logit_t)), atol=1e-12)

    def test_cached_encoder_matches_batched(self, tiny_cfg, tiny_store):
        rng = SeededRng(14)
        npm = NumpyModel(tiny_store, tiny_cfg)
        x = rng.normal((tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
        stat = rng.normal((tiny_cfg.n_static_encoded,))
        state = npm.encode_cached(x, stat)
        np.testing.assert_allclose(state.latent, npm.encode(x[None], stat[None])[0], atol=1e-12)

    def test_perturbed_latent_matches_full_recompute(self, tiny_cfg, tiny_store):
        rng = SeededRng(15)
        npm = NumpyModel(tiny_store, tiny_cfg)
        for trial in range(20):
            x = rng.normal((tiny_cfg.t_window, 2 * tiny_cfg.n_dyn))
            stat = rng.normal((tiny_cfg.n_static_encoded,))
            state = npm.encode_cached(x, stat)
            t = int(rng.integers(0, tiny_cfg.t_window))
            row = x[t].copy()
            i = int(rng.integers(0, tiny_cfg.n_dyn))
            row[i] = rng.normal() * 5  # large moves invalidate row maxima too
            row[tiny_cfg.n_dyn + i] = 1.0
            fast = npm.perturbed_latent(state, t, row)
            x_full = x.copy()
            x_full[t] = row
            full = npm.encode(x_full[None], stat[None])[0]
            np.testing.assert_allclose(fast, full, atol=1e-9)


class TestConfig:
    def test_embed_must_divide_heads(self):
        with pytest.raises(ValueError, match="divisible"):
            tiny_config(embed_dim=9, heads=2)

    def test_window_chunk_consistency(self):
        with pytest.raises(ValueError, match="t_window"):
            tiny_config(t_window=30)

    def test_round_trip_dict(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.as_dict()) == cfg
