import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchtrad import tensorcore as tc
from patchtrad.errors import ConfigError, DimensionError
from patchtrad.model import (ModelConfig, attention_layer, embed, forward, init_model, param_shapes,
                             patch_head, self_attention, sinusoidal_encoding)
from patchtrad.patcher import PatchConfig
from patchtrad.tensorcore import Tensor

from conftest import tiny_config


def _permuted_state(state, perm):
    """Same weights, head list reordered by ``perm``."""
    params = dict(state.params)
    for new, old in enumerate(perm):
        params[f"head.{new}"] = state.params[f"head.{old}"]
    return type(state)(state.cfg, params, state.w_pe, state.bn_stats)


class TestConfig:
    def test_head_dims_default_to_split(self):
        cfg = ModelConfig(PatchConfig(32), 2)
        assert (cfg.d_model, cfg.n_heads, cfg.d_k, cfg.d_v, cfg.n_layers) == (64, 4, 16, 16, 3)

    @pytest.mark.parametrize("kw", [dict(d_model=10, n_heads=4), dict(dropout_p=1.0), dict(ffn_mult=0),
                                    dict(attn_scale="bogus"), dict(n_modalities=0)])
    def test_invalid(self, kw):
        base = dict(patch=PatchConfig(32), n_modalities=2)
        base.update(kw)
        with pytest.raises(ConfigError):
            ModelConfig(**base)

    def test_round_trip_dict(self):
        cfg = ModelConfig(PatchConfig(20, 5, 3), 4, d_model=12, n_heads=3)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestInit:
    def test_deterministic(self):
        cfg = tiny_config(m=2)
        a, b = init_model(cfg, 3), init_model(cfg, 3)
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data)
        assert np.array_equal(a.w_pe, b.w_pe)

    def test_positional_table_at_zero(self):
        pe = init_model(tiny_config(d_model=8), 0).w_pe
        np.testing.assert_array_equal(pe[0, 0::2], 0.0)
        np.testing.assert_array_equal(pe[0, 1::2], 1.0)

    def test_sinusoid_values(self):
        pe = sinusoidal_encoding(5, 6, dtype=np.float64)
        assert pe[3, 2] == pytest.approx(math.sin(3 / 10000 ** (2 / 6)))
        assert pe[3, 5] == pytest.approx(math.cos(3 / 10000 ** (4 / 6)))

    def test_weight_bounds(self):
        cfg = tiny_config(m=2, d_model=16, n_heads=2, n_layers=2)
        state = init_model(cfg, 0)
        for name, p in state.params.items():
            if p.ndim == 2:
                assert np.max(np.abs(p.data)) <= 1 / math.sqrt(p.shape[0]) + 1e-7, name

    def test_exactly_m_heads_and_no_pe_param(self):
        cfg = tiny_config(m=5)
        shapes = param_shapes(cfg)
        assert sum(k.startswith("head.") for k in shapes) == 5
        assert "w_pe" not in shapes


class TestEmbed:
    def test_zero_input_isolates_pe(self):
        state = init_model(tiny_config(), 0)
        out = embed(Tensor(np.zeros((3, 4, 4))), state)
        np.testing.assert_array_equal(out.data, np.broadcast_to(state.w_pe, (3, 4, 8)))

    def test_one_hot_extracts_projection_rows(self):
        state = init_model(tiny_config(), 0)
        state.w_pe = np.zeros_like(state.w_pe)
        x = np.zeros((1, 4, 4))
        for i in range(4):
            x[0, i, i] = 1.0
        out = embed(Tensor(x), state).data
        np.testing.assert_array_equal(out[0, :4], state.params["w_proj"].data)

    def test_flatten_multiply_reshape_oracle(self, rng):
        state = init_model(tiny_config(), 0)
        x = rng.standard_normal((2, 3, 4, 4))
        ref = (x.reshape(-1, 4) @ state.params["w_proj"].data).reshape(2, 3, 4, 8) + state.w_pe
        np.testing.assert_allclose(embed(Tensor(x), state).data, ref, rtol=1e-6, atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            embed(Tensor(np.zeros((3, 5, 4))), init_model(tiny_config(), 0))


class TestAttention:
    def test_single_token_is_value_projection(self, rng):
        state = init_model(tiny_config(d_model=8, n_heads=2), 0)
        x = Tensor(rng.standard_normal((3, 1, 8)))
        p = state.params
        ref = (x.data @ p["layers.0.w_v"].data) @ p["layers.0.w_out"].data
        np.testing.assert_allclose(self_attention(x, state, 0).data, ref, rtol=1e-5, atol=1e-6)

    def test_identical_modalities_identical_outputs(self, rng):
        state = init_model(tiny_config(m=2), 0)
        tok = rng.standard_normal((1, 4, 4))
        x = embed(Tensor(np.concatenate([tok, tok])), state)
        z = attention_layer(x, state, 0, training=False).data
        np.testing.assert_array_equal(z[0], z[1])

    def test_score_rows_sum_to_one(self, rng):
        state = init_model(tiny_config(m=2, d_model=8, n_heads=2, n_layers=2), 0)
        trace = {}
        forward(rng.standard_normal((4, 2, 9)), state, trace=trace)
        for scores in trace.values():
            assert scores.shape == (8, 2, 4, 4)
            np.testing.assert_allclose(scores.sum(-1), 1.0, atol=1e-6)

    def test_scale_switch(self, rng):
        a = init_model(tiny_config(d_model=8, n_heads=2), 0)
        b = init_model(tiny_config(d_model=8, n_heads=2, attn_scale="d_k"), 0)
        x = Tensor(rng.standard_normal((2, 5, 8)))
        assert not np.allclose(self_attention(x, a, 0).data, self_attention(x, b, 0).data)

    def test_layer_preserves_shape(self, rng):
        state = init_model(tiny_config(d_model=8), 0)
        out = attention_layer(Tensor(rng.standard_normal((3, 5, 8))), state, 0, training=False)
        assert out.shape == (3, 5, 8)


class TestPatchHead:
    def test_zero_in_zero_out(self):
        state = init_model(tiny_config(m=2), 0)
        assert not patch_head(Tensor(np.zeros((1, 2, 5, 8))), state).data.any()

    def test_heads_differ_per_modality(self, rng):
        state = init_model(tiny_config(m=2), 0)
        z = rng.standard_normal((1, 1, 5, 8))
        out = patch_head(Tensor(np.concatenate([z, z], axis=1)), state).data
        assert not np.allclose(out[0, 0], out[0, 1])

    def test_loop_oracle(self, rng):
        state = init_model(tiny_config(m=3), 0)
        z = rng.standard_normal((2, 3, 5, 8))
        out = patch_head(Tensor(z), state).data
        for m in range(3):
            np.testing.assert_allclose(out[:, m], z[:, m] @ state.params[f"head.{m}"].data, rtol=1e-6, atol=1e-6)


class TestForward:
    def test_shapes_and_finiteness(self, small_state, rng):
        x_p, rec = forward(rng.standard_normal((3, 17)), small_state)
        assert x_p.shape == rec.shape == (3, small_state.cfg.num_patches, 4)
        assert np.all(np.isfinite(rec.data))

    def test_eval_deterministic(self, small_state, rng):
        x = rng.standard_normal((5, 3, 17))
        a = forward(x, small_state)[1].data
        b = forward(x, small_state)[1].data
        assert np.array_equal(a, b)

    def test_channel_permutation_equivariance(self, small_state, rng):
        x = rng.standard_normal((4, 3, 17))
        perm = [2, 0, 1]
        rec = forward(x, small_state)[1].data
        rec_perm = forward(x[:, perm], _permuted_state(small_state, perm))[1].data
        np.testing.assert_array_equal(rec_perm, rec[:, perm])

    def test_wrong_window(self, small_state):
        with pytest.raises(DimensionError):
            forward(np.zeros((3, 16)), small_state)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(4, 40), st.data())
    def test_output_shape_grid(self, w, data):
        p_len = data.draw(st.integers(1, w + 1))
        s = data.draw(st.integers(1, p_len))
        m = data.draw(st.integers(1, 3))
        cfg = ModelConfig(PatchConfig(w, p_len, s), m, d_model=8, n_heads=2, n_layers=1)
        x_p, rec = forward(np.zeros((2, m, w + 1)), init_model(cfg, 0))
        assert rec.shape == (2, m, cfg.num_patches, p_len)


def _model_gradcheck(cfg, point):
    r = np.random.default_rng([point, 7])
    state = init_model(cfg, seed=point, dtype=np.float64)
    # perturb batchnorm affine terms away from their trivial init
    for k, p in state.params.items():
        if k.endswith("gamma") or k.endswith("beta"):
            p.data += 0.3 * r.standard_normal(p.shape)
    x = r.standard_normal((3, cfg.n_modalities, cfg.patch.window_len))
    seed = int(r.integers(1 << 30))

    def loss():
        x_p, rec = forward(x, state, training=True, rng=np.random.default_rng(seed))
        return tc.sum_squared_error(x_p, rec)

    names = list(state.params)
    with tc.default_dtype(np.float64):
        errs = tc.gradcheck(loss, [state.params[k] for k in names], h=1e-5)
    return dict(zip(names, errs))


@pytest.mark.parametrize("point", range(3))
def test_full_model_gradient_multihead(point):
    cfg = tiny_config(m=2, w=10, patch_len=4, stride=3, d_model=8, n_heads=2, n_layers=2, dropout=0.2)
    errs = _model_gradcheck(cfg, point)
    assert max(errs.values()) < 1e-4, errs
