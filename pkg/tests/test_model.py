import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdet.audio import FrameGrid
from svdet.errors import DataError, DivergenceError
from svdet.features import FeatureMatrix
from svdet.model import (LrcnConfig, TrainConfig, bce_loss, binary_f1,
                         forward_blocks, init_params, lrcn_backward,
                         lrcn_cell_step, lrcn_forward_block, load_checkpoint,
                         param_shapes, params_to_vector, predict_track,
                         save_checkpoint, train_lrcn, train_linear_baseline,
                         vector_to_params, zero_params)

SMALL = LrcnConfig(input_dim=6, block_len=5, n_filters=8, hidden_size=8,
                   dense_sizes=(4,))


def small_params(seed=0):
    return init_params(SMALL, seed=seed)


# ---------------------------------------------------------------------------
# independent straight-line scalar oracle for one cell step

def scalar_cell_oracle(x, h_prev, c_prev, params, cfg):
    d = cfg.input_dim
    kw = cfg.kernel_width
    pad_l = (kw - 1) // 2
    z = []
    for f in range(cfg.n_filters):
        for j in range(d):
            acc = params["conv_b"][f]
            for k in range(kw):
                src = j + k - pad_l
                if 0 <= src < d:
                    acc += params["conv_k"][f, k] * x[src]
            z.append(acc)
    z = np.array(z)

    def gate(wz, wh, wc, b, cell):
        pre = np.zeros(cfg.hidden_size)
        for m in range(cfg.hidden_size):
            s = b[m]
            for n in range(len(z)):
                s += wz[m, n] * z[n]
            for n in range(cfg.hidden_size):
                s += wh[m, n] * h_prev[n]
                if wc is not None:
                    s += wc[m, n] * cell[n]
            pre[m] = s
        return pre

    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i = sig(gate(params["Wi_z"], params["Wi_h"], params["Wi_c"], params["b_i"], c_prev))
    f = sig(gate(params["Wf_z"], params["Wf_h"], params["Wf_c"], params["b_f"], c_prev))
    g = np.tanh(gate(params["Wc_z"], params["Wc_h"], None, params["b_c"], None))
    c = f * c_prev + i * g
    o = sig(gate(params["Wo_z"], params["Wo_h"], params["Wo_c"], params["b_o"], c))
    h = o * np.tanh(c)
    return h, c


class TestCellStep:
    def test_zero_params_cprev_one(self):
        p = zero_params(SMALL)
        h, c, gates = lrcn_cell_step(np.ones(6), np.zeros(8), np.ones(8), p, SMALL)
        assert np.allclose(gates["i"], 0.5)
        assert np.allclose(gates["f"], 0.5)
        assert np.allclose(gates["o"], 0.5)
        assert np.allclose(c, 0.5)
        assert np.allclose(h, 0.5 * math.tanh(0.5))

    def test_zero_params_fixed_point(self):
        p = zero_params(SMALL)
        h, c, _ = lrcn_cell_step(np.zeros(6), np.zeros(8), np.zeros(8), p, SMALL)
        assert np.all(c == 0.0)
        assert np.all(h == 0.0)

    def test_forgetting_halves_cell_state(self):
        p = zero_params(SMALL)
        c = np.ones(8)
        h = np.zeros(8)
        for t in range(1, 6):
            h, c, _ = lrcn_cell_step(np.zeros(6), h, c, p, SMALL)
            assert np.allclose(c, 0.5 ** t)
            assert np.allclose(h, 0.5 * np.tanh(c))

    def test_matches_scalar_oracle(self, rng):
        p = small_params(seed=5)
        x = rng.standard_normal(6)
        h_prev = 0.1 * rng.standard_normal(8)
        c_prev = 0.1 * rng.standard_normal(8)
        h, c, _ = lrcn_cell_step(x, h_prev, c_prev, p, SMALL)
        h_ref, c_ref = scalar_cell_oracle(x, h_prev, c_prev, p, SMALL)
        assert np.abs(h - h_ref).max() < 1e-12
        assert np.abs(c - c_ref).max() < 1e-12

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_gate_bounds(self, seed):
        r = np.random.default_rng(seed)
        p = init_params(SMALL, seed=seed)
        h, c, gates = lrcn_cell_step(5.0 * r.standard_normal(6),
                                     r.standard_normal(8),
                                     r.standard_normal(8), p, SMALL)
        for name in ("i", "f", "o"):
            assert np.all(gates[name] > 0.0) and np.all(gates[name] < 1.0)
        assert np.all(np.abs(h) < 1.0)


class TestForwardBlock:
    def test_zero_params_posterior_half(self, rng):
        p = zero_params(SMALL)
        block = rng.standard_normal((5, 6))
        assert lrcn_forward_block(block, p, SMALL) == pytest.approx(0.5)

    def test_posterior_in_open_interval(self, rng):
        p = small_params(seed=2)
        block = 10.0 * rng.standard_normal((5, 6))
        post = lrcn_forward_block(block, p, SMALL)
        assert 0.0 < post < 1.0

    def test_deterministic(self, rng):
        p = small_params(seed=9)
        block = rng.standard_normal((5, 6))
        a = lrcn_forward_block(block, p, SMALL)
        b = lrcn_forward_block(block, p, SMALL)
        assert a == b

    def test_wrong_block_length(self, rng):
        p = small_params()
        with pytest.raises(DataError):
            lrcn_forward_block(rng.standard_normal((7, 6)), p, SMALL)


class TestBackward:
    def test_gradient_vs_finite_differences(self, rng):
        p = small_params(seed=3)
        x = rng.standard_normal((2, 5, 6))
        y = np.array([1.0, 0.0])
        loss, grads = lrcn_backward(x, y, p, SMALL)
        theta = params_to_vector(p, SMALL)
        g = params_to_vector(grads, SMALL)
        delta = 1e-5
        idx = rng.choice(len(theta), size=120, replace=False)
        for i in idx:
            tp = theta.copy(); tp[i] += delta
            tm = theta.copy(); tm[i] -= delta
            lp = bce_loss(forward_blocks(x, vector_to_params(tp, SMALL), SMALL), y)
            lm = bce_loss(forward_blocks(x, vector_to_params(tm, SMALL), SMALL), y)
            fd = (lp - lm) / (2 * delta)
            rel = abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8)
            assert rel < 1e-4

    def test_bce_stationarity_zero_bias_grad(self, rng):
        p = small_params(seed=4)
        x = rng.standard_normal((3, 5, 6))
        post = forward_blocks(x, p, SMALL)
        _, grads = lrcn_backward(x, post, p, SMALL)
        assert abs(float(grads["out_b"])) < 1e-12

    def test_duplicated_block_mean(self, rng):
        p = small_params(seed=6)
        x = rng.standard_normal((1, 5, 6))
        y = np.array([1.0])
        loss1, g1 = lrcn_backward(x, y, p, SMALL)
        loss2, g2 = lrcn_backward(np.repeat(x, 2, axis=0),
                                  np.array([1.0, 1.0]), p, SMALL)
        assert loss1 == pytest.approx(loss2)
        assert np.abs(params_to_vector(g1, SMALL)
                      - params_to_vector(g2, SMALL)).max() < 1e-12

    def test_empty_batch(self):
        with pytest.raises(DataError):
            lrcn_backward(np.zeros((0, 5, 6)), np.zeros(0), small_params(), SMALL)


class TestTraining:
    def _separable(self, rng, n=8):
        x = np.zeros((n, 5, 6))
        y = np.zeros(n)
        for i in range(n):
            if i % 2:
                x[i] += 1.0
                y[i] = 1.0
            x[i] += 0.05 * rng.standard_normal((5, 6))
        return x, y

    def test_overfits_separable_blocks(self, rng):
        x, y = self._separable(rng)
        cfg = TrainConfig(learning_rate=0.05, epochs=200, batch_size=8, seed=0)
        params, history = train_lrcn(x, y, SMALL, cfg)
        post = forward_blocks(x, params, SMALL)
        assert np.all((post >= 0.5) == (y == 1.0))

    def test_zero_learning_rate_no_change(self, rng):
        x, y = self._separable(rng)
        cfg = TrainConfig(learning_rate=0.0, epochs=5, batch_size=4, seed=1)
        params, history = train_lrcn(x, y, SMALL, cfg)
        init = init_params(SMALL, seed=1)
        assert np.array_equal(params_to_vector(params, SMALL),
                              params_to_vector(init, SMALL))
        losses = [h["train_loss"] for h in history]
        assert max(losses) - min(losses) < 1e-12

    def test_same_seed_identical_history(self, rng):
        x, y = self._separable(rng)
        cfg = TrainConfig(learning_rate=0.01, epochs=10, batch_size=4, seed=7)
        _, h1 = train_lrcn(x, y, SMALL, cfg)
        _, h2 = train_lrcn(x, y, SMALL, cfg)
        assert h1 == h2

    def test_divergence_aborts(self, rng):
        x, y = self._separable(rng)
        x[0, 0, 0] = np.nan  # poisons the posterior, so the loss goes non-finite
        cfg = TrainConfig(learning_rate=0.01, epochs=5, batch_size=8, seed=0)
        with pytest.raises(DivergenceError):
            train_lrcn(x, y, SMALL, cfg)

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            train_lrcn(np.zeros((0, 5, 6)), np.zeros(0), SMALL, TrainConfig())


class TestPredictTrack:
    def _feat(self, values):
        grid = FrameGrid(frame_len=640, hop=320, n_frames=len(values),
                         sample_rate=16000)
        return FeatureMatrix(values=values, feature_tag="mfcc", grid=grid)

    def test_constant_features_constant_track(self, rng):
        p = small_params(seed=11)
        feat = self._feat(np.tile(rng.standard_normal(6), (40, 1)))
        track = predict_track(feat, p, SMALL)
        assert np.allclose(track.posteriors, track.posteriors[0])

    def test_track_length_equals_frames(self, rng):
        p = small_params(seed=11)
        feat = self._feat(rng.standard_normal((33, 6)))
        assert len(predict_track(feat, p, SMALL).posteriors) == 33

    def test_agrees_with_forward_block(self, rng):
        p = small_params(seed=12)
        values = rng.standard_normal((9, 6))
        feat = self._feat(values)
        track = predict_track(feat, p, SMALL)
        half = SMALL.block_len // 2
        padded = np.concatenate([np.repeat(values[:1], half, axis=0), values,
                                 np.repeat(values[-1:], SMALL.block_len - 1 - half,
                                           axis=0)])
        for i in range(9):
            block = padded[i : i + SMALL.block_len]
            assert abs(track.posteriors[i]
                       - lrcn_forward_block(block, p, SMALL)) < 1e-12


class TestCheckpoint:
    def test_roundtrip_bit_identical_posteriors(self, tmp_path, rng):
        p = small_params(seed=8)
        path = tmp_path / "model.npz"
        save_checkpoint(path, p, SMALL)
        p2, cfg2 = load_checkpoint(path)
        assert cfg2 == SMALL
        x = rng.standard_normal((4, 5, 6))
        assert np.array_equal(forward_blocks(x, p, SMALL),
                              forward_blocks(x, p2, cfg2))
        for name, _ in param_shapes(SMALL):
            assert np.array_equal(p[name], p2[name])


class TestLinearBaseline:
    def test_separable_2d(self, rng):
        x = np.concatenate([rng.normal(-2.0, 0.3, size=(50, 2)),
                            rng.normal(2.0, 0.3, size=(50, 2))])
        y = np.concatenate([np.zeros(50), np.ones(50)])
        clf = train_linear_baseline(x, y)
        assert np.mean(clf.predict(x) == y) == 1.0

    def test_zero_weights_half(self):
        from svdet.model import LinearBaseline
        clf = LinearBaseline(w=np.zeros(3), b=0.0)
        assert np.allclose(clf.predict_proba(np.ones((4, 3))), 0.5)

    def test_single_class_error(self, rng):
        with pytest.raises(DataError):
            train_linear_baseline(rng.standard_normal((10, 2)), np.ones(10))

    def test_shared_scale_after_refit_same_decisions(self, rng):
        x = np.concatenate([rng.normal(-1.0, 0.4, size=(40, 2)),
                            rng.normal(1.0, 0.4, size=(40, 2))])
        y = np.concatenate([np.zeros(40), np.ones(40)])

        def minmax(v):
            lo, hi = v.min(axis=0), v.max(axis=0)
            return (v - lo) / (hi - lo)

        d1 = train_linear_baseline(minmax(x), y).predict(minmax(x))
        d2 = train_linear_baseline(minmax(3.0 * x), y).predict(minmax(3.0 * x))
        assert np.array_equal(d1, d2)
