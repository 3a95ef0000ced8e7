import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homeorl.nn import (
    PolicyParams,
    RecurrentState,
    backward_sequence,
    forward,
    forward_sequence,
    init_params,
    load_checkpoint,
    sample_action,
    save_checkpoint,
)
from homeorl.nn import _kernels_py

T, B, D, A, H = 3, 2, 4, 3, 5


def random_params(rng, obs_dim=D, n_actions=A, hidden=H):
    p = init_params(obs_dim, n_actions, hidden, rng=rng, policy_gain=1.0)
    for k in p:
        p[k] = p[k] + 0.3 * rng.standard_normal(p[k].shape)
    return p


def linear_loss(params, obs, starts, state, wl, wv):
    out = forward_sequence(obs, starts, state, params)
    return float(np.sum(wl * out.logits) + np.sum(wv * out.values)), out


class TestForward:
    def test_zero_weights_uniform(self):
        p = init_params(D, A, H, rng=0).zeros_like()
        logits, probs, value, _ = forward(np.ones(D), RecurrentState.zeros(1, H), p)
        np.testing.assert_array_equal(probs, np.full(A, 1 / A))
        assert value == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_probs_normalised(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng)
        state = RecurrentState(rng.standard_normal((4, H)), rng.standard_normal((4, H)))
        _, probs, _, _ = forward(rng.standard_normal((4, D)) * 3, state, p)
        assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all(probs >= 0)

    def test_pure(self, rng):
        p = random_params(rng)
        state = RecurrentState(rng.standard_normal((1, H)), rng.standard_normal((1, H)))
        obs = rng.standard_normal(D)
        a = forward(obs, state, p)
        b = forward(obs, state, p)
        assert np.array_equal(a[1], b[1]) and a[2] == b[2]
        assert np.array_equal(a[3].h, b[3].h) and np.array_equal(a[3].c, b[3].c)

    def test_shape_mismatch_rejected(self, rng):
        p = init_params(D, A, H, rng=rng)
        with pytest.raises(ValueError):
            forward(np.ones(D + 1), RecurrentState.zeros(1, H), p)
        with pytest.raises(ValueError):
            forward(np.ones(D), RecurrentState.zeros(1, H + 1), p)

    @pytest.mark.parametrize("obs_dim,n_actions,hidden", [(1, 2, 16), (9, 5, 32), (10, 7, 64)])
    def test_initial_entropy_near_uniform(self, obs_dim, n_actions, hidden):
        rng = np.random.default_rng(0)
        p = init_params(obs_dim, n_actions, hidden, rng=rng)
        state = RecurrentState.zeros(64, hidden)
        _, probs, _, _ = forward(rng.uniform(-1, 1, (64, obs_dim)), state, p)
        ent = -(probs * np.log(probs)).sum(axis=1)
        assert np.all(ent >= 0.9 * np.log(n_actions))

    def test_sequence_matches_stepwise(self, rng):
        p = random_params(rng)
        obs = rng.standard_normal((T, B, D))
        starts = np.array([[0, 0], [1, 0], [0, 1]])
        s0 = RecurrentState(rng.standard_normal((B, H)), rng.standard_normal((B, H)))
        out = forward_sequence(obs, starts, s0, p)
        state = s0.copy()
        for t in range(T):
            state = state.reset_where(starts[t])
            logits, _, value, state = forward(obs[t], state, p)
            np.testing.assert_allclose(out.logits[t], logits, atol=1e-14)
            np.testing.assert_allclose(out.values[t], value, atol=1e-14)


class TestSampleAction:
    def test_degenerate(self, rng):
        for _ in range(1000):
            idx, logp = sample_action(np.array([1.0, 0.0]), rng)
            assert idx == 0 and logp == 0.0

    def test_frequencies(self, rng):
        probs = np.array([0.2, 0.5, 0.3])
        idx, logp = sample_action(np.tile(probs, (100_000, 1)), rng)
        freq = np.bincount(idx, minlength=3) / len(idx)
        assert np.all(np.abs(freq - probs) <= 0.01)
        np.testing.assert_allclose(np.exp(logp), probs[idx], rtol=1e-15)


class TestBackward:
    def test_finite_differences(self, rng):
        p = random_params(rng)
        obs = rng.standard_normal((T, B, D))
        starts = np.array([[0, 0], [1, 0], [0, 0]])
        s0 = RecurrentState(rng.standard_normal((B, H)), rng.standard_normal((B, H)))
        wl, wv = rng.standard_normal((T, B, A)), rng.standard_normal((T, B))
        _, out = linear_loss(p, obs, starts, s0, wl, wv)
        grads = backward_sequence(out.cache, wl, wv, p)
        eps = 1e-4
        for name in p:
            fd = np.zeros_like(p[name])
            for i in np.ndindex(p[name].shape):
                q = p.copy()
                q[name][i] += eps
                lp, _ = linear_loss(q, obs, starts, s0, wl, wv)
                q[name][i] -= 2 * eps
                lm, _ = linear_loss(q, obs, starts, s0, wl, wv)
                fd[i] = (lp - lm) / (2 * eps)
            err = np.abs(grads[name] - fd) / np.maximum(np.abs(fd), 1e-6)
            assert err.max() <= 1e-3, name

    def test_constant_loss_zero_gradient(self, rng):
        p = random_params(rng)
        out = forward_sequence(rng.standard_normal((T, B, D)), np.zeros((T, B)), RecurrentState.zeros(B, H), p)
        grads = backward_sequence(out.cache, np.zeros((T, B, A)), np.zeros((T, B)), p)
        assert grads.global_norm() == 0.0

    def test_no_gradient_across_reset(self, rng):
        p = random_params(rng)
        obs = rng.standard_normal((T, 1, D))
        starts = np.array([[0], [0], [1]])
        s0 = RecurrentState(rng.standard_normal((1, H)), rng.standard_normal((1, H)))
        wl = np.zeros((T, 1, A))
        wl[2] = rng.standard_normal(A)
        out = forward_sequence(obs, starts, s0, p)
        grads = backward_sequence(out.cache, wl, np.zeros((T, 1)), p)
        assert np.all(grads["w_hh"] == 0.0)
        # identical to a fresh single step on the last observation
        single = forward_sequence(obs[2:], np.ones((1, 1)), RecurrentState.zeros(1, H), p)
        ref = backward_sequence(single.cache, wl[2:], np.zeros((1, 1)), p)
        for name in p:
            np.testing.assert_allclose(grads[name], ref[name], atol=1e-14)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        p = random_params(rng)
        path = save_checkpoint(tmp_path / "ck.npz", p, {"lr": 1e-3}, {"seed": 3})
        q, meta = load_checkpoint(path, expected_shapes=p.shapes())
        for name in p:
            np.testing.assert_array_equal(p[name], q[name])
        assert meta["config"] == {"lr": 1e-3} and meta["extra"] == {"seed": 3}
        assert len(meta["config_hash"]) == 16

    def test_shape_mismatch_rejected(self, tmp_path, rng):
        p = init_params(D, A, H, rng=rng)
        path = save_checkpoint(tmp_path / "ck.npz", p)
        other = init_params(D + 1, A, H, rng=rng)
        with pytest.raises(ValueError, match="mismatch"):
            load_checkpoint(path, expected_shapes=other.shapes())

    def test_flat_round_trip(self, rng):
        p = random_params(rng)
        q = p.zeros_like()
        q.set_flat(p.flat())
        np.testing.assert_array_equal(q.flat(), p.flat())
        assert isinstance(q, PolicyParams)


@pytest.fixture
def ext():
    return pytest.importorskip("homeorl.nn._kernels_ext", reason="compiled kernels not built")


class TestBackends:
    def test_lstm_agree(self, rng, ext):
        Tn, Bn, Hn = 7, 3, 6
        xproj = rng.standard_normal((Tn, Bn, 4 * Hn))
        w_hh = rng.standard_normal((Hn, 4 * Hn)) * 0.5
        h0, c0 = rng.standard_normal((Bn, Hn)), rng.standard_normal((Bn, Hn))
        keep = (rng.random((Tn, Bn)) > 0.2).astype(float)
        fa = _kernels_py.lstm_forward(xproj, w_hh, h0, c0, keep)
        fb = ext.lstm_forward(xproj, w_hh, h0, c0, keep)
        for x, y in zip(fa, fb):
            np.testing.assert_allclose(x, y, atol=1e-12)
        dhs = rng.standard_normal((Tn, Bn, Hn))
        ba = _kernels_py.lstm_backward(dhs, fa[1], fa[2], fa[3], fa[4], keep, w_hh)
        bb = ext.lstm_backward(dhs, fb[1], fb[2], fb[3], fb[4], keep, w_hh)
        for x, y in zip(ba, bb):
            np.testing.assert_allclose(x, y, atol=1e-12)

    def test_gae_agree(self, rng, ext):
        r, v = rng.standard_normal((20, 4)), rng.standard_normal((20, 4))
        d = (rng.random((20, 4)) < 0.1).astype(float)
        lv = rng.standard_normal(4)
        a = _kernels_py.gae(r, v, d, lv, 0.99, 0.95)
        b = ext.gae(r, v, d, lv, 0.99, 0.95)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_env_var_forces_numpy(self):
        env = {**os.environ, "HOMEORL_PURE_PYTHON": "1"}
        out = subprocess.run([sys.executable, "-c", "import homeorl.nn.kernels as k; print(k.BACKEND)"],
                             env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"
