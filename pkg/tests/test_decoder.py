import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsbg.decoder import Prediction, decode, exp_l2_loss, init_decoder_params, time_weights
from rsbg.numerics import ParamStore, Tensor
from rsbg.numerics.gradcheck import check


def _params(seed=0, d_in=6, d_dec=5):
    p = ParamStore(np.random.default_rng(seed))
    init_decoder_params(p, d_in, d_dec)
    return p


def _inputs(rng, n=3, d_f=4, d_g=2):
    return Tensor(rng.normal(size=(n, d_f))), Tensor(rng.normal(size=(n, d_g))), rng.normal(size=(n, 2)), rng.normal(size=(n, 2))


def test_zero_params_hold_last_position(rng):
    p = _params()
    for _, t in p.items():
        t.data = np.zeros_like(t.data)
    f, u, last, disp = _inputs(rng)
    pos = decode(f, u, last, disp, p, 12).positions
    assert np.array_equal(pos, np.repeat(last[:, None], 12, axis=1))


def test_single_step_hand_trace(rng):
    p = _params(1)
    f, u, last, disp = _inputs(rng, n=1)
    scale = 4.0
    out = decode(f, u, last, disp, p, t_pred=1, disp_scale=scale).positions

    sig = lambda v: 1 / (1 + np.exp(-v))
    h0 = np.concatenate([f.data, u.data], axis=1) @ p["dec.proj.w"].data + p["dec.proj.b"].data
    z = (disp * scale) @ p["dec.lstm.w_x"].data + h0 @ p["dec.lstm.w_h"].data + p["dec.lstm.b"].data
    H = h0.shape[1]
    i, fg, o, g = sig(z[:, :H]), sig(z[:, H : 2 * H]), sig(z[:, 2 * H : 3 * H]), np.tanh(z[:, 3 * H :])
    c = fg * 0 + i * g
    h = o * np.tanh(c)
    step = h @ p["dec.head.w"].data + p["dec.head.b"].data
    assert np.max(np.abs(out[:, 0] - (last + step / scale))) < 1e-12


def test_decode_gradcheck_full_rollout(rng):
    p = _params(2, d_in=3, d_dec=3)
    f, u, last, disp = _inputs(rng, n=2, d_f=2, d_g=1)
    truth = rng.normal(size=(2, 12, 2))
    loss = lambda: exp_l2_loss(decode(f, u, last, disp, p, 12, 4.0), truth, 20.0)
    assert check(loss, [t for _, t in p.items()]) < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_translation_equivariance(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed % 3)
    f, u, last, disp = _inputs(rng)
    delta = rng.uniform(-50, 50, size=2)
    a = decode(f, u, last, disp, p, 12).positions
    b = decode(f, u, last + delta, disp, p, 12).positions
    assert np.allclose(b - delta, a, rtol=0, atol=1e-9)


def test_teacher_forcing_feeds_truth(rng):
    p = _params(4)
    f, u, last, disp = _inputs(rng, n=2)
    free = decode(f, u, last, disp, p, 3)
    own = np.diff(np.concatenate([last[:, None], free.positions], axis=1), axis=1)
    forced = decode(f, u, last, disp, p, 3, teacher=own)
    assert np.allclose(forced.positions, free.positions, rtol=0, atol=1e-12)


# -- loss --------------------------------------------------------------------


@pytest.mark.parametrize("gamma", [0.5, 20.0, math.inf])
def test_loss_zero_on_truth(rng, gamma):
    truth = rng.normal(size=(3, 12, 2))
    assert exp_l2_loss(Prediction(Tensor(truth.reshape(3, -1)), 12), truth, gamma).data == 0.0


def test_single_error_at_step_twenty():
    truth = np.zeros((1, 20, 2))
    pred = truth.copy()
    pred[0, 19, 0] = 1.0
    weighted = exp_l2_loss(Prediction(Tensor(pred.reshape(1, -1)), 20), truth, 20.0).data
    plain = exp_l2_loss(Prediction(Tensor(pred.reshape(1, -1)), 20), truth, math.inf).data
    assert plain == pytest.approx(1 / 20, rel=1e-15)
    assert weighted / plain == pytest.approx(math.e, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 14), st.integers(0, 2**32 - 1))
def test_infinite_gamma_is_mean_squared_l2(n, t, seed):
    rng = np.random.default_rng(seed)
    pred, truth = rng.normal(size=(n, t, 2)), rng.normal(size=(n, t, 2))
    got = exp_l2_loss(Prediction(Tensor(pred.reshape(n, -1)), t), truth, math.inf).data
    ref = sum(
        (pred[i, k, 0] - truth[i, k, 0]) ** 2 + (pred[i, k, 1] - truth[i, k, 1]) ** 2 for i in range(n) for k in range(t)
    ) / (n * t)
    assert abs(got - ref) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 100.0))
def test_loss_strictly_decreasing_in_gamma(seed, gamma):
    rng = np.random.default_rng(seed)
    pred, truth = rng.normal(size=(2, 12, 2)), rng.normal(size=(2, 12, 2))
    P = Prediction(Tensor(pred.reshape(2, -1)), 12)
    assert exp_l2_loss(P, truth, gamma).data > exp_l2_loss(P, truth, gamma * 1.5).data > exp_l2_loss(P, truth, math.inf).data


def test_weight_ratio_last_to_first():
    w = time_weights(12, 20.0)
    assert w[-1] / w[0] == pytest.approx(math.exp(11 / 20), rel=1e-15)
    assert round(w[-1] / w[0], 2) == 1.73
    assert np.array_equal(time_weights(12, math.inf), np.ones(12))


def test_bad_gamma():
    with pytest.raises(ValueError):
        time_weights(12, 0.0)
