"""Autoregressive LSTM decoder and the exponentially time-weighted L2 loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import ParamStore, ShapeError, Tensor, lstm_cell, ops
from .numerics.nn import linear


@dataclass
class Prediction:
    coords: Tensor  # (N, t_pred * 2), columns x_1, y_1, x_2, y_2, ...
    t_pred: int

    @property
    def positions(self) -> np.ndarray:
        """(N, t_pred, 2) absolute coordinates."""
        return self.coords.data.reshape(-1, self.t_pred, 2)


def init_decoder_params(params: ParamStore, d_in: int, d_dec: int) -> None:
    params.linear("dec.proj", d_in, d_dec)
    params.lstm("dec.lstm", 2, d_dec)
    params.linear("dec.head", d_dec, 2)


def decode(
    f: Tensor,
    u: Tensor,
    last_obs: np.ndarray,
    last_disp: np.ndarray,
    params: ParamStore,
    t_pred: int = 12,
    disp_scale: float = 1.0,
    teacher: Optional[np.ndarray] = None,
) -> Prediction:
    """Roll the decoder ``t_pred`` steps.

    The hidden state starts from a linear projection of ``[f, u]``; each step
    consumes the previous displacement (the last observed one at step 1) and
    emits the next. Displacements are in scaled units internally and divided by
    ``disp_scale`` before accumulating from ``last_obs``. ``teacher`` (N, t_pred, 2)
    feeds ground-truth displacements instead of the model's own.
    """
    if t_pred < 1:
        raise ValueError("t_pred must be >= 1")
    n = f.shape[0]
    if u.shape[0] != n or last_obs.shape != (n, 2) or last_disp.shape != (n, 2):
        raise ShapeError(
            f"decode: f {f.shape}, u {u.shape}, last_obs {last_obs.shape}, last_disp {last_disp.shape}"
        )
    h = linear(ops.concat([f, u], axis=1), params, "dec.proj")
    c = Tensor(np.zeros(h.shape))
    x = Tensor(np.asarray(last_disp, dtype=np.float64) * disp_scale)
    pos = Tensor(np.asarray(last_obs, dtype=np.float64))
    w_x, w_h, b = params["dec.lstm.w_x"], params["dec.lstm.w_h"], params["dec.lstm.b"]
    outputs = []
    for t in range(t_pred):
        h, c = lstm_cell(x, h, c, w_x, w_h, b)
        step = linear(h, params, "dec.head")
        pos = ops.add(pos, ops.scale(step, 1.0 / disp_scale))
        outputs.append(pos)
        x = Tensor(teacher[:, t] * disp_scale) if teacher is not None else step
    return Prediction(ops.concat(outputs, axis=1), t_pred)


def time_weights(t_pred: int, gamma: float) -> np.ndarray:
    """``exp(t / gamma)`` for t = 1..t_pred; all ones when gamma is infinite."""
    if math.isinf(gamma):
        return np.ones(t_pred)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive or inf, got {gamma}")
    return np.exp(np.arange(1, t_pred + 1) / gamma)


def exp_l2_loss(
    pred: Prediction,
    truth: np.ndarray,
    gamma: float = 20.0,
    row_weights: Optional[np.ndarray] = None,
) -> Tensor:
    """Squared error weighted by ``exp(t / gamma)``, averaged over pedestrians and steps.

    ``row_weights`` replaces the per-pedestrian 1/N factor (batched windows).
    """
    truth = np.asarray(truth, dtype=np.float64)
    n, t_pred = truth.shape[0], pred.t_pred
    if truth.shape != (n, t_pred, 2) or pred.coords.shape != (n, 2 * t_pred):
        raise ShapeError(f"exp_l2_loss: prediction {pred.coords.shape} vs truth {truth.shape}")
    w = np.full(n, 1.0 / n) if row_weights is None else np.asarray(row_weights, dtype=np.float64)
    coef = np.repeat(time_weights(t_pred, gamma), 2)[None, :] * (w[:, None] / t_pred)
    diff = ops.sub(pred.coords, Tensor(truth.reshape(n, -1)))
    return ops.sum(ops.mul(ops.mul(diff, diff), Tensor(coef)))
