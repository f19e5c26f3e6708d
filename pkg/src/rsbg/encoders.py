"""Individual representation: trajectory encoder and optional patch-context encoder."""

from __future__ import annotations

import numpy as np

from .numerics import ParamStore, Tensor, ops, run_lstm
from .numerics.nn import linear

CONV1_CHANNELS = 4
CONV2_CHANNELS = 8


def init_trajectory_encoder(params: ParamStore, d_f: int, bidirectional: bool = True, d_in: int = 2) -> None:
    if bidirectional:
        params.lstm("enc.fwd", d_in, d_f // 2)
        params.lstm("enc.bwd", d_in, d_f // 2)
    else:
        params.lstm("enc.fwd", d_in, d_f)


def _steps(displacements) -> list[Tensor]:
    d = displacements.data if isinstance(displacements, Tensor) else np.asarray(displacements, dtype=np.float64)
    if d.ndim != 3 or d.shape[1] < 1:
        raise ValueError(f"expected (N, T_obs, d) displacements, got shape {d.shape}")
    return [Tensor(d[:, t]) for t in range(d.shape[1])]


def encode_trajectory_bilstm(displacements, params: ParamStore) -> Tensor:
    """(N, T_obs, 2) displacements -> (N, d_f) features.

    With both ``enc.fwd`` and ``enc.bwd`` present the output is the forward
    final hidden state followed by the backward one; otherwise it is the final
    hidden state of the single forward LSTM.
    """
    xs = _steps(displacements)
    h_fwd, _ = run_lstm(xs, params, "enc.fwd")
    if "enc.bwd.w_x" not in params:
        return h_fwd
    h_bwd, _ = run_lstm(xs[::-1], params, "enc.bwd")
    return ops.concat([h_fwd, h_bwd], axis=1)


def init_context_encoder(params: ParamStore, d_ctx: int, patch_size: int, channels: int = 1) -> None:
    if patch_size % 4:
        raise ValueError("context patch size must be divisible by 4")
    params.uniform("ctx.conv1.w", (CONV1_CHANNELS, channels, 3, 3), channels * 9)
    params.uniform("ctx.conv1.b", (CONV1_CHANNELS,), channels * 9)
    params.uniform("ctx.conv2.w", (CONV2_CHANNELS, CONV1_CHANNELS, 3, 3), CONV1_CHANNELS * 9)
    params.uniform("ctx.conv2.b", (CONV2_CHANNELS,), CONV1_CHANNELS * 9)
    flat = CONV2_CHANNELS * (patch_size // 4) ** 2
    params.linear("ctx.fc", flat, d_ctx)


def encode_context(
    patches,
    params: ParamStore,
    enabled: bool = True,
    d_ctx: int = 16,
    n: int | None = None,
) -> Tensor:
    """Per-pedestrian context vector from image patches.

    ``patches`` is (N, T_obs, C*H*W) with square H = W. Each patch goes through
    conv-relu-pool twice and a linear layer; the T_obs patch features are
    mean-pooled. When ``enabled`` is false the result is an (N, d_ctx) zero
    tensor and ``patches`` may be None (pass ``n`` then).
    """
    if not enabled:
        rows = n if n is not None else np.shape(patches)[0]
        return Tensor(np.zeros((rows, d_ctx)))
    if patches is None:
        raise ValueError("context encoder is enabled but no patches were supplied")
    p = np.asarray(patches.data if isinstance(patches, Tensor) else patches, dtype=np.float64)
    n_ped, t_obs, flat = p.shape
    channels = params["ctx.conv1.w"].shape[1]
    side = int(round((flat / channels) ** 0.5))
    if channels * side * side != flat:
        raise ValueError(f"patch length {flat} is not {channels} x H x H")
    x = patches if isinstance(patches, Tensor) else Tensor(p)
    x = ops.reshape(x, (n_ped * t_obs, channels, side, side))
    x = ops.avg_pool2d(ops.relu(ops.conv2d(x, params["ctx.conv1.w"], params["ctx.conv1.b"])))
    x = ops.avg_pool2d(ops.relu(ops.conv2d(x, params["ctx.conv2.w"], params["ctx.conv2.b"])))
    x = ops.reshape(x, (n_ped * t_obs, -1))
    x = linear(x, params, "ctx.fc")
    # rows are ordered (ped, t); pool over t
    x = ops.reshape(x, (n_ped, t_obs, -1))
    return ops.mean_axis0(ops.swapaxes(x, 0, 1))
