"""The segmentation network: dilated-conv encoder, framing, recurrent decoder.

The encoder maps the three filtered channels to a feature signal at full
temporal resolution through four residual blocks of dilated convolutions.
The feature signal is split into non-overlapping 20-sample frames; the
decoder reduces each frame to a feature vector with strided 2-D
convolutions, runs a bidirectional LSTM across frames, and emits one
4-state logit row per frame. Softmax is left to consumers (loss, decoding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import LstmParams, Tensor
from .errors import ConfigError

MAX_PARAMETERS = 350_000


@dataclass
class ModelConfig:
    in_channels: int = 3
    encoder_channels: tuple = (16, 16, 32, 32)
    dilations: tuple = (1, 2, 4, 8)
    kernel_size: int = 3
    frame_len: int = 20
    decoder_channels: tuple = (32, 64)
    lstm_hidden: int = 64
    n_states: int = 4
    norm_eps: float = 1e-5

    def __post_init__(self):
        self.encoder_channels = tuple(self.encoder_channels)
        self.dilations = tuple(self.dilations)
        self.decoder_channels = tuple(self.decoder_channels)
        if len(self.encoder_channels) != len(self.dilations):
            raise ConfigError("encoder_channels and dilations must have equal length")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigError("kernel_size must be odd and positive")
        if self.frame_len < 1:
            raise ConfigError("frame_len must be positive")
        if min(self.encoder_channels + self.decoder_channels, default=1) < 1:
            raise ConfigError("channel counts must be positive")
        if self.lstm_hidden < 1 or self.n_states < 2:
            raise ConfigError("lstm_hidden must be >= 1 and n_states >= 2")


def init_params(cfg: ModelConfig, seed: int = 0) -> dict:
    """Fresh parameter dict, deterministically drawn from the seed.

    Convolutions and the dense head use fan-in-scaled uniform init; the
    recurrent matrices use uniform(-0.08, 0.08) and the forget-gate bias
    starts at 1.
    """
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    params = {}
    ks = cfg.kernel_size
    c_prev = cfg.in_channels
    for i, c_out in enumerate(cfg.encoder_channels):
        params[f"enc{i}.conv1.w"] = uniform((c_out, c_prev, ks), c_prev * ks)
        params[f"enc{i}.conv1.b"] = zeros(c_out)
        params[f"enc{i}.conv2.w"] = uniform((c_out, c_out, ks), c_out * ks)
        params[f"enc{i}.conv2.b"] = zeros(c_out)
        if c_out != c_prev:
            params[f"enc{i}.skip.w"] = uniform((c_out, c_prev, 1), c_prev)
            params[f"enc{i}.skip.b"] = zeros(c_out)
        c_prev = c_out
    for j, c_out in enumerate(cfg.decoder_channels):
        params[f"dec{j}.conv.w"] = uniform((c_out, c_prev, 3, 3), c_prev * 9)
        params[f"dec{j}.conv.b"] = zeros(c_out)
        c_prev = c_out
    hidden = cfg.lstm_hidden
    for direction in ("fw", "bw"):
        params[f"lstm.{direction}.wx"] = uniform((c_prev, 4 * hidden), c_prev)
        params[f"lstm.{direction}.wh"] = Tensor(
            rng.uniform(-0.08, 0.08, size=(hidden, 4 * hidden)), requires_grad=True
        )
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        params[f"lstm.{direction}.bias"] = Tensor(bias, requires_grad=True)
    params["head.w"] = uniform((2 * hidden, cfg.n_states), 2 * hidden)
    params["head.b"] = zeros(cfg.n_states)
    return params


def parameter_count(params: dict) -> int:
    return int(sum(p.data.size for p in params.values()))


def encode(params: dict, cfg: ModelConfig, x: Tensor) -> Tensor:
    """Residual dilated-convolution stack: [N, in, L] -> [N, C_last, L]."""
    h = x
    c_prev = cfg.in_channels
    for i, (c_out, dilation) in enumerate(zip(cfg.encoder_channels, cfg.dilations)):
        y = ad.instance_norm(h, cfg.norm_eps)
        y = ad.relu(y)
        y = ad.conv1d_dilated(y, params[f"enc{i}.conv1.w"], params[f"enc{i}.conv1.b"], dilation)
        y = ad.instance_norm(y, cfg.norm_eps)
        y = ad.relu(y)
        y = ad.conv1d_dilated(y, params[f"enc{i}.conv2.w"], params[f"enc{i}.conv2.b"], dilation)
        if c_out != c_prev:
            h = ad.conv1d_dilated(h, params[f"enc{i}.skip.w"], params[f"enc{i}.skip.b"], 1)
        h = ad.residual_add(h, y)
        c_prev = c_out
    return h


def frame(x: Tensor, frame_len: int) -> Tensor:
    """Split [N, C, L] into non-overlapping frames: [N, C, L/frame_len, frame_len]."""
    n, c, length = x.data.shape
    if length % frame_len != 0:
        raise ConfigError(f"signal length {length} is not a multiple of frame length {frame_len}")
    return ad.reshape(x, (n, c, length // frame_len, frame_len))


def decode(params: dict, cfg: ModelConfig, framed: Tensor) -> Tensor:
    """Frame features to per-frame state logits: [N, C, F, tau] -> [N, F, states]."""
    h = framed
    for j in range(len(cfg.decoder_channels)):
        h = ad.conv2d(h, params[f"dec{j}.conv.w"], params[f"dec{j}.conv.b"], stride_w=2)
        h = ad.relu(h)
    h = ad.mean_last(h)  # [N, C, F]
    h = ad.permute(h, (0, 2, 1))  # [N, F, C]
    fwd = LstmParams(params["lstm.fw.wx"], params["lstm.fw.wh"], params["lstm.fw.bias"])
    bwd = LstmParams(params["lstm.bw.wx"], params["lstm.bw.wh"], params["lstm.bw.bias"])
    h = ad.bilstm(h, fwd, bwd)
    return ad.linear(h, params["head.w"], params["head.b"])


def forward(params: dict, cfg: ModelConfig, x: Tensor) -> Tensor:
    """Channels to per-frame logits: [N, in, L] -> [N, L/frame_len, states]."""
    return decode(params, cfg, frame(encode(params, cfg, x), cfg.frame_len))
