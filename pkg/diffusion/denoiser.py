"""
Noise-prediction network: a two-level convolutional encoder-decoder.

Input is the mutual-mixed noisy image concatenated with the history
condition (3 + 3 channels). Timestep and category embeddings are summed and
added to every block, broadcast over space. Resolution goes H -> H/2 -> H/4
and back, with skip concatenations at H/2 and H.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from difashion.exceptions import ConfigError, ContractError
from engine.tensor import (
    Tensor,
    add,
    add_spatial,
    avgpool2d,
    channel_concat,
    conv2d,
    embed_lookup,
    groupnorm,
    linear,
    nearest_upsample2x,
    reshape,
    scale,
    silu,
)

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
HISTORY_CHANNELS = 3


@dataclass(frozen=True)
class DenoiserConfig:
    base_width: int = 32
    groups: int = 8
    time_dim: int = 64
    num_categories: int = 4

    @property
    def in_channels(self):
        return IMAGE_CHANNELS + HISTORY_CHANNELS

    def block_channels(self):
        """(name, in_channels, out_channels) of every block, in forward order."""
        width = self.base_width
        return (
            ("down1", width, width),
            ("down2", width, 2 * width),
            ("mid", 2 * width, 2 * width),
            ("up2", 4 * width, 2 * width),
            ("up1", 3 * width, width),
        )

    def clean(self):
        if self.base_width < 1 or self.base_width % self.groups:
            raise ConfigError(
                {"base_width": f"base width {self.base_width} must be a positive "
                 f"multiple of the group count {self.groups}"}
            )
        if self.time_dim < 2 or self.time_dim % 2:
            raise ConfigError({"time_dim": f"time_dim must be even, got {self.time_dim}"})
        if self.num_categories < 1:
            raise ConfigError({"num_categories": "At least one category is required."})

    def to_dict(self):
        return asdict(self)


class DenoiserParams:
    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def null_category(self):
        return self.config.num_categories

    def named_tensors(self):
        return dict(self.tensors)

    def parameter_count(self):
        return int(sum(tensor.size for tensor in self.tensors.values()))


def _he_normal(rng, shape, fan_in, gain=1.0):
    return rng.normal(shape) * gain * np.sqrt(2.0 / fan_in)


def init_denoiser(config, rng):
    config.clean()
    dim = config.time_dim
    width = config.base_width
    arrays = {}

    conv_in = _he_normal(rng, (width, config.in_channels, 3, 3), config.in_channels * 9)
    # history channels start disconnected
    conv_in[:, IMAGE_CHANNELS:] = 0.0
    arrays["conv_in.weight"] = conv_in
    arrays["conv_in.bias"] = np.zeros(width)

    arrays["time_mlp.0.weight"] = _he_normal(rng, (dim, dim), dim)
    arrays["time_mlp.0.bias"] = np.zeros(dim)
    arrays["time_mlp.1.weight"] = _he_normal(rng, (dim, dim), dim, gain=0.5)
    arrays["time_mlp.1.bias"] = np.zeros(dim)

    table = rng.normal((config.num_categories + 1, dim)) * 0.5
    table[config.num_categories] = 0.0
    arrays["category_embedding"] = table

    for name, c_in, c_out in config.block_channels():
        arrays[f"{name}.conv1.weight"] = _he_normal(rng, (c_out, c_in, 3, 3), c_in * 9)
        arrays[f"{name}.conv1.bias"] = np.zeros(c_out)
        arrays[f"{name}.norm1.gamma"] = np.ones(c_out)
        arrays[f"{name}.norm1.beta"] = np.zeros(c_out)
        arrays[f"{name}.emb.weight"] = _he_normal(rng, (c_out, dim), dim, gain=0.5)
        arrays[f"{name}.emb.bias"] = np.zeros(c_out)
        arrays[f"{name}.conv2.weight"] = _he_normal(rng, (c_out, c_out, 3, 3), c_out * 9)
        arrays[f"{name}.conv2.bias"] = np.zeros(c_out)
        arrays[f"{name}.norm2.gamma"] = np.ones(c_out)
        arrays[f"{name}.norm2.beta"] = np.zeros(c_out)

    arrays["conv_out.weight"] = _he_normal(
        rng, (IMAGE_CHANNELS, width, 3, 3), width * 9, gain=0.1
    )
    arrays["conv_out.bias"] = np.zeros(IMAGE_CHANNELS)

    params = DenoiserParams(
        config,
        {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()},
    )
    logger.debug("initialized denoiser with %d parameters", params.parameter_count())
    return params


def timestep_embedding(t, dim):
    """
    Sinusoidal embedding of timesteps ``t`` (scalar or [N]) into [N, dim]:
    the first half sines, the second half cosines, frequencies spaced
    geometrically from 1 down to 1/10000.
    """
    if dim < 2 or dim % 2:
        raise ConfigError({"time_dim": f"Timestep embedding needs an even dim, got {dim}"})
    steps = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(steps < 0):
        raise ContractError(f"Timesteps must be non-negative, got {steps.min()}")
    half = dim // 2
    frequencies = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = steps[:, None] * frequencies[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def embed_conditions(params, t, category_ids):
    """Timestep MLP output plus the category embedding, [N, time_dim]."""
    raw = Tensor(timestep_embedding(t, params.config.time_dim))
    hidden = silu(linear(raw, params["time_mlp.0.weight"], params["time_mlp.0.bias"]))
    time = linear(hidden, params["time_mlp.1.weight"], params["time_mlp.1.bias"])
    return add(time, embed_lookup(params["category_embedding"], category_ids))


def _block(params, name, x, emb):
    groups = params.config.groups
    h = conv2d(x, params[f"{name}.conv1.weight"], params[f"{name}.conv1.bias"], pad=1)
    h = silu(groupnorm(h, params[f"{name}.norm1.gamma"], params[f"{name}.norm1.beta"], groups))
    h = add_spatial(h, linear(silu(emb), params[f"{name}.emb.weight"], params[f"{name}.emb.bias"]))
    h = conv2d(h, params[f"{name}.conv2.weight"], params[f"{name}.conv2.bias"], pad=1)
    return silu(groupnorm(h, params[f"{name}.norm2.gamma"], params[f"{name}.norm2.beta"], groups))


def predict_noise(params, x_in, t, category_id, use_skips=True):
    """
    Predict the noise in ``x_in`` ([N, 6, H, W], or a single 6×H×W input)
    at timesteps ``t`` for categories ``category_id`` (null id allowed).
    """
    single = x_in.ndim == 3
    if single:
        x_in = reshape(x_in, (1,) + x_in.shape)
    if x_in.ndim != 4 or x_in.shape[1] != params.config.in_channels:
        raise ContractError(
            f"predict_noise expects [N, {params.config.in_channels}, H, W], got {x_in.shape}"
        )
    n, _, height, width = x_in.shape
    if height % 4 or width % 4:
        raise ContractError(f"predict_noise needs H and W divisible by 4, got {height}×{width}")
    steps = np.broadcast_to(np.atleast_1d(np.asarray(t, dtype=np.float64)), (n,))
    categories = np.broadcast_to(np.atleast_1d(np.asarray(category_id, dtype=np.int64)), (n,))
    if categories.min() < 0 or categories.max() > params.null_category:
        raise ContractError(f"Category ids must lie in [0, {params.null_category}]")

    emb = embed_conditions(params, steps, categories)
    h = conv2d(x_in, params["conv_in.weight"], params["conv_in.bias"], pad=1)
    skip1 = _block(params, "down1", h, emb)
    skip2 = _block(params, "down2", avgpool2d(skip1), emb)
    mid = _block(params, "mid", avgpool2d(skip2), emb)
    if not use_skips:
        skip1, skip2 = scale(skip1, 0.0), scale(skip2, 0.0)
    up = _block(params, "up2", channel_concat([nearest_upsample2x(mid), skip2]), emb)
    up = _block(params, "up1", channel_concat([nearest_upsample2x(up), skip1]), emb)
    out = conv2d(up, params["conv_out.weight"], params["conv_out.bias"], pad=1)
    if single:
        out = reshape(out, out.shape[1:])
    return out
