"""Full network: feature extraction, bilateral cross modulation, aggregation.

Parameters live in one flat, insertion-ordered ``dict`` from stable dotted
names (``extract.pan.conv0.kernel``, ``modulate.ms.block0.attn.w_q1``, ...)
to :class:`Tensor` leaves. Every forward function takes that dict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .attention import AttentionConfig, CmabWeights, cmab_forward
from .rng import Rng
from .tensor import DimensionError, Tensor

VARIANTS = ("full", "v1", "v2", "v3")

# which streams receive cross modulation: (ms stream modulated by PAN, PAN stream modulated by MS)
_MODULATED = {
    "full": (True, True),
    "v1": (False, False),
    "v2": (True, False),
    "v3": (False, True),
}

Params = dict[str, Tensor]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    bands: int = 4
    channels: int = 32
    heads: int = 4
    cmab_blocks: int = 2
    resnet_blocks_extract: int = 4
    resnet_blocks_aggregate: int = 4
    ratio: int = 4
    variant: str = "full"
    ffn_ratio: int = 2

    def __post_init__(self):
        if self.heads < 1 or self.channels % self.heads:
            raise ConfigurationError(f"channels={self.channels} not divisible by heads={self.heads}")
        if self.ratio < 2:
            raise ConfigurationError(f"ratio must be >= 2, got {self.ratio}")
        if self.cmab_blocks < 1:
            raise ConfigurationError("cmab_blocks must be >= 1")
        if self.bands < 1:
            raise ConfigurationError("bands must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.channels, self.heads, ffn_ratio=self.ffn_ratio)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})


def toy_config(**overrides) -> ModelConfig:
    """Smallest configuration used for gradient checks and quick tests."""
    base = dict(bands=4, channels=8, heads=2, cmab_blocks=1,
                resnet_blocks_extract=1, resnet_blocks_aggregate=1, ratio=4)
    base.update(overrides)
    return ModelConfig(**base)


# parameter construction


def _conv(params: Params, rng: Rng | None, name: str, cin: int, cout: int, zero: bool = False) -> None:
    fan_in = 9 * cin
    if rng is None or zero:
        kernel = np.zeros((3, 3, cin, cout))
    else:
        bound = 1.0 / math.sqrt(fan_in)
        kernel = rng.uniform((3, 3, cin, cout), -bound, bound)
    for suffix, value in (("kernel", kernel), ("bias", np.zeros(cout))):
        full = f"{name}.{suffix}"
        params[full] = Tensor(value, requires_grad=True, name=full)


def _resnet(params: Params, rng: Rng | None, name: str, channels: int) -> None:
    _conv(params, rng, f"{name}.conv1", channels, channels)
    _conv(params, rng, f"{name}.conv2", channels, channels)


def init_params(config: ModelConfig, seed: int = 0) -> Params:
    """Fan-scaled uniform init; biases, the positional kernel and the final conv start at zero."""
    rng = Rng(seed).child(0)
    return _build(config, rng)


def _build(config: ModelConfig, rng: Rng | None) -> Params:
    c, ch = config.bands, config.channels
    params: Params = {}
    for stream, cin in (("pan", 1), ("ms", c)):
        _conv(params, rng, f"extract.{stream}.conv0", cin, ch)
        for i in range(config.resnet_blocks_extract):
            _resnet(params, rng, f"extract.{stream}.res{i}", ch)
    for stream in ("ms", "pan"):
        for b in range(config.cmab_blocks):
            if rng is None:
                weights = CmabWeights.init(config.attention, Rng(0))
            else:
                weights = CmabWeights.init(config.attention, rng)
            weights.bind(params, f"modulate.{stream}.block{b}")
    _conv(params, rng, "aggregate.conv0", 2 * ch, ch)
    for i in range(config.resnet_blocks_aggregate):
        _resnet(params, rng, f"aggregate.res{i}", ch)
    _conv(params, rng, "aggregate.out", ch, c, zero=True)
    return params


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {name: t.shape for name, t in _build(config, None).items()}


def param_count(config: ModelConfig) -> int:
    return int(sum(math.prod(s) for s in param_shapes(config).values()))


# forward pieces


def conv_block(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    return T.add(T.conv2d(x, params[f"{name}.kernel"], "same"), params[f"{name}.bias"])


def resnet_block(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    """``x + conv2(silu(conv1(x)))``."""
    h = T.silu(conv_block(x, params, f"{name}.conv1"))
    return T.add(x, conv_block(h, params, f"{name}.conv2"))


def _extract(x: Tensor, params, stream: str, blocks: int) -> Tensor:
    f = conv_block(x, params, f"extract.{stream}.conv0")
    for i in range(blocks):
        f = resnet_block(f, params, f"extract.{stream}.res{i}")
    return f


def extract_features(pan, lrms_up, params: Mapping[str, Tensor], config: ModelConfig) -> tuple[Tensor, Tensor]:
    pan, lrms_up = T.as_tensor(pan), T.as_tensor(lrms_up)
    if pan.data.ndim != 3 or pan.shape[2] != 1:
        raise ConfigurationError(f"PAN must be H x W x 1, got {pan.shape}")
    if lrms_up.data.ndim != 3 or lrms_up.shape[2] != config.bands:
        raise ConfigurationError(f"MS input has shape {lrms_up.shape}, config expects {config.bands} bands")
    if pan.shape[:2] != lrms_up.shape[:2]:
        raise DimensionError(f"PAN {pan.shape} and upsampled MS {lrms_up.shape} differ spatially")
    n = config.resnet_blocks_extract
    return _extract(pan, params, "pan", n), _extract(lrms_up, params, "ms", n)


def cross_modulate(
    f_pan: Tensor, f_ms: Tensor, params: Mapping[str, Tensor], config: ModelConfig,
    variant: str | None = None, force_ones: tuple[str, ...] = (),
) -> tuple[Tensor, Tensor]:
    """Run ``cmab_blocks`` blocks per stream; both streams read the previous block's features.

    ``force_ones`` names streams (``"ms"``, ``"pan"``) whose modulator is
    replaced by a literal all-ones tensor, used to audit the variants.
    """
    variant = variant or config.variant
    if variant not in _MODULATED:
        raise ConfigurationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if f_pan.shape != f_ms.shape:
        raise DimensionError(f"PAN features {f_pan.shape} vs MS features {f_ms.shape}")
    mod_ms, mod_pan = _MODULATED[variant]
    h, w, c = f_ms.shape
    ms = T.reshape(f_ms, (h * w, c))
    pan = T.reshape(f_pan, (h * w, c))
    for b in range(config.cmab_blocks):
        w_ms = CmabWeights.from_params(params, f"modulate.ms.block{b}", config.heads)
        w_pan = CmabWeights.from_params(params, f"modulate.pan.block{b}", config.heads)
        new_ms = cmab_forward(ms, pan if mod_ms else None, w_ms, h, w, ones_modulator="ms" in force_ones)
        new_pan = cmab_forward(pan, ms if mod_pan else None, w_pan, h, w, ones_modulator="pan" in force_ones)
        ms, pan = new_ms, new_pan
    return T.reshape(pan, (h, w, c)), T.reshape(ms, (h, w, c))


def aggregate(g_pan: Tensor, g_ms: Tensor, params: Mapping[str, Tensor], config: ModelConfig) -> Tensor:
    if g_pan.shape != g_ms.shape:
        raise DimensionError(f"{g_pan.shape} vs {g_ms.shape}")
    x = conv_block(T.concat([g_pan, g_ms], axis=2), params, "aggregate.conv0")
    for i in range(config.resnet_blocks_aggregate):
        x = resnet_block(x, params, f"aggregate.res{i}")
    return conv_block(x, params, "aggregate.out")


def upsample(lrms, ratio: int) -> Tensor:
    return T.resample(T.as_tensor(lrms), ratio, "bilinear")


def forward(
    pan, lrms, params: Mapping[str, Tensor], config: ModelConfig,
    variant: str | None = None, force_ones: tuple[str, ...] = (),
) -> Tensor:
    """``hrms = aggregate(cross_modulate(extract(pan, up(lrms)))) + up(lrms)``."""
    pan, lrms = T.as_tensor(pan), T.as_tensor(lrms)
    r = config.ratio
    h, w = pan.shape[:2]
    if h % r or w % r:
        raise ValueError(f"PAN extent {h}x{w} not divisible by ratio {r}")
    if lrms.shape[:2] != (h // r, w // r):
        raise ValueError(f"LRMS {lrms.shape} inconsistent with PAN {pan.shape} at ratio {r}")
    up = upsample(lrms, r)
    f_pan, f_ms = extract_features(pan, up, params, config)
    g_pan, g_ms = cross_modulate(f_pan, f_ms, params, config, variant, force_ones)
    return T.add(aggregate(g_pan, g_ms, params, config), up)


def predict(pan: np.ndarray, lrms: np.ndarray, params, config: ModelConfig) -> np.ndarray:
    with T.no_grad():
        return forward(pan, lrms, params, config).data
