"""Cross-modulation channel attention, the gated feed-forward net and the block.

Token maps are ``HW x C``. Attention is taken across channels: within a
head the score matrix is ``d_k x d_k``, never ``HW x HW``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator, Mapping

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import DimensionError, Tensor

LN_EPS = 1e-6


@dataclass(frozen=True)
class AttentionConfig:
    channels: int
    heads: int
    alpha_init: float | None = None  # defaults to sqrt(d_k)
    ffn_ratio: int = 2

    def __post_init__(self):
        if self.heads < 1 or self.channels % self.heads:
            raise ValueError(f"{self.channels} channels cannot be split into {self.heads} heads")
        if self.ffn_ratio < 1:
            raise ValueError("ffn_ratio must be >= 1")

    @property
    def d_k(self) -> int:
        return self.channels // self.heads


def _uniform(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(shape, -bound, bound)


class _Weights:
    """Named view over parameter tensors; names are relative to a prefix."""

    def named(self) -> Iterator[tuple[str, Tensor]]:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Tensor):
                yield f.name, value
            elif isinstance(value, _Weights):
                for sub, t in value.named():
                    yield f"{f.name}.{sub}", t
            else:
                for i, t in enumerate(value):
                    yield f"{f.name}{i}", t

    def bind(self, params: dict[str, Tensor], prefix: str) -> None:
        """Register every tensor in ``params`` under ``prefix`` and name it."""
        for name, t in self.named():
            full = f"{prefix}.{name}"
            t.name = full
            t.requires_grad = True
            params[full] = t


@dataclass
class AttentionWeights(_Weights):
    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    log_alpha: list[Tensor]  # alpha_i = exp(log_alpha_i) stays positive
    w_fc: Tensor
    b_fc: Tensor
    pos_kernel: Tensor  # depthwise 3 x 3 x C, zero at init

    @classmethod
    def init(cls, config: AttentionConfig, rng: Rng) -> "AttentionWeights":
        d, k, c = config.d_k, config.heads, config.channels
        alpha = config.alpha_init if config.alpha_init is not None else math.sqrt(d)
        mats = [[Tensor(_uniform(rng, (d, d), d)) for _ in range(k)] for _ in range(3)]
        return cls(
            w_q=mats[0], w_k=mats[1], w_v=mats[2],
            log_alpha=[Tensor([math.log(alpha)]) for _ in range(k)],
            w_fc=Tensor(_uniform(rng, (c, c), c)),
            b_fc=Tensor(np.zeros(c)),
            pos_kernel=Tensor(np.zeros((3, 3, c))),
        )

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str, heads: int) -> "AttentionWeights":
        def per_head(key):
            return [params[f"{prefix}.{key}{i}"] for i in range(heads)]

        return cls(
            per_head("w_q"), per_head("w_k"), per_head("w_v"), per_head("log_alpha"),
            params[f"{prefix}.w_fc"], params[f"{prefix}.b_fc"], params[f"{prefix}.pos_kernel"],
        )

    @property
    def heads(self) -> int:
        return len(self.w_q)


@dataclass
class DffnWeights(_Weights):
    w_g: Tensor
    b_g: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, channels: int, ratio: int, rng: Rng) -> "DffnWeights":
        hidden = ratio * channels
        return cls(
            Tensor(_uniform(rng, (channels, hidden), channels)), Tensor(np.zeros(hidden)),
            Tensor(_uniform(rng, (channels, hidden), channels)), Tensor(np.zeros(hidden)),
            Tensor(_uniform(rng, (hidden, channels), hidden)), Tensor(np.zeros(channels)),
        )

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> "DffnWeights":
        return cls(*(params[f"{prefix}.{f.name}"] for f in fields(cls)))


@dataclass
class NormWeights(_Weights):
    gain: Tensor
    bias: Tensor

    @classmethod
    def init(cls, channels: int) -> "NormWeights":
        return cls(Tensor(np.ones(channels)), Tensor(np.zeros(channels)))

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str) -> "NormWeights":
        return cls(params[f"{prefix}.gain"], params[f"{prefix}.bias"])

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, LN_EPS)


@dataclass
class CmabWeights(_Weights):
    norm1: NormWeights
    norm1_mod: NormWeights
    norm2: NormWeights
    attn: AttentionWeights
    ffn: DffnWeights

    @classmethod
    def init(cls, config: AttentionConfig, rng: Rng) -> "CmabWeights":
        c = config.channels
        return cls(
            NormWeights.init(c), NormWeights.init(c), NormWeights.init(c),
            AttentionWeights.init(config, rng), DffnWeights.init(c, config.ffn_ratio, rng),
        )

    @classmethod
    def from_params(cls, params: Mapping[str, Tensor], prefix: str, heads: int) -> "CmabWeights":
        return cls(
            NormWeights.from_params(params, f"{prefix}.norm1"),
            NormWeights.from_params(params, f"{prefix}.norm1_mod"),
            NormWeights.from_params(params, f"{prefix}.norm2"),
            AttentionWeights.from_params(params, f"{prefix}.attn", heads),
            DffnWeights.from_params(params, f"{prefix}.ffn"),
        )


def split_heads(x: Tensor, k: int) -> list[Tensor]:
    """Contiguous, order-preserving channel slices; ``concat`` inverts it."""
    c = x.shape[1]
    if k < 1 or c % k:
        raise ValueError(f"{c} channels cannot be split into {k} heads")
    d = c // k
    return [T.take(x, (slice(None), slice(i * d, (i + 1) * d))) for i in range(k)]


def project_qkv(x_i: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    return T.matmul(x_i, w_q), T.matmul(x_i, w_k), T.matmul(x_i, w_v)


def modulate_values(m_i: Tensor, v_i: Tensor) -> Tensor:
    """Hadamard product of the modulator head with the carrier's values."""
    if m_i.shape != v_i.shape:
        raise DimensionError(f"modulator {m_i.shape} vs values {v_i.shape}")
    return T.mul(m_i, v_i)


def modulation_attention(q: Tensor, k: Tensor, v_mod: Tensor, log_alpha: Tensor) -> Tensor:
    """``v_mod @ softmax_columns(k.T @ q / alpha)`` with ``alpha = exp(log_alpha)``."""
    scores = T.mul(T.matmul(T.transpose(k), q), T.exp(T.scale(log_alpha, -1.0)))
    return T.matmul(v_mod, T.softmax_columns(scores))


def cm_msa(carrier: Tensor, modulator: Tensor | None, weights: AttentionWeights, h: int, w: int) -> Tensor:
    """Multi-head cross-modulation attention.

    ``modulator=None`` runs plain channel attention (values left unmodulated).
    """
    n, c = carrier.shape
    if n != h * w:
        raise DimensionError(f"{n} tokens do not form a {h}x{w} map")
    if modulator is not None and modulator.shape != carrier.shape:
        raise DimensionError(f"carrier {carrier.shape} vs modulator {modulator.shape}")
    k = weights.heads
    xs = split_heads(carrier, k)
    ms = split_heads(modulator, k) if modulator is not None else [None] * k
    outs, values = [], []
    for i in range(k):
        q, key, v = project_qkv(xs[i], weights.w_q[i], weights.w_k[i], weights.w_v[i])
        values.append(v)
        v_mod = v if ms[i] is None else modulate_values(ms[i], v)
        outs.append(modulation_attention(q, key, v_mod, weights.log_alpha[i]))
    mixed = T.add(T.matmul(T.concat(outs, axis=1), weights.w_fc), weights.b_fc)
    value_map = T.reshape(T.concat(values, axis=1), (h, w, c))
    pos = T.conv2d(value_map, weights.pos_kernel, padding="same", depthwise=True)
    return T.add(mixed, T.reshape(pos, (n, c)))


def dffn(x: Tensor, weights: DffnWeights) -> Tensor:
    """Two-branch feed-forward: SiLU gate times a linear value branch."""
    gate = T.silu(T.add(T.matmul(x, weights.w_g), weights.b_g))
    value = T.add(T.matmul(x, weights.w_v), weights.b_v)
    return T.add(T.matmul(T.mul(gate, value), weights.w_o), weights.b_o)


def cmab_forward(
    x: Tensor, m: Tensor | None, weights: CmabWeights, h: int, w: int, *, ones_modulator: bool = False
) -> Tensor:
    """Pre-norm block: ``y = x + cm_msa(LN1(x), LN1m(m))``, ``out = y + dffn(LN2(y))``.

    ``m=None`` disables modulation. ``ones_modulator`` instead feeds a literal
    all-ones tensor as the (already normalized) modulator; the two agree
    bit for bit because ``v * 1.0 == v``.
    """
    if m is not None and m.shape[0] != x.shape[0]:
        raise DimensionError(f"carrier has {x.shape[0]} tokens, modulator {m.shape[0]}")
    if ones_modulator:
        mod = Tensor(np.ones(x.shape))
    else:
        mod = weights.norm1_mod(m) if m is not None else None
    y = T.add(x, cm_msa(weights.norm1(x), mod, weights.attn, h, w))
    return T.add(y, dffn(weights.norm2(y), weights.ffn))
