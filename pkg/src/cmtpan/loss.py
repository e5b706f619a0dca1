"""Hybrid spatial + Fourier + wavelet L1 objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor, as_tensor
from .transforms import dft2, dwt2_haar


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.7  # Fourier term
    lambda2: float = 0.2  # wavelet term
    levels: int = 2

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.levels < 1:
            raise ValueError("wavelet levels must be >= 1")


@dataclass
class LossBreakdown:
    spa: Tensor
    fourier: Tensor
    wavelet: Tensor
    total: Tensor

    @classmethod
    def combine(cls, spa, fourier, wavelet, weights: LossWeights = LossWeights()) -> "LossBreakdown":
        spa, fourier, wavelet = as_tensor(spa), as_tensor(fourier), as_tensor(wavelet)
        total = spa + T.scale(fourier, weights.lambda1) + T.scale(wavelet, weights.lambda2)
        return cls(spa, fourier, wavelet, total)

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in ("spa", "fourier", "wavelet", "total")}


def _pairs(pi, gt):
    if isinstance(pi, (list, tuple)):
        if len(pi) != len(gt) or not pi:
            raise DimensionError(f"batch sizes differ: {len(pi)} vs {len(gt)}")
        pairs = [(as_tensor(p), as_tensor(g)) for p, g in zip(pi, gt)]
    else:
        pairs = [(as_tensor(pi), as_tensor(gt))]
    for p, g in pairs:
        if p.shape != g.shape:
            raise DimensionError(f"prediction {p.shape} and target {g.shape} differ")
    return pairs


def _batch_mean(terms: Sequence[Tensor]) -> Tensor:
    return T.scale(T.stack_sum(terms), 1.0 / len(terms))


def spatial_l1(pi, gt) -> Tensor:
    """Mean absolute difference, per sample then over the batch."""
    return _batch_mean([T.mean(T.abs(p - g)) for p, g in _pairs(pi, gt)])


def _fourier_one(diff: Tensor) -> Tensor:
    f = dft2(diff)
    return T.mean(T.modulus(f.real, f.imag))


def fourier_loss(pi, gt) -> Tensor:
    """Mean complex modulus of the DFT difference over bins and bands.

    The DFT is linear, so transforming ``pi - gt`` equals differencing the
    two transforms.
    """
    return _batch_mean([_fourier_one(p - g) for p, g in _pairs(pi, gt)])


def _wavelet_one(diff: Tensor, levels: int) -> Tensor:
    pyramid = dwt2_haar(diff, levels)
    return T.stack_sum(T.mean(T.abs(band)) for _, band in pyramid.subbands())


def wavelet_loss(pi, gt, levels: int = 2) -> Tensor:
    """Sum over every detail subband and the coarsest LL of the mean |difference|."""
    return _batch_mean([_wavelet_one(p - g, levels) for p, g in _pairs(pi, gt)])


def total_loss(pi, gt, weights: LossWeights = LossWeights()) -> LossBreakdown:
    pairs = _pairs(pi, gt)
    diffs = [p - g for p, g in pairs]
    spa = _batch_mean([T.mean(T.abs(d)) for d in diffs])
    fourier = _batch_mean([_fourier_one(d) for d in diffs])
    wavelet = _batch_mean([_wavelet_one(d, weights.levels) for d in diffs])
    return LossBreakdown.combine(spa, fourier, wavelet, weights)


def loss_values(pi: np.ndarray, gt: np.ndarray, weights: LossWeights = LossWeights()) -> dict[str, float]:
    with T.no_grad():
        return total_loss(pi, gt, weights).values()
