"""Adam training loop, evaluation and the finite-difference gradient audit."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, ProtocolError, SamplePair
from .loss import LossWeights, total_loss
from .metrics import FULL_METRICS, REDUCED_METRICS, MetricsReport, full_metrics, reduced_metrics
from .model import ModelConfig, Params, forward, init_params, toy_config, upsample
from .rng import Rng

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 4
    lr_period: int = 100
    seed: int = 0
    lambda1: float = 0.7
    lambda2: float = 0.2
    wavelet_levels: int = 2
    checkpoint_every: int = 0

    def __post_init__(self):
        for key in ("lr", "epochs", "batch_size", "lr_period"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.wavelet_levels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        keys = cls.__dataclass_fields__
        return cls(**{k: v for k, v in d.items() if k in keys})


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
        if g.shape != params[name].shape:
            raise TrainingError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        params[name].data = params[name].data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Initial rate halved every ``lr_period`` epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr * 0.5 ** (epoch // config.lr_period)


def batch_loss(params: Params, samples: Sequence[SamplePair], config: ModelConfig,
               weights: LossWeights, variant: str | None = None):
    preds = [forward(s.pan, s.lrms, params, config, variant) for s in samples]
    return total_loss(preds, [s.gt for s in samples], weights)


@dataclass
class TrainResult:
    params: Params
    history: list[dict[str, float]]
    step_losses: list[float]
    shuffle_digest: str


def train(dataset: Dataset | Sequence[SamplePair], model_config: ModelConfig, train_config: TrainConfig,
          out_dir: str | os.PathLike | None = None, params: Params | None = None) -> TrainResult:
    """Deterministic given ``train_config.seed``.

    The seed drives parameter init and an independent per-epoch shuffle
    stream; every variant trained with the same seed sees the same batches.
    """
    samples = list(dataset.samples if isinstance(dataset, Dataset) else dataset)
    if not samples:
        raise TrainingError("cannot train on an empty dataset")
    if any(not s.has_gt for s in samples):
        raise ProtocolError("training needs reduced-resolution pairs with ground truth")
    params = init_params(model_config, train_config.seed) if params is None else params
    weights = train_config.loss_weights
    shuffle_rng = Rng(train_config.seed).child(1)
    state = AdamState(lr=train_config.lr)
    digest = hashlib.sha256()
    history, step_losses = [], []
    for epoch in range(train_config.epochs):
        state.lr = lr_schedule(epoch, train_config)
        order = shuffle_rng.permutation(len(samples))
        digest.update(",".join(map(str, order)).encode() + b";")
        sums = dict.fromkeys(("spa", "fourier", "wavelet", "total"), 0.0)
        for start in range(0, len(order), train_config.batch_size):
            batch = [samples[i] for i in order[start:start + train_config.batch_size]]
            breakdown = batch_loss(params, batch, model_config, weights)
            grads = T.backward(breakdown.total)
            adam_step(params, grads, state)
            for p in params.values():
                p.grad = None
            values = breakdown.values()
            step_losses.append(values["total"])
            for k in sums:
                sums[k] += values[k] * len(batch)
        row = {"epoch": epoch, **{k: v / len(samples) for k, v in sums.items()}, "lr": state.lr}
        history.append(row)
        log.info("epoch %d total %.6g lr %.3g", epoch, row["total"], state.lr)
        if out_dir is not None and train_config.checkpoint_every and (epoch + 1) % train_config.checkpoint_every == 0:
            save_checkpoint(params, model_config, Path(out_dir) / f"checkpoint_epoch{epoch + 1:04d}",
                            train_config.seed)
    result = TrainResult(params, history, step_losses, digest.hexdigest())
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(params, model_config, out / "checkpoint", train_config.seed,
                        {"shuffle_digest": result.shuffle_digest})
        write_history(history, out / "loss_history.csv")
    return result


def write_history(history: Sequence[Mapping[str, float]], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ("epoch", "spa", "fourier", "wavelet", "total", "lr")
        writer.writerow(cols)
        for row in history:
            writer.writerow([row["epoch"], *(repr(float(row[c])) for c in cols[1:])])


# evaluation


def predict_all(params: Params, config: ModelConfig, samples: Sequence[SamplePair],
                variant: str | None = None) -> list[np.ndarray]:
    with T.no_grad():
        return [forward(s.pan, s.lrms, params, config, variant).data for s in samples]


def bilinear_baseline(samples: Sequence[SamplePair], ratio: int) -> list[np.ndarray]:
    with T.no_grad():
        return [upsample(s.lrms, ratio).data for s in samples]


def score_outputs(outputs: Sequence[np.ndarray], samples: Sequence[SamplePair], protocol: str,
                  ratio: int, window: int = 32) -> MetricsReport:
    if protocol == "reduced":
        if any(not s.has_gt for s in samples):
            raise ProtocolError("reduced-resolution evaluation needs ground truth")
        report = MetricsReport("reduced", REDUCED_METRICS)
        for out, s in zip(outputs, samples):
            report.add(reduced_metrics(out, s.gt, ratio, window))
    elif protocol == "full":
        report = MetricsReport("full", FULL_METRICS)
        for out, s in zip(outputs, samples):
            report.add(full_metrics(out, s.lrms, s.pan, ratio, window))
    else:
        raise ProtocolError(f"unknown protocol {protocol!r}")
    return report


def evaluate(checkpoint, dataset: Dataset, protocol: str | None = None, window: int = 32) -> MetricsReport:
    """Score a checkpoint (directory or ``(params, config)``) on a dataset."""
    if isinstance(checkpoint, (str, os.PathLike)):
        params, config, _ = load_checkpoint(checkpoint)
    else:
        params, config = checkpoint
    protocol = protocol or dataset.manifest.protocol
    if protocol != dataset.manifest.protocol:
        raise ProtocolError(f"dataset is {dataset.manifest.protocol!r}, evaluation asked for {protocol!r}")
    if dataset.manifest.bands and dataset.manifest.bands != config.bands:
        raise ProtocolError(f"checkpoint expects {config.bands} bands, dataset has {dataset.manifest.bands}")
    outputs = predict_all(params, config, dataset.samples)
    return score_outputs(outputs, dataset.samples, protocol, config.ratio, window)


# gradient audit


@dataclass
class GradCheckEntry:
    name: str
    size: int
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def worst(self) -> GradCheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_error)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``; the floor absorbs finite-difference noise."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(model_config: ModelConfig | None = None, tolerance: float = 1e-4, *, size: int = 8,
               seed: int = 0, step: float = 1e-5, randomize: bool = True, zero_loss: bool = False,
               weights: LossWeights = LossWeights(), names: Sequence[str] | None = None,
               loss_fn: Callable[[Params], T.Tensor] | None = None) -> GradCheckReport:
    """Compare backward() against central differences for every parameter entry.

    ``randomize`` perturbs every parameter (including the zero-initialized
    ones) so no gradient vanishes trivially. ``zero_loss`` sets the target to
    the bilinear-upsampled input, which the unperturbed network reproduces.
    ``names`` restricts the audit to a subset of parameters.
    """
    config = model_config or toy_config()
    rng = Rng(seed).child(7)
    params = init_params(config, seed)
    if randomize and not zero_loss:
        for p in params.values():
            p.data = p.data + rng.normal(p.shape, scale=0.1)
    pan = rng.uniform((size, size, 1))
    lrms = rng.uniform((size // config.ratio, size // config.ratio, config.bands))
    if zero_loss:
        with T.no_grad():
            gt = upsample(lrms, config.ratio).data
    else:
        gt = rng.uniform((size, size, config.bands))

    if loss_fn is None:
        def loss_fn(ps):
            return total_loss(forward(pan, lrms, ps, config), gt, weights).total

    analytic = T.backward(loss_fn(params))
    entries = []
    with T.no_grad():
        for name, p in params.items():
            if names is not None and name not in names:
                continue
            flat = p.data.reshape(-1)
            numeric = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = float(loss_fn(params).data)
                flat[i] = orig - step
                down = float(loss_fn(params).data)
                flat[i] = orig
                numeric[i] = (up - down) / (2.0 * step)
            err = relative_error(analytic[name].reshape(-1), numeric)
            worst = float(err.max()) if err.size else 0.0
            entries.append(GradCheckEntry(name, flat.size, worst, worst < tolerance or worst == 0.0))
    return GradCheckReport(tolerance, entries)
