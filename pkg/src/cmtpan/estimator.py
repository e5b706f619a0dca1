"""scikit-learn style wrapper around the network, trainer and metrics."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .metrics import q2n
from .model import ModelConfig, predict
from .train import TrainConfig, train
from .validation import check_samples


class CMTPansharpener(RegressorMixin, BaseEstimator):
    """Fit on ``(pan, lrms)`` pairs with ground-truth HRMS targets, predict HRMS.

    ``X`` is a sequence of :class:`~cmtpan.data.SamplePair` or ``(pan, lrms)``
    tuples; ``y`` (optional if the pairs carry ``gt``) is the matching
    sequence of ``H x W x c`` targets. ``score`` is the mean Q2n.
    """

    def __init__(self, channels=32, heads=4, cmab_blocks=2, resnet_blocks_extract=4,
                 resnet_blocks_aggregate=4, ratio=4, variant="full", lr=1e-3, epochs=50,
                 batch_size=4, lr_period=100, lambda1=0.7, lambda2=0.2, wavelet_levels=2,
                 random_state=0):
        self.channels = channels
        self.heads = heads
        self.cmab_blocks = cmab_blocks
        self.resnet_blocks_extract = resnet_blocks_extract
        self.resnet_blocks_aggregate = resnet_blocks_aggregate
        self.ratio = ratio
        self.variant = variant
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_period = lr_period
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.wavelet_levels = wavelet_levels
        self.random_state = random_state

    def fit(self, X, y=None):
        samples = check_samples(X, y, self.ratio)
        if any(s.gt is None for s in samples):
            raise ValueError("fit needs ground truth: pass y or pairs carrying gt")
        self.n_bands_ = samples[0].lrms.shape[2]
        self.config_ = ModelConfig(
            bands=self.n_bands_, channels=self.channels, heads=self.heads,
            cmab_blocks=self.cmab_blocks, resnet_blocks_extract=self.resnet_blocks_extract,
            resnet_blocks_aggregate=self.resnet_blocks_aggregate, ratio=self.ratio, variant=self.variant,
        )
        train_config = TrainConfig(
            lr=self.lr, epochs=self.epochs, batch_size=self.batch_size, lr_period=self.lr_period,
            seed=self.random_state, lambda1=self.lambda1, lambda2=self.lambda2,
            wavelet_levels=self.wavelet_levels,
        )
        result = train(samples, self.config_, train_config)
        self.params_ = result.params
        self.history_ = result.history
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("CMTPansharpener is not fitted yet; call fit first")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        samples = check_samples(X, ratio=self.ratio)
        return np.stack([predict(s.pan, s.lrms, self.params_, self.config_) for s in samples])

    def score(self, X, y=None, sample_weight=None) -> float:
        samples = check_samples(X, y, self.ratio)
        fused = self.predict(samples)
        window = min(32, fused.shape[1], fused.shape[2])
        values = [q2n(f, s.gt, window) for f, s in zip(fused, samples)]
        return float(np.average(values, weights=sample_weight))
