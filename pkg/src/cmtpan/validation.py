"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .data import SamplePair


def check_image(x, name: str, bands: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite float64 ``H x W x c`` array (2D input gains a band axis)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be H x W x c, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    if bands is not None and arr.shape[2] != bands:
        raise ValueError(f"{name} has {arr.shape[2]} bands, expected {bands}")
    return arr


def check_pair(pan, lrms, ratio: int, gt=None) -> SamplePair:
    pan = check_image(pan, "pan", bands=1)
    lrms = check_image(lrms, "lrms")
    h, w = pan.shape[:2]
    if h % ratio or w % ratio:
        raise ValueError(f"PAN extent {h}x{w} is not divisible by ratio {ratio}")
    if lrms.shape[:2] != (h // ratio, w // ratio):
        raise ValueError(f"LRMS {lrms.shape[:2]} should be {(h // ratio, w // ratio)} for PAN {h}x{w}")
    if gt is not None:
        gt = check_image(gt, "gt", bands=lrms.shape[2])
        if gt.shape[:2] != (h, w):
            raise ValueError(f"gt {gt.shape[:2]} should match PAN {h}x{w}")
    return SamplePair(pan, lrms, gt)


def check_samples(X, y=None, ratio: int = 4) -> list[SamplePair]:
    """Accept SamplePairs or ``(pan, lrms)`` tuples, with optional targets ``y``."""
    items = list(X)
    if y is not None and len(y) != len(items):
        raise ValueError(f"X has {len(items)} samples but y has {len(y)}")
    out = []
    for i, item in enumerate(items):
        if isinstance(item, SamplePair):
            pan, lrms, gt = item.pan, item.lrms, item.gt
        else:
            pan, lrms = item
            gt = None
        if y is not None:
            gt = y[i]
        out.append(check_pair(pan, lrms, ratio, gt))
    bands = {s.lrms.shape[2] for s in out}
    if len(bands) > 1:
        raise ValueError(f"samples disagree on band count: {sorted(bands)}")
    return out
