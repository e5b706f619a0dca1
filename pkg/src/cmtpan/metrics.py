"""Pansharpening quality indices.

Reduced resolution (reference available): SAM, ERGAS, Q2n.
Full resolution (no reference): D_lambda, D_s and HQNR.
Images are ``H x W x c`` float arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import wald_degrade
from .tensor import DimensionError

REDUCED_METRICS = ("SAM", "ERGAS", "Q2n")
FULL_METRICS = ("D_lambda", "D_s", "HQNR")


class DegenerateInputError(ValueError):
    pass


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"images differ in shape: {a.shape} vs {b.shape}")


def sam(fused: np.ndarray, gt: np.ndarray) -> float:
    """Mean spectral angle in degrees; pixels with a zero vector count as 0."""
    _same_shape(fused, gt)
    if fused.ndim != 3 or fused.shape[2] < 2:
        raise DimensionError(f"SAM needs an H x W x c image with c >= 2, got {fused.shape}")
    nf = np.linalg.norm(fused, axis=2, keepdims=True)
    ng = np.linalg.norm(gt, axis=2, keepdims=True)
    valid = (nf[..., 0] > 0) & (ng[..., 0] > 0)
    u = np.where(nf > 0, fused / np.where(nf > 0, nf, 1.0), 0.0)
    v = np.where(ng > 0, gt / np.where(ng > 0, ng, 1.0), 0.0)
    # 2 atan2(|u - v|, |u + v|) avoids the arccos cancellation near 0
    angle = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=2), np.linalg.norm(u + v, axis=2))
    angle[~valid] = 0.0
    return float(np.degrees(angle.mean()))


def ergas(fused: np.ndarray, gt: np.ndarray, ratio: int) -> float:
    """``100 / ratio * sqrt(mean_b (RMSE_b / mean_b)^2)``."""
    _same_shape(fused, gt)
    mu = gt.reshape(-1, gt.shape[-1]).mean(axis=0)
    if np.any(mu == 0):
        raise DegenerateInputError("ERGAS undefined: a reference band has zero mean")
    rmse = np.sqrt(((fused - gt) ** 2).reshape(-1, gt.shape[-1]).mean(axis=0))
    return float(100.0 / ratio * np.sqrt(np.mean((rmse / mu) ** 2)))


# hypercomplex (Cayley-Dickson) algebra on the trailing axis


def conj(z: np.ndarray) -> np.ndarray:
    out = -z
    out[..., 0] = z[..., 0]
    return out


def hc_mult(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Cayley-Dickson product ``(a, b)(c, d) = (ac - d*b, da + bc*)`` over the last axis."""
    n = p.shape[-1]
    if n == 1:
        return p * q
    half = n // 2
    a, b = p[..., :half], p[..., half:]
    c, d = q[..., :half], q[..., half:]
    return np.concatenate(
        [hc_mult(a, c) - hc_mult(conj(d), b), hc_mult(d, a) + hc_mult(b, conj(c))], axis=-1
    )


def _q2n_block(x: np.ndarray, y: np.ndarray) -> float:
    """Hypercomplex UIQI of one block; ``x`` is the reference, both ``n x 2^m``."""
    mx, my = x.mean(axis=0), y.mean(axis=0)
    var_x = float(((x - mx) ** 2).sum(axis=1).mean())
    var_y = float(((y - my) ** 2).sum(axis=1).mean())
    mx2, my2 = float(mx @ mx), float(my @ my)
    mean_term = 1.0 if mx2 + my2 == 0 else 2.0 * math.sqrt(mx2 * my2) / (mx2 + my2)
    if var_x + var_y == 0:
        return 1.0
    if var_x == 0 or var_y == 0:
        return 0.0
    cov = hc_mult(x, conj(y)).mean(axis=0) - hc_mult(mx, conj(my))
    return float(2.0 * np.linalg.norm(cov) / (var_x + var_y) * mean_term)


def _normalize_block(ref: np.ndarray, other: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # per band, map the reference to mean 1 / unit std and apply the same map to the other image
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0, ddof=1) if ref.shape[0] > 1 else np.zeros_like(mu)
    sd = np.where(sd == 0, np.finfo(np.float64).eps, sd)
    return (ref - mu) / sd + 1.0, (other - mu) / sd + 1.0


def q2n(fused: np.ndarray, gt: np.ndarray, window: int = 32, stride: int | None = None) -> float:
    """Hypercomplex quality index averaged over ``window``-sized blocks.

    Bands are zero padded to 4 (quaternions) or 8 (octonions).
    """
    _same_shape(fused, gt)
    h, w, c = gt.shape
    stride = window if stride is None else stride
    if window > h or window > w:
        raise ValueError(f"Q2n window {window} larger than image {h}x{w}")
    if c > 8:
        raise ValueError(f"Q2n supports up to 8 bands, got {c}")
    dim = 4 if c <= 4 else 8
    pad = dim - c
    values = []
    for i in range(0, h - window + 1, stride):
        for j in range(0, w - window + 1, stride):
            ref = gt[i:i + window, j:j + window].reshape(-1, c)
            out = fused[i:i + window, j:j + window].reshape(-1, c)
            ref, out = _normalize_block(ref, out)
            if pad:
                ref = np.pad(ref, ((0, 0), (0, pad)))
                out = np.pad(out, ((0, 0), (0, pad)))
            values.append(_q2n_block(ref, out))
    return float(np.mean(values))


# scalar universal image quality index for the no-reference protocol


def _near_zero(var: float, mu: float) -> bool:
    return var <= 1e-12 * max(1.0, mu * mu)


def uiqi(a: np.ndarray, b: np.ndarray, window: int, stride: int | None = None) -> float:
    """Block-averaged universal image quality index of two single-band images.

    A block where both images are flat scores 1; a block where exactly one
    is flat scores 0.
    """
    _same_shape(a, b)
    h, w = a.shape
    window = min(window, h, w)
    stride = window if stride is None else stride
    values = []
    for i in range(0, h - window + 1, stride):
        for j in range(0, w - window + 1, stride):
            x = a[i:i + window, j:j + window].ravel()
            y = b[i:i + window, j:j + window].ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(), y.var()
            flat_x, flat_y = _near_zero(vx, mx), _near_zero(vy, my)
            if flat_x and flat_y:
                values.append(1.0)
                continue
            if flat_x or flat_y:
                values.append(0.0)
                continue
            cov = ((x - mx) * (y - my)).mean()
            if mx * mx + my * my == 0:
                values.append(2.0 * cov / (vx + vy))
            else:
                values.append(4.0 * cov * mx * my / ((vx + vy) * (mx * mx + my * my)))
    return float(np.mean(values))


def _low_res_window(window: int, ratio: int) -> int:
    return max(2, window // ratio)


def d_lambda(fused: np.ndarray, lrms: np.ndarray, window: int = 32, ratio: int | None = None, p: int = 1) -> float:
    """Spectral distortion from inter-band UIQI differences (classic QNR form).

    The low-resolution image uses a window ``ratio`` times smaller so both
    cover the same ground footprint.
    """
    c = fused.shape[2]
    if c < 2 or lrms.shape[2] != c:
        raise DimensionError(f"D_lambda needs >= 2 matching bands: {fused.shape} vs {lrms.shape}")
    ratio = ratio or fused.shape[0] // lrms.shape[0]
    lw = _low_res_window(window, ratio)
    total, pairs = 0.0, 0
    for i in range(c):
        for j in range(c):
            if i == j:
                continue
            q_hr = uiqi(fused[..., i], fused[..., j], window)
            q_lr = uiqi(lrms[..., i], lrms[..., j], lw)
            total += abs(q_hr - q_lr) ** p
            pairs += 1
    return float((total / pairs) ** (1.0 / p))


def d_s(fused: np.ndarray, lrms: np.ndarray, pan: np.ndarray, ratio: int | None = None,
        window: int = 32, q: int = 1, blur_sigma: float | None = None) -> float:
    """Spatial distortion: per band, UIQI against PAN at both resolutions."""
    h, w, c = fused.shape
    if pan.shape[:2] != (h, w):
        raise ValueError(f"PAN {pan.shape} and fused {fused.shape} differ spatially")
    ratio = ratio or h // lrms.shape[0]
    if lrms.shape[:2] != (h // ratio, w // ratio) or h % ratio or w % ratio:
        raise ValueError(f"LRMS {lrms.shape} inconsistent with fused {fused.shape} at ratio {ratio}")
    pan2d = pan[..., 0] if pan.ndim == 3 else pan
    pan_lr = wald_degrade(pan2d[..., None], ratio, blur_sigma)[..., 0]
    lw = _low_res_window(window, ratio)
    total = 0.0
    for b in range(c):
        total += abs(uiqi(fused[..., b], pan2d, window) - uiqi(lrms[..., b], pan_lr, lw)) ** q
    return float((total / c) ** (1.0 / q))


def hqnr(d_lambda_value: float, d_s_value: float) -> float:
    for v in (d_lambda_value, d_s_value):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"distortion indices must lie in [0, 1], got {v}")
    return (1.0 - d_lambda_value) * (1.0 - d_s_value)


# reports


@dataclass
class MetricsReport:
    protocol: str
    columns: tuple[str, ...]
    rows: list[dict[str, float]] = field(default_factory=list)

    def add(self, values: dict[str, float]) -> None:
        self.rows.append({k: float(values[k]) for k in self.columns})

    def mean(self) -> dict[str, float]:
        return {k: float(np.mean([r[k] for r in self.rows])) if self.rows else float("nan") for k in self.columns}

    def std(self) -> dict[str, float]:
        return {k: float(np.std([r[k] for r in self.rows])) if self.rows else float("nan") for k in self.columns}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sample", *self.columns])
            for i, row in enumerate(self.rows):
                writer.writerow([i, *(repr(row[k]) for k in self.columns)])
            for label, stats in (("mean", self.mean()), ("std", self.std())):
                writer.writerow([label, *(repr(stats[k]) for k in self.columns)])

    @classmethod
    def read_csv(cls, path: str | Path, protocol: str = "") -> "MetricsReport":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        columns = tuple(rows[0][1:])
        report = cls(protocol, columns)
        for row in rows[1:]:
            if row[0] in ("mean", "std"):
                continue
            report.rows.append({k: float(v) for k, v in zip(columns, row[1:])})
        return report


def reduced_metrics(fused: np.ndarray, gt: np.ndarray, ratio: int, window: int = 32) -> dict[str, float]:
    return {"SAM": sam(fused, gt), "ERGAS": ergas(fused, gt, ratio), "Q2n": q2n(fused, gt, window)}


def full_metrics(fused: np.ndarray, lrms: np.ndarray, pan: np.ndarray, ratio: int,
                 window: int = 32, blur_sigma: float | None = None) -> dict[str, float]:
    dl = d_lambda(fused, lrms, window, ratio)
    ds = d_s(fused, lrms, pan, ratio, window, blur_sigma=blur_sigma)
    return {"D_lambda": dl, "D_s": ds, "HQNR": hqnr(dl, ds)}


def summarize(reports: Sequence[MetricsReport]) -> list[dict[str, float]]:
    return [r.mean() for r in reports]
