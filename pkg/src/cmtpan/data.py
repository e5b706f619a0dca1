"""Synthetic scenes, Wald-protocol degradation and the on-disk tensor format.

Directory layout: ``manifest.json`` plus one raw little-endian file per
tensor, row-major with bands last. Shapes live only in the manifest.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import Rng

FORMAT_VERSION = 1
ENCODINGS = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}
_SUFFIX = {"f32le": ".f32", "f64le": ".f64"}
ALBEDO_DEVIATION = 0.02  # per-band spread of object albedo around the scene signature


class IntegrityError(RuntimeError):
    """A stored tensor does not match its manifest entry."""


class ProtocolError(RuntimeError):
    """Dataset protocol does not fit the requested operation."""


def default_blur_sigma(ratio: int) -> float:
    """Gaussian sigma of 1.7 at ratio 4, scaled linearly with the ratio."""
    return 1.7 * ratio / 4.0


@dataclass
class Scene:
    hrms: np.ndarray


@dataclass
class SamplePair:
    pan: np.ndarray
    lrms: np.ndarray
    gt: np.ndarray | None = None

    @property
    def has_gt(self) -> bool:
        return self.gt is not None


@dataclass
class DatasetManifest:
    count: int
    ratio: int
    bands: int
    seed: int
    protocol: str
    entries: list[dict] = field(default_factory=list)
    version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version, "count": self.count, "ratio": self.ratio, "bands": self.bands,
            "seed": self.seed, "protocol": self.protocol, "entries": self.entries,
        }


@dataclass
class Dataset:
    samples: list[SamplePair]
    manifest: DatasetManifest

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def has_gt(self) -> bool:
        return self.manifest.protocol == "reduced"


# scene synthesis


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(4.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _smooth_field(rng: Rng, h: int, w: int, sigma: float) -> np.ndarray:
    """Gaussian noise low-passed in the Fourier domain, scaled to unit std."""
    noise = rng.normal((h, w))
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    response = np.exp(-2.0 * (np.pi * sigma) ** 2 * (fy**2 + fx**2))
    f = np.real(np.fft.ifft2(np.fft.fft2(noise) * response))
    return (f - f.mean()) / (f.std() + 1e-12)


def synth_scene(rng: Rng, h: int, w: int, bands: int, ratio: int = 4, levels: int = 2) -> Scene:
    """Band-correlated smooth background plus rectangles and lines with per-band albedo.

    Each scene draws a spectral signature; object albedos are a brightness
    times that signature plus a small per-band deviation, so edges are shared
    across bands with band-specific contrast.
    """
    step = math.lcm(ratio, 2**levels)
    if h < step or w < step or h % step or w % step:
        raise ValueError(f"scene extent {h}x{w} must be a positive multiple of {step}")
    if bands < 1:
        raise ValueError("bands must be >= 1")
    base = _smooth_field(rng, h, w, sigma=h / 8.0)
    signature = rng.uniform(bands, 0.7, 1.3)
    img = np.empty((h, w, bands))
    for b in range(bands):
        own = _smooth_field(rng, h, w, sigma=h / 6.0)
        img[..., b] = signature[b] * (0.5 + 0.12 * base) + 0.04 * own
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.randint(4)) + 3):
        y0, x0 = rng.uniform(2) * np.array([h, w])
        dy, dx = (0.15 + 0.35 * rng.uniform(2)) * np.array([h, w])
        mask = (yy >= y0) & (yy < y0 + dy) & (xx >= x0) & (xx < x0 + dx)
        albedo = rng.uniform(1, 0.15, 0.75)[0] * signature + rng.normal(bands, ALBEDO_DEVIATION)
        img[mask] = 0.3 * img[mask] + 0.7 * albedo
    for _ in range(int(rng.randint(3)) + 1):
        theta = rng.uniform(1)[0] * np.pi
        offset = (rng.uniform(1)[0] - 0.5) * min(h, w)
        dist = (xx - w / 2) * np.cos(theta) + (yy - h / 2) * np.sin(theta) - offset
        mask = np.abs(dist) < 1.0
        img[mask] = rng.uniform(1, 0.6, 0.8)[0] * signature + rng.normal(bands, ALBEDO_DEVIATION)
    return Scene(np.clip(img, 0.0, 1.0))


# degradation


def _reflect_index(i: int, n: int) -> int:
    # whole-sample reflection: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
    period = 2 * (n - 1) if n > 1 else 1
    i = i % period
    return period - i if i >= n else i


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur (sum 1, truncated at 4 sigma, reflect padding) over axes 0, 1."""
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    out = img.astype(np.float64)
    for axis in (0, 1):
        n = out.shape[axis]
        idx = np.array([_reflect_index(i, n) for i in range(-r, n + r)])
        padded = np.take(out, idx, axis=axis)
        acc = np.zeros_like(out)
        for t, weight in enumerate(k):
            acc += weight * np.take(padded, np.arange(t, t + n), axis=axis)
        out = acc
    return out


def wald_degrade(gt: np.ndarray, ratio: int, blur_sigma: float | None = None) -> np.ndarray:
    """Blur then keep the top-left sample of every ``ratio x ratio`` block."""
    h, w = gt.shape[:2]
    if ratio < 1 or h % ratio or w % ratio:
        raise ValueError(f"extent {h}x{w} not divisible by ratio {ratio}")
    sigma = default_blur_sigma(ratio) if blur_sigma is None else blur_sigma
    return gaussian_blur(gt, sigma)[::ratio, ::ratio]


def pan_from_hrms(gt: np.ndarray, band_weights: Sequence[float] | None = None) -> np.ndarray:
    c = gt.shape[2]
    weights = np.full(c, 1.0 / c) if band_weights is None else np.asarray(band_weights, dtype=np.float64)
    if weights.shape != (c,):
        raise ValueError(f"need {c} band weights, got {weights.shape}")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"band weights must be non-negative and sum to 1, got sum {weights.sum()!r}")
    return (gt @ weights)[..., None]


def make_reduced_pair(scene: Scene, ratio: int, blur_sigma: float | None = None,
                      band_weights: Sequence[float] | None = None) -> SamplePair:
    gt = scene.hrms
    return SamplePair(pan_from_hrms(gt, band_weights), wald_degrade(gt, ratio, blur_sigma), gt.copy())


def make_full_resolution_pairs(scenes: Iterable[Scene], ratio: int, blur_sigma: float | None = None,
                               band_weights: Sequence[float] | None = None) -> list[SamplePair]:
    """Sensor-like inputs at native resolution with no reference."""
    out = []
    for scene in scenes:
        pair = make_reduced_pair(scene, ratio, blur_sigma, band_weights)
        out.append(SamplePair(pair.pan, pair.lrms, None))
    return out


def quantize(pair: SamplePair) -> SamplePair:
    """Round every tensor to float32, matching what the file format stores."""
    def q(x):
        return None if x is None else x.astype("<f4").astype(np.float64)

    return SamplePair(q(pair.pan), q(pair.lrms), q(pair.gt))


def synth_dataset(count: int, size: int, bands: int, ratio: int, seed: int,
                  protocol: str = "reduced", blur_sigma: float | None = None) -> Dataset:
    if protocol not in ("reduced", "full"):
        raise ValueError(f"protocol must be 'reduced' or 'full', got {protocol!r}")
    rng = Rng(seed)
    scenes = [synth_scene(rng.child(i), size, size, bands, ratio) for i in range(count)]
    if protocol == "reduced":
        samples = [make_reduced_pair(s, ratio, blur_sigma) for s in scenes]
    else:
        samples = make_full_resolution_pairs(scenes, ratio, blur_sigma)
    samples = [quantize(s) for s in samples]
    return Dataset(samples, DatasetManifest(count, ratio, bands, seed, protocol))


# files


def write_tensor(directory: Path, name: str, array: np.ndarray, encoding: str = "f32le") -> dict:
    dtype = ENCODINGS[encoding]
    payload = np.ascontiguousarray(array, dtype=dtype).tobytes()
    filename = name + _SUFFIX[encoding]
    (Path(directory) / filename).write_bytes(payload)
    return {"name": name, "file": filename, "shape": list(array.shape),
            "offset": 0, "length": len(payload), "encoding": encoding}


def read_tensor(directory: Path, entry: dict) -> np.ndarray:
    path = Path(directory) / entry["file"]
    if not path.exists():
        raise IntegrityError(f"{entry['file']}: missing")
    dtype = ENCODINGS.get(entry.get("encoding", ""))
    if dtype is None:
        raise IntegrityError(f"{entry['file']}: unknown encoding {entry.get('encoding')!r}")
    raw = path.read_bytes()
    offset, length = entry["offset"], entry["length"]
    expected = math.prod(entry["shape"]) * dtype.itemsize
    if length != expected:
        raise IntegrityError(f"{entry['file']}: manifest length {length} does not match shape {entry['shape']}")
    if len(raw) < offset + length:
        raise IntegrityError(f"{entry['file']}: {len(raw)} bytes on disk, manifest expects {offset + length}")
    data = np.frombuffer(raw, dtype=dtype, count=math.prod(entry["shape"]), offset=offset)
    return data.reshape(entry["shape"]).astype(np.float64)


def write_manifest(directory: Path, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (Path(directory) / "manifest.json").write_text(text, encoding="utf-8")


def read_manifest(directory: Path) -> dict:
    path = Path(directory) / "manifest.json"
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IntegrityError(f"{path}: missing manifest") from None
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: corrupt manifest ({exc})") from None


def save_dataset(dataset: Dataset, directory: str | os.PathLike) -> DatasetManifest:
    """Write tensors first and the manifest last, so a complete manifest marks a complete write."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    m = dataset.manifest
    entries = []
    for i, s in enumerate(dataset.samples):
        for kind in ("pan", "lrms", "gt"):
            value = getattr(s, kind)
            if value is not None:
                entries.append(write_tensor(directory, f"{i:06d}_{kind}", value))
    manifest = DatasetManifest(len(dataset.samples), m.ratio, m.bands, m.seed, m.protocol, entries)
    write_manifest(directory, manifest.to_dict())
    return manifest


def load_dataset(directory: str | os.PathLike) -> Dataset:
    directory = Path(directory)
    raw = read_manifest(directory)
    try:
        manifest = DatasetManifest(raw["count"], raw["ratio"], raw["bands"], raw["seed"],
                                   raw["protocol"], raw["entries"], raw["version"])
    except KeyError as exc:
        raise IntegrityError(f"{directory / 'manifest.json'}: missing key {exc}") from None
    tensors = {e["name"]: read_tensor(directory, e) for e in manifest.entries}
    samples = []
    for i in range(manifest.count):
        try:
            pan, lrms = tensors[f"{i:06d}_pan"], tensors[f"{i:06d}_lrms"]
        except KeyError as exc:
            raise IntegrityError(f"{directory}: no entry {exc}") from None
        samples.append(SamplePair(pan, lrms, tensors.get(f"{i:06d}_gt")))
    if any(s.has_gt != (manifest.protocol == "reduced") for s in samples):
        raise IntegrityError(f"{directory}: gt presence disagrees with protocol {manifest.protocol!r}")
    return Dataset(samples, manifest)
