"""2D DFT and orthonormal Haar wavelet transforms on :class:`Tensor` values.

Both act on the two leading (spatial) axes; trailing axes such as bands are
carried along, so an ``H x W x c`` image is transformed band by band.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, as_tensor, make_op, take


class StructureError(ValueError):
    """A wavelet pyramid has inconsistent subband shapes."""


@dataclass
class ComplexPlane:
    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise StructureError(f"real {self.real.shape} and imag {self.imag.shape} differ")

    def to_numpy(self) -> np.ndarray:
        return self.real.data + 1j * self.imag.data


def dft2(x) -> ComplexPlane:
    """Unnormalized forward DFT (exponent sign -1) over axes 0 and 1."""
    x = as_tensor(x)
    h, w = x.shape[:2]
    spec = np.fft.fft2(x.data, axes=(0, 1))

    def _back(g):
        # adjoint of the real-to-complex map: Re(sum_k G_k exp(+i theta))
        z = g[0] + 1j * g[1]
        return (np.real(np.fft.ifft2(z, axes=(0, 1))) * (h * w),)

    packed = make_op(np.stack([spec.real, spec.imag]), (x,), _back)
    return ComplexPlane(take(packed, 0), take(packed, 1))


def idft2(f: ComplexPlane) -> Tensor:
    """Inverse DFT with 1/(HW) normalization; returns the real part."""
    packed = make_op(
        np.stack([f.real.data, f.imag.data]), (f.real, f.imag), lambda g: (g[0], g[1])
    )
    h, w = f.real.shape[:2]
    z = packed.data[0] + 1j * packed.data[1]
    out = np.real(np.fft.ifft2(z, axes=(0, 1)))

    def _back(g):
        spec = np.fft.fft2(g, axes=(0, 1)) / (h * w)
        return (np.stack([spec.real, spec.imag]),)

    return make_op(out, (packed,), _back)


@dataclass
class WaveletPyramid:
    """Detail subbands per level (finest first) plus the coarsest approximation."""

    details: list[dict[str, Tensor]] = field(default_factory=list)
    ll: Tensor | None = None

    @property
    def levels(self) -> int:
        return len(self.details)

    def subbands(self):
        """Yield ``(label, tensor)`` for every subband, coarsest LL last."""
        for j, bands in enumerate(self.details, start=1):
            for orient in ("LH", "HL", "HH"):
                yield f"{orient}{j}", bands[orient]
        yield f"LL{self.levels}", self.ll


def _haar_split(a, b, c, d):
    return (
        (a + b + c + d) / 2.0,  # LL
        (a + b - c - d) / 2.0,  # LH
        (a - b + c - d) / 2.0,  # HL
        (a - b - c + d) / 2.0,  # HH
    )


def _haar_merge(ll, lh, hl, hh, shape):
    out = np.empty(shape)
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 0::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def _haar_level(x: Tensor) -> Tensor:
    d = x.data
    packed = np.stack(_haar_split(d[0::2, 0::2], d[0::2, 1::2], d[1::2, 0::2], d[1::2, 1::2]))
    # orthonormal, so the adjoint is the inverse
    return make_op(packed, (x,), lambda g: (_haar_merge(*g, x.shape),))


def dwt2_haar(x, levels: int = 1) -> WaveletPyramid:
    """Multi-level orthonormal 2D Haar analysis.

    Each 2x2 block ``[[a, b], [c, d]]`` maps to ``LL=(a+b+c+d)/2``,
    ``LH=(a+b-c-d)/2``, ``HL=(a-b+c-d)/2``, ``HH=(a-b-c+d)/2``.
    """
    x = as_tensor(x)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    h, w = x.shape[:2]
    step = 2**levels
    if h % step or w % step:
        raise ValueError(f"{levels}-level Haar needs extents divisible by {step}, got {h}x{w}")
    pyramid = WaveletPyramid()
    current = x
    for _ in range(levels):
        packed = _haar_level(current)
        current = take(packed, 0)
        pyramid.details.append({"LH": take(packed, 1), "HL": take(packed, 2), "HH": take(packed, 3)})
    pyramid.ll = current
    return pyramid


def idwt2_haar(p: WaveletPyramid) -> Tensor:
    current = p.ll
    if current is None:
        raise StructureError("pyramid has no LL band")
    for bands in reversed(p.details):
        parts = [current, bands["LH"], bands["HL"], bands["HH"]]
        if any(t.shape != current.shape for t in parts):
            raise StructureError(f"subband shapes disagree: {[t.shape for t in parts]}")
        shape = (2 * current.shape[0], 2 * current.shape[1]) + current.shape[2:]
        packed = make_op(np.stack([t.data for t in parts]), parts, lambda g: tuple(g))
        current = make_op(
            _haar_merge(*packed.data, shape), (packed,),
            lambda g, _p=packed: (np.stack(_haar_split(g[0::2, 0::2], g[0::2, 1::2], g[1::2, 0::2], g[1::2, 1::2])),),
        )
    return current
