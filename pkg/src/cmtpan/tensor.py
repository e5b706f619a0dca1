"""Dense float64 tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor`. When gradients are enabled and at
least one input requires them, the result records its parents and a
vector-Jacobian closure. :func:`backward` walks the reachable graph in
decreasing creation order, which is a reverse topological order because a
node is always created after its inputs.
"""

from __future__ import annotations

import contextlib
import functools
import itertools
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

_ids = itertools.count()
_grad_enabled = True


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its documented contract."""


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (finite differences, inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result.

    ``backward(g)`` must return one gradient (or ``None``) per parent, each
    shaped like that parent.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._id = next(_ids)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def backward(root: Tensor) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``root`` with respect to every reachable node.

    Each call starts from cleared ``.grad`` fields, so repeated calls do not
    accumulate. Returns the gradients of the named leaves keyed by name.
    """
    if root.data.size != 1:
        raise ContractError(f"backward() needs a scalar root, got shape {root.shape}")
    nodes: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in nodes or not node.requires_grad:
            continue
        nodes[node._id] = node
        node.grad = None
        stack.extend(node._parents)
    root.grad = np.ones_like(root.data)
    named = {}
    for key in sorted(nodes, reverse=True):
        node = nodes[key]
        if node.name is not None:
            named[node.name] = node
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64, copy=True)
            else:
                parent.grad = parent.grad + g
    return {
        name: (node.grad if node.grad is not None else np.zeros_like(node.data))
        for name, node in sorted(named.items())
    }


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(fn, a: Tensor, b: Tensor, op: str) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        _binary(np.add, a, b, "add"), (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        _binary(np.subtract, a, b, "sub"), (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    return make_op(
        _binary(np.multiply, a, b, "mul"), (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a: Tensor, factor: float) -> Tensor:
    return make_op(a.data * factor, (a,), lambda g: (g * factor,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    # sign(0) == 0: the subgradient at a kink is zero
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return make_op(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x); smooth, and silu(0) == 0."""
    s = _sigmoid(a.data)
    out = a.data * s
    return make_op(out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def modulus(re: Tensor, im: Tensor) -> Tensor:
    """sqrt(re^2 + im^2); the gradient at the origin is taken as zero."""
    r = np.hypot(re.data, im.data)
    safe = np.where(r > 0, r, 1.0)

    def _back(g):
        w = np.where(r > 0, g / safe, 0.0)
        return w * re.data, w * im.data

    return make_op(r, (re, im), _back)


# reductions and structure


def sum(a: Tensor) -> Tensor:  # noqa: A001
    return make_op(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return make_op(
        np.array(a.data.mean()), (a,), lambda g: (np.broadcast_to(g / n, a.shape),)
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {a.shape}")
    return make_op(a.data.T, (a,), lambda g: (g.T,))


def take(a: Tensor, index) -> Tensor:
    """Basic (slice/integer) indexing; the gradient scatters back."""

    def _back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return make_op(a.data[index], (a,), _back)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[p.shape for p in parts]}: {exc}") from None
    return make_op(data, parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack_sum(terms: Iterable[Tensor]) -> Tensor:
    terms = list(terms)
    out = terms[0]
    for t in terms[1:]:
        out = add(out, t)
    return out


# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return make_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def softmax_columns(s: Tensor) -> Tensor:
    """Softmax along axis 0, so every column sums to one."""
    z = s.data - s.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=0, keepdims=True)
    return make_op(p, (s,), lambda g: (p * (g - (g * p).sum(axis=0, keepdims=True)),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize each row (token) over its channels, then apply gain and bias."""
    if eps <= 0:
        raise ContractError("layer_norm needs eps > 0")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def _back(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_op(out, (x, gain, bias), _back)


# spatial ops, images are H x W x C


def _zero_pad(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    out = np.zeros((x.shape[0] + 2 * ph, x.shape[1] + 2 * pw) + x.shape[2:])
    out[ph:ph + x.shape[0], pw:pw + x.shape[1]] = x
    return out


def _correlate(xp: np.ndarray, kernel: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    kh, kw, _, cout = kernel.shape
    out = np.zeros((out_h, out_w, cout))
    for i in range(kh):
        for j in range(kw):
            out += xp[i:i + out_h, j:j + out_w, :] @ kernel[i, j]
    return out


def conv2d(x: Tensor, kernel: Tensor, padding: str = "same", depthwise: bool = False) -> Tensor:
    """2D cross-correlation with stride 1.

    ``kernel`` is ``kh x kw x Cin x Cout``, or ``kh x kw x C`` when
    ``depthwise`` is set. ``padding`` is ``"same"`` (zero padding, odd
    kernels only) or ``"none"`` (valid extent).
    """
    if x.data.ndim != 3:
        raise DimensionError(f"conv2d expects an H x W x C image, got {x.shape}")
    kh, kw = kernel.shape[:2]
    cin = x.shape[2]
    if depthwise:
        if kernel.data.ndim != 3 or kernel.shape[2] != cin:
            raise DimensionError(f"depthwise conv2d: kernel {kernel.shape} vs input {x.shape}")
    elif kernel.data.ndim != 4 or kernel.shape[2] != cin:
        raise DimensionError(f"conv2d: kernel {kernel.shape} vs input {x.shape}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ContractError(f"same padding needs odd kernel extents, got {kh}x{kw}")
        ph, pw = kh // 2, kw // 2
    elif padding == "none":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    h, w = x.shape[:2]
    out_h, out_w = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    xp = _zero_pad(x.data, ph, pw)
    k = kernel.data

    if depthwise:
        out = np.zeros((out_h, out_w, cin))
        for i in range(kh):
            for j in range(kw):
                out += xp[i:i + out_h, j:j + out_w, :] * k[i, j]

        def _back(g):
            dxp = np.zeros_like(xp)
            dk = np.empty_like(k)
            for i in range(kh):
                for j in range(kw):
                    win = xp[i:i + out_h, j:j + out_w, :]
                    dk[i, j] = (win * g).sum(axis=(0, 1))
                    dxp[i:i + out_h, j:j + out_w, :] += g * k[i, j]
            return dxp[ph:ph + h, pw:pw + w], dk

        return make_op(out, (x, kernel), _back)

    out = _correlate(xp, k, out_h, out_w)

    def _back(g):
        dk = np.empty_like(k)
        g2 = g.reshape(-1, g.shape[2])
        for i in range(kh):
            for j in range(kw):
                dk[i, j] = xp[i:i + out_h, j:j + out_w, :].reshape(-1, cin).T @ g2
        gp = _zero_pad(g, kh - 1, kw - 1)
        flipped = k[::-1, ::-1].transpose(0, 1, 3, 2)
        dxp = _correlate(gp, flipped, xp.shape[0], xp.shape[1])
        return dxp[ph:ph + h, pw:pw + w], dk

    return make_op(out, (x, kernel), _back)


@functools.lru_cache(maxsize=64)
def _interp_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for o in range(n_out):
        # half-pixel centres: output pixel o covers source coordinate (o + 0.5) * ratio - 0.5
        src = (o + 0.5) * ratio - 0.5
        if mode == "nearest":
            m[o, min(int(np.floor((o + 0.5) * ratio)), n_in - 1)] = 1.0
            continue
        src = min(max(src, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    m.flags.writeable = False
    return m


def resample(x: Tensor, factor, mode: str = "bilinear") -> Tensor:
    """Resize an H x W x C image by a rational ``factor``.

    Bilinear uses half-pixel centres with edge clamping (the usual
    ``align_corners=False`` convention); nearest picks the source pixel
    containing each output centre.
    """
    if mode not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resample mode {mode!r}")
    f = Fraction(factor)
    if f <= 0:
        raise ValueError(f"resample factor must be positive, got {factor}")
    h, w = x.shape[:2]
    out_h, out_w = h * f, w * f
    if out_h.denominator != 1 or out_w.denominator != 1:
        raise ValueError(f"factor {f} maps {h}x{w} to a non-integer extent")
    if f == 1:
        return make_op(x.data.copy(), (x,), lambda g: (g,))
    ry = _interp_matrix(h, int(out_h), mode)
    rx = _interp_matrix(w, int(out_w), mode)
    # rows then columns: out[i, j] = sum_hw ry[i, h] x[h, w] rx[j, w]
    out = np.moveaxis(np.tensordot(rx, np.tensordot(ry, x.data, axes=(1, 0)), axes=(1, 1)), 0, 1)

    def _back(g):
        return (np.moveaxis(np.tensordot(rx.T, np.tensordot(ry.T, g, axes=(1, 0)), axes=(1, 1)), 0, 1),)

    return make_op(out, (x,), _back)
