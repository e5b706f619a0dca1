"""Brute-force reference implementations used by the tests.

Each one is written from the definition with explicit loops and shares no
code with the package.
"""

import cmath
import math

import numpy as np


def matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def conv2d_same(x, kernel):
    """Zero padded cross-correlation, kernel kh x kw x cin x cout."""
    h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    ph, pw = kh // 2, kw // 2
    out = np.zeros((h, w, cout))
    for y in range(h):
        for xx in range(w):
            for o in range(cout):
                s = 0.0
                for i in range(kh):
                    for j in range(kw):
                        sy, sx = y + i - ph, xx + j - pw
                        if 0 <= sy < h and 0 <= sx < w:
                            for c in range(cin):
                                s += x[sy, sx, c] * kernel[i, j, c, o]
                out[y, xx, o] = s
    return out


def depthwise_same(x, kernel):
    h, w, c = x.shape
    kh, kw, _ = kernel.shape
    out = np.zeros_like(x)
    for y in range(h):
        for xx in range(w):
            for ch in range(c):
                s = 0.0
                for i in range(kh):
                    for j in range(kw):
                        sy, sx = y + i - kh // 2, xx + j - kw // 2
                        if 0 <= sy < h and 0 <= sx < w:
                            s += x[sy, sx, ch] * kernel[i, j, ch]
                out[y, xx, ch] = s
    return out


def dft2(x):
    """Direct double sum, exponent sign -1, no normalization, per band."""
    h, w = x.shape[:2]
    rest = x.shape[2:]
    out = np.zeros(x.shape, dtype=complex)
    for u in range(h):
        for v in range(w):
            s = np.zeros(rest, dtype=complex)
            for y in range(h):
                for xx in range(w):
                    s = s + x[y, xx] * cmath.exp(-2j * math.pi * (u * y / h + v * xx / w))
            out[u, v] = s
    return out


def haar_level(x):
    """One orthonormal Haar level from the 2x2 block formulas."""
    h, w = x.shape[:2]
    ll = np.zeros((h // 2, w // 2) + x.shape[2:])
    lh, hl, hh = ll.copy(), ll.copy(), ll.copy()
    for i in range(h // 2):
        for j in range(w // 2):
            a, b = x[2 * i, 2 * j], x[2 * i, 2 * j + 1]
            c, d = x[2 * i + 1, 2 * j], x[2 * i + 1, 2 * j + 1]
            ll[i, j] = (a + b + c + d) / 2
            lh[i, j] = (a + b - c - d) / 2
            hl[i, j] = (a - b + c - d) / 2
            hh[i, j] = (a - b - c + d) / 2
    return ll, lh, hl, hh


def modulation_attention(q, k, v_mod, alpha):
    """out[:, j] = sum_i softmax_i(k[:, i] . q[:, j] / alpha) v_mod[:, i]."""
    d = q.shape[1]
    scores = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            scores[i, j] = sum(k[n, i] * q[n, j] for n in range(q.shape[0])) / alpha
    att = np.zeros((d, d))
    for j in range(d):
        col = [math.exp(scores[i, j] - max(scores[:, j])) for i in range(d)]
        z = sum(col)
        for i in range(d):
            att[i, j] = col[i] / z
    out = np.zeros_like(v_mod)
    for n in range(v_mod.shape[0]):
        for j in range(d):
            out[n, j] = sum(v_mod[n, i] * att[i, j] for i in range(d))
    return out


def bilinear_1d_weights(n_in, n_out):
    """Half-pixel-centre linear interpolation weights with edge clamping."""
    m = np.zeros((n_out, n_in))
    for o in range(n_out):
        s = (o + 0.5) * n_in / n_out - 0.5
        s = min(max(s, 0.0), n_in - 1)
        lo = int(math.floor(s))
        hi = min(lo + 1, n_in - 1)
        m[o, lo] += 1 - (s - lo)
        m[o, hi] += s - lo
    return m


def gaussian_blur_decimate(img, sigma, ratio):
    """Truncated (4 sigma) normalized Gaussian, whole-sample reflect padding, top-left decimation."""
    h, w, c = img.shape
    radius = int(math.ceil(4 * sigma))
    taps = [math.exp(-(t * t) / (2 * sigma * sigma)) for t in range(-radius, radius + 1)]
    z = sum(taps)
    taps = [t / z for t in taps]

    def refl(i, n):
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return i

    out = np.zeros((h // ratio, w // ratio, c))
    for oy in range(h // ratio):
        for ox in range(w // ratio):
            y, x = oy * ratio, ox * ratio
            for b in range(c):
                s = 0.0
                for i, ti in enumerate(taps):
                    for j, tj in enumerate(taps):
                        s += ti * tj * img[refl(y + i - radius, h), refl(x + j - radius, w), b]
                out[oy, ox, b] = s
    return out


def quaternion_q4(x, y):
    """Q4 of one block via explicit Hamilton products; x is the reference.

    Both are n x 4 and already normalized. Returns the index value.
    """
    def qmul(p, q):
        a1, b1, c1, d1 = p
        a2, b2, c2, d2 = q
        return np.array([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])

    def qconj(p):
        return np.array([p[0], -p[1], -p[2], -p[3]])

    n = x.shape[0]
    mx, my = x.mean(axis=0), y.mean(axis=0)
    var_x = sum(float(np.dot(x[i] - mx, x[i] - mx)) for i in range(n)) / n
    var_y = sum(float(np.dot(y[i] - my, y[i] - my)) for i in range(n)) / n
    cov = sum(qmul(x[i], qconj(y[i])) for i in range(n)) / n - qmul(mx, qconj(my))
    mx2, my2 = float(mx @ mx), float(my @ my)
    return 4 * np.linalg.norm(cov) * math.sqrt(mx2 * my2) / ((var_x + var_y) * (mx2 + my2))
