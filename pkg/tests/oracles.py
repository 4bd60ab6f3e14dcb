"""Slow, direct reference implementations used only by the tests."""

from __future__ import annotations

import math

import numpy as np


def conv2d_loops(x, w, b=None, pad=None):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ph, pw = (kh // 2, kw // 2) if pad is None else ((pad, pad) if isinstance(pad, int) else pad)
    xp = np.zeros((n, cin, h + 2 * ph, wd + 2 * pw))
    xp[:, :, ph:ph + h, pw:pw + wd] = x
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    out = np.zeros((n, cout, ho, wo))
    for i in range(n):
        for o in range(cout):
            for r in range(ho):
                for c in range(wo):
                    out[i, o, r, c] = np.sum(xp[i, :, r:r + kh, c:c + kw] * w[o]) + (b[o] if b is not None else 0.0)
    return out


def pool_loops(x, axis):
    n, c, h, w = x.shape
    if axis == "column":
        out = np.zeros((n, c, h, 1))
        for i in range(n):
            for k in range(c):
                for r in range(h):
                    out[i, k, r, 0] = sum(x[i, k, r, j] for j in range(w)) / w
    else:
        out = np.zeros((n, c, 1, w))
        for i in range(n):
            for k in range(c):
                for j in range(w):
                    out[i, k, 0, j] = sum(x[i, k, r, j] for r in range(h)) / h
    return out


def pixel_shuffle_loops(x, r):
    n, c, h, w = x.shape
    co = c // (r * r)
    out = np.zeros((n, co, h * r, w * r))
    for i in range(n):
        for k in range(co):
            for y in range(h * r):
                for z in range(w * r):
                    out[i, k, y, z] = x[i, k * r * r + (y % r) * r + (z % r), y // r, z // r]
    return out


def svd_tail_energy(m, L):
    s = np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)
    return math.sqrt(float(np.sum(s[L:] ** 2)))


def svd_components(m, L):
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    return [s[i] * np.outer(u[:, i], vt[i]) for i in range(L)]


def cubic(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
    if t < 2:
        return a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
    return 0.0


def _reflect(i, n):
    # half-sample symmetric extension
    period = 2 * n
    i = i % period
    return i if i < n else period - 1 - i


def bicubic_down_direct(img, s):
    """Antialiased bicubic downsampling as a direct 2-D kernel sum, one output pixel at a time."""
    c, h, w = img.shape
    ho, wo = h // s, w // s
    out = np.zeros((c, ho, wo))
    for oy in range(ho):
        cy = (oy + 0.5) * s - 0.5
        ys = range(math.floor(cy - 2 * s), math.ceil(cy + 2 * s) + 1)
        wy = {y: cubic((y - cy) / s) for y in ys}
        for ox in range(wo):
            cx = (ox + 0.5) * s - 0.5
            xs = range(math.floor(cx - 2 * s), math.ceil(cx + 2 * s) + 1)
            wx = {x: cubic((x - cx) / s) for x in xs}
            acc = np.zeros(c)
            norm = 0.0
            for y in ys:
                for x in xs:
                    k = wy[y] * wx[x]
                    if k == 0.0:
                        continue
                    acc += k * img[:, _reflect(y, h), _reflect(x, w)]
                    norm += k
            out[:, oy, ox] = acc / norm
    return out


def ssim_loops(x, y, data_range=1.0, size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r ** 2 / (2 * sigma ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            a, b = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            ma, mb = np.sum(win * a), np.sum(win * b)
            va = np.sum(win * (a - ma) ** 2)
            vb = np.sum(win * (b - mb) ** 2)
            cov = np.sum(win * (a - ma) * (b - mb))
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def adam_reference(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        theta = theta - lr * mh / (np.sqrt(vh) + eps)
    return theta
