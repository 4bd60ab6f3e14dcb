"""Synthetic degradations for building training and evaluation pairs.

Images are float arrays on the [0, 1] scale, shaped (H, W) or (C, H, W).
Noise levels are quoted on the 0-255 scale and converted here. Nothing is
clipped; clipping happens only when an image is written as 8-bit PNG.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

MAX_SIGMA = 75.0


class DegradationWarning(UserWarning):
    pass


def awgn(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add white Gaussian noise of standard deviation ``sigma / 255``."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    img = np.asarray(img)
    if sigma == 0:
        return img.copy()
    noise = np.random.default_rng(seed).standard_normal(img.shape) * (sigma / 255.0)
    return (img + noise).astype(img.dtype if img.dtype.kind == "f" else np.float64)


def cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel (Catmull-Rom for a = -0.5), support [-2, 2]."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    """Symmetric (edge-repeating) boundary: -1 -> 0, n -> n - 1."""
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx < n, idx, period - 1 - idx)


def resample_matrix(n_in: int, scale: int, a: float = -0.5) -> np.ndarray:
    """(n_in // scale, n_in) matrix of antialiased bicubic downsampling weights along one axis.

    Output sample ``o`` sits at input coordinate ``(o + 0.5) * scale - 0.5``;
    the kernel is stretched by ``scale`` and each row normalized to sum to one.
    """
    n_out = n_in // scale
    mat = np.zeros((n_out, n_in))
    half = 2 * scale
    for o in range(n_out):
        center = (o + 0.5) * scale - 0.5
        taps = np.arange(math.floor(center - half), math.ceil(center + half) + 1)
        wts = cubic_kernel((center - taps) / scale, a)
        wts /= wts.sum()
        np.add.at(mat[o], _reflect(taps, n_in), wts)
    return mat


def bicubic_downsample(img: np.ndarray, scale: int, a: float = -0.5) -> np.ndarray:
    """Separable antialiased bicubic downsampling by an integer factor.

    Dimensions not divisible by ``scale`` are cropped (bottom/right) to the
    largest divisible size and a :class:`DegradationWarning` is issued.
    """
    if scale < 1 or int(scale) != scale:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    img = np.asarray(img)
    if scale == 1:
        return img.copy()
    h, w = img.shape[-2:]
    hc, wc = h - h % scale, w - w % scale
    if (hc, wc) != (h, w):
        warnings.warn(f"cropped {h}x{w} to {hc}x{wc} for x{scale} downsampling", DegradationWarning, stacklevel=2)
        img = img[..., :hc, :wc]
    if hc == 0 or wc == 0:
        raise ValueError(f"image of size {h}x{w} is smaller than the scale {scale}")
    rows = resample_matrix(hc, scale, a)
    cols = resample_matrix(wc, scale, a)
    out = rows @ img.astype(np.float64) @ cols.T
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float64)


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized line kernel of ``length`` pixels at ``angle`` degrees, bilinearly rasterized."""
    if length < 1:
        raise ValueError(f"blur length must be at least 1, got {length}")
    if length == 1:
        return np.ones((1, 1))
    radius = (length - 1) / 2.0
    size = 2 * math.ceil(radius) + 1
    k = np.zeros((size, size))
    c = size // 2
    theta = math.radians(angle)
    dx, dy = math.cos(theta), -math.sin(theta)
    for t in np.linspace(-radius, radius, 4 * length + 1):
        x, y = c + t * dx, c + t * dy
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for yy, xx, wt in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x0 + 1, fx * (1 - fy)),
                           (y0 + 1, x0, (1 - fx) * fy), (y0 + 1, x0 + 1, fx * fy)):
            if 0 <= yy < size and 0 <= xx < size:
                k[yy, xx] += wt
    return k / k.sum()


def motion_blur(img: np.ndarray, length: int, angle: float | None = None, seed: int = 0) -> np.ndarray:
    """Convolve with a line kernel; ``angle=None`` draws the direction from ``seed``."""
    if angle is None:
        angle = float(np.random.default_rng(seed).uniform(0.0, 180.0))
    k = motion_kernel(length, angle)
    img = np.asarray(img)
    if k.shape == (1, 1):
        return img.copy()
    kk = k if img.ndim == 2 else k[None]
    return ndimage.convolve(img.astype(np.float64), kk, mode="reflect").astype(
        img.dtype if img.dtype.kind == "f" else np.float64)


def poisson_noise(img: np.ndarray, peak: float, seed: int) -> np.ndarray:
    """Poisson sampling of ``img * peak`` rescaled by ``1 / peak`` (negative intensities count as zero)."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    img = np.asarray(img)
    lam = np.clip(img.astype(np.float64), 0.0, None) * peak
    out = np.random.default_rng(seed).poisson(lam) / peak
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float64)


KINDS = ("awgn", "bicubic-down", "motion-blur", "poisson", "compose")


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    sigma: float = 0.0
    scale: int = 1
    blur_length: int = 1
    blur_angle: float | None = None
    peak: float = 255.0
    seed: int = 0
    steps: tuple["DegradationSpec", ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}; expected one of {KINDS}")
        if not 0 <= self.sigma <= MAX_SIGMA:
            raise ValueError(f"sigma must lie in [0, {MAX_SIGMA}], got {self.sigma}")

    def describe(self) -> str:
        if self.kind == "compose":
            return "compose(" + "; ".join(s.describe() for s in self.steps) + ")"
        parts = {
            "awgn": f"sigma={self.sigma}",
            "bicubic-down": f"scale={self.scale} kernel=keys-cubic a=-0.5 antialias=stretched-by-scale "
                            f"boundary=symmetric",
            "motion-blur": f"length={self.blur_length} angle={self.blur_angle}",
            "poisson": f"peak={self.peak}",
        }[self.kind]
        return f"{self.kind}({parts} seed={self.seed})"


def degrade(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Apply ``spec``; a pure function of the image and the spec (seed included)."""
    if spec.kind == "awgn":
        return awgn(img, spec.sigma, spec.seed)
    if spec.kind == "bicubic-down":
        return bicubic_downsample(img, spec.scale)
    if spec.kind == "motion-blur":
        return motion_blur(img, spec.blur_length, spec.blur_angle, spec.seed)
    if spec.kind == "poisson":
        return poisson_noise(img, spec.peak, spec.seed)
    out = img
    for s in spec.steps:
        out = degrade(out, s)
    return out


def realistic_sr(scale: int, seed: int, blur_length: int = 5, peak: float = 255.0) -> DegradationSpec:
    """Approximation of a realistic SR degradation: motion blur, bicubic downsampling, Poisson noise."""
    ss = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    return DegradationSpec("compose", scale=scale, seed=seed, steps=(
        DegradationSpec("motion-blur", blur_length=blur_length, seed=int(ss[0])),
        DegradationSpec("bicubic-down", scale=scale),
        DegradationSpec("poisson", peak=peak, seed=int(ss[1])),
    ))
