"""Image quality measurements: PSNR, SSIM and the evaluation protocols built on them.

Inputs are arrays on a common scale given by ``data_range`` (1.0 for the
internal [0, 1] scale, 255 for 8-bit values). Identical inputs have an
infinite PSNR; reports serialize it as the string ``identical``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .oracle import svd_decompose

IDENTICAL = math.inf
IDENTICAL_TEXT = "identical"

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def psnr(x, y, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE); ``IDENTICAL`` (+inf) when the inputs are equal."""
    x, y = _pair(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return IDENTICAL
    return 10.0 * math.log10(data_range ** 2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=-2, mode="constant")
    out = ndimage.correlate1d(out, g, axis=-1, mode="constant")
    return out[..., half:img.shape[-2] - half, half:img.shape[-1] - half]


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-window SSIM over 2-D inputs, valid windows only."""
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _valid_filter(x, g), _valid_filter(y, g)
    sxx = _valid_filter(x * x, g) - mx * mx
    syy = _valid_filter(y * y, g) - my * my
    sxy = _valid_filter(x * y, g) - mx * my
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim(x, y, data_range: float = 1.0) -> float:
    """Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03), mean over windows and channels."""
    x, y = _pair(x, y)
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    if x.ndim == 2:
        return float(ssim_map(x, y, data_range).mean())
    flat_x = x.reshape(-1, *x.shape[-2:])
    flat_y = y.reshape(-1, *y.shape[-2:])
    return float(np.mean([ssim_map(a, b, data_range).mean() for a, b in zip(flat_x, flat_y)]))


def rgb_to_y(img) -> np.ndarray:
    """Studio-swing luma on the 0-255 scale from a (3, H, W) image in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) RGB image, got {img.shape}")
    r, g, b = img
    return 16.0 + 65.481 * r + 128.553 * g + 24.966 * b


def _crop_border(a: np.ndarray, border: int) -> np.ndarray:
    if min(a.shape[-2:]) < 2 * border + 1:
        raise ValueError(f"image {a.shape[-2:]} too small for a {border}-pixel border crop")
    return a[..., border:a.shape[-2] - border, border:a.shape[-1] - border] if border else a


def y_channel_psnr(x, y, border: int = 4) -> float:
    """PSNR on the luma channel with ``border`` pixels dropped on every side."""
    return psnr(_crop_border(rgb_to_y(x), border), _crop_border(rgb_to_y(y), border), data_range=255.0)


def y_channel_ssim(x, y, border: int = 4) -> float:
    return ssim(_crop_border(rgb_to_y(x), border), _crop_border(rgb_to_y(y), border), data_range=255.0)


def _shift_grid(max_shift: int, axis_only: bool) -> list[tuple[int, int]]:
    r = range(-max_shift, max_shift + 1)
    if axis_only:
        return [(0, 0)] + [(d, 0) for d in r if d] + [(0, d) for d in r if d]
    return [(dy, dx) for dy in r for dx in r]


def _center_window(x: np.ndarray, crop: int, max_shift: int) -> tuple[int, int]:
    h, w = x.shape[-2:]
    if h < crop + 2 * max_shift or w < crop + 2 * max_shift:
        raise ValueError(f"image {h}x{w} too small for a {crop}x{crop} crop shifted by up to {max_shift}")
    top, left = (h - crop) // 2, (w - crop) // 2
    if top < max_shift or left < max_shift:
        raise ValueError("centered crop cannot be shifted that far inside the image")
    return top, left


def shifted_max_psnr(x, y, crop: int = 60, max_shift: int = 40, data_range: float = 1.0,
                     axis_only: bool = False) -> tuple[float, tuple[int, int]]:
    """Best PSNR between the centered crop of ``x`` and crops of ``y`` moved by up to ``max_shift``.

    Returns the value and the (row, column) shift of the reference window
    that attains it.
    """
    x, y = _pair(x, y)
    top, left = _center_window(x, crop, max_shift)
    patch = x[..., top:top + crop, left:left + crop]
    best, arg = -math.inf, (0, 0)
    if axis_only:
        for dy, dx in _shift_grid(max_shift, True):
            ref = y[..., top + dy:top + dy + crop, left + dx:left + dx + crop]
            v = psnr(patch, ref, data_range)
            if v > best:
                best, arg = v, (dy, dx)
        return best, arg
    for dy in range(-max_shift, max_shift + 1):
        band = y[..., top + dy:top + dy + crop, left - max_shift:left + max_shift + crop]
        win = np.lib.stride_tricks.sliding_window_view(band, crop, axis=-1)  # (..., crop, shifts, crop)
        diff = win - patch[..., :, None, :]
        axes = tuple(a for a in range(diff.ndim) if a != diff.ndim - 2)
        mse = np.mean(diff * diff, axis=axes)
        for k in np.flatnonzero(mse == mse.min()):
            v = IDENTICAL if mse[k] == 0 else 10.0 * math.log10(data_range ** 2 / mse[k])
            if v > best:
                best, arg = v, (dy, int(k) - max_shift)
    return best, arg


def shifted_max_ssim(x, y, crop: int = 60, max_shift: int = 40, data_range: float = 1.0,
                     axis_only: bool = False) -> tuple[float, tuple[int, int]]:
    x, y = _pair(x, y)
    top, left = _center_window(x, crop, max_shift)
    patch = x[..., top:top + crop, left:left + crop]
    best, arg = -math.inf, (0, 0)
    for dy, dx in _shift_grid(max_shift, axis_only):
        v = ssim(patch, y[..., top + dy:top + dy + crop, left + dx:left + dx + crop], data_range)
        if v > best:
            best, arg = v, (dy, dx)
    return best, arg


def _component_to_255(c: np.ndarray, lo: float, span: float) -> np.ndarray:
    return (c - lo) / span * 255.0


def ro_component_curve(x, y, count: int) -> list[float]:
    """PSNR between the i-th SVD rank-one components of ``x`` and of the reference ``y``, i = 1..count.

    Both components are mapped affinely onto 0-255 using the reference
    component's value range.
    """
    x, y = _pair(x, y)
    if count < 1:
        raise ValueError("component index starts at 1")
    if count > min(x.shape[-2:]):
        raise ValueError(f"component {count} exceeds the matrix rank bound {min(x.shape[-2:])}")
    cx = svd_decompose(x, count).components
    cy = svd_decompose(y, count).components
    out = []
    for a, b in zip(cx, cy):
        if np.array_equal(a, b):
            out.append(IDENTICAL)
            continue
        lo, hi = float(b.min()), float(b.max())
        span = hi - lo if hi > lo else 1.0
        out.append(psnr(_component_to_255(a, lo, span), _component_to_255(b, lo, span), data_range=255.0))
    return out


def ro_component_psnr(x, y, i: int) -> float:
    if i < 1:
        raise ValueError("component index starts at 1")
    return ro_component_curve(x, y, i)[-1]


def format_value(v: float) -> str:
    return IDENTICAL_TEXT if math.isinf(v) and v > 0 else f"{v:.6f}"


@dataclass
class MetricReport:
    protocol: str
    rows: list[tuple[str, float, float]] = field(default_factory=list)

    def add(self, image_id: str, psnr_value: float, ssim_value: float) -> None:
        self.rows.append((image_id, psnr_value, ssim_value))

    def mean_psnr(self) -> float:
        vals = [r[1] for r in self.rows]
        if vals and all(math.isinf(v) for v in vals):
            return IDENTICAL
        finite = [v for v in vals if not math.isinf(v)]
        return float(np.mean(finite)) if finite else math.nan

    def mean_ssim(self) -> float:
        return float(np.mean([r[2] for r in self.rows])) if self.rows else math.nan

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["image_id", "protocol", "psnr", "ssim"])
            for image_id, p, s in self.rows:
                w.writerow([image_id, self.protocol, format_value(p), f"{s:.6f}"])
            w.writerow(["mean", self.protocol, format_value(self.mean_psnr()), f"{self.mean_ssim():.6f}"])


def read_report(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


PROTOCOLS = {
    "all-pixels": "psnr/ssim over all pixels and channels",
    "y-border4": "studio-swing luma (16-235), 4-pixel border ignored",
    "shifted-max": "centered 60x60 crop, max over reference shifts within +/-40 pixels",
}


def evaluate_pair(restored: np.ndarray, truth: np.ndarray, protocol: str) -> tuple[float, float]:
    if protocol == "all-pixels":
        return psnr(restored, truth), ssim(restored, truth)
    if protocol == "y-border4":
        return y_channel_psnr(restored, truth, 4), y_channel_ssim(restored, truth, 4)
    if protocol == "shifted-max":
        return shifted_max_psnr(restored, truth)[0], shifted_max_ssim(restored, truth)[0]
    raise ValueError(f"unknown protocol {protocol!r}; expected one of {sorted(PROTOCOLS)}")
