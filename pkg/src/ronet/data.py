"""PNG I/O and random patch sampling.

Images are float32 arrays shaped (C, H, W) with values on the [0, 1] scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png",)


class ImageIOError(OSError):
    pass


def load_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit gray or RGB PNG as a (C, H, W) float32 array in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "RGB"):
                arr = np.asarray(im)
            elif mode in ("P", "RGBA", "LA"):
                arr = np.asarray(im.convert("RGB" if mode != "LA" else "L"))
            else:
                raise ImageIOError(f"{path}: unsupported PNG mode {mode!r} (need 8-bit gray or RGB)")
    except ImageIOError:
        raise
    except Exception as exc:
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc
    if arr.dtype != np.uint8:
        raise ImageIOError(f"{path}: expected 8-bit samples, got {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return arr.astype(np.float32) / np.float32(255.0)


def quantize(img: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and round half up onto 8-bit levels."""
    return np.floor(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path: str | Path) -> None:
    img = np.asarray(img)
    if img.ndim == 4 and img.shape[0] == 1:
        img = img[0]
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ImageIOError(f"{path}: cannot save array of shape {img.shape} as PNG")
    q = quantize(img)
    arr = q[0] if q.shape[0] == 1 else q.transpose(1, 2, 0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def list_images(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def to_gray(img: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma of a (3, H, W) image, shaped (1, H, W)."""
    if img.shape[0] == 1:
        return img
    r, g, b = img.astype(np.float64)
    return (0.299 * r + 0.587 * g + 0.114 * b)[None].astype(img.dtype)


@dataclass
class PatchBatch:
    source: np.ndarray
    target: np.ndarray | None = None
    coords: list[tuple[int, int, int]] = field(default_factory=list)  # (image index, top, left) in source
    skipped: list[int] = field(default_factory=list)


def sample_patches(images: Sequence[np.ndarray], patch: int, count: int, seed: int,
                   targets: Sequence[np.ndarray] | None = None, scale: int = 1) -> PatchBatch:
    """Crop ``count`` patches at uniformly random positions of uniformly chosen images.

    In paired mode the target crop sits at ``scale`` times the source corner
    and is ``scale * patch`` wide. Images smaller than the patch are skipped
    and listed in ``skipped`` (a warning is also issued).
    """
    if targets is not None and len(targets) != len(images):
        raise ValueError("paired sampling needs as many targets as sources")
    usable, skipped = [], []
    for i, img in enumerate(images):
        if img.shape[-2] < patch or img.shape[-1] < patch:
            skipped.append(i)
            continue
        if targets is not None:
            t = targets[i]
            if t.shape[-2] < img.shape[-2] * scale or t.shape[-1] < img.shape[-1] * scale:
                raise ValueError(f"target {i} of shape {t.shape} does not cover source {img.shape} at scale {scale}")
        usable.append(i)
    if skipped:
        warnings.warn(f"skipped {len(skipped)} image(s) smaller than the {patch}x{patch} patch", stacklevel=2)
    if not usable:
        raise ValueError(f"no image is at least {patch}x{patch}")

    rng = np.random.default_rng(seed)
    src, tgt, coords = [], [], []
    for _ in range(count):
        i = usable[rng.integers(len(usable))]
        img = images[i]
        top = int(rng.integers(img.shape[-2] - patch + 1))
        left = int(rng.integers(img.shape[-1] - patch + 1))
        src.append(img[..., top:top + patch, left:left + patch])
        if targets is not None:
            tp = patch * scale
            tgt.append(targets[i][..., top * scale:top * scale + tp, left * scale:left * scale + tp])
        coords.append((i, top, left))
    return PatchBatch(
        source=np.stack(src).astype(np.float32),
        target=np.stack(tgt).astype(np.float32) if targets is not None else None,
        coords=coords,
        skipped=skipped,
    )
