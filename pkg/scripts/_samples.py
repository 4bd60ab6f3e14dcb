"""Bundled scikit-image photographs used as a small offline dataset."""

import numpy as np

from ronet.data import save_image, to_gray

TRAIN = ("camera", "astronaut", "coffee", "chelsea")
HELD_OUT = ("rocket",)
EXTRA = ("brick", "grass", "moon", "coins", "clock")


def load(name: str, gray: bool = True) -> np.ndarray:
    from skimage import data as sd
    a = np.asarray(getattr(sd, name)()).astype(np.float32) / 255.0
    img = a.transpose(2, 0, 1) if a.ndim == 3 else a[None]
    return to_gray(img) if gray else img


def export(names, directory, gray=True, crop=None):
    for n in names:
        img = load(n, gray)
        if crop:
            img = img[:, :crop, :crop]
        save_image(img, f"{directory}/{n}.png")
