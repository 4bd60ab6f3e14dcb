import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def gray_samples(size: int | None = None) -> list[np.ndarray]:
    """skimage's bundled sample photographs as (1, H, W) float32 gray images."""
    from skimage import data as sd

    from ronet.data import to_gray

    out = []
    for name in ("camera", "astronaut", "coffee", "chelsea"):
        a = np.asarray(getattr(sd, name)()).astype(np.float32) / 255.0
        img = to_gray(a.transpose(2, 0, 1)) if a.ndim == 3 else a[None]
        out.append(img if size is None else img[:, :size, :size])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
