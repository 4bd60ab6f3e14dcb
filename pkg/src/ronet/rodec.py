"""Cascaded rank-one decomposition network.

Unit ``l`` projects the running residual onto a rank-one image and the
projection is subtracted, so after ``L`` units
``x == X_1 + ... + X_L + E_L`` holds by construction.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, no_grad
from .data import sample_patches
from .layers import ConfigurationError, Weights, clone, prefixed, subweights, trainable
from .optim import Adam, LRSchedule
from .oracle import Decomposition, svd_decompose
from .ropnet import RopConfig, init_rop, rop_config_from_weights, rop_forward
from .training import ProgressLog, TrainSchedule, step_seed

MAX_UNITS = 6


@dataclass(frozen=True)
class RodecConfig:
    L: int = 3
    rop: RopConfig = field(default_factory=RopConfig)

    def __post_init__(self):
        if not 1 <= self.L <= MAX_UNITS:
            raise ConfigurationError(f"L must be between 1 and {MAX_UNITS}, got {self.L}")


def init_rodec(config: RodecConfig, rng: np.random.Generator, init: str = "xavier_uniform") -> Weights:
    w: Weights = {}
    for l in range(1, config.L + 1):
        w.update(prefixed(init_rop(config.rop, rng, init), f"rop{l}."))
    return w


def rodec_config_from_weights(w: Weights) -> RodecConfig:
    units = sorted({int(k.split(".")[0][3:]) for k in w if k.startswith("rop")})
    if not units or units != list(range(1, len(units) + 1)):
        raise ConfigurationError(f"weight table does not hold a consecutive ROP cascade (units {units})")
    return RodecConfig(L=len(units), rop=rop_config_from_weights(subweights(w, "rop1.")))


def rodec_forward(x: Tensor, w: Weights, config: RodecConfig, units: int | None = None) -> Decomposition:
    """Decompose a batch into rank-one components and the final residual.

    ``units`` < L uses only the first units of a deeper cascade. The residual
    after every level is kept in ``meta["residuals"]``.
    """
    units = config.L if units is None else units
    if not 1 <= units <= config.L:
        raise ConfigurationError(f"cannot run {units} units of a {config.L}-unit cascade")
    residual = x
    comps, residuals = [], []
    for l in range(1, units + 1):
        comp = rop_forward(residual, subweights(w, f"rop{l}."), config.rop)
        residual = ad.sub(residual, comp)
        comps.append(comp)
        residuals.append(residual)
    return Decomposition(comps, residual, {"residuals": residuals})


def loss_dec_unsup(x: Tensor, w: Weights, config: RodecConfig) -> Tensor:
    """Mean over levels of the mean squared residual after each level."""
    dec = rodec_forward(x, w, config)
    terms = [ad.loss_norm(e, np.zeros(e.shape, dtype=e.dtype), 2) for e in dec.meta["residuals"]]
    return ad.scalar_mul(ad.add_n(terms), 1.0 / len(terms))


def loss_dec_sup(x: Tensor, w: Weights, config: RodecConfig, targets: Sequence[np.ndarray]) -> Tensor:
    """Mean over levels of the mean squared difference to the SVD components ``targets``."""
    if len(targets) != config.L:
        raise ConfigurationError(f"need {config.L} reference components, got {len(targets)}")
    dec = rodec_forward(x, w, config)
    terms = [ad.loss_norm(c, t.astype(c.dtype), 2) for c, t in zip(dec.components, targets)]
    return ad.scalar_mul(ad.add_n(terms), 1.0 / len(terms))


class SvdCache:
    """Bounded LRU memo of per-patch SVD components keyed by the patch bytes."""

    def __init__(self, L: int, maxsize: int = 4096):
        self.L = L
        self.maxsize = maxsize
        self._store: OrderedDict[bytes, list[np.ndarray]] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def components(self, patch: np.ndarray) -> list[np.ndarray]:
        key = hashlib.sha1(np.ascontiguousarray(patch).tobytes() + str(patch.shape).encode()).digest()
        hit = self._store.get(key)
        if hit is not None:
            self._store.move_to_end(key)
            self.hits += 1
            return hit
        self.misses += 1
        comps = svd_decompose(patch, self.L).components
        self._store[key] = comps
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return comps

    def batch(self, batch: np.ndarray) -> list[np.ndarray]:
        per = [self.components(p) for p in batch]
        return [np.stack([c[l] for c in per]) for l in range(self.L)]


def default_rodec_schedule() -> TrainSchedule:
    return TrainSchedule(updates=500_000, batch=16, patch=64,
                         lr=LRSchedule(base=1e-4, drop_at=400_000, drop_factor=0.1))


def train_rodec(images: Sequence[np.ndarray], config: RodecConfig, mode: str = "unsupervised",
                schedule: TrainSchedule | None = None, init: str = "xavier_uniform",
                weights: Weights | None = None, log: ProgressLog | None = None) -> tuple[Weights, ProgressLog]:
    """Adam training of all units jointly on random patches of ``images``.

    Returns the trained weights and the per-step loss log. Given the same
    images, config and schedule the result is bit-identical.
    """
    if mode not in ("unsupervised", "supervised"):
        raise ConfigurationError(f"mode must be 'unsupervised' or 'supervised', got {mode!r}")
    if not images:
        raise ConfigurationError("training needs at least one image")
    for img in images:
        if img.shape[0] != config.rop.out_channels:
            raise ConfigurationError(f"image with {img.shape[0]} channels for a {config.rop.out_channels}-channel model")
    schedule = schedule or default_rodec_schedule()
    rng = np.random.default_rng(step_seed(schedule.seed, 0, stream=1))
    w = clone(weights) if weights is not None else init_rodec(config, rng, init)
    opt = Adam(trainable(w))
    log = log or ProgressLog()
    cache = SvdCache(config.L) if mode == "supervised" else None

    for step in range(schedule.updates):
        batch = sample_patches(images, schedule.patch, schedule.batch, step_seed(schedule.seed, step)).source
        x = Tensor(batch)
        opt.zero_grad()
        with Tape() as tape:
            if cache is None:
                loss = loss_dec_unsup(x, w, config)
            else:
                loss = loss_dec_sup(x, w, config, cache.batch(batch))
        tape.backward(loss)
        lr = schedule.lr(step)
        opt.step(lr)
        if step % schedule.log_every == 0 or step == schedule.updates - 1:
            log.record(step, loss.item(), lr)
    return w, log


def evaluate_unsup(images: Sequence[np.ndarray], w: Weights, config: RodecConfig) -> float:
    """Unsupervised loss over whole images (each image forms its own batch), averaged."""
    with no_grad():
        vals = [loss_dec_unsup(Tensor(img[None]), w, config).item() for img in images]
    return float(np.mean(vals))
