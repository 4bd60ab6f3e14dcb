"""Reconstruction network: restores a target image from a rank-one decomposition.

Three residual branches share one layout (entry conv, residual blocks, exit
conv). The components branch reads the channel-concatenated rank-one
components, the residual branch reads the final residual, and the fusion
branch reads both branch outputs concatenated; the fusion upsampler produces
the estimate. Two auxiliary upsamplers map the component and residual branch
features to the target's low-rank part and residual for deep supervision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tape, Tensor, no_grad
from .data import sample_patches
from .degradation import awgn
from .layers import (ConfigurationError, Weights, bn, bn_params, clone, conv, conv_params, prefixed,
                     subweights, trainable)
from .optim import Adam, LRSchedule
from .rodec import RodecConfig, loss_dec_unsup, rodec_forward
from .training import ProgressLog, TrainSchedule, step_seed

BRANCHES = ("ros", "res", "fus")


@dataclass(frozen=True)
class RorecConfig:
    in_channels: int = 3
    n_components: int = 3
    depths: tuple[int, int, int] = (3, 6, 3)
    widths_ros: tuple[int, int] = (192, 48)
    widths_res: tuple[int, int] = (256, 64)
    widths_fus: tuple[int, int] = (256, 64)
    scale: int = 4
    use_bn: bool = True
    residual_scale: float = 1.0
    upsample_width: int = 256
    aux_width: int = 64
    deep_supervision: bool = True

    def __post_init__(self):
        if self.scale not in (1, 2, 4):
            raise ConfigurationError(f"scale must be 1, 2 or 4, got {self.scale}")
        if min(self.depths) < 1:
            raise ConfigurationError(f"every branch needs at least one residual block, got {self.depths}")
        if self.upsample_width % 4 or self.aux_width % 4:
            raise ConfigurationError("upsampler widths must be divisible by 4 for the x2 pixel shuffle")

    def widths(self, branch: str) -> tuple[int, int]:
        return {"ros": self.widths_ros, "res": self.widths_res, "fus": self.widths_fus}[branch]

    def depth(self, branch: str) -> int:
        return dict(zip(BRANCHES, self.depths))[branch]

    def branch_in(self, branch: str) -> int:
        if branch == "ros":
            return self.n_components * self.in_channels
        if branch == "res":
            return self.in_channels
        return self.widths_ros[1] + self.widths_res[1]


def _stages(scale: int) -> int:
    return {1: 0, 2: 1, 4: 2}[scale]


def init_branch(rng, cin: int, depth: int, widths: tuple[int, int], use_bn: bool, init: str) -> Weights:
    wide, narrow = widths
    w = prefixed(conv_params(rng, cin, narrow, (3, 3), init), "entry.")
    for b in range(depth):
        w.update(prefixed(conv_params(rng, narrow, wide, (3, 3), init), f"block{b}.conv1."))
        if use_bn:
            w.update(prefixed(bn_params(wide), f"block{b}.bn."))
        w.update(prefixed(conv_params(rng, wide, narrow, (3, 3), init), f"block{b}.conv2."))
    w.update(prefixed(conv_params(rng, narrow, narrow, (3, 3), init), "exit."))
    return w


def init_upsampler(rng, cin: int, width: int, out_channels: int, scale: int, init: str) -> Weights:
    w: Weights = {}
    c = cin
    for s in range(_stages(scale)):
        w.update(prefixed(conv_params(rng, c, width, (3, 3), init), f"stage{s}."))
        c = width // 4
    w.update(prefixed(conv_params(rng, c, out_channels, (9, 9), init), "final."))
    return w


def init_rorec(config: RorecConfig, rng: np.random.Generator, init: str = "xavier_uniform") -> Weights:
    w: Weights = {}
    for br in BRANCHES:
        w.update(prefixed(init_branch(rng, config.branch_in(br), config.depth(br), config.widths(br),
                                      config.use_bn, init), f"{br}."))
    w.update(prefixed(init_upsampler(rng, config.widths_fus[1], config.upsample_width, config.in_channels,
                                     config.scale, init), "fus_up."))
    if config.deep_supervision:
        for br in ("ros", "res"):
            w.update(prefixed(init_upsampler(rng, config.widths(br)[1], config.aux_width, config.in_channels,
                                             config.scale, init), f"{br}_up."))
    return w


def branch_forward(x: Tensor, w: Weights, depth: int, use_bn: bool, residual_scale: float = 1.0,
                   training: bool = False) -> Tensor:
    """Entry conv, ``depth`` residual blocks (conv, [BN], relu, conv, scaled skip), exit conv."""
    h = conv(x, w, "entry")
    for b in range(depth):
        base = f"block{b}"
        r = conv(h, w, base + ".conv1")
        if use_bn:
            r = bn(r, w, base + ".bn", training)
        r = conv(ad.relu(r), w, base + ".conv2")
        h = ad.add(h, ad.scalar_mul(r, residual_scale))
    return conv(h, w, "exit")


def upsample_forward(x: Tensor, w: Weights, scale: int) -> Tensor:
    """x2 stages of conv + pixel shuffle, then the 9x9 output conv; scale 1 keeps only the output conv."""
    stages = _stages(scale)
    present = sum(1 for k in w if k.startswith("stage") and k.endswith(".weight"))
    if present != stages:
        raise ConfigurationError(f"upsampler holds {present} x2 stages, scale {scale} needs {stages}")
    h = x
    for s in range(stages):
        h = ad.pixel_shuffle(conv(h, w, f"stage{s}"), 2)
    return conv(h, w, "final")


@dataclass
class RonetPass:
    output: Tensor
    ros_features: Tensor
    res_features: Tensor
    decomposition: object = None


def _check_compat(source: Tensor, dec_cfg: RodecConfig, cfg: RorecConfig) -> None:
    if dec_cfg.L != cfg.n_components:
        raise ConfigurationError(f"decomposition has {dec_cfg.L} components, reconstruction expects {cfg.n_components}")
    if dec_cfg.rop.out_channels != cfg.in_channels:
        raise ConfigurationError("decomposition and reconstruction disagree on the number of image channels")
    if source.ndim != 4 or source.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected (N, {cfg.in_channels}, H, W) source, got {source.shape}")


def rorec_pass(source: Tensor, dec_w: Weights, rec_w: Weights, dec_cfg: RodecConfig, cfg: RorecConfig,
               training: bool = False, joint: bool = False) -> RonetPass:
    _check_compat(source, dec_cfg, cfg)
    if joint:
        dec = rodec_forward(source, dec_w, dec_cfg)
    else:
        with no_grad():
            dec = rodec_forward(source, dec_w, dec_cfg)
    comps = ad.concat(dec.components, axis=1) if dec_cfg.L > 1 else dec.components[0]
    f_ros = branch_forward(comps, subweights(rec_w, "ros."), cfg.depths[0], cfg.use_bn, cfg.residual_scale, training)
    f_res = branch_forward(dec.residual, subweights(rec_w, "res."), cfg.depths[1], cfg.use_bn,
                           cfg.residual_scale, training)
    f_fus = branch_forward(ad.concat([f_ros, f_res], axis=1), subweights(rec_w, "fus."), cfg.depths[2],
                           cfg.use_bn, cfg.residual_scale, training)
    out = upsample_forward(f_fus, subweights(rec_w, "fus_up."), cfg.scale)
    return RonetPass(out, f_ros, f_res, dec)


def ronet_forward(source: Tensor, dec_w: Weights, rec_w: Weights, dec_cfg: RodecConfig, cfg: RorecConfig,
                  training: bool = False) -> Tensor:
    """Restored estimate of the target for a batch of sources."""
    return rorec_pass(source, dec_w, rec_w, dec_cfg, cfg, training).output


def gradient_surrogate(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference of horizontal plus vertical first differences (weight-free perceptual stand-in)."""
    d = ad.sub(pred, target)
    dx = ad.sub(d[:, :, :, 1:], d[:, :, :, :-1])
    dy = ad.sub(d[:, :, 1:, :], d[:, :, :-1, :])
    return ad.add(ad.loss_norm(dx, np.zeros(dx.shape, dx.dtype), 1), ad.loss_norm(dy, np.zeros(dy.shape, dy.dtype), 1))


@dataclass
class RecLoss:
    total: Tensor
    ros: Tensor | None
    res: Tensor | None
    fus: Tensor
    perceptual: Tensor | None = None
    dec: Tensor | None = None

    def values(self) -> dict[str, float]:
        out = {"total": self.total.item(), "fus": self.fus.item()}
        for name in ("ros", "res", "perceptual", "dec"):
            t = getattr(self, name)
            if t is not None:
                out[name] = t.item()
        return out


def target_parts(target: Tensor, dec_w: Weights, dec_cfg: RodecConfig) -> tuple[Tensor, Tensor]:
    """Low-rank part (sum of components) and residual of the target under the frozen decomposition."""
    with no_grad():
        dec = rodec_forward(target, dec_w, dec_cfg)
        return ad.add_n(dec.components), dec.residual


def loss_rec(source: Tensor, target: Tensor, dec_w: Weights, rec_w: Weights, dec_cfg: RodecConfig,
             cfg: RorecConfig, lam: float, eta: float = 0.0, alpha: int = 2, training: bool = True,
             joint: bool = False) -> RecLoss:
    """``lam * (L_ROs + L_Res) + (1 - lam) * L_Fus``.

    ``L_Fus`` is the alpha-norm between the estimate and the target plus
    ``eta`` times the gradient surrogate. With ``joint`` the decomposition is
    not frozen and its unsupervised loss is added.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"lambda must lie in [0, 1], got {lam}")
    if alpha not in (1, 2):
        raise ConfigurationError(f"alpha must be 1 or 2, got {alpha}")
    if eta < 0:
        raise ConfigurationError(f"eta must be non-negative, got {eta}")
    if lam > 0 and not any(k.startswith("ros_up.") for k in rec_w):
        raise ConfigurationError("lambda > 0 needs the auxiliary upsamplers (deep_supervision=True)")

    p = rorec_pass(source, dec_w, rec_w, dec_cfg, cfg, training, joint)
    if p.output.shape != target.shape:
        raise ShapeError(f"estimate shape {p.output.shape} does not match target {target.shape}")
    fus = ad.loss_norm(p.output, target, alpha)
    per = None
    if eta > 0:
        per = gradient_surrogate(p.output, target)
        fus = ad.add(fus, ad.scalar_mul(per, eta))

    ros = res = None
    if lam > 0:
        t_lr, t_res = target_parts(target, dec_w, dec_cfg)
        ros = ad.loss_norm(upsample_forward(p.ros_features, subweights(rec_w, "ros_up."), cfg.scale), t_lr, alpha)
        res = ad.loss_norm(upsample_forward(p.res_features, subweights(rec_w, "res_up."), cfg.scale), t_res, alpha)
        total = ad.add(ad.scalar_mul(ad.add(ros, res), lam), ad.scalar_mul(fus, 1.0 - lam))
    else:
        total = fus
    dec_loss = None
    if joint:
        dec_loss = loss_dec_unsup(source, dec_w, dec_cfg)
        total = ad.add(total, dec_loss)
    return RecLoss(total, ros, res, fus, per, dec_loss)


def rorec_config_from_weights(w: Weights, **overrides) -> RorecConfig:
    """Recover the architecture from weight names and shapes (``overrides`` for non-structural fields)."""
    def depth(br):
        return len({k.split(".")[1] for k in w if k.startswith(f"{br}.block")})

    def widths(br):
        return (w[f"{br}.block0.conv1.weight"].shape[0], w[f"{br}.entry.weight"].shape[0])

    stages = sum(1 for k in w if k.startswith("fus_up.stage") and k.endswith(".weight"))
    in_channels = w["fus_up.final.weight"].shape[0]
    fields = dict(
        in_channels=in_channels,
        n_components=w["ros.entry.weight"].shape[1] // in_channels,
        depths=(depth("ros"), depth("res"), depth("fus")),
        widths_ros=widths("ros"),
        widths_res=widths("res"),
        widths_fus=widths("fus"),
        scale={0: 1, 1: 2, 2: 4}[stages],
        use_bn="ros.block0.bn.gamma" in w,
        upsample_width=w["fus_up.stage0.weight"].shape[0] if stages else 256,
        aux_width=w["ros_up.stage0.weight"].shape[0] if stages and "ros_up.stage0.weight" in w else 64,
        deep_supervision="ros_up.final.weight" in w,
    )
    fields.update(overrides)
    return RorecConfig(**fields)


def default_rorec_schedule() -> TrainSchedule:
    return TrainSchedule(updates=1_000_000, batch=4, patch=16,
                         lr=LRSchedule(base=1e-4, decay_every=200_000, decay_factor=0.5))


@dataclass(frozen=True)
class RecObjective:
    lam: float = 0.0
    eta: float = 0.0
    alpha: int = 2
    noise_sigma: tuple[float, float] | None = None  # online AWGN range on the 0-255 scale
    joint: bool = False


def train_rorec(targets: Sequence[np.ndarray], dec_w: Weights, dec_cfg: RodecConfig, cfg: RorecConfig,
                objective: RecObjective, schedule: TrainSchedule | None = None,
                sources: Sequence[np.ndarray] | None = None, init: str = "xavier_uniform",
                weights: Weights | None = None, log: ProgressLog | None = None) -> tuple[Weights, ProgressLog]:
    """Adam training of the reconstruction network with the decomposition frozen.

    Sources come either from ``sources`` (paired with ``targets`` at the
    configured scale) or, for denoising, from fresh AWGN drawn every step.
    """
    if not targets:
        raise ConfigurationError("training needs at least one target image")
    if sources is None:
        if objective.noise_sigma is None or cfg.scale != 1:
            raise ConfigurationError("without paired sources, online noise (scale 1) must be configured")
    else:
        if len(sources) != len(targets):
            raise ConfigurationError(f"{len(sources)} sources for {len(targets)} targets: dataset is not paired")
        for s, t in zip(sources, targets):
            if (t.shape[0] != s.shape[0] or t.shape[1] < s.shape[1] * cfg.scale
                    or t.shape[2] < s.shape[2] * cfg.scale):
                raise ConfigurationError(f"source {s.shape} and target {t.shape} are not paired at scale {cfg.scale}")
    schedule = schedule or default_rorec_schedule()
    rng = np.random.default_rng(step_seed(schedule.seed, 0, stream=2))
    w = clone(weights) if weights is not None else init_rorec(cfg, rng, init)
    params = trainable(w)
    if objective.joint:
        params.update({"dec." + k: v for k, v in trainable(dec_w).items()})
    opt = Adam(params)
    log = log or ProgressLog()

    for step in range(schedule.updates):
        seed = step_seed(schedule.seed, step)
        if sources is None:
            batch = sample_patches(targets, schedule.patch, schedule.batch, seed)
            tgt = batch.source
            lo, hi = objective.noise_sigma
            noise_rng = np.random.default_rng(step_seed(schedule.seed, step, stream=3))
            sigmas = noise_rng.uniform(lo, hi, size=len(tgt)) if hi > lo else np.full(len(tgt), lo)
            src = np.stack([awgn(t, s, int(noise_rng.integers(2**63))) for t, s in zip(tgt, sigmas)])
        else:
            batch = sample_patches(sources, schedule.patch, schedule.batch, seed, targets=targets, scale=cfg.scale)
            src, tgt = batch.source, batch.target
        opt.zero_grad()
        with Tape() as tape:
            loss = loss_rec(Tensor(src.astype(np.float32)), Tensor(tgt.astype(np.float32)), dec_w, w, dec_cfg, cfg,
                            objective.lam, objective.eta, objective.alpha, training=True, joint=objective.joint)
        tape.backward(loss.total)
        lr = schedule.lr(step)
        opt.step(lr)
        if step % schedule.log_every == 0 or step == schedule.updates - 1:
            log.record(step, loss.total.item(), lr)
    return w, log


def restore(source: np.ndarray, dec_w: Weights, rec_w: Weights, dec_cfg: RodecConfig, cfg: RorecConfig) -> np.ndarray:
    """Inference on one (C, H, W) image or an (N, C, H, W) batch; BN uses running statistics."""
    single = source.ndim == 3
    x = Tensor(source[None] if single else source, dtype=np.float32)
    with no_grad():
        out = ronet_forward(x, dec_w, rec_w, dec_cfg, cfg, training=False).data
    return out[0] if single else out


def identity_rorec(cfg: RorecConfig) -> Weights:
    """Hand-set weights whose estimate equals the source exactly (up to float rounding).

    Every residual block is silenced (second conv zero), the component branch
    sums the components channel-wise, the residual branch copies the residual,
    and fusion adds the two. Needs scale 1 and narrow widths >= channels; used
    for smoke-testing the restore/evaluate path.
    """
    if cfg.scale != 1:
        raise ConfigurationError("an exact identity reconstruction exists only at scale 1")
    c = cfg.in_channels
    if min(cfg.widths_ros[1], cfg.widths_res[1], cfg.widths_fus[1]) < c:
        raise ConfigurationError("narrow widths must be at least the channel count")
    w = init_rorec(cfg, np.random.default_rng(0))
    for k, v in w.items():
        if v.requires_grad:
            v.data[...] = 0.0
    for k in w:
        if k.endswith(".bn.gamma"):
            w[k].data[...] = 1.0

    def center(name: str, pairs):
        kern = w[name].data
        for o, i in pairs:
            kern[o, i, kern.shape[2] // 2, kern.shape[3] // 2] = 1.0

    center("ros.entry.weight", [(ch, l * c + ch) for l in range(cfg.n_components) for ch in range(c)])
    center("res.entry.weight", [(ch, ch) for ch in range(c)])
    nr = cfg.widths_ros[1]
    center("fus.entry.weight", [(ch, ch) for ch in range(c)] + [(ch, nr + ch) for ch in range(c)])
    for br in BRANCHES:
        center(f"{br}.exit.weight", [(ch, ch) for ch in range(c)])
    center("fus_up.final.weight", [(ch, ch) for ch in range(c)])
    if cfg.deep_supervision:
        center("ros_up.final.weight", [(ch, ch) for ch in range(c)])
        center("res_up.final.weight", [(ch, ch) for ch in range(c)])
    return w
