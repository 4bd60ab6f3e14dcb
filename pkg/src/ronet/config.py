"""Run configuration: task presets, flat ``key = value`` files and run manifests."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .layers import ConfigurationError
from .optim import LRSchedule
from .rodec import RodecConfig
from .ropnet import RopConfig
from .rorec import RecObjective, RorecConfig
from .training import TrainSchedule

RESULT_PREFIX = "result."


@dataclass
class RunConfig:
    task: str = "denoise-gray"
    seed: int = 0
    channels: int = 1
    scale: int = 1
    # decomposition network
    L: int = 1
    rop_wide: int = 256
    rop_narrow: int = 64
    rop_blocks: int = 3
    init: str = "xavier_uniform"
    dec_mode: str = "unsupervised"
    dec_updates: int = 500_000
    dec_batch: int = 16
    dec_patch: int = 64
    dec_lr: float = 1e-4
    dec_lr_drop_at: int = 400_000
    dec_lr_drop_factor: float = 0.1
    # reconstruction network
    rec_depths: tuple = (3, 6, 3)
    rec_ros_widths: tuple = (96, 48)
    rec_res_widths: tuple = (128, 64)
    rec_fus_widths: tuple = (128, 64)
    use_bn: bool = True
    residual_scale: float = 1.0
    upsample_width: int = 256
    aux_width: int = 64
    rec_updates: int = 1_000_000
    rec_batch: int = 4
    rec_patch: int = 64
    rec_lr: float = 1e-4
    rec_lr_decay_every: int = 200_000
    rec_lr_decay_factor: float = 0.5
    lam: float = 0.0
    eta: float = 0.0
    alpha: int = 2
    noise_sigma_min: float = 0.0
    noise_sigma_max: float = 75.0
    joint: bool = False
    log_every: int = 1
    # paths
    images: str = ""
    pairs: str = ""
    dec_checkpoint: str = ""
    out: str = ""

    def rop_config(self) -> RopConfig:
        return RopConfig(self.rop_wide, self.rop_narrow, self.channels, blocks_per_branch=self.rop_blocks)

    def rodec_config(self) -> RodecConfig:
        return RodecConfig(L=self.L, rop=self.rop_config())

    def rorec_config(self) -> RorecConfig:
        return RorecConfig(
            in_channels=self.channels, n_components=self.L, depths=tuple(self.rec_depths),
            widths_ros=tuple(self.rec_ros_widths), widths_res=tuple(self.rec_res_widths),
            widths_fus=tuple(self.rec_fus_widths), scale=self.scale, use_bn=self.use_bn,
            residual_scale=self.residual_scale, upsample_width=self.upsample_width,
            aux_width=self.aux_width, deep_supervision=self.lam > 0,
        )

    def dec_schedule(self) -> TrainSchedule:
        return TrainSchedule(self.dec_updates, self.dec_batch, self.dec_patch,
                             LRSchedule(self.dec_lr, drop_at=self.dec_lr_drop_at, drop_factor=self.dec_lr_drop_factor),
                             seed=self.seed, log_every=self.log_every)

    def rec_schedule(self) -> TrainSchedule:
        return TrainSchedule(self.rec_updates, self.rec_batch, self.rec_patch,
                             LRSchedule(self.rec_lr, decay_every=self.rec_lr_decay_every,
                                        decay_factor=self.rec_lr_decay_factor),
                             seed=self.seed, log_every=self.log_every)

    def objective(self, online_noise: bool) -> RecObjective:
        sigma = (self.noise_sigma_min, self.noise_sigma_max) if online_noise else None
        return RecObjective(self.lam, self.eta, self.alpha, sigma, self.joint)


_SR = dict(channels=3, scale=4, L=3, rec_ros_widths=(192, 48), rec_res_widths=(256, 64),
           rec_fus_widths=(256, 64), lam=0.5, eta=1e-3, alpha=1, rec_patch=16, rec_batch=4)
_DENOISE = dict(scale=1, L=1, rec_ros_widths=(96, 48), rec_res_widths=(128, 64), rec_fus_widths=(128, 64),
                lam=0.0, eta=0.0, alpha=2, rec_patch=64, rec_batch=4, noise_sigma_min=0.0, noise_sigma_max=75.0)

PRESETS: dict[str, dict] = {
    "sr-noisefree": dict(_SR),
    "sr-realistic": dict(_SR),
    "denoise-gray": dict(_DENOISE, channels=1),
    "denoise-color": dict(_DENOISE, channels=3),
}


def preset(task: str, **overrides) -> RunConfig:
    if task not in PRESETS:
        raise ConfigurationError(f"unknown task preset {task!r}; expected one of {sorted(PRESETS)}")
    cfg = RunConfig(task=task, **PRESETS[task])
    return apply_overrides(cfg, overrides)


def _field_kinds() -> dict[str, type]:
    base = RunConfig()
    return {f.name: type(getattr(base, f.name)) for f in dataclasses.fields(RunConfig)}


def _int(text: str) -> int:
    """Integers may be written in float notation (``5e5``) as long as they are whole."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise
        return int(value)


def parse_value(key: str, text: str):
    kinds = _field_kinds()
    if key not in kinds:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    kind = kinds[key]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is tuple:
            return tuple(_int(p) for p in text.replace("(", "").replace(")", "").split(",") if p.strip())
        if kind is int:
            return _int(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigurationError(f"bad value {text!r} for {key} (expected {kind.__name__})") from exc


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    kinds = _field_kinds()
    for key, value in overrides.items():
        if key not in kinds:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        if isinstance(value, str) and kinds[key] is not str:
            value = parse_value(key, value)
        setattr(cfg, key, tuple(value) if kinds[key] is tuple else value)
    return cfg


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_pairs(path: str | Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def load_config(path: str | Path) -> RunConfig:
    """Read a config file (or a run manifest; its ``result.*`` lines are ignored).

    A ``task`` line selects the preset the remaining keys override.
    """
    pairs = {k: v for k, v in read_pairs(path).items() if not k.startswith(RESULT_PREFIX)}
    cfg = preset(pairs.pop("task", "denoise-gray"))
    return apply_overrides(cfg, pairs)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {format_value(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


def write_manifest(path: str | Path, cfg: RunConfig, results: dict) -> None:
    """Every configuration field followed by ``result.*`` lines (hashes, final losses, timings)."""
    text = "# run manifest: rerun with --config <this file>\n" + dump_config(cfg)
    text += "".join(f"{RESULT_PREFIX}{k} = {format_value(v)}\n" for k, v in results.items())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
