"""Command-line surface: ``ronet <subcommand> ...``.

Subcommands::

    decompose    image -> rank-one component PNGs, residual PNG and a sidecar
    degrade      clean PNG directory -> paired hr/ and lr/ directories + manifest
    train-rodec  train the decomposition network -> checkpoint, loss CSV, manifest
    train-ronet  train the reconstruction network -> checkpoint, loss CSV, manifest
    restore      source PNG directory + checkpoints -> restored PNGs
    evaluate     restored vs truth directories -> metric CSV

Exit status is 0 on success, 2 for usage errors (bad flags, missing paths)
and 1 for any other failure; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save, file_hash
from .config import RunConfig, apply_overrides, load_config, preset, write_manifest
from .data import load_image, list_images, save_image, to_gray
from .degradation import DegradationSpec, degrade, realistic_sr
from .layers import ConfigurationError
from .metrics import PROTOCOLS, MetricReport, evaluate_pair
from .oracle import svd_decompose
from .rodec import evaluate_unsup, rodec_config_from_weights, rodec_forward, train_rodec
from .rorec import restore, rorec_config_from_weights, train_rorec
from .training import ProgressLog, step_seed

DEC_CKPT = "rodec.ckpt"
REC_CKPT = "rorec.ckpt"
LOSS_CSV = "loss.csv"
MANIFEST = "manifest.txt"
SIDECAR = "components.txt"


class UsageError(Exception):
    pass


def _existing(path: str | None, what: str, directory: bool = False) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists() or (directory and not p.is_dir()):
        raise UsageError(f"{what} {p} does not exist" + (" or is not a directory" if directory else ""))
    return p


def _match_channels(img: np.ndarray, channels: int) -> np.ndarray:
    if img.shape[0] == channels:
        return img
    if channels == 1:
        return to_gray(img)
    return np.repeat(img, channels, axis=0)


def _load_dir(directory: Path, channels: int | None = None) -> tuple[list[str], list[np.ndarray]]:
    paths = list_images(directory)
    if not paths:
        raise UsageError(f"no PNG images in {directory}")
    imgs = [load_image(p) for p in paths]
    if channels is not None:
        imgs = [_match_channels(i, channels) for i in imgs]
    return [p.name for p in paths], imgs


def _run_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(_existing(args.config, "config file"))
    else:
        cfg = preset(args.task)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return apply_overrides(cfg, overrides)


# decompose ------------------------------------------------------------------

def _to_png_range(c: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(c.min()), float(c.max())
    scale = hi - lo if hi > lo else 1.0
    return (c - lo) / scale, lo, scale


def cmd_decompose(args) -> int:
    src = _existing(args.input, "input image")
    out = Path(args.out)
    img = load_image(src).astype(np.float64)
    if args.method == "svd":
        dec = svd_decompose(img, args.L or 3)
        comps, resid = dec.components, dec.residual
        source = "svd"
    else:
        w = checkpoint_load(_existing(args.dec, "--dec checkpoint"))
        dcfg = rodec_config_from_weights(w)
        img = _match_channels(img, dcfg.rop.out_channels)
        units = args.L if args.L else dcfg.L
        with no_grad():
            dec = rodec_forward(Tensor(img[None], dtype=np.float64), w, dcfg, units=units)
        comps = [c.data[0].astype(np.float64) for c in dec.components]
        resid = dec.residual.data[0].astype(np.float64)
        source = f"learned {file_hash(args.dec)}"
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# value = offset + scale * pixel / 255; source = {source}",
             f"# {src.name} shape={'x'.join(map(str, img.shape))}"]
    bound = 0.0
    for name, arr in [(f"component{i + 1}.png", c) for i, c in enumerate(comps)] + [("residual.png", resid)]:
        unit, lo, scale = _to_png_range(arr)
        save_image(unit, out / name)
        lines.append(f"{name} offset={lo!r} scale={scale!r}")
        bound += 0.5 * scale / 255.0
    lines.append(f"max_abs_reconstruction_error = {bound!r}")
    (out / SIDECAR).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(comps)} component(s) and the residual to {out}")
    return 0


def read_sidecar(directory: str | Path) -> tuple[list[tuple[str, float, float]], float]:
    """Parse a decompose sidecar into (file, offset, scale) rows and the error bound."""
    rows, bound = [], float("nan")
    for line in (Path(directory) / SIDECAR).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if line.startswith("max_abs_reconstruction_error"):
            bound = float(line.split("=", 1)[1])
            continue
        name, off, sc = line.split()
        rows.append((name, float(off.split("=", 1)[1]), float(sc.split("=", 1)[1])))
    return rows, bound


def reassemble(directory: str | Path) -> np.ndarray:
    """Sum the de-quantized component and residual PNGs written by ``decompose``."""
    rows, _ = read_sidecar(directory)
    total = 0.0
    for name, off, sc in rows:
        total = total + off + sc * load_image(Path(directory) / name).astype(np.float64)
    return total


# degrade --------------------------------------------------------------------

def _spec_for(args, seed: int) -> DegradationSpec:
    if args.kind == "awgn":
        return DegradationSpec("awgn", sigma=args.sigma, seed=seed)
    if args.kind == "bicubic":
        return DegradationSpec("bicubic-down", scale=args.scale, seed=seed)
    return realistic_sr(args.scale, seed, blur_length=args.blur_length, peak=args.peak)


def cmd_degrade(args) -> int:
    src = _existing(args.input, "input directory", directory=True)
    out = Path(args.out)
    names, imgs = _load_dir(src)
    lines = [f"# kind={args.kind} seed={args.seed}; lr images clipped to [0,1] and quantized to 8 bits"]
    for i, (name, img) in enumerate(zip(names, imgs)):
        scale = 1 if args.kind == "awgn" else args.scale
        h, w = img.shape[1] - img.shape[1] % scale, img.shape[2] - img.shape[2] % scale
        hr = img[:, :h, :w]
        spec = _spec_for(args, step_seed(args.seed, i))
        save_image(hr, out / "hr" / name)
        save_image(degrade(hr, spec), out / "lr" / name)
        lines.append(f"{name} = {spec.describe()}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    print(f"degraded {len(names)} image(s) into {out}")
    return 0


# training -------------------------------------------------------------------

def cmd_train_rodec(args) -> int:
    cfg = _run_config(args)
    if args.images:
        cfg.images = args.images
    if args.out:
        cfg.out = args.out
    images = _existing(cfg.images, "--images directory", directory=True)
    if not cfg.out:
        raise UsageError("missing --out directory")
    out = Path(cfg.out)
    _, imgs = _load_dir(images, cfg.channels)
    dcfg = cfg.rodec_config()
    t0 = time.perf_counter()
    w, log = train_rodec(imgs, dcfg, cfg.dec_mode, cfg.dec_schedule(), cfg.init, log=ProgressLog(out / LOSS_CSV))
    digest = checkpoint_save(w, out / DEC_CKPT)
    write_manifest(out / MANIFEST, cfg, {
        "weights_hash": digest, "initial_loss": log.losses[0], "final_loss": log.losses[-1],
        "full_image_loss": evaluate_unsup(imgs, w, dcfg), "wall_seconds": round(time.perf_counter() - t0, 3),
    })
    print(f"rodec: loss {log.losses[0]:.6g} -> {log.losses[-1]:.6g}; weights {digest}")
    return 0


def _read_pairs(directory: Path, channels: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    hr_dir, lr_dir = _existing(str(directory / "hr"), "pairs hr/", True), _existing(str(directory / "lr"), "pairs lr/", True)
    hr_names = [p.name for p in list_images(hr_dir)]
    lr_names = [p.name for p in list_images(lr_dir)]
    if hr_names != lr_names:
        raise ConfigurationError(f"{directory}: hr/ and lr/ do not hold the same file names")
    _, hr = _load_dir(hr_dir, channels)
    _, lr = _load_dir(lr_dir, channels)
    return lr, hr


def cmd_train_ronet(args) -> int:
    cfg = _run_config(args)
    for key in ("images", "pairs", "out"):
        if getattr(args, key):
            setattr(cfg, key, getattr(args, key))
    if args.dec:
        cfg.dec_checkpoint = args.dec
    dec_path = _existing(cfg.dec_checkpoint, "--dec checkpoint")
    if not cfg.out:
        raise UsageError("missing --out directory")
    if bool(cfg.images) == bool(cfg.pairs):
        raise UsageError("give exactly one of --images (online noise) or --pairs (degraded dataset)")
    out = Path(cfg.out)
    dec_w = checkpoint_load(dec_path)
    dcfg = rodec_config_from_weights(dec_w)
    if dcfg.L != cfg.L or dcfg.rop.out_channels != cfg.channels:
        raise ConfigurationError(f"decomposition checkpoint has L={dcfg.L}, {dcfg.rop.out_channels} channel(s); "
                                 f"config asks for L={cfg.L}, {cfg.channels}")
    if cfg.images:
        _, targets = _load_dir(_existing(cfg.images, "--images directory", True), cfg.channels)
        sources = None
    else:
        sources, targets = _read_pairs(_existing(cfg.pairs, "--pairs directory", True), cfg.channels)
    rcfg = cfg.rorec_config()
    t0 = time.perf_counter()
    w, log = train_rorec(targets, dec_w, dcfg, rcfg, cfg.objective(sources is None), cfg.rec_schedule(),
                         sources=sources, init=cfg.init, log=ProgressLog(out / LOSS_CSV))
    digest = checkpoint_save(w, out / REC_CKPT)
    results = {"dec_weights_hash": file_hash(dec_path), "weights_hash": digest,
               "initial_loss": log.losses[0], "final_loss": log.losses[-1],
               "wall_seconds": round(time.perf_counter() - t0, 3)}
    if cfg.joint:
        results["joint_dec_weights_hash"] = checkpoint_save(dec_w, out / DEC_CKPT)
    write_manifest(out / MANIFEST, cfg, results)
    print(f"rorec: loss {log.losses[0]:.6g} -> {log.losses[-1]:.6g}; weights {digest}")
    return 0


# restore / evaluate ---------------------------------------------------------

def cmd_restore(args) -> int:
    src = _existing(args.source, "--source directory", directory=True)
    dec_path, rec_path = _existing(args.dec, "--dec checkpoint"), _existing(args.rec, "--rec checkpoint")
    out = Path(args.out)
    residual_scale = _run_config(args).residual_scale if (args.config or args.set) else 1.0
    dec_w, rec_w = checkpoint_load(dec_path), checkpoint_load(rec_path)
    dcfg = rodec_config_from_weights(dec_w)
    rcfg = rorec_config_from_weights(rec_w, residual_scale=residual_scale)
    names, imgs = _load_dir(src, rcfg.in_channels)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in zip(names, imgs):
        save_image(restore(img, dec_w, rec_w, dcfg, rcfg), out / name)
    (out / MANIFEST).write_text(
        f"source = {src}\ndec_weights_hash = {file_hash(dec_path)}\nrec_weights_hash = {file_hash(rec_path)}\n"
        f"residual_scale = {residual_scale!r}\nimages = {len(names)}\n")
    print(f"restored {len(names)} image(s) into {out}")
    return 0


def cmd_evaluate(args) -> int:
    restored = _existing(args.restored, "--restored directory", directory=True)
    truth = _existing(args.truth, "--truth directory", directory=True)
    report = MetricReport(args.protocol)
    paths = list_images(restored)
    if not paths:
        raise UsageError(f"no PNG images in {restored}")
    for p in paths:
        ref = truth / p.name
        if not ref.exists():
            raise ConfigurationError(f"{p.name}: no ground truth in {truth}")
        x, y = load_image(p), load_image(ref)
        if x.shape[0] != y.shape[0]:
            x, y = _match_channels(x, 1), _match_channels(y, 1)
        report.add(p.stem, *evaluate_pair(x, y, args.protocol))
    report.write_csv(args.out)
    print(f"{args.protocol}: mean psnr {report.mean_psnr():.4f} dB, mean ssim {report.mean_ssim():.4f} "
          f"over {len(report.rows)} image(s) -> {args.out}")
    return 0


# parser ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file (a run manifest also works)")
    p.add_argument("--task", default="denoise-gray", help="preset used when no --config is given")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ronet", description="rank-one decomposition and restoration networks")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("decompose", help="split an image into rank-one components and a residual")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("svd", "learned"), default="svd")
    p.add_argument("--L", type=int, help="components (default 3 for svd, every unit of a learned cascade)")
    p.add_argument("--dec", help="decomposition checkpoint for --method learned")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("degrade", help="build a paired dataset from clean images")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("awgn", "bicubic", "realistic"), default="awgn")
    p.add_argument("--sigma", type=float, default=25.0, help="noise level on the 0-255 scale")
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--blur-length", type=int, default=5)
    p.add_argument("--peak", type=float, default=255.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train-rodec", help="train the decomposition network")
    _config_flags(p)
    p.add_argument("--images")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_rodec)

    p = sub.add_parser("train-ronet", help="train the reconstruction network on a frozen decomposition")
    _config_flags(p)
    p.add_argument("--images", help="clean images; sources are noised online")
    p.add_argument("--pairs", help="directory with hr/ and lr/ from `degrade`")
    p.add_argument("--dec")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_ronet)

    p = sub.add_parser("restore", help="restore every PNG of a directory")
    _config_flags(p)
    p.add_argument("--source", required=True)
    p.add_argument("--dec", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("evaluate", help="score restored images against the ground truth")
    p.add_argument("--restored", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--protocol", choices=sorted(PROTOCOLS), default="all-pixels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("missing subcommand")
        return args.func(args)
    except UsageError as exc:
        print(f"ronet: usage error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 2
    except (ConfigurationError, CheckpointError, OSError, ValueError) as exc:
        print(f"ronet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
