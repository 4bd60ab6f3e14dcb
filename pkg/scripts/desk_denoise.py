"""Desk-scale gray denoising: frozen decomposition network + reconstruction network.

    python scripts/desk_denoise.py --dec-updates 2000 --rec-updates 2000 --sigma 25
"""

import argparse
import time

import numpy as np

from _samples import HELD_OUT, TRAIN, load
from ronet.checkpoint import checkpoint_save
from ronet.data import sample_patches
from ronet.degradation import awgn
from ronet.metrics import psnr, ssim
from ronet.optim import LRSchedule
from ronet.rodec import RodecConfig, train_rodec
from ronet.ropnet import RopConfig
from ronet.rorec import RecObjective, RorecConfig, restore, train_rorec
from ronet.training import ProgressLog, TrainSchedule


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dec-updates", type=int, default=2000)
    ap.add_argument("--rec-updates", type=int, default=2000)
    ap.add_argument("--sigma", type=float, default=25.0)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--patch", type=int, default=32)
    ap.add_argument("--out", default="runs/denoise")
    args = ap.parse_args()

    images = [load(n) for n in TRAIN]
    dcfg = RodecConfig(3, RopConfig(16, 8, 1))
    t = time.perf_counter()
    dec_w, _ = train_rodec(images, dcfg, schedule=TrainSchedule(
        args.dec_updates, 8, 32, LRSchedule(args.lr, drop_at=int(0.8 * args.dec_updates))))
    print(f"decomposition trained in {time.perf_counter() - t:.0f} s")
    rcfg = RorecConfig(in_channels=1, n_components=3, widths_ros=(48, 24), widths_res=(64, 32),
                       widths_fus=(64, 32), scale=1, deep_supervision=False)
    t = time.perf_counter()
    rec_w, log = train_rorec(images, dec_w, dcfg, rcfg, RecObjective(0, 0, 2, noise_sigma=(args.sigma, args.sigma)),
                             TrainSchedule(args.rec_updates, 4, args.patch,
                                           LRSchedule(args.lr, drop_at=int(0.8 * args.rec_updates))),
                             log=ProgressLog(f"{args.out}/loss.csv"))
    print(f"reconstruction trained in {time.perf_counter() - t:.0f} s, final loss {np.mean(log.losses[-50:]):.5f}")
    checkpoint_save(dec_w, f"{args.out}/rodec.ckpt")
    checkpoint_save(rec_w, f"{args.out}/rorec.ckpt")

    clean = sample_patches([load(n) for n in HELD_OUT], 64, 32, seed=7).source
    noisy = np.stack([awgn(c, args.sigma, 100 + i) for i, c in enumerate(clean)]).astype(np.float32)
    out = restore(noisy, dec_w, rec_w, dcfg, rcfg)
    for label, est in (("noisy", noisy), ("restored", out)):
        p = np.mean([psnr(a, b) for a, b in zip(est, clean)])
        s = np.mean([ssim(a[0], b[0]) for a, b in zip(est, clean)])
        print(f"{label:9s} PSNR {p:.2f} dB  SSIM {s:.4f}")


if __name__ == "__main__":
    main()
