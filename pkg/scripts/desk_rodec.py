"""Train a small decomposition network on the sample photographs and report the loss curve.

    python scripts/desk_rodec.py --updates 2000 --out runs/rodec
"""

import argparse
import time

import numpy as np

from _samples import TRAIN, load
from ronet.autodiff import Tensor, no_grad
from ronet.checkpoint import checkpoint_save
from ronet.data import sample_patches
from ronet.optim import LRSchedule
from ronet.oracle import rank_one_defect
from ronet.rodec import RodecConfig, evaluate_unsup, rodec_forward, train_rodec
from ronet.ropnet import RopConfig
from ronet.training import ProgressLog, TrainSchedule


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--updates", type=int, default=2000)
    ap.add_argument("--L", type=int, default=3)
    ap.add_argument("--wide", type=int, default=16)
    ap.add_argument("--narrow", type=int, default=8)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--mode", choices=("unsupervised", "supervised"), default="unsupervised")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/rodec")
    args = ap.parse_args()

    images = [load(n) for n in TRAIN]
    cfg = RodecConfig(args.L, RopConfig(args.wide, args.narrow, 1))
    sched = TrainSchedule(args.updates, 8, 32, LRSchedule(args.lr, drop_at=int(0.8 * args.updates)), seed=args.seed)
    t = time.perf_counter()
    w, log = train_rodec(images, cfg, args.mode, sched, log=ProgressLog(f"{args.out}/loss.csv"))
    digest = checkpoint_save(w, f"{args.out}/rodec.ckpt")
    print(f"{args.updates} updates in {time.perf_counter() - t:.0f} s; weights {digest}")
    for k in range(0, len(log.losses), max(1, len(log.losses) // 10)):
        print(f"  step {k:6d}  loss {np.mean(log.losses[k:k + 20]):.5f}")
    print(f"full-image unsupervised loss: {evaluate_unsup(images, w, cfg):.5f}")
    probe = sample_patches(images, 32, 4, seed=1).source
    with no_grad():
        comps = rodec_forward(Tensor(probe), w, cfg).components
    print("max sigma2/sigma1 of components:", max(rank_one_defect(c.data[i, 0]) for c in comps for i in range(4)))


if __name__ == "__main__":
    main()
