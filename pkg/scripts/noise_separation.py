"""How AWGN distributes between the low-rank part and the residual of an SVD decomposition.

    python scripts/noise_separation.py --sigma 30 --L 3 --components 20
"""

import argparse

import numpy as np

from _samples import EXTRA, HELD_OUT, TRAIN, load
from ronet.degradation import awgn
from ronet.metrics import psnr, ro_component_curve
from ronet.oracle import svd_decompose


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sigma", type=float, default=30.0)
    ap.add_argument("--L", type=int, default=3)
    ap.add_argument("--components", type=int, default=20)
    args = ap.parse_args()

    print(f"{'image':10s} {'low-rank':>9s} {'residual':>9s}   (PSNR vs the clean image's parts, dB)")
    curves = []
    for i, name in enumerate(TRAIN + HELD_OUT + EXTRA):
        clean = load(name)[0].astype(np.float64)
        noisy = awgn(clean, args.sigma, i)
        dc, dn = svd_decompose(clean, args.L), svd_decompose(noisy, args.L)
        print(f"{name:10s} {psnr(dn.low_rank(), dc.low_rank()):9.2f} {psnr(dn.residual, dc.residual):9.2f}")
        curves.append(ro_component_curve(noisy, clean, args.components))
    mean = np.mean(curves, axis=0)
    print("\nmean PSNR of the i-th rank-one component (noisy vs clean):")
    for i, v in enumerate(mean, 1):
        print(f"  {i:3d} {v:7.2f}")


if __name__ == "__main__":
    main()
