"""Acceptance criteria 1-10. Each test prints one ``[criterion N] PASS|FAIL ...`` line.

Run just this file with ``pytest tests/test_acceptance.py -s`` to see the lines;
criteria 6 and 7 train small networks and take several minutes on one core.
"""

import math
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest

from ronet import autodiff as ad
from ronet.autodiff import Tape, Tensor, default_dtype, gradcheck
from ronet.checkpoint import checkpoint_load, checkpoint_save, decode, encode
from ronet.data import sample_patches, to_gray
from ronet.degradation import awgn
from ronet.layers import set_trainable, subweights, trainable
from ronet.metrics import psnr, rgb_to_y, shifted_max_psnr, ssim
from ronet.optim import LRSchedule
from ronet.oracle import rank_one_defect, svd_decompose
from ronet.rodec import RodecConfig, init_rodec, loss_dec_unsup, rodec_forward, train_rodec
from ronet.ropnet import RopConfig
from ronet.rorec import (RecObjective, RorecConfig, init_rorec, loss_rec, restore, rorec_pass, ronet_forward,
                         target_parts, train_rorec, upsample_forward)
from ronet.training import TrainSchedule
from gradcases import CASES, PRIMITIVES, make_case
from oracles import svd_tail_energy


def report(n: int, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    ok = ok and elapsed < budget
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.1f} s, budget {budget:.0f} s)")
    assert ok, detail


def _gray(name):
    from skimage import data as sd
    a = np.asarray(getattr(sd, name)()).astype(np.float32) / 255.0
    return to_gray(a.transpose(2, 0, 1)) if a.ndim == 3 else a[None]


# 1 -------------------------------------------------------------------------------

def test_criterion_1_rank_one_construction():
    t = time.perf_counter()
    worst = 0.0
    for init in range(5):
        cfg = RodecConfig(3, RopConfig(16, 8, 3, blocks_per_branch=2))
        w = init_rodec(cfg, np.random.default_rng(100 + init), "msra_normal" if init % 2 else "xavier_uniform")
        r = np.random.default_rng(init)
        for _ in range(50):
            h, wd = (int(v) for v in r.integers(4, 24, size=2))
            x = r.standard_normal((1, 3, h, wd)).astype(np.float32)
            for comp in rodec_forward(Tensor(x), w, cfg).components:
                for sl in comp.data[0]:
                    worst = max(worst, rank_one_defect(sl))
    report(1, worst < 1e-5, f"max sigma2/sigma1 = {worst:.2e} over 50 inputs x 5 inits", time.perf_counter() - t, 30)


# 2 -------------------------------------------------------------------------------

def test_criterion_2_decomposition_identity():
    t = time.perf_counter()
    worst = 0.0
    r = np.random.default_rng(2)
    for L in (1, 3, 6):
        for channels in (1, 3):
            cfg = RodecConfig(L, RopConfig(8, 4, channels, blocks_per_branch=2))
            w = init_rodec(cfg, r)
            x = r.random((2, channels, 17, 13)).astype(np.float32)
            d = rodec_forward(Tensor(x), w, cfg)
            recon = sum(c.data.astype(np.float64) for c in d.components) + d.residual.data.astype(np.float64)
            worst = max(worst, float(np.abs(x - recon).max()))
    report(2, worst < 1e-5, f"max |x - sum X_l - E_L| = {worst:.2e} for L in (1, 3, 6)", time.perf_counter() - t, 10)


# 3 -------------------------------------------------------------------------------

def test_criterion_3_eckart_young():
    t = time.perf_counter()
    worst = 0.0
    r = np.random.default_rng(3)
    for _ in range(50):
        m = r.standard_normal((16, 16))
        for L in (1, 2, 3):
            got = float(np.linalg.norm(svd_decompose(m, L).residual))
            want = svd_tail_energy(m, L)
            worst = max(worst, abs(got - want) / want)
    report(3, worst < 1e-5, f"max relative residual-energy error = {worst:.2e}", time.perf_counter() - t, 30)


# 4 -------------------------------------------------------------------------------

def test_criterion_4_gradient_suite():
    import zlib
    t = time.perf_counter()
    failures = []
    worst = {np.float32: 0.0, np.float64: 0.0}
    for dtype, tol in ((np.float32, 1e-3), (np.float64, 1e-6)):
        for name in PRIMITIVES:
            r = np.random.default_rng(zlib.crc32(name.encode()) + 17)
            for _ in range(CASES):
                fn, inputs = make_case(name, r)
                err = max(gradcheck(fn, inputs, dtype=dtype))
                worst[dtype] = max(worst[dtype], err)
                if err >= tol:
                    failures.append((name, np.dtype(dtype).name, err))
    detail = (f"{len(PRIMITIVES)} primitives x {CASES} cases; worst f32 {worst[np.float32]:.1e}, "
              f"f64 {worst[np.float64]:.1e}; failures {failures[:3]}")
    report(4, not failures, detail, time.perf_counter() - t, 300)


# 5 -------------------------------------------------------------------------------

def test_criterion_5_loss_algebra():
    t = time.perf_counter()
    r = np.random.default_rng(5)
    dec_cfg = RodecConfig(3, RopConfig(6, 4, 1, blocks_per_branch=1))
    dec_w = init_rodec(dec_cfg, r)
    cfg = RorecConfig(in_channels=1, n_components=3, depths=(1, 2, 1), widths_ros=(8, 4), widths_res=(8, 4),
                      widths_fus=(8, 4), scale=2, upsample_width=8, aux_width=8)
    worst = 0.0
    with default_dtype(np.float64):
        for trial in range(5):
            w = init_rorec(cfg, r)
            src, tgt = r.random((2, 1, 6, 6)), r.random((2, 1, 12, 12))
            lam = float(r.uniform())
            got = loss_rec(Tensor(src), Tensor(tgt), dec_w, w, dec_cfg, cfg, lam).total.item()
            # independent three-term sum from the raw network pieces
            p = rorec_pass(Tensor(src), dec_w, w, dec_cfg, cfg, training=True)
            lr_t, res_t = target_parts(Tensor(tgt), dec_w, dec_cfg)
            ros = upsample_forward(p.ros_features, subweights(w, "ros_up."), 2).data
            res = upsample_forward(p.res_features, subweights(w, "res_up."), 2).data
            want = (lam * (np.mean((ros - lr_t.data) ** 2) + np.mean((res - res_t.data) ** 2))
                    + (1 - lam) * np.mean((p.output.data - tgt) ** 2))
            worst = max(worst, abs(got - want))

        w = init_rorec(cfg, r)
        set_trainable(dec_w, True)
        src, tgt = Tensor(r.random((2, 1, 6, 6))), Tensor(r.random((2, 1, 12, 12)))
        with Tape() as tape:
            loss = loss_rec(src, tgt, dec_w, w, dec_cfg, cfg, lam=1.0)
        tape.backward(loss.total)
    fus_grad = max(float(np.abs(v.grad).max()) if v.grad is not None else 0.0
                   for k, v in trainable(w).items() if k.startswith("fus"))
    dec_grad = max(float(np.abs(v.grad).max()) if v.grad is not None else 0.0 for v in trainable(dec_w).values())
    ok = worst < 1e-6 and fus_grad == 0.0 and dec_grad == 0.0
    report(5, ok, f"|loss_rec - three-term sum| = {worst:.1e}; lambda=1 fusion grad {fus_grad}; "
                  f"frozen decomposition grad {dec_grad}", time.perf_counter() - t, 60)


# 6 and 7: desk-scale training ---------------------------------------------------

DESK_IMAGES = ("camera", "astronaut", "coffee", "chelsea")
DESK_DEC = RodecConfig(3, RopConfig(16, 8, 1))
DESK_DEC_SCHEDULE = TrainSchedule(updates=2000, batch=8, patch=32,
                                  lr=LRSchedule(1e-3, drop_at=1600, drop_factor=0.1), seed=0)
DESK_REC = RorecConfig(in_channels=1, n_components=3, widths_ros=(48, 24), widths_res=(64, 32),
                       widths_fus=(64, 32), scale=1, deep_supervision=False)
DESK_REC_SCHEDULE = TrainSchedule(updates=2000, batch=4, patch=32,
                                  lr=LRSchedule(1e-3, drop_at=1600, drop_factor=0.1), seed=0)


@pytest.fixture(scope="module")
def desk_rodec():
    images = [_gray(n) for n in DESK_IMAGES]
    t = time.perf_counter()
    w, log = train_rodec(images, DESK_DEC, schedule=DESK_DEC_SCHEDULE)
    return images, w, log, time.perf_counter() - t


@pytest.mark.slow
def test_criterion_6_desk_rodec(desk_rodec):
    images, w, log, first_run = desk_rodec
    t = time.perf_counter()
    probe = Tensor(sample_patches(images, 32, 64, seed=606).source)
    w0, _ = train_rodec(images, DESK_DEC, schedule=TrainSchedule(0, 8, 32, seed=0))  # the initial weights
    with ad.no_grad():
        initial = loss_dec_unsup(probe, w0, DESK_DEC).item()
        final = loss_dec_unsup(probe, w, DESK_DEC).item()
    w2, log2 = train_rodec(images, DESK_DEC, schedule=DESK_DEC_SCHEDULE)
    same = log.losses == log2.losses and all(w[k].data.tobytes() == w2[k].data.tobytes() for k in w)
    ok = final <= 0.5 * initial and same
    report(6, ok, f"L_unsup {initial:.4f} -> {final:.4f} (ratio {final / initial:.3f}); "
                  f"training log {log.losses[0]:.4f} -> {np.mean(log.losses[-50:]):.4f}; bit-reproducible {same}",
           first_run + time.perf_counter() - t, 900)


@pytest.mark.slow
def test_criterion_7_desk_denoising(desk_rodec):
    images, dec_w, _, _ = desk_rodec
    t = time.perf_counter()
    rec_w, log = train_rorec(images, dec_w, DESK_DEC, DESK_REC, RecObjective(0.0, 0.0, 2, noise_sigma=(25, 25)),
                             DESK_REC_SCHEDULE)
    clean = sample_patches([_gray("rocket")], 32, 64, seed=707).source
    noisy = np.stack([awgn(c, 25, 7000 + i) for i, c in enumerate(clean)]).astype(np.float32)
    out = restore(noisy, dec_w, rec_w, DESK_DEC, DESK_REC)
    p_noisy = float(np.mean([psnr(a, b) for a, b in zip(noisy, clean)]))
    p_rest = float(np.mean([psnr(a, b) for a, b in zip(out, clean)]))
    report(7, p_rest - p_noisy >= 0.5, f"held-out PSNR noisy {p_noisy:.2f} dB -> restored {p_rest:.2f} dB "
                                       f"(gain {p_rest - p_noisy:+.2f} dB)", time.perf_counter() - t, 1800)


# 8 -------------------------------------------------------------------------------

def test_criterion_8_metric_protocols():
    t = time.perf_counter()
    r = np.random.default_rng(8)
    x = r.random((32, 32)) * 200
    offset = psnr(x, x + 16, data_range=255.0)
    s = ssim(x, x, data_range=255.0)
    y = r.random((3, 160, 160))
    shifted = np.roll(y, (-5, 0), axis=(1, 2))
    value, arg = shifted_max_psnr(shifted, y)
    white = float(rgb_to_y(np.ones((3, 4, 4)))[0, 0])
    ok = abs(offset - 24.05) <= 0.01 and abs(s - 1) < 1e-9 and arg == (5, 0) and math.isinf(value) and white == 235.0
    report(8, ok, f"offset PSNR {offset:.4f} dB; ssim(x,x) {s:.12f}; shift {arg} value {value}; white Y {white}",
           time.perf_counter() - t, 10)


# 9 -------------------------------------------------------------------------------

def test_criterion_9_serialization(tmp_path):
    t = time.perf_counter()
    r = np.random.default_rng(9)
    dec_cfg = RodecConfig(2, RopConfig(6, 4, 3, blocks_per_branch=1))
    cfg = RorecConfig(in_channels=3, n_components=2, depths=(1, 1, 1), widths_ros=(8, 4), widths_res=(8, 4),
                      widths_fus=(8, 4), scale=2, upsample_width=8, aux_width=8)
    dec_w, rec_w = init_rodec(dec_cfg, r), init_rorec(cfg, r)
    checkpoint_save(dec_w, tmp_path / "dec.ckpt")
    checkpoint_save(rec_w, tmp_path / "rec.ckpt")
    round_trip = all(checkpoint_load(tmp_path / "rec.ckpt")[k].data.tobytes() == v.data.tobytes()
                     for k, v in rec_w.items()) and encode(decode(encode(dec_w))) == encode(dec_w)
    x = r.random((2, 3, 7, 7)).astype(np.float32)
    np.save(tmp_path / "x.npy", x)
    local = restore(x, dec_w, rec_w, dec_cfg, cfg)
    script = textwrap.dedent(f"""
        import numpy as np
        from ronet.checkpoint import checkpoint_load
        from ronet.rodec import rodec_config_from_weights
        from ronet.rorec import restore, rorec_config_from_weights
        d = checkpoint_load({str(tmp_path / 'dec.ckpt')!r})
        w = checkpoint_load({str(tmp_path / 'rec.ckpt')!r})
        x = np.load({str(tmp_path / 'x.npy')!r})
        np.save({str(tmp_path / 'y.npy')!r}, restore(x, d, w, rodec_config_from_weights(d), rorec_config_from_weights(w)))
    """)
    subprocess.run([sys.executable, "-c", script], check=True)
    remote = np.load(tmp_path / "y.npy")
    same = remote.tobytes() == local.tobytes()
    report(9, round_trip and same, f"round trip bit-identical {round_trip}; cross-process outputs identical {same}",
           time.perf_counter() - t, 10)


# 10 ------------------------------------------------------------------------------

def test_criterion_10_noise_separation():
    t = time.perf_counter()
    names = ("camera", "astronaut", "coffee", "chelsea", "rocket", "brick", "grass", "moon", "coins", "clock")
    wins, rows = 0, []
    for i, name in enumerate(names):
        clean = _gray(name)[0].astype(np.float64)
        noisy = awgn(clean, 30, 1000 + i)
        dc, dn = svd_decompose(clean, 3), svd_decompose(noisy, 3)
        lr_psnr = psnr(dn.low_rank(), dc.low_rank())
        res_psnr = psnr(dn.residual, dc.residual)
        wins += lr_psnr > res_psnr
        rows.append(f"{name} {lr_psnr:.1f}/{res_psnr:.1f}")
    report(10, wins >= 9, f"low-rank beats residual in {wins}/10 ({', '.join(rows)})", time.perf_counter() - t, 60)
