import numpy as np
import pytest

from ronet import autodiff as ad
from ronet.autodiff import Tape, Tensor, default_dtype, gradcheck
from ronet.layers import ConfigurationError, set_trainable, trainable
from ronet.optim import LRSchedule
from ronet.rodec import RodecConfig, init_rodec, rodec_forward
from ronet.ropnet import RopConfig
from ronet.rorec import (RecObjective, RorecConfig, gradient_surrogate, identity_rorec, init_rorec, loss_rec,
                         restore, rorec_config_from_weights, rorec_pass, ronet_forward, target_parts, train_rorec)
from ronet.training import TrainSchedule

DEC = RodecConfig(2, RopConfig(4, 3, 1, blocks_per_branch=1))


def small(scale=1, **kw):
    base = dict(in_channels=1, n_components=2, depths=(1, 2, 1), widths_ros=(6, 4), widths_res=(6, 4),
                widths_fus=(6, 4), scale=scale, upsample_width=8, aux_width=8)
    base.update(kw)
    return RorecConfig(**base)


@pytest.fixture
def dec_w():
    return init_rodec(DEC, np.random.default_rng(11))


@pytest.mark.parametrize("scale", [1, 2, 4])
def test_output_shape_per_scale(rng, dec_w, scale):
    cfg = small(scale)
    w = init_rorec(cfg, rng)
    out = ronet_forward(Tensor(rng.random((2, 1, 5, 6))), dec_w, w, DEC, cfg)
    assert out.shape == (2, 1, 5 * scale, 6 * scale)
    # at scale 1 there are no x2 stages, so their widths are not recorded in the weights
    extra = {} if scale > 1 else dict(upsample_width=8, aux_width=8)
    assert rorec_config_from_weights(w, **extra) == cfg


def test_weight_layout(rng):
    cfg = small(4)
    w = init_rorec(cfg, rng)
    assert w["ros.entry.weight"].shape == (4, 2, 3, 3)
    assert w["fus.entry.weight"].shape == (4, 8, 3, 3)
    assert w["fus_up.stage1.weight"].shape == (8, 2, 3, 3)
    assert w["fus_up.final.weight"].shape == (1, 2, 9, 9)
    assert "ros.block0.bn.gamma" in w
    assert "res_up.final.weight" in w
    assert not any(k.startswith("ros_up") for k in init_rorec(small(1, deep_supervision=False), rng))
    assert not any(".bn." in k for k in init_rorec(small(1, use_bn=False), rng))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        small(3)
    with pytest.raises(ConfigurationError):
        small(1, depths=(0, 1, 1))


def test_incompatible_decomposition(rng, dec_w):
    cfg = small(1, n_components=3)
    with pytest.raises(ConfigurationError):
        ronet_forward(Tensor(rng.random((1, 1, 6, 6))), dec_w, init_rorec(cfg, rng), DEC, cfg)


def _three_terms(src, tgt, dec_w, w, cfg, lam):
    p = rorec_pass(Tensor(src), dec_w, w, DEC, cfg, training=True)
    t_lr, t_res = target_parts(Tensor(tgt), dec_w, DEC)
    from ronet.rorec import upsample_forward
    from ronet.layers import subweights
    ros = upsample_forward(p.ros_features, subweights(w, "ros_up."), cfg.scale).data.astype(np.float64)
    res = upsample_forward(p.res_features, subweights(w, "res_up."), cfg.scale).data.astype(np.float64)
    l_ros = np.mean((ros - t_lr.data) ** 2)
    l_res = np.mean((res - t_res.data) ** 2)
    l_fus = np.mean((p.output.data.astype(np.float64) - tgt) ** 2)
    return lam * (l_ros + l_res) + (1 - lam) * l_fus


@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
def test_loss_algebra(dec_w, lam):
    r = np.random.default_rng(5)
    cfg = small(2, use_bn=False)
    w = init_rorec(cfg, r)
    src, tgt = r.random((2, 1, 4, 4)), r.random((2, 1, 8, 8))
    with default_dtype(np.float64):
        got = loss_rec(Tensor(src), Tensor(tgt), dec_w, w, DEC, cfg, lam).total.item()
        want = _three_terms(src, tgt, dec_w, w, cfg, lam)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_lambda_one_zero_fusion_grad_and_frozen_dec(rng, dec_w):
    cfg = small(1)
    w = init_rorec(cfg, rng)
    set_trainable(dec_w, True)
    src = Tensor(rng.random((2, 1, 6, 6)))
    with Tape() as tape:
        loss = loss_rec(src, src, dec_w, w, DEC, cfg, lam=1.0)
    tape.backward(loss.total)
    for k, v in trainable(w).items():
        if k.startswith("fus"):
            assert v.grad is None or not np.any(v.grad), k
    assert any(np.any(v.grad) for k, v in trainable(w).items() if k.startswith("ros."))
    for v in trainable(dec_w).values():
        assert v.grad is None or not np.any(v.grad)


def test_joint_mode_reaches_decomposition(rng, dec_w):
    cfg = small(1)
    w = init_rorec(cfg, rng)
    src = Tensor(rng.random((2, 1, 6, 6)))
    with Tape() as tape:
        loss = loss_rec(src, src, dec_w, w, DEC, cfg, lam=0.5, joint=True)
    tape.backward(loss.total)
    assert loss.dec is not None
    assert any(v.grad is not None and np.any(v.grad) for v in trainable(dec_w).values())


def test_loss_rejects_bad_settings(rng, dec_w):
    cfg = small(1, deep_supervision=False)
    w = init_rorec(cfg, rng)
    x = Tensor(rng.random((1, 1, 6, 6)))
    with pytest.raises(ConfigurationError):
        loss_rec(x, x, dec_w, w, DEC, cfg, lam=0.5)
    with pytest.raises(ConfigurationError):
        loss_rec(x, x, dec_w, w, DEC, cfg, lam=1.5)
    with pytest.raises(ConfigurationError):
        loss_rec(x, x, dec_w, w, DEC, cfg, lam=0.0, alpha=3)


def test_gradient_surrogate_value():
    p = np.zeros((1, 1, 2, 3))
    p[0, 0, 0, 1] = 1.0
    with default_dtype(np.float64):
        v = gradient_surrogate(Tensor(p), Tensor(np.zeros_like(p))).item()
    # horizontal diffs: [1,-1] in row 0, [0,0] in row 1 -> mean 0.5; vertical: [0,-1,0] -> mean 1/3
    assert v == pytest.approx(0.5 + 1 / 3)


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-6)], ids=["f32", "f64"])
def test_rec_loss_gradcheck(dtype, tol):
    r = np.random.default_rng(3)
    d = init_rodec(DEC, r)
    cfg = small(2, depths=(1, 1, 1), use_bn=True)
    w = init_rorec(cfg, r)
    src, tgt = r.random((2, 1, 3, 3)), r.random((2, 1, 6, 6))
    worst = 0.0
    for name in ["ros.entry.weight", "res.block0.bn.gamma", "fus.exit.bias", "ros_up.final.bias",
                 "fus_up.stage0.weight"]:
        def fn(p, name=name):
            ww = dict(w)
            ww[name] = p
            return loss_rec(Tensor(src, dtype=p.dtype), Tensor(tgt, dtype=p.dtype), d, ww, DEC, cfg,
                            lam=0.4, eta=0.1, alpha=2).total
        worst = max(worst, gradcheck(fn, [w[name].data + 0.2 * r.standard_normal(w[name].shape)], dtype=dtype)[0])
    assert worst < tol


def test_identity_weights_reproduce_input(rng, dec_w):
    cfg = small(1)
    w = identity_rorec(cfg)
    x = rng.random((1, 8, 8)).astype(np.float32)
    out = restore(x, dec_w, w, DEC, cfg)
    assert np.abs(out - x).max() < 1e-5
    with pytest.raises(ConfigurationError):
        identity_rorec(small(2))


def test_restore_uses_running_stats(rng, dec_w):
    cfg = small(1)
    w = init_rorec(cfg, rng)
    x = rng.random((2, 1, 6, 6)).astype(np.float32)
    a = restore(x, dec_w, w, DEC, cfg)
    b = restore(x[:1], dec_w, w, DEC, cfg)
    np.testing.assert_allclose(a[:1], b, rtol=1e-5, atol=1e-6)  # batch-independent in eval mode


def _schedule(updates=4):
    return TrainSchedule(updates, 2, 8, LRSchedule(1e-3), seed=0)


def test_train_rorec_paired_and_online(dec_w):
    r = np.random.default_rng(0)
    hr = [r.random((1, 16, 16)).astype(np.float32) for _ in range(2)]
    lr = [h[:, ::2, ::2].copy() for h in hr]
    cfg = small(2)
    w, log = train_rorec(hr, dec_w, DEC, cfg, RecObjective(0.5, 0.01, 1), _schedule(), sources=lr)
    assert len(log.losses) == 4 and all(np.isfinite(log.losses))
    cfg1 = small(1, deep_supervision=False)
    w1, log1 = train_rorec(hr, dec_w, DEC, cfg1, RecObjective(0, 0, 2, noise_sigma=(5, 50)), _schedule())
    w2, log2 = train_rorec(hr, dec_w, DEC, cfg1, RecObjective(0, 0, 2, noise_sigma=(5, 50)), _schedule())
    assert log1.losses == log2.losses


def test_train_rorec_rejects_unpaired(dec_w):
    hr = [np.zeros((1, 16, 16), np.float32)] * 2
    cfg = small(2)
    with pytest.raises(ConfigurationError):
        train_rorec(hr, dec_w, DEC, cfg, RecObjective(), _schedule(), sources=hr[:1])
    with pytest.raises(ConfigurationError):
        train_rorec(hr, dec_w, DEC, cfg, RecObjective(), _schedule(), sources=hr)
    with pytest.raises(ConfigurationError):
        train_rorec(hr, dec_w, DEC, cfg, RecObjective(), _schedule())
