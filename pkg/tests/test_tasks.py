import json
import math

import numpy as np
import pytest
import torch

from internal_learning import imaging, synthetic
from internal_learning.losses import LossWeights, NonFiniteLoss, total_loss, tv_norm
from internal_learning.net_dsl import GeneratorConfig, MultiScaleDiscriminator, NetworkSpec, build_generator
from internal_learning.tasks import (
    Objective,
    TaskConfig,
    desk_config,
    dsr_defaults,
    fit,
    retarget_defaults,
    run_dsr,
    run_reconstruction,
    run_retarget,
    run_sr,
    sr_defaults,
)


def quick(task="dsr", **kw):
    kw = {"iterations": 3, "base_channels": 4, **kw}
    return desk_config(task, **kw)


@pytest.fixture(scope="module")
def noisy_lr():
    return imaging.degrade(synthetic.stripes(32, 32), imaging.DegradationConfig(2, 50, 0))


# ---------------------------------------------------------------- configuration


def test_defaults_pinned():
    d, s, r = dsr_defaults(), sr_defaults(), retarget_defaults()
    assert (d.lr_g, d.lr_d, d.iterations) == (1e-4, 1e-4, 3000)
    assert d.weights == LossWeights(1.0, 0.1, 10.0, 1e-4)
    assert s.weights.lambda_tv == 0.0 and s.weights.lambda_g == 0.1
    assert r.weights.lambda_g == 1.0 and r.weights.lambda_r == 10.0


def test_desk_preset():
    c = desk_config("dsr")
    assert c.iterations == 400 and c.weights.lambda_c == 0.1 and c.base_channels == 32
    assert desk_config("retarget").iterations == 200
    assert desk_config("sr").weights == LossWeights(0.01, 0.0, 10.0, 0.0)


@pytest.mark.parametrize("kw", [{"iterations": 0}, {"lr_g": 0.0}, {"lr_d": -1.0}, {"log_every": 0},
                                {"input_mode": "hr"}])
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        TaskConfig(**kw)


# ---------------------------------------------------------------- restoration


@pytest.mark.parametrize("t", [2, 4])
def test_sr_output_shape(t):
    lr = imaging.downsample(synthetic.checkerboard(16 * t, 16 * t), t)
    res = run_sr(lr, t, quick("sr"))
    assert res.output.shape == (16 * t, 16 * t, 3)
    assert res.output.min() >= 0 and res.output.max() <= 1


def test_dsr_metrics_against_reference(noisy_lr):
    res = run_dsr(noisy_lr, 2, quick(), reference=synthetic.stripes(32, 32))
    assert set(res.metrics) == {"psnr_db", "ssim", "baseline_psnr_db", "baseline_ssim"}
    up = imaging.upsample_Ut(noisy_lr, 2)
    assert res.metrics["baseline_ssim"] == pytest.approx(imaging.ssim(up, synthetic.stripes(32, 32)))


def test_dsr_preconditions(noisy_lr):
    with pytest.raises(ValueError, match="t must"):
        run_dsr(noisy_lr, 1, quick())
    with pytest.raises(ValueError, match="16x16"):
        run_dsr(noisy_lr[:15], 2, quick())


def test_dsr_deterministic(noisy_lr):
    a = run_dsr(noisy_lr, 2, quick())
    b = run_dsr(noisy_lr, 2, quick())
    assert np.array_equal(a.output, b.output)
    assert a.trace == b.trace
    c = run_dsr(noisy_lr, 2, quick(seed=1))
    assert not np.array_equal(a.output, c.output)


def test_dsr_without_noise_or_tv_equals_sr():
    lr = imaging.degrade(synthetic.disks(32, 32), imaging.DegradationConfig(2, 0.0, 0))
    cfg = quick(weights=LossWeights(0.1, 0.1, 10.0, 0.0), sigma_255=0.0)
    a, b = run_dsr(lr, 2, cfg), run_sr(lr, 2, cfg)
    assert a.trace == b.trace
    assert np.array_equal(a.output, b.output)


def test_sr_forces_tv_off():
    lr = imaging.downsample(synthetic.disks(32, 32), 2)
    res = run_sr(lr, 2, quick(weights=LossWeights(0.1, 0.1, 10.0, 5.0)))
    assert res.config["weights"]["lambda_tv"] == 0.0
    assert all(rec["tv"] == 0.0 for rec in res.trace)


@pytest.mark.parametrize("iters, every", [(5, 1), (5, 2), (6, 3), (7, 10)])
def test_trace_length(noisy_lr, iters, every):
    res = run_dsr(noisy_lr, 2, quick(iterations=iters, log_every=every))
    assert len(res.trace) == math.ceil(iters / every)
    assert [r["iteration"] for r in res.trace] == list(range(0, iters, every))


def test_trace_records_breakdown(noisy_lr):
    rec = run_dsr(noisy_lr, 2, quick()).trace[0]
    w = desk_config("dsr").weights
    expected = w.lambda_c * rec["contextual"] + w.lambda_g * rec["generator_adversarial"] \
        + w.lambda_r * rec["reconstruction"] + w.lambda_tv * rec["tv"]
    assert rec["total"] == pytest.approx(expected, rel=1e-5)
    assert rec["discriminator_adversarial"] > 0


def test_input_mode_upsampled(noisy_lr):
    res = run_dsr(noisy_lr, 2, quick(input_mode="upsampled"))
    assert res.output.shape == (32, 32, 3)


def test_tv_weight_lowers_tv(noisy_lr):
    base = dict(iterations=50, base_channels=16)
    w = desk_config("dsr").weights
    with_tv = run_dsr(noisy_lr, 2, desk_config("dsr", weights=w, **base))
    without = run_dsr(noisy_lr, 2, desk_config("dsr", weights=LossWeights(w.lambda_c, w.lambda_g, w.lambda_r, 0.0), **base))
    tv = lambda r: tv_norm(imaging.to_tensor(r.output)).item()
    assert tv(with_tv) <= tv(without)


def test_save_layout(tmp_path, noisy_lr):
    res = run_dsr(noisy_lr, 2, quick(snapshot_every=2, iterations=4))
    run_dir = res.save(tmp_path, "dsr", "stripes")
    assert run_dir.name == "dsr_stripes_seed0"
    assert len((run_dir / "trace.jsonl").read_text().splitlines()) == 4
    echo = json.loads((run_dir / "config.json").read_text())
    assert echo["config"]["iterations"] == 4 and echo["config"]["weights"]["lambda_c"] == 0.1
    assert sorted(p.name for p in run_dir.glob("snapshot_*.png")) == ["snapshot_00002.png", "snapshot_00004.png"]
    assert np.array_equal(imaging.load_image(run_dir / "output.png"),
                          np.round(res.output * 255) / 255)


# ---------------------------------------------------------------- fit


def _tiny_pair():
    G = build_generator(GeneratorConfig(NetworkSpec(4, ((1, 4),)), base_channels=4, skip_channels=2))
    D = MultiScaleDiscriminator(seed=1, channels=(4, 4, 4))
    return G, D


def test_discriminator_untouched_without_adversarial_term():
    G, D = _tiny_pair()
    before = [p.clone() for p in D.parameters()]
    x = torch.rand(1, 3, 16, 16)
    w = LossWeights(0.0, 0.0, 1.0, 0.0)
    obj = Objective(lambda: G(x), lambda y: total_loss({"reconstruction": ((y - x) ** 2).mean()}, w))
    fit(G, D, obj, TaskConfig(iterations=5, lr_g=1e-2, lr_d=1e-2))
    assert all(torch.equal(a, b) for a, b in zip(before, D.parameters()))


def test_generator_step_leaves_discriminator_alone():
    from internal_learning.losses import discriminator_adversarial_loss, generator_adversarial_loss

    G, D = _tiny_pair()
    x = torch.rand(1, 3, 16, 16)
    w = LossWeights(0.0, 1.0, 1.0, 0.0)
    snapshots = []

    def gen_loss(y):
        snapshots.append([p.clone() for p in D.parameters()])
        return total_loss({"generator_adversarial": generator_adversarial_loss(D, y),
                           "reconstruction": ((y - x) ** 2).mean()}, w)

    obj = Objective(lambda: G(x), gen_loss, lambda y: discriminator_adversarial_loss(D, x, y))
    fit(G, D, obj, TaskConfig(iterations=3, lr_g=1e-2, lr_d=1e-2))
    # the discriminator moves once per iteration, between generator steps
    assert not all(torch.equal(a, b) for a, b in zip(snapshots[0], snapshots[1]))
    assert all(p.requires_grad for p in D.parameters())


def test_non_finite_aborts_with_iteration():
    G, _ = _tiny_pair()
    x = torch.rand(1, 3, 16, 16)
    calls = {"n": 0}

    def gen_loss(y):
        calls["n"] += 1
        bad = float("nan") if calls["n"] == 3 else 0.0
        return total_loss({"reconstruction": ((y - x) ** 2).mean() + bad}, LossWeights(0, 0, 1, 0))

    with pytest.raises(NonFiniteLoss, match="iteration 2"):
        fit(G, None, Objective(lambda: G(x), gen_loss), TaskConfig(iterations=5))


def test_reconstruction_trace_smoothed_non_increasing():
    res = run_reconstruction(synthetic.blobs(32, 32), TaskConfig(iterations=300, lr_g=1e-3, base_channels=8))
    totals = np.array([r["total"] for r in res.trace])
    windows = totals.reshape(-1, 50).mean(axis=1)
    assert np.all(np.diff(windows) <= 0)


# ---------------------------------------------------------------- retargeting


@pytest.mark.parametrize("hw, s, expected", [((64, 96), (1, 1.5), (64, 144)), ((100, 80), (1.5, 0.5), (150, 40)),
                                             ((64, 64), (0.25, 4), (16, 256))])
def test_retarget_sizes(hw, s, expected):
    x = synthetic.texture(*hw)
    res = run_retarget(x, *s, quick("retarget", iterations=1))
    assert res.output.shape[:2] == expected


def test_retarget_preconditions():
    x = synthetic.texture(64, 64)
    with pytest.raises(ValueError, match="scales"):
        run_retarget(x, 0.2, 1.0, quick("retarget"))
    with pytest.raises(ValueError, match="scales"):
        run_retarget(x, 1.0, 4.5, quick("retarget"))
    with pytest.raises(ValueError, match="64x64"):
        run_retarget(synthetic.texture(63, 80), 1.0, 1.0, quick("retarget"))


def test_retarget_trace_has_cycle_term():
    res = run_retarget(synthetic.texture(64, 64), 1.0, 1.5, quick("retarget", iterations=2))
    assert len(res.trace) == 2 and res.trace[0]["reconstruction"] > 0
    assert res.config["scale"] == [1.0, 1.5]


# ---------------------------------------------------------------- desk-scale runs


@pytest.mark.slow
def test_dsr_beats_bicubic_on_stripes():
    clean = synthetic.stripes(32, 32)
    noisy = imaging.degrade(clean, imaging.DegradationConfig(2, 50, 0))
    res = run_dsr(noisy, 2, desk_config("dsr"), reference=clean)
    assert res.metrics["ssim"] > res.metrics["baseline_ssim"]


@pytest.mark.slow
def test_sr_beats_bicubic_on_checkerboard():
    clean = synthetic.checkerboard(64, 64)
    lr = imaging.downsample(clean, 2)
    res = run_sr(lr, 2, desk_config("sr"), reference=clean)
    assert res.metrics["psnr_db"] > res.metrics["baseline_psnr_db"]
