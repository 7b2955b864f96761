"""Finite-difference checks of every primitive and loss term.

Used by the ``gradcheck`` subcommand and the test-suite. Inputs are small
and random (seeded) so a full sweep takes seconds.
"""
from __future__ import annotations

import copy

import torch
import torch.nn.functional as F

from .features import make_random_extractor
from .losses import contextual_loss, generator_adversarial_loss, reconstruction_cycle, reconstruction_restoration, tv_norm
from .net_dsl import GeneratorConfig, MultiScaleDiscriminator, NetworkSpec, Norm, build_generator
from .substrate import PRIMITIVES, GradCheckReport, grad_check

TOLERANCE = {"double": 1e-3, "single": 1e-2}
PRIMITIVE_TOLERANCE = {"double": 1e-6, "single": 1e-3}
_STEP = 1e-6


def _rand(gen, *shape, lo=0.05, hi=0.95, dtype=torch.float64):
    return (lo + (hi - lo) * torch.rand(*shape, generator=gen, dtype=torch.float64)).to(dtype)


def primitive_checks(gen: torch.Generator) -> dict:
    """``name -> (function, input)`` for every entry of the primitive contract."""
    w = torch.randn(4, 3, 3, 3, generator=gen, dtype=torch.float64)
    pts = {
        "conv2d": (lambda x: F.conv2d(x, w.to(x.dtype), padding=1).pow(2).sum(), _rand(gen, 1, 3, 6, 6)),
        "bilinear_resize": (lambda x: F.interpolate(x, size=(7, 5), mode="bilinear").pow(2).sum(), _rand(gen, 1, 2, 4, 4)),
        "bicubic_resize": (lambda x: F.interpolate(x, size=(3, 3), mode="bicubic", antialias=True).pow(2).sum(),
                           _rand(gen, 1, 2, 6, 6)),
        "concat": (lambda a, b: torch.cat([a, b], 1).pow(2).mul(torch.arange(1, 5, dtype=a.dtype).view(1, 4, 1, 1)).sum(),
                   (_rand(gen, 1, 2, 3, 3), _rand(gen, 1, 2, 3, 3))),
        "add": (lambda a, b: (a + 2 * b).pow(2).sum(), (_rand(gen, 5), _rand(gen, 5))),
        "leaky_relu": (lambda x: F.leaky_relu(x, 0.2).pow(2).sum(), _rand(gen, 8, lo=-1, hi=1)),
        "relu": (lambda x: F.relu(x).pow(2).sum(), _rand(gen, 8, lo=-1, hi=1)),
        "max_pool": (lambda x: F.max_pool2d(x, 2, 2, ceil_mode=True).pow(2).sum(), _rand(gen, 1, 1, 5, 5)),
        "sigmoid": (lambda x: torch.sigmoid(x).pow(2).sum(), _rand(gen, 8, lo=-2, hi=2)),
        "normalization": (lambda x: Norm(3, "instance").to(x.dtype)(x).pow(3).sum(), _rand(gen, 1, 3, 4, 4)),
        "mean": (lambda x: x.mean() ** 2, _rand(gen, 9)),
        "sum": (lambda x: x.sum() ** 2, _rand(gen, 9)),
        "abs": (lambda x: x.abs().pow(1.5).sum(), _rand(gen, 8, lo=-1, hi=1)),
        "log": (lambda x: torch.log(x).sum(), _rand(gen, 8, lo=0.2, hi=2)),
        "exp": (lambda x: torch.exp(x).sum(), _rand(gen, 8, lo=-1, hi=1)),
        "dot": (lambda a, b: (a * b).sum() ** 2, (_rand(gen, 6), _rand(gen, 6))),
        "l2_norm": (lambda x: x.norm(), _rand(gen, 6)),
        "clamp": (lambda x: x.clamp(0.0, 1.0).pow(2).sum(), _rand(gen, 8, lo=0.1, hi=0.9)),
    }
    assert set(pts) == set(PRIMITIVES)
    return pts


def tie_free_image(gen: torch.Generator, h: int, w: int, dtype=torch.float64) -> torch.Tensor:
    """Random image whose pixel values are distinct multiples of ``1/(3hw)``.

    Neighbor differences are then at least ``1/(3hw)``, far from the kinks of
    the absolute value for any finite-difference step below that.
    """
    n = 3 * h * w
    perm = torch.randperm(n, generator=gen).to(torch.float64)
    return ((perm + 0.5) / n).view(1, 3, h, w).to(dtype)


def loss_checks(gen: torch.Generator, dtype: torch.dtype = torch.float64) -> dict:
    """``name -> (function, input)`` for the loss terms.

    Functions follow the dtype of their argument (networks are kept in both
    precisions), so the same closure serves the analytic pass and the oracle.
    """
    ext = make_random_extractor(0)
    r = lambda *shape: _rand(gen, *shape, dtype=dtype)
    x, y = r(1, 3, 16, 16), r(1, 3, 16, 16)
    target = r(1, 3, 8, 8)
    small = NetworkSpec(4, ((1, 4),), (), ())
    G = build_generator(GeneratorConfig(small, base_channels=4, skip_channels=2, seed=3))
    D = MultiScaleDiscriminator(seed=5, channels=(4, 8, 8))
    Gs = {torch.float32: G.float(), torch.float64: copy.deepcopy(G).double()}
    Ds = {torch.float32: D.float(), torch.float64: copy.deepcopy(D).double()}
    return {
        "contextual_loss": (lambda a: contextual_loss(a, y.to(a.dtype), ext), x),
        "tv_norm": (tv_norm, tie_free_image(gen, 8, 8, dtype)),
        "reconstruction_restoration": (lambda a: reconstruction_restoration(a, target.to(a.dtype)), r(1, 3, 8, 8)),
        "reconstruction_cycle": (lambda a: reconstruction_cycle(Gs[a.dtype], a, 1.5, 0.5), r(1, 3, 8, 8)),
        "generator_adversarial": (lambda f: generator_adversarial_loss(Ds[f.dtype], f), r(1, 3, 16, 16)),
    }


def run_gradchecks(precision: str = "double", seed: int = 0, include_primitives: bool = True
                   ) -> dict[str, tuple[GradCheckReport, float]]:
    """Run every check; returns ``name -> (report, tolerance)``.

    ``precision`` is the dtype of the gradient under test. The central
    differences always run in float64.
    """
    if precision not in TOLERANCE:
        raise ValueError(f"precision must be 'double' or 'single', got {precision!r}")
    dtype = torch.float64 if precision == "double" else torch.float32
    gen = torch.Generator().manual_seed(seed)
    out = {}
    if include_primitives:
        for k, (fn, point) in primitive_checks(gen).items():
            rep = grad_check(fn, point, step=_STEP, dtype=dtype, oracle_dtype=torch.float64)
            out[f"primitive:{k}"] = (rep, PRIMITIVE_TOLERANCE[precision])
    for k, (fn, point) in loss_checks(gen, dtype).items():
        rep = grad_check(fn, point, step=_STEP, dtype=dtype, oracle_dtype=torch.float64)
        out[k] = (rep, TOLERANCE[precision])
    return out
