"""Loss terms: contextual similarity, least-squares adversarial, reconstruction, TV."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping

import torch

from .features import DEFAULT_LAYER, ContextVectors, FeatureExtractor, extract_context_vectors
from .net_dsl import BuiltNetwork, MultiScaleDiscriminator, generator_forward
from .substrate import check_primitives

MAX_CONTEXT_VECTORS = 4096
EPS_LOG = 1e-8

check_primitives(("dot", "l2_norm", "exp", "log", "sum", "mean", "abs", "clamp"))


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class ContextualParams:
    bandwidth: float = 0.5
    epsilon: float = 1e-5

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 1.0
    lambda_g: float = 0.1
    lambda_r: float = 10.0
    lambda_tv: float = 1e-4

    def __post_init__(self):
        vals = asdict(self)
        bad = {k: v for k, v in vals.items() if not (v >= 0 and math.isfinite(v))}
        if bad:
            raise ValueError(f"loss weights must be finite and nonnegative: {bad}")
        if not any(v > 0 for v in vals.values()):
            raise ValueError("at least one loss weight must be positive")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(*(v * factor for v in asdict(self).values()))


@dataclass
class LossBreakdown:
    contextual: float | torch.Tensor = 0.0
    generator_adversarial: float | torch.Tensor = 0.0
    discriminator_adversarial: float | torch.Tensor = 0.0
    reconstruction: float | torch.Tensor = 0.0
    tv: float | torch.Tensor = 0.0
    total: float | torch.Tensor = 0.0

    def as_record(self) -> dict[str, float]:
        return {
            f.name: float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
            for f in fields(self)
            for v in [getattr(self, f.name)]
        }


# ---------------------------------------------------------------- contextual


def _vectors(v) -> torch.Tensor:
    return v.vectors if isinstance(v, ContextVectors) else torch.as_tensor(v)


def contextual_similarity(A, B, params: ContextualParams = ContextualParams()) -> torch.Tensor:
    """Contextual similarity between vector sets ``A`` (N_A, C) and ``B`` (N_B, C).

    For every vector of ``A`` the cosine distances to ``B`` are normalized
    by their minimum and turned into affinities that sum to one over ``B``.
    Each ``B`` vector then keeps its best affinity over ``A``; the result is
    the mean of those, in ``[0, 1]``.
    """
    a, b = _vectors(A), _vectors(B)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("context vectors must be 2-d (count, dim)")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty context vector set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    an = a / a.norm(dim=1, keepdim=True).clamp_min(1e-12)
    bn = b / b.norm(dim=1, keepdim=True).clamp_min(1e-12)
    d = (1.0 - an @ bn.T).clamp_min(0.0)  # d[i, j]: A_i to B_j
    d_rel = d / (d.min(dim=1, keepdim=True).values + params.epsilon)
    logits = (1.0 - d_rel) / params.bandwidth
    # exp(logits) / sum exp(logits) over B, computed stably
    cx = torch.softmax(logits, dim=1)
    return cx.max(dim=0).values.mean()


def subsample(vectors: torch.Tensor, limit: int = MAX_CONTEXT_VECTORS, seed: int = 0) -> torch.Tensor:
    if vectors.shape[0] <= limit:
        return vectors
    gen = torch.Generator().manual_seed(seed)
    idx = torch.randperm(vectors.shape[0], generator=gen)[:limit]
    return vectors[idx.sort().values]


def cx_loss(cx: torch.Tensor | float) -> torch.Tensor:
    """``-log(cx + 1e-8)``; at ``cx = 1`` this is ``-1e-8`` rather than exactly zero."""
    return -torch.log(torch.as_tensor(cx) + EPS_LOG)


def contextual_loss(
    x: torch.Tensor,
    y: torch.Tensor,
    extractor: FeatureExtractor,
    layer: str = DEFAULT_LAYER,
    params: ContextualParams = ContextualParams(),
) -> torch.Tensor:
    """``-log(CX(phi(x), phi(y)) + 1e-8)``; ``x`` and ``y`` may differ in size."""
    a = subsample(extract_context_vectors(extractor, x, layer).vectors)
    b = subsample(extract_context_vectors(extractor, y, layer).vectors)
    return cx_loss(contextual_similarity(a, b, params))


# ---------------------------------------------------------------- adversarial


def generator_adversarial_loss(D: MultiScaleDiscriminator, fake: torch.Tensor) -> torch.Tensor:
    out = D(fake)
    return sum(w * ((m - 1.0) ** 2).mean() for w, m in zip(out.weights, out.maps))


def discriminator_adversarial_loss(D: MultiScaleDiscriminator, real: torch.Tensor, fake: torch.Tensor) -> torch.Tensor:
    r, f = D(real), D(fake.detach())
    return sum(
        w * (((mr - 1.0) ** 2).mean() + (mf**2).mean())
        for w, mr, mf in zip(r.weights, r.maps, f.maps)
    )


def adversarial_losses(D: MultiScaleDiscriminator, real: torch.Tensor, fake: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares ``(L_G, L_D)``; ``fake`` is detached inside ``L_D``."""
    return generator_adversarial_loss(D, fake), discriminator_adversarial_loss(D, real, fake)


# ---------------------------------------------------------------- reconstruction / TV


def reconstruction_restoration(g_out: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if g_out.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(g_out.shape)} vs {tuple(target.shape)}")
    return ((g_out - target) ** 2).mean()


def cycle_mse(G: BuiltNetwork, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """MSE between ``G(y)`` sized back to ``x`` and ``x``."""
    back = generator_forward(G, y, out_size=tuple(x.shape[-2:]))
    return reconstruction_restoration(back, x)


def reconstruction_cycle(G: BuiltNetwork, x: torch.Tensor, s_h: float, s_w: float) -> torch.Tensor:
    y = generator_forward(G, x, s_h, s_w)
    return cycle_mse(G, x, y)


def tv_norm(image: torch.Tensor) -> torch.Tensor:
    """Anisotropic L1 total variation summed over channels."""
    if image.shape[-1] < 2 or image.shape[-2] < 2:
        raise ValueError(f"TV needs at least 2x2 images, got {tuple(image.shape[-2:])}")
    dh = (image[..., 1:, :] - image[..., :-1, :]).abs().sum()
    dw = (image[..., :, 1:] - image[..., :, :-1]).abs().sum()
    return dh + dw


# ---------------------------------------------------------------- combination


def total_loss(terms: Mapping[str, float | torch.Tensor], weights: LossWeights) -> LossBreakdown:
    """Weighted generator objective.

    ``terms`` may hold ``contextual``, ``generator_adversarial``,
    ``reconstruction``, ``tv`` and ``discriminator_adversarial``; missing
    entries are zero. The discriminator term is reported but not added.
    """
    for k, v in terms.items():
        val = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not math.isfinite(val):
            raise NonFiniteLoss(f"non-finite loss component {k!r}: {val}")
    get = lambda k: terms.get(k, 0.0)
    total = (
        weights.lambda_c * get("contextual")
        + weights.lambda_g * get("generator_adversarial")
        + weights.lambda_r * get("reconstruction")
        + weights.lambda_tv * get("tv")
    )
    return LossBreakdown(
        contextual=get("contextual"),
        generator_adversarial=get("generator_adversarial"),
        discriminator_adversarial=get("discriminator_adversarial"),
        reconstruction=get("reconstruction"),
        tv=get("tv"),
        total=total,
    )
