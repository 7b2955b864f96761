"""Differentiable-primitive contract and numerical verification helpers.

Everything in this package runs on PyTorch autograd. This module pins the
set of primitives the networks and losses are allowed to use, and provides
the central-difference gradient checker and the seeded initializer used by
every network builder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import torch

#: Primitives every network and loss in the package is composed from.
PRIMITIVES = (
    "conv2d",
    "bilinear_resize",
    "bicubic_resize",
    "concat",
    "add",
    "leaky_relu",
    "relu",
    "max_pool",
    "sigmoid",
    "normalization",
    "mean",
    "sum",
    "abs",
    "log",
    "exp",
    "dot",
    "l2_norm",
    "clamp",
)

EPS_DIV = 1e-12


class ContractError(RuntimeError):
    """A network or loss asked for a primitive outside :data:`PRIMITIVES`."""


def check_primitives(used: Sequence[str]) -> None:
    missing = sorted(set(used) - set(PRIMITIVES))
    if missing:
        raise ContractError(f"primitives not in contract: {missing}")


@dataclass
class GradCheckReport:
    """Result of :func:`grad_check`.

    ``errors`` maps each parameter block to its relative error
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`` where
    ``|.|`` is the Euclidean norm over the block.
    """

    errors: dict[str, float]
    step: float
    precision: str
    max_abs_error: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tol: float) -> bool:
        return self.max_error < tol

    def format(self) -> str:
        lines = [f"precision={self.precision} step={self.step:g}"]
        for name, err in self.errors.items():
            lines.append(f"  {name}: rel_err={err:.3e} abs_err={self.max_abs_error.get(name, 0.0):.3e}")
        lines.append(f"  max_rel_err={self.max_error:.3e}")
        return "\n".join(lines)


def _as_blocks(point) -> dict[str, torch.Tensor]:
    if isinstance(point, torch.Tensor):
        return {"input": point}
    if isinstance(point, Mapping):
        return dict(point)
    return {f"arg{i}": t for i, t in enumerate(point)}


def _call(fn, blocks: dict[str, torch.Tensor], original):
    if isinstance(original, torch.Tensor):
        return fn(blocks["input"])
    if isinstance(original, Mapping):
        return fn(blocks)
    return fn(*blocks.values())


def _scalar(out) -> torch.Tensor:
    if not isinstance(out, torch.Tensor):
        out = torch.as_tensor(out)
    if out.numel() != 1:
        raise ValueError(f"grad_check needs a scalar function, got output shape {tuple(out.shape)}")
    return out.reshape(())


def grad_check(
    scalar_function: Callable,
    input_point,
    step: float = 1e-6,
    dtype: torch.dtype | None = torch.float64,
    oracle_dtype: torch.dtype | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central differences.

    ``input_point`` is a tensor, a sequence of tensors (passed positionally)
    or a mapping of named tensors (passed as one dict). Each is a parameter
    block in the report. ``dtype=None`` keeps the input precision.

    The analytic gradient is taken at ``dtype``. The finite differences run
    at ``oracle_dtype`` when given, so a float32 gradient can be judged
    against a float64 oracle whose step is small enough to stay clear of
    kinks without drowning in roundoff.
    """
    if step == 0 or not math.isfinite(step):
        raise ValueError("step must be a nonzero finite number")
    h = abs(step)
    blocks = {k: v.detach().clone() for k, v in _as_blocks(input_point).items()}
    if dtype is not None:
        blocks = {k: v.to(dtype) for k, v in blocks.items()}
    precision = str(next(iter(blocks.values())).dtype).replace("torch.", "")

    leaves = {k: v.clone().requires_grad_(True) for k, v in blocks.items()}
    out = _scalar(_call(scalar_function, leaves, input_point))
    if not torch.isfinite(out):
        raise FloatingPointError(f"non-finite function value {out.item()} at the input point")
    grads = torch.autograd.grad(out, list(leaves.values()), allow_unused=True)
    analytic = {
        k: (g if g is not None else torch.zeros_like(leaves[k])).detach()
        for k, g in zip(leaves, grads)
    }
    for k, g in analytic.items():
        bad = (~torch.isfinite(g)).nonzero()
        if len(bad):
            raise FloatingPointError(f"non-finite analytic gradient in {k} at index {tuple(bad[0].tolist())}")

    if oracle_dtype is not None:
        blocks = {k: v.to(oracle_dtype) for k, v in blocks.items()}
    errors: dict[str, float] = {}
    abs_errors: dict[str, float] = {}
    with torch.no_grad():
        for name, base in blocks.items():
            numeric = torch.zeros_like(base)
            flat = base.reshape(-1)
            for idx in range(flat.numel()):
                vals = []
                for sgn in (1.0, -1.0):
                    probe = {k: v.clone() for k, v in blocks.items()}
                    probe[name].reshape(-1)[idx] += sgn * h
                    v = _scalar(_call(scalar_function, probe, input_point))
                    if not torch.isfinite(v):
                        loc = tuple(torch.unravel_index(torch.tensor(idx), base.shape))
                        raise FloatingPointError(
                            f"non-finite function value while probing {name} at index {tuple(int(i) for i in loc)}"
                        )
                    vals.append(v.item())
                numeric.reshape(-1)[idx] = (vals[0] - vals[1]) / (2.0 * h)
            a = analytic[name].to(numeric.dtype)
            diff = torch.linalg.vector_norm(a - numeric).item()
            denom = max(torch.linalg.vector_norm(a).item(), torch.linalg.vector_norm(numeric).item(), EPS_DIV)
            errors[name] = diff / denom
            abs_errors[name] = (a - numeric).abs().max().item() if a.numel() else 0.0
    return GradCheckReport(errors=errors, step=step, precision=precision, max_abs_error=abs_errors)


def seeded_parameters(
    shape_list: Sequence[Sequence[int]],
    seed: int,
    gain: float = 1.0,
    dtype: torch.dtype = torch.float32,
) -> list[torch.Tensor]:
    """Draw ``N(0, (gain / sqrt(fan_in))**2)`` tensors for each shape.

    ``fan_in`` is the product of all dimensions but the first (the size of
    the only dimension for 1-d shapes). Draws are sequential from a single
    generator seeded with ``seed``, so the result depends on the order of
    ``shape_list``.
    """
    if len(shape_list) == 0:
        raise ValueError("shape_list is empty")
    gen = torch.Generator().manual_seed(int(seed))
    out = []
    for shape in shape_list:
        shape = tuple(int(s) for s in shape)
        if len(shape) == 0 or any(s <= 0 for s in shape):
            raise ValueError(f"zero-sized or empty shape {shape}")
        fan_in = math.prod(shape[1:]) if len(shape) > 1 else shape[0]
        std = gain / math.sqrt(fan_in)
        out.append(torch.randn(shape, generator=gen, dtype=dtype) * std)
    return out


def leaky_relu_gain(slope: float) -> float:
    return math.sqrt(2.0 / (1.0 + slope**2))
