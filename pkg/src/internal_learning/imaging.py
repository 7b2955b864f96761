"""Image I/O, degradation operators and quality metrics.

Images at the public surface are ``numpy`` arrays of shape ``(H, W, C)``
with ``C`` in ``{1, 3}`` and values in ``[0, 1]``. Optimization code works on
``torch`` tensors of shape ``(1, C, H, W)``; :func:`to_tensor` and
:func:`to_image` convert between the two.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class DegradationConfig:
    t: int = 2
    sigma_255: float = 0.0
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"scale t must be a positive integer, got {self.t}")
        if self.sigma_255 < 0:
            raise ValueError(f"sigma_255 must be nonnegative, got {self.sigma_255}")


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W, C) image with C in {{1, 3}}, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"empty image of shape {img.shape}")
    return img


# ---------------------------------------------------------------- conversion


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    img = _check_image(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def to_image(t: torch.Tensor) -> np.ndarray:
    t = t.detach().cpu()
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ValueError("to_image expects a single image (batch size 1)")
        t = t[0]
    return t.to(torch.float64).clamp(0.0, 1.0).numpy().transpose(1, 2, 0).copy()


# ---------------------------------------------------------------- I/O


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit raster; byte ``v`` maps to ``v / 255``."""
    path = Path(path)
    try:
        im = Image.open(path)
        im.load()
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
        raise ValueError(f"unsupported bit depth (mode {im.mode}) in {path}; only 8-bit images are supported")
    if im.mode == "L":
        arr = np.asarray(im, dtype=np.uint8)[:, :, None]
    else:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    img = _check_image(img)
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)


def list_pngs(directory: str | os.PathLike) -> list[Path]:
    """Non-recursive, sorted listing of ``.png`` files."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".png")


# ---------------------------------------------------------------- resampling


def resize_tensor(x: torch.Tensor, size: tuple[int, int], mode: str = "bicubic") -> torch.Tensor:
    """Differentiable resize of an ``(N, C, H, W)`` tensor to ``size``.

    Bicubic downscaling is antialiased. Same-size requests return ``x``.
    """
    size = (int(size[0]), int(size[1]))
    if tuple(x.shape[-2:]) == size:
        return x
    if mode == "bicubic":
        shrinking = size[0] < x.shape[-2] or size[1] < x.shape[-1]
        return F.interpolate(x, size=size, mode="bicubic", align_corners=False, antialias=shrinking)
    if mode == "bilinear":
        return F.interpolate(x, size=size, mode="bilinear", align_corners=False)
    raise ValueError(f"unknown resize mode {mode!r}")


def resize(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bicubic resize of an image to ``(height, width)``, clamped to [0, 1]."""
    img = _check_image(img)
    out = resize_tensor(to_tensor(img, torch.float64), size).clamp(0.0, 1.0)
    return to_image(out)


def crop_to_multiple(img: np.ndarray, t: int) -> np.ndarray:
    img = _check_image(img)
    h, w = (img.shape[0] // t) * t, (img.shape[1] // t) * t
    if h == 0 or w == 0:
        raise ValueError(f"image {img.shape[:2]} is smaller than the scale factor {t}")
    return img[:h, :w]


def downsample(img: np.ndarray, t: int) -> np.ndarray:
    """Bicubic ``t``-times downscale.

    Sizes not divisible by ``t`` are first cropped (bottom/right) to the
    nearest multiple.
    """
    if t < 1 or int(t) != t:
        raise ValueError(f"scale t must be a positive integer, got {t}")
    img = crop_to_multiple(img, t)
    if t == 1:
        return img.copy()
    return resize(img, (img.shape[0] // t, img.shape[1] // t))


def upsample_Ut(img: np.ndarray, t: int) -> np.ndarray:
    """Bicubic ``t``-times upscale (the ``U_t`` operator)."""
    if t < 1 or int(t) != t:
        raise ValueError(f"scale t must be a positive integer, got {t}")
    img = _check_image(img)
    if t == 1:
        return img.copy()
    return resize(img, (img.shape[0] * t, img.shape[1] * t))


def add_gaussian_noise(img: np.ndarray, config: DegradationConfig) -> np.ndarray:
    img = _check_image(img).astype(np.float64)
    if config.sigma_255 == 0:
        return img.copy()
    rng = np.random.default_rng(config.seed)
    out = img + rng.normal(0.0, config.sigma_255 / 255.0, size=img.shape)
    return np.clip(out, 0.0, 1.0) if config.clip else out


def degrade(clean: np.ndarray, config: DegradationConfig) -> np.ndarray:
    """Downscale by ``t`` then add noise (the corrupted low-resolution input)."""
    return add_gaussian_noise(downsample(clean, config.t), config)


# ---------------------------------------------------------------- metrics


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = _check_image(a).astype(np.float64)
    b = _check_image(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for unit dynamic range; identical images give 100 dB."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def gaussian_window_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable valid-mode correlation over the first two axes
    n = len(g)
    h, w = x.shape[0] - n + 1, x.shape[1] - n + 1
    rows = sum(g[k] * x[k : k + h] for k in range(n))
    return sum(g[k] * rows[:, k : k + w] for k in range(n))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over all valid 11x11 Gaussian windows, averaged over channels."""
    a, b = _pair(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    g = gaussian_window_1d()
    c1, c2 = (SSIM_K1 * 1.0) ** 2, (SSIM_K2 * 1.0) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    per_channel = (num / den).mean(axis=(0, 1))
    return float(per_channel.mean())
