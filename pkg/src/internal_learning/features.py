"""Context-vector extraction for the contextual loss.

An extractor is a VGG-style stack of 3x3 conv + ReLU layers named
``conv{block}_{index}``, with a 2x2 ceil-mode max-pool in front of every
block after the first. Block ``b`` therefore has spatial reduction
``2**(b-1)``. Weights come either from a tensor archive (see
:func:`save_archive` for the format) or from a seeded random draw.

Archive layout, all text lines UTF-8::

    FEATURE-ARCHIVE 1
    mean <r> <g> <b>
    std <r> <g> <b>
    layer <name> <in_channels> <out_channels> <reduction>
    ...
    tensor <key> <d0,d1,...> <dtype> <byte_offset>
    ...
    end

followed by the raw little-endian tensor bytes; offsets count from the
first byte after the ``end`` line.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .substrate import seeded_parameters

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
DEFAULT_LAYER = "conv3_1"
MAGIC = "FEATURE-ARCHIVE 1"

_LAYER_NAME = re.compile(r"^conv(\d+)_(\d+)$")
_DTYPES = {"float32": ("<f4", torch.float32), "float64": ("<f8", torch.float64)}


class ArchiveError(ValueError):
    pass


@dataclass(frozen=True)
class LayerInfo:
    name: str
    in_channels: int
    out_channels: int
    reduction: int


@dataclass
class ContextVectors:
    vectors: torch.Tensor  # (count, dim)
    layer: str

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class FeatureExtractor:
    layers: list[LayerInfo]
    weights: dict[str, torch.Tensor]
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    source: str = "random(0)"
    _registry: dict[str, LayerInfo] = field(init=False, repr=False)

    def __post_init__(self):
        self._registry = {l.name: l for l in self.layers}

    @property
    def layer_names(self) -> list[str]:
        return [l.name for l in self.layers]

    def layer(self, name: str) -> LayerInfo:
        try:
            return self._registry[name]
        except KeyError:
            raise KeyError(f"unknown feature layer {name!r}; registered: {self.layer_names}") from None

    def expected_count(self, h: int, w: int, layer: str) -> int:
        r = self.layer(layer).reduction
        return math.ceil(h / r) * math.ceil(w / r)

    def features(self, image: torch.Tensor, layer: str) -> torch.Tensor:
        """Activation map ``(1, C_f, H/r, W/r)`` of ``layer`` for an ``(1, C, H, W)`` image."""
        target = self.layer(layer)
        x = image if image.ndim == 4 else image.unsqueeze(0)
        if x.shape[1] == 1:
            x = x.expand(-1, 3, -1, -1)
        if x.shape[1] != 3:
            raise ValueError(f"feature extraction needs 1 or 3 channels, got {x.shape[1]}")
        mean = torch.as_tensor(self.mean, dtype=x.dtype).view(1, 3, 1, 1)
        std = torch.as_tensor(self.std, dtype=x.dtype).view(1, 3, 1, 1)
        x = (x - mean) / std
        block = 1
        for info in self.layers:
            b = int(_LAYER_NAME.match(info.name).group(1))
            if b != block:
                x = F.max_pool2d(x, 2, 2, ceil_mode=True)
                block = b
            w = self.weights[f"{info.name}.weight"].to(x.dtype)
            bias = self.weights[f"{info.name}.bias"].to(x.dtype)
            x = F.relu(F.conv2d(x, w, bias, padding=1))
            if info.name == target.name:
                return x
        raise AssertionError("unreachable: registered layer not visited")


def _check_layers(layers: Sequence[LayerInfo]) -> None:
    prev_block, prev_out = 0, 3
    for info in layers:
        m = _LAYER_NAME.match(info.name)
        if not m:
            raise ArchiveError(f"layer name {info.name!r} does not match conv<block>_<index>")
        b = int(m.group(1))
        if b < prev_block:
            raise ArchiveError(f"layer {info.name!r} is out of order")
        if info.reduction != 2 ** (b - 1):
            raise ArchiveError(f"layer {info.name!r} declares reduction {info.reduction}, expected {2 ** (b - 1)}")
        if info.in_channels != prev_out:
            raise ArchiveError(f"layer {info.name!r} expects {info.in_channels} input channels, previous layer gives {prev_out}")
        prev_block, prev_out = b, info.out_channels


def make_random_extractor(seed: int = 0, channels: Sequence[int] = (32, 64, 128)) -> FeatureExtractor:
    """Three-block extractor (reductions 1, 2, 4) with fixed seeded He-scaled weights."""
    layers, cin = [], 3
    for b, c in enumerate(channels, start=1):
        layers.append(LayerInfo(f"conv{b}_1", cin, c, 2 ** (b - 1)))
        cin = c
    shapes = [(l.out_channels, l.in_channels, 3, 3) for l in layers]
    drawn = seeded_parameters(shapes, seed, gain=math.sqrt(2.0))
    weights = {}
    for l, w in zip(layers, drawn):
        weights[f"{l.name}.weight"] = w
        weights[f"{l.name}.bias"] = torch.zeros(l.out_channels)
    return FeatureExtractor(layers, weights, IMAGENET_MEAN, IMAGENET_STD, source=f"random({seed})")


def save_archive(extractor: FeatureExtractor, path: str | os.PathLike, dtype: str = "float32") -> None:
    np_dtype, torch_dtype = _DTYPES[dtype]
    lines = [MAGIC, "mean " + " ".join(repr(float(v)) for v in extractor.mean),
             "std " + " ".join(repr(float(v)) for v in extractor.std)]
    for l in extractor.layers:
        lines.append(f"layer {l.name} {l.in_channels} {l.out_channels} {l.reduction}")
    blobs, offset = [], 0
    for l in extractor.layers:
        for key in (f"{l.name}.weight", f"{l.name}.bias"):
            arr = extractor.weights[key].detach().to(torch_dtype).cpu().numpy().astype(np_dtype)
            shape = ",".join(str(s) for s in arr.shape)
            lines.append(f"tensor {key} {shape} {dtype} {offset}")
            data = arr.tobytes(order="C")
            blobs.append(data)
            offset += len(data)
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for b in blobs:
            fh.write(b)


def read_manifest(path: str | os.PathLike) -> tuple[dict, bytes]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"feature archive not found: {path}")
    raw = path.read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise ArchiveError(f"{path} is not a feature archive")
    header = raw[: cut + 1].decode("utf-8").splitlines()
    data = raw[cut + len(marker):]
    manifest = {"mean": None, "std": None, "layers": [], "tensors": {}}
    for ln, line in enumerate(header[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag in ("mean", "std"):
                manifest[tag] = tuple(float(v) for v in parts[1:4])
            elif tag == "layer":
                manifest["layers"].append(LayerInfo(parts[1], int(parts[2]), int(parts[3]), int(parts[4])))
            elif tag == "tensor":
                shape = tuple(int(s) for s in parts[2].split(",")) if parts[2] else ()
                manifest["tensors"][parts[1]] = (shape, parts[3], int(parts[4]))
            else:
                raise ArchiveError(f"unknown manifest entry {tag!r}")
        except (IndexError, ValueError) as exc:
            raise ArchiveError(f"{path}: malformed manifest line {ln}: {line!r}") from exc
    if manifest["mean"] is None or manifest["std"] is None:
        raise ArchiveError(f"{path}: manifest lacks normalization constants")
    return manifest, data


def load_pretrained_extractor(archive_path: str | os.PathLike) -> FeatureExtractor:
    manifest, data = read_manifest(archive_path)
    layers = manifest["layers"]
    if not layers:
        raise ArchiveError(f"{archive_path}: manifest lists no layers")
    _check_layers(layers)
    weights = {}
    for l in layers:
        expected = {
            f"{l.name}.weight": (l.out_channels, l.in_channels, 3, 3),
            f"{l.name}.bias": (l.out_channels,),
        }
        for key, shape in expected.items():
            if key not in manifest["tensors"]:
                raise ArchiveError(f"{archive_path}: missing tensor {key!r}")
            got, dtype, offset = manifest["tensors"][key]
            if got != shape:
                raise ArchiveError(f"{archive_path}: tensor {key!r} has shape {got}, expected {shape}")
            if dtype not in _DTYPES:
                raise ArchiveError(f"{archive_path}: tensor {key!r} has unsupported dtype {dtype}")
            np_dtype, _ = _DTYPES[dtype]
            n = math.prod(shape)
            nbytes = n * np.dtype(np_dtype).itemsize
            if offset + nbytes > len(data):
                raise ArchiveError(f"{archive_path}: tensor {key!r} runs past the end of the file")
            arr = np.frombuffer(data, dtype=np_dtype, count=n, offset=offset).reshape(shape)
            weights[key] = torch.from_numpy(arr.astype(np.float32))
    return FeatureExtractor(layers, weights, manifest["mean"], manifest["std"], source=f"pretrained({archive_path})")


def archive_from_vgg(features: torch.nn.Module, path: str | os.PathLike,
                     mean=IMAGENET_MEAN, std=IMAGENET_STD, max_block: int = 3) -> None:
    """Write the conv layers of a torchvision-style VGG ``features`` stack as an archive.

    Layers are renamed ``conv{block}_{index}``; blocks after ``max_block`` are
    dropped since the contextual loss uses a single mid-level layer.
    """
    layers, weights = [], {}
    block, idx, cin = 1, 0, 3
    for m in features:
        if isinstance(m, torch.nn.MaxPool2d):
            block, idx = block + 1, 0
            if block > max_block:
                break
        elif isinstance(m, torch.nn.Conv2d):
            idx += 1
            name = f"conv{block}_{idx}"
            layers.append(LayerInfo(name, m.in_channels, m.out_channels, 2 ** (block - 1)))
            weights[f"{name}.weight"] = m.weight.detach().clone()
            weights[f"{name}.bias"] = m.bias.detach().clone()
    save_archive(FeatureExtractor(layers, weights, tuple(mean), tuple(std), source="vgg"), path)


def make_extractor(selector: str) -> FeatureExtractor:
    """Resolve ``random:<seed>`` or ``pretrained:<path>``."""
    kind, _, arg = selector.partition(":")
    if kind == "random":
        return make_random_extractor(int(arg or 0))
    if kind == "pretrained":
        if not arg:
            raise ValueError("pretrained feature selector needs a path: pretrained:<path>")
        return load_pretrained_extractor(arg)
    raise ValueError(f"unknown feature selector {selector!r}; use random:<seed> or pretrained:<path>")


def extract_context_vectors(extractor: FeatureExtractor, image: torch.Tensor, layer: str = DEFAULT_LAYER) -> ContextVectors:
    """Flatten the activations of ``layer`` into one vector per spatial site."""
    fmap = extractor.features(image, layer)
    vecs = fmap[0].reshape(fmap.shape[1], -1).transpose(0, 1)
    return ContextVectors(vecs, layer)
