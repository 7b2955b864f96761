"""Four-tuple network descriptions and the networks built from them.

A description ``(depth, skips, cascades, residuals)`` is written as::

    N=10; S={(2,8),(3,7),(4,6)}; C={}; R=[6]

``S`` holds ``(i, j)`` pairs: the output of layer ``i`` goes through a 1x1
conv, is resized to the output of layer ``j-1`` and concatenated with it as
the input of layer ``j``. ``C`` lists layers whose input additionally gets a
resized copy of the network input. ``R`` is either a list of explicit
``(l, b)`` blocks, which add ``conv(phi_{l+b})`` and ``phi_l``, or a bare
count ``k`` of length-2 blocks inserted at the bottleneck.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .imaging import resize_tensor
from .substrate import check_primitives, leaky_relu_gain, seeded_parameters

MAX_INT_LITERAL = 1 << 16

LEAKY_SLOPE = 0.2
PYRAMID_FACTORS = (1.0, 0.5, 0.25, 0.125)


class SpecSyntaxError(SyntaxError):
    """Malformed network description; carries 1-based ``lineno``/``offset``."""

    def __init__(self, msg: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{msg} (line {line}, column {col})", ("<spec>", line, col, text))
        self.msg = msg


class InvalidSpec(ValueError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class Violation(NamedTuple):
    field: str
    value: object
    message: str

    def __str__(self) -> str:
        return f"{self.field} {self.value!r}: {self.message}"


Residual = tuple  # (l, b) explicit block
# a bare ``int`` in ``residuals`` is the count shorthand


@dataclass(frozen=True)
class NetworkSpec:
    depth: int
    skips: tuple[tuple[int, int], ...] = ()
    cascades: tuple[int, ...] = ()
    residuals: tuple = ()

    @property
    def explicit_residuals(self) -> list[tuple[int, int]]:
        return [tuple(r) for r in self.residuals if not isinstance(r, int)]

    @property
    def bottleneck_residuals(self) -> int:
        return sum(r for r in self.residuals if isinstance(r, int))

    @property
    def n_residual_blocks(self) -> int:
        return len(self.explicit_residuals) + self.bottleneck_residuals

    def without_skips(self) -> "NetworkSpec":
        return NetworkSpec(self.depth, (), self.cascades, self.residuals)

    def to_text(self) -> str:
        s = ",".join(f"({i},{j})" for i, j in self.skips)
        c = ",".join(str(x) for x in self.cascades)
        r = ",".join(str(x) if isinstance(x, int) else f"({x[0]},{x[1]})" for x in self.residuals)
        return f"N={self.depth}; S={{{s}}}; C={{{c}}}; R=[{r}]"

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "skips": [list(p) for p in self.skips],
            "cascades": list(self.cascades),
            "residuals": [r if isinstance(r, int) else list(r) for r in self.residuals],
        }


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]+)|(\S))")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[tuple[str, str, int]] = []
        for m in _TOKEN.finditer(text):
            if m.group(1) is not None:
                self.toks.append(("int", m.group(1), m.start(1)))
            elif m.group(2) is not None:
                self.toks.append(("name", m.group(2), m.start(2)))
            elif m.group(3) is not None:
                self.toks.append(("sym", m.group(3), m.start(3)))
        self.i = 0

    def error(self, msg: str, pos: int | None = None):
        if pos is None:
            pos = self.toks[self.i][2] if self.i < len(self.toks) else len(self.text)
        raise SpecSyntaxError(msg, self.text, pos)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.text))

    def expect(self, kind: str, value: str | None = None):
        tok = self.peek()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] if tok[0] != "eof" else "end of input"
            self.error(f"expected {want!r}, got {got!r}")
        self.i += 1
        return tok

    def integer(self) -> int:
        tok = self.expect("int")
        v = int(tok[1])
        if v > MAX_INT_LITERAL:
            self.error(f"integer literal {v} out of range (max {MAX_INT_LITERAL})", tok[2])
        return v

    def pair(self) -> tuple[int, int]:
        self.expect("sym", "(")
        a = self.integer()
        self.expect("sym", ",")
        b = self.integer()
        self.expect("sym", ")")
        return a, b

    def seq(self, close: str, item):
        out = []
        if self.peek()[:2] == ("sym", close):
            self.i += 1
            return out
        while True:
            out.append(item())
            tok = self.expect("sym")
            if tok[1] == close:
                return out
            if tok[1] != ",":
                self.error(f"expected ',' or {close!r}", tok[2])

    def residual_item(self):
        if self.peek()[:2] == ("sym", "("):
            return self.pair()
        return self.integer()

    def parse(self) -> NetworkSpec:
        fields: dict[str, object] = {}
        order = ("N", "S", "C", "R")
        for n, key in enumerate(order):
            tok = self.expect("name")
            if tok[1] != key:
                self.error(f"expected field {key!r}, got {tok[1]!r}", tok[2])
            self.expect("sym", "=")
            if key == "N":
                fields[key] = self.integer()
            elif key == "S":
                self.expect("sym", "{")
                fields[key] = self.seq("}", self.pair)
            elif key == "C":
                self.expect("sym", "{")
                fields[key] = self.seq("}", self.integer)
            else:
                self.expect("sym", "[")
                fields[key] = self.seq("]", self.residual_item)
            if n < len(order) - 1:
                self.expect("sym", ";")
        if self.peek()[:2] == ("sym", ";"):
            self.i += 1
        if self.peek()[0] != "eof":
            self.error(f"unexpected trailing input {self.peek()[1]!r}")
        return NetworkSpec(
            depth=fields["N"],
            skips=tuple(fields["S"]),
            cascades=tuple(fields["C"]),
            residuals=tuple(fields["R"]),
        )


def parse_network_spec(text: str | Mapping) -> NetworkSpec:
    """Parse the text form, or a mapping with keys depth/skips/cascades/residuals.

    Only syntax is checked here; use :func:`validate_spec` for the
    structural rules.
    """
    if isinstance(text, Mapping):
        return spec_from_dict(text)
    return _Parser(text).parse()


def spec_from_dict(d: Mapping) -> NetworkSpec:
    unknown = set(d) - {"depth", "skips", "cascades", "residuals"}
    if unknown:
        raise KeyError(f"unknown network spec keys: {sorted(unknown)}")
    if "depth" not in d:
        raise KeyError("network spec mapping needs 'depth'")
    res = tuple(int(r) if isinstance(r, int) else (int(r[0]), int(r[1])) for r in d.get("residuals", ()))
    return NetworkSpec(
        depth=int(d["depth"]),
        skips=tuple((int(i), int(j)) for i, j in d.get("skips", ())),
        cascades=tuple(int(c) for c in d.get("cascades", ())),
        residuals=res,
    )


def validate_spec(spec: NetworkSpec) -> list[Violation]:
    """Return every broken structural rule; an empty list means valid."""
    out: list[Violation] = []
    n = spec.depth
    if n < 2:
        out.append(Violation("depth", n, "depth must be at least 2"))
    seen: set[tuple[int, int]] = set()
    dests: set[int] = set()
    for i, j in spec.skips:
        if i >= j:
            out.append(Violation("skips", (i, j), "skip requires i<j"))
        elif i < 1 or j > n:
            out.append(Violation("skips", (i, j), f"skip layers must lie in 1..{n}"))
        if (i, j) in seen:
            out.append(Violation("skips", (i, j), "duplicate skip"))
        elif j in dests:
            out.append(Violation("skips", (i, j), f"another skip already ends at layer {j}"))
        seen.add((i, j))
        dests.add(j)
    for c in spec.cascades:
        if not 1 < c <= n:
            out.append(Violation("cascades", c, f"cascade layer must satisfy 1 < c <= {n}"))
    if len(set(spec.cascades)) != len(spec.cascades):
        out.append(Violation("cascades", spec.cascades, "duplicate cascade layer"))
    for r in spec.residuals:
        if isinstance(r, int):
            if r < 1:
                out.append(Violation("residuals", r, "residual count must be at least 1"))
            continue
        l, b = r
        if b < 1:
            out.append(Violation("residuals", r, "residual length must be at least 1"))
        if l < 1:
            out.append(Violation("residuals", r, "residual start must be at least 1"))
        if l + b > n:
            out.append(Violation("residuals", r, "residual block exceeds depth"))
    return out


def default_generator_spec(depth: int = 10, residual_blocks: int = 0) -> NetworkSpec:
    """Encoder-decoder description with skips ``(i, N-i)`` for ``i = 2..N/2-1``."""
    if depth % 2:
        raise ValueError("the default generator needs an even depth")
    skips = tuple((i, depth - i) for i in range(2, depth // 2))
    return NetworkSpec(depth, skips, (), (residual_blocks,) if residual_blocks else ())


DSR_SPEC_TEXT = "N=10; S={(2,8),(3,7),(4,6)}; C={}; R=[]"
RETARGET_SPEC_TEXT = "N=10; S={(2,8),(3,7),(4,6)}; C={}; R=[6]"


# ---------------------------------------------------------------- generator


@dataclass
class GeneratorConfig:
    spec: NetworkSpec
    base_channels: int = 64
    channel_schedule: list[int] | None = None
    seed: int = 0
    in_channels: int = 3
    out_channels: int = 3
    skip_channels: int = 16
    kernel: int = 3
    norm: str = "instance"

    def __post_init__(self):
        if self.channel_schedule is None:
            self.channel_schedule = [self.base_channels] * (self.spec.depth // 2)
        if self.spec.depth % 2 == 0 and len(self.channel_schedule) != self.spec.depth // 2:
            raise ValueError(
                f"channel_schedule has {len(self.channel_schedule)} entries, expected {self.spec.depth // 2}"
            )
        if any(c < 1 for c in self.channel_schedule):
            raise ValueError("channel widths must be >= 1")
        if self.norm not in ("instance", "batch", "none"):
            raise ValueError(f"unknown normalization {self.norm!r}")


class Norm(nn.Module):
    """Per-image normalization with affine parameters.

    Maps with a single spatial site pass through unnormalized: their
    statistics are degenerate for both instance and single-image batch
    normalization.
    """

    def __init__(self, channels: int, kind: str = "instance"):
        super().__init__()
        self.kind = kind
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        if self.kind == "none":
            return x
        if x.shape[-1] * x.shape[-2] > 1:
            if self.kind == "instance":
                x = F.instance_norm(x, eps=1e-5)
            else:
                x = F.batch_norm(x, None, None, training=True, eps=1e-5)
        return x * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class Stage(nn.Module):
    """conv -> norm -> leaky ReLU; encoder stages stride 2, decoder stages resize first."""

    def __init__(self, cin: int, cout: int, kind: str, kernel: int = 3, norm: str = "instance"):
        super().__init__()
        self.kind = kind
        stride = 2 if kind == "encoder" else 1
        self.conv = nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2)
        self.norm = Norm(cout, norm)

    def forward(self, x, size=None):
        if self.kind == "decoder":
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
        return F.leaky_relu(self.norm(self.conv(x)), LEAKY_SLOPE)


class ResidualBlock(nn.Module):
    """Bottleneck block: ``x + conv(act(norm(conv(x))))``."""

    def __init__(self, channels: int, kernel: int = 3, norm: str = "instance"):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel, padding=kernel // 2)
        self.norm1 = Norm(channels, norm)
        self.conv2 = nn.Conv2d(channels, channels, kernel, padding=kernel // 2)
        self.norm2 = Norm(channels, norm)

    def forward(self, x):
        h = F.leaky_relu(self.norm1(self.conv1(x)), LEAKY_SLOPE)
        return x + self.norm2(self.conv2(h))


class Edge(NamedTuple):
    kind: str  # sequential | skip-concat | cascade-concat | residual-add
    src: str
    dst: str


def target_size(h: int, w: int, s_h: float, s_w: float) -> tuple[int, int]:
    """Round-half-up output size; raises on non-positive scales or empty output."""
    if not (s_h > 0 and s_w > 0):
        raise ValueError(f"scales must be positive, got ({s_h}, {s_w})")
    th, tw = math.floor(s_h * h + 0.5), math.floor(s_w * w + 0.5)
    if th < 1 or tw < 1:
        raise ValueError(f"degenerate output size ({th}, {tw}) for input ({h}, {w}) and scales ({s_h}, {s_w})")
    return th, tw


class BuiltNetwork(nn.Module):
    """Encoder-decoder generator materialized from a :class:`GeneratorConfig`."""

    PRIMITIVES_USED = (
        "conv2d", "bilinear_resize", "concat", "add", "leaky_relu",
        "sigmoid", "normalization", "mean", "clamp",
    )

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        spec = config.spec
        check_primitives(self.PRIMITIVES_USED)
        self.config = config
        self.spec = spec
        n = spec.depth
        stages = n // 2
        self.stages = stages
        sched = config.channel_schedule
        self.skip_src = {j: i for i, j in spec.skips}
        self.cascade_set = set(spec.cascades)
        self.res_end: dict[int, list[tuple[int, str]]] = {}
        for r, (l, b) in enumerate(spec.explicit_residuals):
            self.res_end.setdefault(l + b, []).append((l, f"{l}_{b}_{r}"))

        out_ch = {0: config.in_channels}
        for l in range(1, n + 1):
            if l <= stages:
                out_ch[l] = sched[l - 1]
            else:
                k = l - stages
                out_ch[l] = sched[max(stages - k - 1, 0)]
        self.out_ch = out_ch

        self.layers = nn.ModuleDict()
        self.skip_convs = nn.ModuleDict()
        self.res_convs = nn.ModuleDict()
        self.res_proj = nn.ModuleDict()
        self.edges: list[Edge] = []
        for l in range(1, n + 1):
            cin = out_ch[l - 1]
            self.edges.append(Edge("sequential", self._name(l - 1), self._name(l)))
            if l in self.skip_src:
                i = self.skip_src[l]
                self.skip_convs[f"{i}_{l}"] = nn.Conv2d(out_ch[i], config.skip_channels, 1)
                cin += config.skip_channels
                self.edges.append(Edge("skip-concat", self._name(i), self._name(l)))
            if l in self.cascade_set:
                cin += config.in_channels
                self.edges.append(Edge("cascade-concat", "input", self._name(l)))
            kind = "encoder" if l <= stages else "decoder"
            self.layers[str(l)] = Stage(cin, out_ch[l], kind, config.kernel, config.norm)
            for src, key in self.res_end.get(l, ()):
                self.res_convs[key] = nn.Conv2d(out_ch[l], out_ch[l], config.kernel, padding=config.kernel // 2)
                if out_ch[src] != out_ch[l]:
                    self.res_proj[key] = nn.Conv2d(out_ch[src], out_ch[l], 1)
                self.edges.append(Edge("residual-add", self._name(src), self._name(l)))
            if l == stages:
                for r in range(spec.bottleneck_residuals):
                    self.edges.append(Edge("residual-add", self._name(l), f"bottleneck_res{r}"))
        self.bottleneck = nn.Sequential(
            *[ResidualBlock(out_ch[stages], config.kernel, config.norm) for _ in range(spec.bottleneck_residuals)]
        )
        self.head = nn.Conv2d(out_ch[n], config.out_channels, config.kernel, padding=config.kernel // 2)
        self.edges.append(Edge("sequential", self._name(n), "output"))
        self.reset_parameters(config.seed)

    @staticmethod
    def _name(l: int) -> str:
        return "input" if l == 0 else f"layer{l}"

    def reset_parameters(self, seed: int) -> None:
        reset_seeded(self, seed)

    # -- graph bookkeeping -------------------------------------------------

    @property
    def concat_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind.endswith("concat")]

    @property
    def residual_adds(self) -> list[Edge]:
        return [e for e in self.edges if e.kind == "residual-add"]

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def decoder_sizes(self, out_size: tuple[int, int]) -> dict[int, tuple[int, int]]:
        th, tw = out_size
        sizes = {}
        for k in range(0, self.stages + 1):
            f = 2 ** (self.stages - k)
            sizes[self.stages + k] = (max(1, math.floor(th / f + 0.5)), max(1, math.floor(tw / f + 0.5)))
        sizes[self.spec.depth] = (th, tw)
        return sizes

    def forward(self, x: torch.Tensor, out_size: tuple[int, int] | None = None) -> torch.Tensor:
        if out_size is None:
            out_size = tuple(x.shape[-2:])
        n, stages = self.spec.depth, self.stages
        dec = self.decoder_sizes(out_size)
        acts = {0: x}
        for l in range(1, n + 1):
            prev = acts[l - 1]
            parts = [prev]
            hw = prev.shape[-2:]
            if l in self.skip_src:
                i = self.skip_src[l]
                s = self.skip_convs[f"{i}_{l}"](acts[i])
                parts.append(resize_tensor(s, hw, "bilinear"))
            if l in self.cascade_set:
                parts.append(resize_tensor(x, hw, "bilinear"))
            inp = torch.cat(parts, dim=1) if len(parts) > 1 else prev
            out = self.layers[str(l)](inp, dec.get(l))
            for src, key in self.res_end.get(l, ()):
                base = acts[src]
                if key in self.res_proj:
                    base = self.res_proj[key](base)
                out = self.res_convs[key](out) + resize_tensor(base, out.shape[-2:], "bilinear")
            if l == stages:
                out = self.bottleneck(out)
                out = resize_tensor(out, dec[stages], "bilinear")
            acts[l] = out
        return torch.sigmoid(self.head(acts[n])).clamp(0.0, 1.0)

    def summary(self) -> str:
        rows = [f"{'layer':<18}{'kind':<10}{'in':>6}{'out':>6}{'params':>10}"]
        for l in range(1, self.spec.depth + 1):
            st = self.layers[str(l)]
            cnt = sum(p.numel() for p in st.parameters())
            rows.append(f"{'layer' + str(l):<18}{st.kind:<10}{st.conv.in_channels:>6}{st.conv.out_channels:>6}{cnt:>10}")
            if l == self.stages:
                for r, blk in enumerate(self.bottleneck):
                    cnt = sum(p.numel() for p in blk.parameters())
                    c = blk.conv1.in_channels
                    rows.append(f"{'bottleneck_res' + str(r):<18}{'residual':<10}{c:>6}{c:>6}{cnt:>10}")
        cnt = sum(p.numel() for p in self.head.parameters())
        rows.append(f"{'output':<18}{'head':<10}{self.head.in_channels:>6}{self.head.out_channels:>6}{cnt:>10}")
        for name, conv in self.skip_convs.items():
            rows.append(f"{'skip_' + name:<18}{'skip':<10}{conv.in_channels:>6}{conv.out_channels:>6}{conv.weight.numel() + conv.bias.numel():>10}")
        rows.append("")
        rows.append("edges:")
        for e in self.edges:
            if e.kind != "sequential":
                rows.append(f"  {e.kind:<15} {e.src} -> {e.dst}")
        rows.append(
            f"skip edges: {len(self.spec.skips)}  cascade edges: {len(self.spec.cascades)}  "
            f"residual blocks: {self.spec.n_residual_blocks}"
        )
        rows.append(f"total parameters: {self.count_parameters()}")
        return "\n".join(rows)


def reset_seeded(module: nn.Module, seed: int) -> None:
    """Re-draw every conv weight from :func:`seeded_parameters`; zero biases, unit norm scales."""
    convs = [m for m in module.modules() if isinstance(m, nn.Conv2d)]
    if convs:
        gain = leaky_relu_gain(LEAKY_SLOPE)
        drawn = seeded_parameters([c.weight.shape for c in convs], seed, gain=gain, dtype=convs[0].weight.dtype)
        with torch.no_grad():
            for c, v in zip(convs, drawn):
                c.weight.copy_(v)
                if c.bias is not None:
                    c.bias.zero_()
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, Norm):
                m.weight.fill_(1.0)
                m.bias.zero_()


def build_generator(config: GeneratorConfig) -> BuiltNetwork:
    violations = validate_spec(config.spec)
    if violations:
        raise InvalidSpec(violations)
    if config.spec.depth % 2:
        raise ValueError(f"generator depth must be even (encoder/decoder halves), got {config.spec.depth}")
    return BuiltNetwork(config)


def generator_forward(
    net: BuiltNetwork,
    x: torch.Tensor,
    s_h: float = 1.0,
    s_w: float = 1.0,
    out_size: tuple[int, int] | None = None,
) -> torch.Tensor:
    """Run ``net`` on a ``(1, C, h, w)`` tensor, producing ``round(s_h*h) x round(s_w*w)``.

    ``out_size`` overrides the scale factors with an exact size.
    """
    if x.ndim == 3:
        x = x.unsqueeze(0)
    h, w = x.shape[-2:]
    if out_size is None:
        out_size = target_size(h, w, s_h, s_w)
    elif out_size[0] < 1 or out_size[1] < 1:
        raise ValueError(f"degenerate output size {out_size}")
    return net(x, tuple(int(s) for s in out_size))


# ---------------------------------------------------------------- discriminator


class PatchDiscriminator(nn.Module):
    """Four convolutions (kernel 4, padding 2), stride 2 on all but the last."""

    def __init__(self, in_channels: int = 3, channels: Sequence[int] = (64, 128, 256)):
        super().__init__()
        widths = [in_channels, *channels, 1]
        self.convs = nn.ModuleList(
            nn.Conv2d(widths[i], widths[i + 1], 4, stride=2 if i < 3 else 1, padding=2) for i in range(4)
        )

    @property
    def n_layers(self) -> int:
        return len(self.convs)

    def forward(self, x):
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = F.leaky_relu(x, LEAKY_SLOPE)
        return x


def patch_map_size(side: int) -> int:
    """Score-map side produced by :class:`PatchDiscriminator` for an input side."""
    for stride in (2, 2, 2, 1):
        side = (side + 2 * 2 - 4) // stride + 1
    return side


@dataclass
class DiscriminatorOutput:
    maps: list[torch.Tensor]
    weights: torch.Tensor

    @property
    def aggregate(self) -> torch.Tensor:
        return sum(w * m.mean() for w, m in zip(self.weights, self.maps))


class MultiScaleDiscriminator(nn.Module):
    PRIMITIVES_USED = ("conv2d", "bicubic_resize", "leaky_relu", "mean", "sum")

    def __init__(self, scale_weights: Sequence[float] = (1, 1, 1, 1), seed: int = 0, in_channels: int = 3,
                 channels: Sequence[int] = (64, 128, 256)):
        super().__init__()
        check_primitives(self.PRIMITIVES_USED)
        w = torch.as_tensor([float(v) for v in scale_weights], dtype=torch.float64)
        if w.numel() != 4:
            raise ValueError(f"expected 4 scale weights, got {w.numel()}")
        if (w < 0).any() or not torch.isfinite(w).all():
            raise ValueError(f"scale weights must be finite and nonnegative, got {w.tolist()}")
        if w.sum() <= 0:
            raise ValueError("scale weights are all zero")
        self.register_buffer("scale_weights", (w / w.sum()).to(torch.float32))
        self.scale_factors = PYRAMID_FACTORS
        self.sub_discriminators = nn.ModuleList(PatchDiscriminator(in_channels, channels) for _ in range(4))
        reset_seeded(self, seed)

    @property
    def min_size(self) -> int:
        return int(round(1.0 / min(self.scale_factors)))

    def pyramid(self, z: torch.Tensor) -> list[torch.Tensor]:
        h, w = z.shape[-2:]
        out = []
        for f in self.scale_factors:
            size = (max(1, math.floor(h * f + 0.5)), max(1, math.floor(w * f + 0.5)))
            out.append(resize_tensor(z, size, "bicubic"))
        return out

    def forward(self, z: torch.Tensor) -> DiscriminatorOutput:
        if z.ndim == 3:
            z = z.unsqueeze(0)
        if min(z.shape[-2:]) < self.min_size:
            raise ValueError(
                f"discriminator input {tuple(z.shape[-2:])} is smaller than the minimum "
                f"{self.min_size}x{self.min_size}"
            )
        maps = [d(level) for d, level in zip(self.sub_discriminators, self.pyramid(z))]
        return DiscriminatorOutput(maps, self.scale_weights.to(z.dtype))


def build_discriminator(scale_weights: Sequence[float] = (1, 1, 1, 1), seed: int = 0, **kwargs) -> MultiScaleDiscriminator:
    return MultiScaleDiscriminator(scale_weights, seed, **kwargs)


def discriminator_forward(D: MultiScaleDiscriminator, z: torch.Tensor) -> DiscriminatorOutput:
    return D(z)
