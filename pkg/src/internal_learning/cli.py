"""Command-line entry point and dataset experiment harness.

Subcommands: ``dsr``, ``sr``, ``retarget``, ``gradcheck``, ``metrics`` and
``net-print``. Options given in a ``--config`` JSON file use the flag names
(without dashes, ``-`` replaced by ``_``); flags on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, imaging
from .losses import LossWeights
from .net_dsl import (
    GeneratorConfig,
    InvalidSpec,
    SpecSyntaxError,
    build_generator,
    parse_network_spec,
    validate_spec,
)
from .tasks import TaskConfig, dsr_defaults, retarget_defaults, run_dsr, run_retarget, run_sr, sr_defaults

log = logging.getLogger("internal_learning")

TASKS = ("dsr", "sr", "retarget")


@dataclass
class ExperimentConfig:
    task: str
    task_config: TaskConfig
    input: str | None = None
    dataset: str | None = None
    out: str = "runs"
    report: str | None = None
    t: int = 2
    sigma_255: float = 0.0
    s_h: float = 1.0
    s_w: float = 1.0
    jobs: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if (self.input is None) == (self.dataset is None):
            raise ValueError("give exactly one of input / dataset")
        path = Path(self.input or self.dataset)
        if not path.exists():
            raise FileNotFoundError(f"path does not exist: {path}")


@dataclass
class Report:
    rows: list[dict]
    config: dict
    task: str
    version: str = __version__

    @property
    def ok_rows(self) -> list[dict]:
        return [r for r in self.rows if r.get("status") == "ok"]

    def means(self) -> dict[str, float | None]:
        out = {}
        for key in ("psnr_db", "ssim", "wall_clock"):
            vals = [r[key] for r in self.ok_rows if r.get(key) is not None]
            out[key] = float(np.mean(vals)) if vals else None
        return out

    def records(self) -> list[dict]:
        mean = {"name": "mean", "status": "aggregate", "count": len(self.ok_rows), **self.means()}
        return [*self.rows, mean]

    def table(self, dataset_label: str | None = None) -> str:
        """Per-image rows plus a ``| dataset | SSIM |`` summary table."""
        lines = [f"{'image':<24}{'psnr_db':>10}{'ssim':>8}{'seconds':>10}{'seed':>6}  status"]
        fmt = lambda v, p: ("-" if v is None else f"{v:.{p}f}")
        for r in self.rows:
            lines.append(
                f"{r['name']:<24}{fmt(r.get('psnr_db'), 2):>10}{fmt(r.get('ssim'), 4):>8}"
                f"{fmt(r.get('wall_clock'), 1):>10}{r.get('seed', ''):>6}  {r['status']}"
            )
        m = self.means()
        lines.append(f"{'mean':<24}{fmt(m['psnr_db'], 2):>10}{fmt(m['ssim'], 4):>8}{fmt(m['wall_clock'], 1):>10}")
        label = (dataset_label or "dataset").upper()
        lines += ["", "|            | ours (SSIM) |", "|------------|-------------|",
                  f"| {label:<10} | {fmt(m['ssim'], 2):>11} |"]
        return "\n".join(lines)

    def write(self, path: str | Path, dataset_label: str | None = None) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(json.dumps({"version": self.version, "task": self.task, "config": self.config}) + "\n")
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")
        path.with_suffix(".txt").write_text(self.table(dataset_label) + "\n")


def _process(path: Path, cfg: ExperimentConfig, index: int) -> dict:
    tc = cfg.task_config
    row = {"name": path.name, "seed": tc.seed, "psnr_db": None, "ssim": None, "wall_clock": None}
    try:
        img = imaging.load_image(path)
    except (OSError, ValueError) as exc:
        log.warning("skipping %s: %s", path, exc)
        return {**row, "status": f"unreadable: {exc}"}
    start = time.perf_counter()
    if cfg.task == "retarget":
        res = run_retarget(img, cfg.s_h, cfg.s_w, tc)
    else:
        clean = imaging.crop_to_multiple(img, cfg.t)
        sigma = cfg.sigma_255 if cfg.task == "dsr" else 0.0
        deg = imaging.DegradationConfig(cfg.t, sigma, seed=tc.seed + index)
        corrupted = imaging.degrade(clean, deg)
        runner = run_dsr if cfg.task == "dsr" else run_sr
        res = runner(corrupted, cfg.t, tc, reference=clean)
    res.save(cfg.out, cfg.task, path.stem)
    return {**row, "psnr_db": res.metrics.get("psnr_db"), "ssim": res.metrics.get("ssim"),
            "wall_clock": time.perf_counter() - start, "status": "ok"}


def run_experiment(config: ExperimentConfig) -> Report:
    """Run the task on one image or every ``.png`` of a flat directory and write the report."""
    if config.dataset is not None:
        paths = imaging.list_pngs(config.dataset)
        if not paths:
            raise ValueError(f"dataset directory {config.dataset} contains no .png files")
    else:
        paths = [Path(config.input)]
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(lambda a: _process(a[1], config, a[0]), enumerate(paths)))
    else:
        rows = [_process(p, config, i) for i, p in enumerate(paths)]
    echo = {**config.task_config.to_dict(), "task": config.task, "t": config.t, "sigma_255": config.sigma_255,
            "s_h": config.s_h, "s_w": config.s_w}
    report = Report(rows, echo, config.task)
    target = config.report or str(Path(config.out) / f"report_{config.task}.jsonl")
    label = Path(config.dataset).name if config.dataset else Path(config.input).stem
    report.write(target, label)
    return report


# ---------------------------------------------------------------- argument handling


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values (flag names as keys)")
    p.add_argument("--input")
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--features", help="random:<seed> or pretrained:<path>")
    p.add_argument("--lr-g", type=float)
    p.add_argument("--lr-d", type=float)
    p.add_argument("--lambda-c", type=float)
    p.add_argument("--lambda-g", type=float)
    p.add_argument("--lambda-r", type=float)
    p.add_argument("--lambda-tv", type=float)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--log-every", type=int)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--network", help="override the generator description")
    p.add_argument("--input-mode", choices=("lr", "upsampled"))
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="internal-learning", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for task in ("dsr", "sr"):
        p = sub.add_parser(task, help=f"{task.upper()} on an image or dataset")
        _shared(p)
        p.add_argument("--scale", type=int, help="integer upscaling factor t")
        if task == "dsr":
            p.add_argument("--sigma", type=float, help="noise std on the 0-255 scale")
    p = sub.add_parser("retarget", help="content-aware retargeting")
    _shared(p)
    p.add_argument("--sh", type=float)
    p.add_argument("--sw", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference checks of the loss terms")
    p.add_argument("--precision", choices=("double", "single"), default="double")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("metrics", help="PSNR/SSIM of images against references")
    p.add_argument("--input", help="image, or directory of .png files")
    p.add_argument("--reference", required=True, help="reference image or directory (matched by name)")
    p.add_argument("--dataset", help="alias of --input for directories")

    p = sub.add_parser("net-print", help="print a network description as a layer table")
    p.add_argument("spec", help='e.g. "N=10; S={(2,8),(3,7),(4,6)}; C={}; R=[]"')
    p.add_argument("--base-channels", type=int, default=64)
    return parser


_FILE_KEYS = {
    "input", "dataset", "out", "report", "seed", "iters", "features", "lr_g", "lr_d", "lambda_c", "lambda_g",
    "lambda_r", "lambda_tv", "base_channels", "log_every", "snapshot_every", "network", "input_mode", "jobs",
    "scale", "sigma", "sh", "sw",
}


def _merge(args: argparse.Namespace) -> dict:
    opts: dict = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        unknown = set(data) - _FILE_KEYS - {"task", "comment"}
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        opts.update({k: v for k, v in data.items() if k not in ("task", "comment")})
    for k, v in vars(args).items():
        if k in _FILE_KEYS and v is not None:
            opts[k] = v
    return opts


def experiment_from_options(task: str, opts: dict) -> ExperimentConfig:
    base = {"dsr": dsr_defaults, "sr": sr_defaults, "retarget": retarget_defaults}[task]()
    w = asdict(base.weights)
    for k in ("lambda_c", "lambda_g", "lambda_r", "lambda_tv"):
        if k in opts:
            w[k] = float(opts[k])
    tc_kwargs = {"weights": LossWeights(**w)}
    mapping = {"iters": "iterations", "seed": "seed", "features": "features", "lr_g": "lr_g", "lr_d": "lr_d",
               "base_channels": "base_channels", "log_every": "log_every", "snapshot_every": "snapshot_every",
               "network": "network", "input_mode": "input_mode"}
    for src, dst in mapping.items():
        if src in opts:
            tc_kwargs[dst] = opts[src]
    t = int(opts.get("scale", 2))
    if task == "retarget":
        tc_kwargs["scale"] = (float(opts.get("sh", 1.0)), float(opts.get("sw", 1.0)))
    else:
        tc_kwargs["scale"] = t
        if task == "dsr":
            tc_kwargs["sigma_255"] = float(opts.get("sigma", 0.0))
    tc = replace(base, **tc_kwargs)
    return ExperimentConfig(
        task=task, task_config=tc, input=opts.get("input"), dataset=opts.get("dataset"),
        out=opts.get("out", "runs"), report=opts.get("report"), t=t,
        sigma_255=float(opts.get("sigma", 0.0)) if task == "dsr" else 0.0,
        s_h=float(opts.get("sh", 1.0)), s_w=float(opts.get("sw", 1.0)), jobs=int(opts.get("jobs", 1)),
    )


def _cmd_task(args) -> int:
    cfg = experiment_from_options(args.command, _merge(args))
    report = run_experiment(cfg)
    print(report.table(Path(cfg.dataset).name if cfg.dataset else None))
    return 0


def _cmd_net_print(args) -> int:
    try:
        spec = parse_network_spec(args.spec)
    except SpecSyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return 2
    violations = validate_spec(spec)
    if violations:
        for v in violations:
            print(f"invalid: {v}", file=sys.stderr)
        return 2
    if spec.depth % 2:
        print(f"invalid: depth {spec.depth} is odd; generators need encoder/decoder halves", file=sys.stderr)
        return 2
    net = build_generator(GeneratorConfig(spec, base_channels=args.base_channels))
    print(spec.to_text())
    print(net.summary())
    return 0


def _cmd_metrics(args) -> int:
    src = Path(args.input or args.dataset or "")
    ref = Path(args.reference)
    if src.is_dir():
        pairs = [(p, ref / p.name) for p in imaging.list_pngs(src)]
    else:
        pairs = [(src, ref)]
    for a, b in pairs:
        rec = {"path": str(a)}
        try:
            x, y = imaging.load_image(a), imaging.load_image(b)
            if x.shape != y.shape:
                raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
            rec.update(psnr_db=imaging.psnr(x, y), ssim=imaging.ssim(x, y) if min(x.shape[:2]) >= 11 else None)
        except (OSError, ValueError) as exc:
            rec["error"] = str(exc)
        print(json.dumps(rec))
    return 0


def _cmd_gradcheck(args) -> int:
    from .verification import run_gradchecks

    results = run_gradchecks(precision=args.precision, seed=args.seed)
    failed = 0
    for name, (report, tol) in results.items():
        ok = report.passed(tol)
        failed += not ok
        print(json.dumps({"check": name, "max_rel_err": report.max_error, "tol": tol,
                          "precision": report.precision, "step": report.step, "pass": ok}))
    return 1 if failed else 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"net-print": _cmd_net_print, "metrics": _cmd_metrics, "gradcheck": _cmd_gradcheck}
    try:
        return handlers.get(args.command, _cmd_task)(args)
    except (FileNotFoundError, InvalidSpec, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
