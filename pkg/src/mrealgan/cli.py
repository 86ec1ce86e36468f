"""Command-line entry point wiring the full pipeline.

Commands::

    mrealgan synth     --config synth.cfg --out data.csv
    mrealgan prepare   --data data.csv --out prep_dir/
    mrealgan train     --config train.cfg --data data.csv --out run_dir/
                       [--resume ckpt_dir] [--steps N]
    mrealgan generate  --checkpoint ckpt_dir --n-samples N --seed S --out gen.csv
                       [--require-operation] [--operation-threshold W]
                       [--max-resamples K] [--plot-dir DIR]
    mrealgan evaluate  --real real.csv --generated gen.csv --seed S
                       --out report.csv [--self-test]

Config files are plain ``key = value`` text ('#' comments allowed); keys
match the training, architecture, or synthesis configuration field names.
Dataset CSVs always carry raw watts; ``train`` normalizes internally and
``generate`` writes watts back out. All randomness is controlled by seeds;
the ``MREAL_LOG`` environment variable sets log verbosity (DEBUG, INFO,
WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from . import metrics as metrics_mod
from .checkpoint import CheckpointError
from .data import DataFormatError, LoadDataset, LoadDay
from .model import ArchConfig, hypersphere_normalize
from .synthgen import SynthConfig, generate_synthetic
from .training import TrainConfig, TrainingError, load_eval_generator, train

log = logging.getLogger("mrealgan")

_GENERATE_BATCH = 256


class UsageError(ValueError):
    pass


@dataclass
class GenerateRequest:
    checkpoint: Path
    n_samples: int
    seed: int = 0
    require_operation: bool = False
    operation_threshold: float = 10.0
    max_resamples: int = 20

    def __post_init__(self):
        if self.n_samples < 1:
            raise UsageError("n_samples must be >= 1")
        if self.operation_threshold < 0 or self.max_resamples < 0:
            raise UsageError("operation_threshold and max_resamples must be >= 0")


def generate_dataset(req: GenerateRequest) -> LoadDataset:
    """Sample from a checkpoint's EMA generator and map back to watts.

    With ``require_operation``, samples in which every appliance stays
    below the watt threshold are redrawn up to ``max_resamples`` times
    each; any still-flat samples are kept with a warning.
    """
    gen, arch, stats = load_eval_generator(req.checkpoint)
    rng = np.random.default_rng(req.seed)

    def draw_watts(count: int) -> np.ndarray:
        chunks = []
        remaining = count
        while remaining > 0:
            batch = min(_GENERATE_BATCH, remaining)
            z = hypersphere_normalize(rng.standard_normal((batch, arch.latent_dim)))
            with torch.no_grad():
                out = gen(torch.from_numpy(z).to(torch.float32))
            chunks.append(data_mod.denormalize_values(out.numpy().astype(np.float64), stats))
            remaining -= batch
        return np.concatenate(chunks)

    watts = draw_watts(req.n_samples)
    if req.require_operation:
        flat = np.flatnonzero(watts.max(axis=(1, 2)) < req.operation_threshold)
        rounds = 0
        while flat.size and rounds < req.max_resamples:
            redraw = draw_watts(flat.size)
            watts[flat] = redraw
            flat = flat[redraw.max(axis=(1, 2)) < req.operation_threshold]
            rounds += 1
        if flat.size:
            log.warning(
                "resample budget exhausted: %d of %d samples show no operation",
                flat.size,
                req.n_samples,
            )

    days = [
        LoadDay(watts[i], sample_id=f"gen_{i:06d}", day_type="unknown")
        for i in range(req.n_samples)
    ]
    return LoadDataset(samples=days, stats=stats, normalized=False)


def write_plot_csvs(ds: LoadDataset, out_dir) -> None:
    """One CSV per sample: time_step plus one watt column per appliance."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "time_step," + ",".join(f"a{j}_watts" for j in range(ds.n_app))
    for day in ds.samples:
        with open(out_dir / f"{day.sample_id}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(header + "\n")
            for t in range(day.n_steps):
                fh.write(str(t) + "," + ",".join("%.6f" % v for v in day.values[:, t]) + "\n")


def write_report(report: metrics_mod.MetricReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,appliance,value\n")
        for metric, appliance, value in report.rows():
            fh.write("%s,%s,%s\n" % (metric, appliance, repr(value)))


# --- config file handling --------------------------------------------------


def parse_kv_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise UsageError(f"{path}: line {lineno}: empty key or value")
            if key in out:
                raise UsageError(f"{path}: line {lineno}: duplicate key {key!r}")
            out[key] = value
    return out


def _coerce(text: str, hint, key: str):
    if hint is int:
        try:
            return int(text)
        except ValueError:
            raise UsageError(f"config key {key!r} expects an integer, got {text!r}") from None
    if hint is float:
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"config key {key!r} expects a number, got {text!r}") from None
    if hint is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {key!r} expects true/false, got {text!r}")
    if hint is str:
        return text
    if typing.get_origin(hint) is tuple or hint is tuple:
        parts = [p.strip() for p in text.split(",")]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise UsageError(f"config key {key!r} expects a number range, got {text!r}") from None
    raise UsageError(f"config key {key!r} has unsupported type")


def _build_config(cls, kv: dict[str, str], used: set[str]):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in fields(cls):
        if f.name in kv:
            kwargs[f.name] = _coerce(kv[f.name], hints[f.name], f.name)
            used.add(f.name)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_train_configs(path) -> tuple[TrainConfig, ArchConfig]:
    kv = parse_kv_file(path) if path else {}
    used: set[str] = set()
    train_cfg = _build_config(TrainConfig, kv, used)
    arch_cfg = _build_config(ArchConfig, kv, used)
    unknown = sorted(set(kv) - used)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return train_cfg, arch_cfg


def load_synth_config(path) -> SynthConfig:
    kv = parse_kv_file(path) if path else {}
    used: set[str] = set()
    cfg = _build_config(SynthConfig, kv, used)
    unknown = sorted(set(kv) - used)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_synth_config(args.config)
    ds = generate_synthetic(cfg)
    data_mod.write_csv(ds, args.out)
    log.info("wrote %d synthetic samples to %s", len(ds), args.out)
    return 0


def cmd_prepare(args) -> int:
    ds = data_mod.ingest_csv(args.data)
    stats = data_mod.compute_stats(ds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_mod.write_stats(stats, out_dir / "stats.txt")
    data_mod.write_csv(data_mod.normalize(ds, stats), out_dir / "normalized.csv")
    log.info("prepared %d samples; stats and normalized data in %s", len(ds), out_dir)
    return 0


def cmd_train(args) -> int:
    train_cfg, arch_cfg = load_train_configs(args.config)
    if args.steps is not None:
        from dataclasses import replace

        train_cfg = replace(train_cfg, total_steps=args.steps)
    ds = data_mod.ingest_csv(args.data)
    final = train(train_cfg, ds, args.out, arch=arch_cfg, resume=args.resume)
    print(final)
    return 0


def cmd_generate(args) -> int:
    req = GenerateRequest(
        checkpoint=Path(args.checkpoint),
        n_samples=args.n_samples,
        seed=args.seed,
        require_operation=args.require_operation,
        operation_threshold=args.operation_threshold,
        max_resamples=args.max_resamples,
    )
    ds = generate_dataset(req)
    data_mod.write_csv(ds, args.out)
    if args.plot_dir:
        write_plot_csvs(ds, args.plot_dir)
    log.info("wrote %d generated samples to %s", len(ds), args.out)
    return 0


def cmd_evaluate(args) -> int:
    real_ds = data_mod.ingest_csv(args.real)
    gen_ds = data_mod.ingest_csv(args.generated)
    report = metrics_mod.evaluate(real_ds, gen_ds, seed=args.seed, shared_streams=args.self_test)
    write_report(report, args.out)
    for metric, appliance, value in report.rows():
        print(f"{metric}{'[' + appliance + ']' if appliance else ''} = {value:.6g}")
    return 0


def _existing_file(text: str) -> str:
    if not Path(text).is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    return text


def _existing_dir(text: str) -> str:
    if not Path(text).is_dir():
        raise argparse.ArgumentTypeError(f"directory not found: {text}")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrealgan",
        description="Parallel multi-appliance load profile generation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-appliance dataset")
    p.add_argument("--config", type=_existing_file, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="compute stats and a normalized copy of a dataset")
    p.add_argument("--data", type=_existing_file, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a raw dataset CSV")
    p.add_argument("--config", type=_existing_file, default=None)
    p.add_argument("--data", type=_existing_file, required=True)
    p.add_argument("--out", required=True, help="run directory for checkpoints and log")
    p.add_argument("--resume", type=_existing_dir, default=None)
    p.add_argument("--steps", type=int, default=None, help="override total_steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample from a trained checkpoint")
    p.add_argument("--checkpoint", type=_existing_dir, required=True)
    p.add_argument("--n-samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--require-operation", action="store_true")
    p.add_argument("--operation-threshold", type=float, default=10.0)
    p.add_argument("--max-resamples", type=int, default=20)
    p.add_argument("--plot-dir", default=None, help="also write one plot CSV per sample")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="similarity report between two dataset CSVs")
    p.add_argument("--real", type=_existing_file, required=True)
    p.add_argument("--generated", type=_existing_file, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--self-test", action="store_true", help="share noise/window streams")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("MREAL_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("mrealgan").setLevel(level)


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        UsageError,
        DataFormatError,
        CheckpointError,
        TrainingError,
        metrics_mod.MetricError,
        ValueError,
    ) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
