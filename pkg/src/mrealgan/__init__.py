"""Parallel generation of multi-appliance residential load profiles.

A 1-D convolutional GAN generates one day of simultaneous per-appliance
load at 2-minute resolution, trained with a Wasserstein objective,
distance-scaled one-sided gradient penalty, drift penalty, and stochastic
time-shift/noise augmentation. The package also ships the data pipeline,
a synthetic-data oracle, a four-score evaluation suite, and a CLI.
"""

from .augment import AugmentDraw, augment_channel, augment_sample, sample_noise_scale, sample_shift
from .data import (
    LoadDataset,
    LoadDay,
    NormStats,
    compute_stats,
    denormalize,
    ingest_csv,
    normalize,
    write_csv,
)
from .metrics import MetricReport, evaluate
from .model import ArchConfig, EmaState, GanModel, init_params, shape_audit
from .synthgen import SynthConfig, generate_synthetic
from .training import StepReport, TrainConfig, train, train_step

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "AugmentDraw",
    "EmaState",
    "GanModel",
    "LoadDataset",
    "LoadDay",
    "MetricReport",
    "NormStats",
    "StepReport",
    "SynthConfig",
    "TrainConfig",
    "augment_channel",
    "augment_sample",
    "compute_stats",
    "denormalize",
    "evaluate",
    "generate_synthetic",
    "ingest_csv",
    "init_params",
    "normalize",
    "sample_noise_scale",
    "sample_shift",
    "shape_audit",
    "train",
    "train_step",
    "write_csv",
]
