"""Synthetic two-appliance datasets with controllable inter-dependency.

Stands in for restricted measured data: appliance 0 (washer-like) draws a
rectangular power pulse on a random fraction of days, and appliance 1
(dryer-like) follows it after a configurable lag with configurable
probability. The lag structure gives the dataset a known cross-appliance
correlation band, which makes it usable both as desk-scale training data
and as an ordering oracle for the inter-dependency metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LoadDataset, LoadDay


def _as_range(value, name: str, integer: bool) -> tuple:
    if np.isscalar(value):
        value = (value, value)
    lo, hi = value
    if integer:
        lo, hi = int(lo), int(hi)
    else:
        lo, hi = float(lo), float(hi)
    if lo > hi or lo < 0:
        raise ValueError(f"{name} must be a nonnegative (lo, hi) range with lo <= hi")
    return lo, hi


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 512
    op_prob: float = 0.7
    wm_power: tuple = (1800.0, 2200.0)
    td_power: tuple = (2200.0, 2600.0)
    wm_duration: tuple = (30, 60)
    td_duration: tuple = (30, 60)
    follow_prob: float = 0.8
    lag_range: tuple = (5, 15)
    noise_floor: float = 2.0
    seed: int = 0
    n_steps: int = 720

    def __post_init__(self):
        if self.n_samples < 1 or self.n_steps < 1:
            raise ValueError("n_samples and n_steps must be >= 1")
        if not 0.0 <= self.op_prob <= 1.0 or not 0.0 <= self.follow_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        object.__setattr__(self, "wm_power", _as_range(self.wm_power, "wm_power", False))
        object.__setattr__(self, "td_power", _as_range(self.td_power, "td_power", False))
        object.__setattr__(self, "wm_duration", _as_range(self.wm_duration, "wm_duration", True))
        object.__setattr__(self, "td_duration", _as_range(self.td_duration, "td_duration", True))
        object.__setattr__(self, "lag_range", _as_range(self.lag_range, "lag_range", True))
        for name in ("wm_duration", "td_duration"):
            lo, hi = getattr(self, name)
            if lo < 1:
                raise ValueError(f"{name} must be >= 1")
            if hi > self.n_steps:
                raise ValueError(f"{name} exceeds the day length {self.n_steps}")


def _sample_day(cfg: SynthConfig, index: int) -> LoadDay:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, index])))
    day_type = "weekday" if rng.random() < 5.0 / 7.0 else "weekend"
    values = rng.uniform(0.0, cfg.noise_floor, size=(2, cfg.n_steps))
    if rng.random() < cfg.op_prob:
        duration = int(rng.integers(cfg.wm_duration[0], cfg.wm_duration[1] + 1))
        start = int(rng.integers(0, cfg.n_steps - duration + 1))
        values[0, start : start + duration] += rng.uniform(*cfg.wm_power)
        if rng.random() < cfg.follow_prob:
            lag = int(rng.integers(cfg.lag_range[0], cfg.lag_range[1] + 1))
            td_duration = int(rng.integers(cfg.td_duration[0], cfg.td_duration[1] + 1))
            td_start = start + duration + lag
            if td_start < cfg.n_steps:
                td_end = min(td_start + td_duration, cfg.n_steps)
                values[1, td_start:td_end] += rng.uniform(*cfg.td_power)
    return LoadDay(values, sample_id=f"synth_{index:06d}", day_type=day_type)


def generate_synthetic(cfg: SynthConfig) -> LoadDataset:
    """Raw watt-scale dataset, deterministic per seed.

    Each sample uses its own RNG stream derived from (seed, index), so
    samples are independent of generation order.
    """
    samples = [_sample_day(cfg, i) for i in range(cfg.n_samples)]
    return LoadDataset(samples=samples, stats=None, normalized=False)
