"""Stochastic augmentation for load profiles: circular time-shift plus noise.

Every sample touched by the discriminator in a train step is augmented the
same way: the whole step shares a single integer time-shift, each sample
draws its own additive-noise scale, and each appliance channel of a sample
receives an independent Gaussian noise vector at that scale. The shift is
applied as a circular rotation, so a profile's set of values is preserved
and the relative alignment between appliance channels is untouched.

All randomness flows through caller-supplied ``numpy.random.Generator``
objects (or duck-typed stand-ins), which is also the hook test code uses
to count draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .data import LoadDay


@dataclass(frozen=True)
class AugmentDraw:
    """One augmentation decision: shift in time-steps, noise standard deviation."""

    delta: int
    noise_scale: float

    def __post_init__(self):
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")


def sample_shift(rho: float, rng) -> int:
    """Draw a time-shift: floor of a zero-mean Gaussian with variance ``rho``."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    mu = rng.normal(0.0, math.sqrt(rho))
    return math.floor(mu)


def sample_noise_scale(eta: float, rng) -> float:
    """Draw a noise scale from an exponential with rate ``eta`` (mean ``1/eta``).

    Inverse-CDF construction from one uniform draw, so a stubbed ``rng``
    maps u=0 to exactly 0.
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    u = rng.random()
    return -math.log1p(-u) / eta


def rotate(x: np.ndarray, delta: int) -> np.ndarray:
    """Circularly rotate a channel so step ``delta`` becomes step 0 (mod T)."""
    n = x.shape[-1]
    return np.roll(x, -(delta % n), axis=-1)


def augment_channel(x: np.ndarray, delta: int, noise_scale: float, rng) -> np.ndarray:
    """Rotate one channel by ``delta`` then add N(0, noise_scale^2) noise.

    A fresh noise vector is drawn per call even when ``noise_scale`` is 0,
    keeping the number of consumed draws independent of the draw values.
    """
    x = np.asarray(x, dtype=np.float64)
    q = rng.standard_normal(x.shape[-1])
    return rotate(x, delta) + noise_scale * q


def augment_matrix(values: np.ndarray, delta: int, noise_scale: float, rng) -> np.ndarray:
    """Augment an ``n_app x T`` matrix channel by channel.

    All channels share the same shift and noise scale; the noise vectors
    are independent, drawn in channel order.
    """
    return np.stack(
        [augment_channel(values[j], delta, noise_scale, rng) for j in range(values.shape[0])]
    )


def augment_sample(day: LoadDay, draw: AugmentDraw, rng) -> LoadDay:
    """Augment one (normalized) sample, preserving its id and day type."""
    values = augment_matrix(day.values, draw.delta, draw.noise_scale, rng)
    return LoadDay(values, sample_id=day.sample_id, day_type=day.day_type)


def augment_batch(
    batch: torch.Tensor, delta: int, noise_scales: torch.Tensor, q: torch.Tensor
) -> torch.Tensor:
    """Batched augmentation on ``[B, n_app, T]`` tensors with pre-drawn noise.

    ``q`` holds standard-normal draws of the same shape as ``batch``,
    ``noise_scales`` one scale per sample. The rotation is differentiable
    with respect to ``batch``; noise and shift enter as constants.
    """
    rotated = torch.roll(batch, shifts=-(delta % batch.shape[-1]), dims=-1)
    return rotated + noise_scales.view(-1, 1, 1) * q
