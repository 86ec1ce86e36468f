import math

import numpy as np
import pytest
import torch

from mrealgan.augment import (
    AugmentDraw,
    augment_batch,
    augment_channel,
    augment_matrix,
    augment_sample,
    rotate,
    sample_noise_scale,
    sample_shift,
)
from mrealgan.data import LoadDay


class StubRng:
    """Fixed-value stand-in for a numpy Generator."""

    def __init__(self, normal_value=0.0, uniform_value=0.0):
        self.normal_value = normal_value
        self.uniform_value = uniform_value

    def normal(self, loc, scale):
        return self.normal_value

    def random(self):
        return self.uniform_value


def test_sample_shift_floor():
    assert sample_shift(1024.0, StubRng(normal_value=0.7)) == 0
    assert sample_shift(1024.0, StubRng(normal_value=-0.3)) == -1
    assert sample_shift(1024.0, StubRng(normal_value=33.0)) == 33


def test_sample_shift_std_monte_carlo():
    rng = np.random.default_rng(0)
    draws = np.array([sample_shift(1024.0, rng) for _ in range(100_000)])
    assert abs(draws.std() - 32.0) / 32.0 < 0.05


def test_sample_shift_requires_positive_rho():
    with pytest.raises(ValueError):
        sample_shift(0.0, np.random.default_rng(0))


def test_sample_noise_scale_inverse_cdf_zero():
    assert sample_noise_scale(200.0, StubRng(uniform_value=0.0)) == 0.0


def test_sample_noise_scale_monte_carlo_mean():
    rng = np.random.default_rng(1)
    draws = np.array([sample_noise_scale(200.0, rng) for _ in range(100_000)])
    assert draws.min() >= 0.0
    assert abs(draws.mean() - 0.005) / 0.005 < 0.05


def rotation_oracle(x, delta):
    """Element-by-element index bookkeeping for the circular shift."""
    n = len(x)
    return np.array([x[(k + delta) % n] for k in range(n)])


def test_rotation_matches_branch_definition():
    x = np.arange(1.0, 721.0)
    out = augment_channel(x, delta=3, noise_scale=0.0, rng=np.random.default_rng(0))
    expected = np.concatenate([x[3:], x[:3]])  # (4, 5, ..., 720, 1, 2, 3)
    np.testing.assert_array_equal(out, expected)


@pytest.mark.parametrize("delta", [0, 1, 3, 719, 720, 721, -1, -5, -720, 1441])
def test_rotation_index_oracle(delta):
    rng = np.random.default_rng(2)
    x = rng.standard_normal(720)
    out = augment_channel(x, delta, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out, rotation_oracle(x, delta))


def test_identity_and_full_rotation():
    x = np.random.default_rng(3).standard_normal(720)
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(augment_channel(x, 0, 0.0, rng), x)
    np.testing.assert_array_equal(augment_channel(x, 720, 0.0, rng), x)


def test_shift_composition_mod_t():
    x = np.random.default_rng(4).standard_normal(720)
    rng = np.random.default_rng(0)
    for d1, d2 in [(5, 9), (700, 100), (-3, 10)]:
        once = rotate(rotate(x, d1), d2)
        np.testing.assert_array_equal(once, rotate(x, d1 + d2))


def test_noise_free_augmentation_preserves_value_multiset():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 10, 720)
    out = augment_channel(x, 123, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(np.sort(out), np.sort(x))
    assert out.sum() == pytest.approx(x.sum(), rel=1e-12)
    assert out.min() == x.min() and out.max() == x.max()


def test_augment_sample_shares_shift_across_channels():
    rng = np.random.default_rng(6)
    base = rng.uniform(0, 5, 720)
    day = LoadDay(np.stack([base, rotate(base, 7)]), sample_id="x")
    out = augment_sample(day, AugmentDraw(delta=100, noise_scale=0.0), np.random.default_rng(0))
    # relative alignment between appliances survives the shared shift
    np.testing.assert_array_equal(out.values[1], rotate(out.values[0], 7))
    assert out.sample_id == "x"


def test_augment_sample_zero_draw_identity():
    day = LoadDay(np.random.default_rng(7).uniform(0, 1, (2, 720)), sample_id="y")
    out = augment_sample(day, AugmentDraw(0, 0.0), np.random.default_rng(0))
    np.testing.assert_array_equal(out.values, day.values)


def test_independent_noise_per_channel():
    day = LoadDay(np.zeros((2, 720)), sample_id="z")
    out = augment_sample(day, AugmentDraw(0, 1.0), np.random.default_rng(8))
    assert not np.array_equal(out.values[0], out.values[1])


def test_expected_perturbation_magnitude():
    # mean absolute perturbation of augmented zeros: E[sigma]*sqrt(2/pi)
    rng = np.random.default_rng(9)
    eta = 200.0
    magnitudes = []
    for _ in range(1000):
        sigma = sample_noise_scale(eta, rng)
        out = augment_channel(np.zeros(100), 0, sigma, rng)
        magnitudes.append(np.abs(out).mean())
    expected = (1.0 / eta) * math.sqrt(2.0 / math.pi)
    assert abs(np.mean(magnitudes) - expected) / expected < 0.10


def test_batched_torch_path_matches_numpy_path():
    rng = np.random.default_rng(10)
    batch = rng.uniform(0, 1, (4, 2, 720))
    delta = -37
    scales = np.array([sample_noise_scale(200.0, rng) for _ in range(4)])

    seed = np.random.SeedSequence(11)
    q = np.random.default_rng(seed).standard_normal((4, 2, 720))
    out_torch = augment_batch(
        torch.from_numpy(batch).float(),
        delta,
        torch.from_numpy(scales).float(),
        torch.from_numpy(q).float(),
    )
    # the batched standard-normal fill consumes the stream in sample-major,
    # channel-major order, matching per-channel sequential draws
    rng2 = np.random.default_rng(np.random.SeedSequence(11))
    expected = np.stack(
        [augment_matrix(batch[i], delta, scales[i], rng2) for i in range(4)]
    )
    np.testing.assert_allclose(out_torch.numpy(), expected, atol=1e-6)


def test_negative_noise_scale_rejected():
    with pytest.raises(ValueError):
        AugmentDraw(0, -1.0)
