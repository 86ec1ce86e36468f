"""Similarity tests between a real and a generated load-profile dataset.

Four scores, all computed on watt-scale data in 64-bit arithmetic:

* inter-dependency: correlation-matrix distance between the two datasets'
  cross-appliance correlation matrices (appliance 0's value at step i
  versus appliance 1's at step j, across samples, after tiny Gaussian
  noise injection to avoid degenerate all-zero time-step columns);
* per appliance, Wasserstein-1 between the pooled 1-D distributions of
  all load values;
* per appliance, sliced Wasserstein distance between clouds of randomly
  extracted fixed-length sub-sequences;
* per appliance, sliced Wasserstein distance between clouds of
  average-pooled whole-day profiles.

A comparison of a dataset with itself scores zero on everything when the
noise and window draws are shared between the two sides (``evaluate``'s
``shared_streams`` mode, used by self-tests; production comparisons use
independent streams).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import LoadDataset


class MetricError(ValueError):
    pass


def _as_cloud(points, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise MetricError(f"{name} must be a nonempty [n_points, dim] cloud")
    if not np.all(np.isfinite(arr)):
        raise MetricError(f"{name} contains non-finite values")
    return arr


def wasserstein1_1d(a, b) -> float:
    """Exact Wasserstein-1 between two 1-D empirical distributions.

    Equal-size clouds reduce to the mean absolute difference of sorted
    samples; otherwise the quantile functions are integrated over the
    merged quantile grid.
    """
    a = np.sort(_as_cloud(a, "a").ravel())
    b = np.sort(_as_cloud(b, "b").ravel())
    n, m = a.shape[0], b.shape[0]
    if n == m:
        return float(np.abs(a - b).mean())
    grid = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    edges = np.concatenate(([0.0], grid))
    widths = np.diff(edges)
    mids = (edges[:-1] + edges[1:]) / 2.0
    qa = a[np.minimum((mids * n).astype(np.int64), n - 1)]
    qb = b[np.minimum((mids * m).astype(np.int64), m - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def sliced_wasserstein(a, b, n_proj: int, rng: np.random.Generator) -> float:
    """Mean 1-D Wasserstein-1 over random unit-direction projections."""
    a = _as_cloud(a, "a")
    b = _as_cloud(b, "b")
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"cloud dimensions differ: {a.shape[1]} != {b.shape[1]}")
    if n_proj < 1:
        raise MetricError("n_proj must be >= 1")
    directions = rng.standard_normal((n_proj, a.shape[1]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    proj_a = a @ directions.T
    proj_b = b @ directions.T
    if a.shape[0] == b.shape[0]:
        proj_a.sort(axis=0)
        proj_b.sort(axis=0)
        return float(np.abs(proj_a - proj_b).mean(axis=0).mean())
    return float(
        np.mean([wasserstein1_1d(proj_a[:, j], proj_b[:, j]) for j in range(n_proj)])
    )


def cross_corr_matrix(
    ds: LoadDataset,
    app_a: int,
    app_b: int,
    noise_var: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Pearson correlation between appliance ``app_a`` at step i and
    appliance ``app_b`` at step j, across samples, as a T x T matrix.

    Gaussian noise with variance ``noise_var`` is first added to every
    load value of the dataset (not only the two appliances used), which
    removes zero-variance time-step columns almost surely.
    """
    if len(ds) < 2:
        raise MetricError("correlation needs at least 2 samples")
    if noise_var < 0:
        raise MetricError("noise_var must be >= 0")
    stacked = ds.stack()
    if noise_var > 0:
        if rng is None:
            raise MetricError("noise injection needs an rng")
        stacked = stacked + rng.normal(0.0, math.sqrt(noise_var), size=stacked.shape)
    a = stacked[:, app_a, :]
    b = stacked[:, app_b, :]
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt((ac**2).mean(axis=0))
    sb = np.sqrt((bc**2).mean(axis=0))
    if np.any(sa == 0.0) or np.any(sb == 0.0):
        raise MetricError(
            "a time-step column has zero variance; use noise injection (noise_var > 0)"
        )
    corr = (ac.T @ bc) / stacked.shape[0] / np.outer(sa, sb)
    np.clip(corr, -1.0, 1.0, out=corr)
    return corr


def corr_matrix_distance(c1: np.ndarray, c2: np.ndarray) -> float:
    """``1 - tr(c1' c2) / (||c1||_F ||c2||_F)``; 0 iff positively proportional."""
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    if c1.shape != c2.shape or c1.ndim != 2:
        raise MetricError("correlation matrices must be 2-D with equal shapes")
    n1 = np.linalg.norm(c1)
    n2 = np.linalg.norm(c2)
    if n1 == 0.0 or n2 == 0.0:
        raise MetricError("correlation matrix distance is undefined for a zero matrix")
    return float(1.0 - np.vdot(c1, c2) / (n1 * n2))


def extract_subsequences(
    ds: LoadDataset,
    appliance: int,
    count_per_profile: int,
    length: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Random fixed-length windows from each profile of one appliance.

    Window starts are uniform on the admissible range; values keep their
    scale (no per-window normalization). Returns a cloud of
    ``count_per_profile * n_samples`` points of dimension ``length``.
    """
    n_steps = ds.n_steps
    if not 1 <= length <= n_steps:
        raise MetricError(f"window length must lie in [1, {n_steps}]")
    if count_per_profile < 1:
        raise MetricError("count_per_profile must be >= 1")
    profiles = ds.stack()[:, appliance, :]
    starts = rng.integers(0, n_steps - length + 1, size=(profiles.shape[0], count_per_profile))
    windows = sliding_window_view(profiles, length, axis=1)
    cloud = windows[np.arange(profiles.shape[0])[:, None], starts]
    return cloud.reshape(-1, length).copy()


def avg_pool_profiles(ds: LoadDataset, appliance: int, pool: int) -> np.ndarray:
    """Each profile reduced to window means; ``pool`` must divide T."""
    n_steps = ds.n_steps
    if pool < 1 or n_steps % pool != 0:
        raise MetricError(f"pool size {pool} does not divide the day length {n_steps}")
    profiles = ds.stack()[:, appliance, :]
    return profiles.reshape(profiles.shape[0], n_steps // pool, pool).mean(axis=2)


@dataclass
class ApplianceMetrics:
    load_values_w1: float
    subsequences_swd: float
    profiles_swd: float


@dataclass
class MetricReport:
    interdependency: float
    per_appliance: list[ApplianceMetrics]

    def rows(self) -> list[tuple[str, str, float]]:
        out = [("interdependency", "", self.interdependency)]
        for j, app in enumerate(self.per_appliance):
            out.append(("load_values_w1", f"a{j}", app.load_values_w1))
            out.append(("subsequences_swd", f"a{j}", app.subsequences_swd))
            out.append(("profiles_swd", f"a{j}", app.profiles_swd))
        return out


def evaluate(
    real_ds: LoadDataset,
    gen_ds: LoadDataset,
    seed: int,
    shared_streams: bool = False,
    noise_var: float = 1e-5,
    subseq_count: int = 32,
    subseq_len: int = 45,
    n_proj_subseq: int = 128,
    pool: int = 5,
    n_proj_profiles: int = 512,
    corr_pool: int | None = None,
) -> MetricReport:
    """All four similarity scores for a (real, generated) dataset pair.

    Both datasets must be raw (watt) scale with identical shape and sample
    count. ``shared_streams`` reuses one noise/window stream for both
    sides so that comparing a dataset with itself yields exact zeros;
    leave it off for real comparisons. ``corr_pool`` optionally
    average-pools profiles before the inter-dependency test.
    """
    for name, ds in (("real", real_ds), ("generated", gen_ds)):
        if ds.normalized:
            raise MetricError(f"{name} dataset must be on the raw (watt) scale")
    if real_ds.n_app != gen_ds.n_app or real_ds.n_steps != gen_ds.n_steps:
        raise MetricError("datasets must share n_app and day length")
    if len(real_ds) != len(gen_ds):
        raise MetricError(
            f"datasets must have equal sample counts ({len(real_ds)} != {len(gen_ds)})"
        )
    if real_ds.n_app < 2:
        raise MetricError("the inter-dependency test needs at least 2 appliances")

    root = np.random.SeedSequence(seed)
    noise_seq, noise_seq_gen, win_seq, win_seq_gen, swd_sub_seq, swd_prof_seq = root.spawn(6)
    if shared_streams:
        noise_seq_gen = noise_seq
        win_seq_gen = win_seq

    corr_real_ds, corr_gen_ds = real_ds, gen_ds
    if corr_pool is not None:
        corr_real_ds = _pooled_dataset(real_ds, corr_pool)
        corr_gen_ds = _pooled_dataset(gen_ds, corr_pool)
    corr_real = cross_corr_matrix(
        corr_real_ds, 0, 1, noise_var, np.random.Generator(np.random.PCG64(noise_seq))
    )
    corr_gen = cross_corr_matrix(
        corr_gen_ds, 0, 1, noise_var, np.random.Generator(np.random.PCG64(noise_seq_gen))
    )
    interdependency = corr_matrix_distance(corr_real, corr_gen)

    win_real = np.random.Generator(np.random.PCG64(win_seq))
    win_gen = np.random.Generator(np.random.PCG64(win_seq_gen))
    swd_sub = np.random.Generator(np.random.PCG64(swd_sub_seq))
    swd_prof = np.random.Generator(np.random.PCG64(swd_prof_seq))

    real_values = real_ds.stack()
    gen_values = gen_ds.stack()
    per_appliance = []
    for j in range(real_ds.n_app):
        w1 = wasserstein1_1d(real_values[:, j, :].ravel(), gen_values[:, j, :].ravel())
        sub_swd = sliced_wasserstein(
            extract_subsequences(real_ds, j, subseq_count, subseq_len, win_real),
            extract_subsequences(gen_ds, j, subseq_count, subseq_len, win_gen),
            n_proj_subseq,
            swd_sub,
        )
        prof_swd = sliced_wasserstein(
            avg_pool_profiles(real_ds, j, pool),
            avg_pool_profiles(gen_ds, j, pool),
            n_proj_profiles,
            swd_prof,
        )
        per_appliance.append(ApplianceMetrics(w1, sub_swd, prof_swd))
    return MetricReport(interdependency=interdependency, per_appliance=per_appliance)


def _pooled_dataset(ds: LoadDataset, pool: int) -> LoadDataset:
    from .data import LoadDay

    pooled = []
    for day in ds.samples:
        if day.n_steps % pool != 0:
            raise MetricError(f"pool size {pool} does not divide the day length {day.n_steps}")
        values = day.values.reshape(day.n_app, day.n_steps // pool, pool).mean(axis=2)
        pooled.append(LoadDay(values, sample_id=day.sample_id, day_type=day.day_type))
    return LoadDataset(samples=pooled, stats=ds.stats, normalized=ds.normalized)
