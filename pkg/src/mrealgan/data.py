"""Load-profile datasets: CSV ingestion, normalization statistics, scaling.

A sample is one day of per-appliance electrical load, stored as an
``n_app x T`` matrix of average power per 2-minute time-step. The on-disk
interchange format is a wide CSV, one row per day:

    sample_id,day_type,a0_t000,...,a0_t719,a1_t000,...,a1_t719

with load in watts, up to 6 decimal places. Files written by
:func:`write_csv` re-serialize byte-identically after :func:`ingest_csv`.

Normalization follows the six-sigma scheme: each appliance's values are
divided by six times the population standard deviation of all load values
of that appliance across the dataset. A min-max scheme mapping onto
``[-1, 1]`` is available for tanh-output experiments.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

DAY_TYPES = ("weekday", "weekend", "unknown")

SCHEME_SIX_SIGMA = "six_sigma"
SCHEME_MINMAX_TANH = "minmax_tanh"
SCHEMES = (SCHEME_SIX_SIGMA, SCHEME_MINMAX_TANH)

_COLUMN_RE = re.compile(r"^a(\d+)_t(\d{3,})$")


class DataFormatError(ValueError):
    """A dataset or stats file violates the documented format."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class LoadDay:
    """One day of load for all monitored appliances.

    ``values`` is an ``n_app x T`` float64 matrix, watts when raw.
    An unmonitored appliance is a row of constant zero.
    """

    values: np.ndarray
    sample_id: str
    day_type: str = "unknown"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataFormatError("sample values must be a 2-D (n_app x T) matrix")
        if self.day_type not in DAY_TYPES:
            raise DataFormatError(f"unknown day_type {self.day_type!r}")

    @property
    def n_app(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass
class NormStats:
    """Per-appliance scale used for normalization.

    For the six-sigma scheme ``per_appliance_sigma[j]`` is the population
    standard deviation of appliance ``j``'s load values (watts); for the
    min-max scheme it holds the per-appliance maximum instead. A zero
    entry marks an appliance whose values are all zero.
    """

    per_appliance_sigma: np.ndarray
    scheme: str = SCHEME_SIX_SIGMA

    def __post_init__(self):
        self.per_appliance_sigma = np.asarray(self.per_appliance_sigma, dtype=np.float64)
        if self.per_appliance_sigma.ndim != 1:
            raise DataFormatError("per_appliance_sigma must be a vector")
        if self.scheme not in SCHEMES:
            raise DataFormatError(f"unknown normalization scheme {self.scheme!r}")
        if np.any(self.per_appliance_sigma < 0) or not np.all(
            np.isfinite(self.per_appliance_sigma)
        ):
            raise DataFormatError("normalization scales must be finite and >= 0")

    @property
    def n_app(self) -> int:
        return self.per_appliance_sigma.shape[0]


@dataclass
class LoadDataset:
    """Ordered collection of samples plus normalization metadata."""

    samples: list[LoadDay] = field(default_factory=list)
    stats: NormStats | None = None
    normalized: bool = False

    def __post_init__(self):
        if self.samples:
            shape = self.samples[0].values.shape
            for day in self.samples:
                if day.values.shape != shape:
                    raise DataFormatError(
                        "all samples must share the same n_app and day length"
                    )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_app(self) -> int:
        if not self.samples:
            raise DataFormatError("empty dataset has no appliance count")
        return self.samples[0].n_app

    @property
    def n_steps(self) -> int:
        if not self.samples:
            raise DataFormatError("empty dataset has no day length")
        return self.samples[0].n_steps

    def stack(self) -> np.ndarray:
        """All samples as one ``[n_samples, n_app, T]`` float64 array."""
        if not self.samples:
            raise DataFormatError("cannot stack an empty dataset")
        return np.stack([day.values for day in self.samples])


def csv_header(n_app: int, n_steps: int) -> list[str]:
    cols = ["sample_id", "day_type"]
    for j in range(n_app):
        cols.extend(f"a{j}_t{t:03d}" for t in range(n_steps))
    return cols


def _parse_header(fields: list[str]) -> tuple[int, int]:
    if len(fields) < 3 or fields[0] != "sample_id" or fields[1] != "day_type":
        raise DataFormatError(
            "header must start with 'sample_id,day_type' followed by a0_t000,...", line=1
        )
    n_app = 0
    n_steps = 0
    for name in fields[2:]:
        m = _COLUMN_RE.match(name)
        if m is None:
            raise DataFormatError(f"unexpected column name {name!r}", line=1)
        if int(m.group(1)) == 0:
            n_steps += 1
        n_app = max(n_app, int(m.group(1)) + 1)
    if n_steps == 0:
        raise DataFormatError("no appliance-0 columns found", line=1)
    if fields[2:] != csv_header(n_app, n_steps)[2:]:
        raise DataFormatError(
            f"value columns must be exactly a0_t000..a{n_app - 1}_t{n_steps - 1:03d} in order",
            line=1,
        )
    return n_app, n_steps


def ingest_csv(path) -> LoadDataset:
    """Read a raw (watt-scale) dataset CSV, preserving sample order.

    Raises :class:`DataFormatError` naming the offending 1-based line for
    malformed rows, inconsistent column counts, and negative or non-finite
    load values.
    """
    samples: list[LoadDay] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if not header_line:
            raise DataFormatError("empty file", line=1)
        n_app, n_steps = _parse_header(header_line.rstrip("\r\n").split(","))
        expected = 2 + n_app * n_steps
        for lineno, raw_line in enumerate(fh, start=2):
            row = raw_line.rstrip("\r\n").split(",")
            if len(row) != expected:
                raise DataFormatError(
                    f"expected {expected} fields, found {len(row)}", line=lineno
                )
            sample_id, day_type = row[0], row[1]
            if day_type not in DAY_TYPES:
                raise DataFormatError(f"unknown day_type {day_type!r}", line=lineno)
            try:
                values = np.array(row[2:], dtype=np.float64)
            except ValueError as exc:
                raise DataFormatError(f"malformed load value ({exc})", line=lineno) from None
            if not np.all(np.isfinite(values)):
                raise DataFormatError("non-finite load value", line=lineno)
            if np.any(values < 0):
                raise DataFormatError("negative load value", line=lineno)
            samples.append(
                LoadDay(values.reshape(n_app, n_steps), sample_id=sample_id, day_type=day_type)
            )
    if not samples:
        raise DataFormatError("file contains a header but no samples")
    return LoadDataset(samples=samples, stats=None, normalized=False)


def write_csv(ds: LoadDataset, path) -> None:
    """Write a dataset in the canonical CSV form (fixed 6 decimal places)."""
    if not ds.samples:
        raise DataFormatError("refusing to write an empty dataset")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(csv_header(ds.n_app, ds.n_steps)) + "\n")
        for day in ds.samples:
            if "," in day.sample_id or "\n" in day.sample_id:
                raise DataFormatError(f"sample_id {day.sample_id!r} not CSV-safe")
            flat = day.values.reshape(-1)
            fh.write(day.sample_id + "," + day.day_type + ",")
            fh.write(",".join("%.6f" % v for v in flat) + "\n")


def compute_stats(ds: LoadDataset, scheme: str = SCHEME_SIX_SIGMA) -> NormStats:
    """Per-appliance normalization scale over the pooled dataset.

    Six-sigma scheme: population standard deviation of the
    ``T * n_samples`` values of each appliance. Min-max scheme: the
    per-appliance maximum.
    """
    if not ds.samples:
        raise DataFormatError("cannot compute stats for an empty dataset")
    if ds.normalized:
        raise DataFormatError("stats must be computed on raw data")
    stacked = ds.stack()
    if scheme == SCHEME_SIX_SIGMA:
        scale = stacked.std(axis=(0, 2))  # population std (ddof=0)
    elif scheme == SCHEME_MINMAX_TANH:
        scale = stacked.max(axis=(0, 2))
    else:
        raise DataFormatError(f"unknown normalization scheme {scheme!r}")
    return NormStats(per_appliance_sigma=scale, scheme=scheme)


def _check_zero_scale(stacked: np.ndarray, scale: np.ndarray) -> None:
    for j in np.flatnonzero(scale == 0.0):
        if np.any(stacked[:, j, :] != 0.0):
            raise DataFormatError(
                f"appliance {j} has zero normalization scale but nonzero values"
            )


def normalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Raw-to-normalized on a ``[..., n_app, T]`` array.

    Six-sigma: ``v / (6 * sigma_j)``. Min-max: ``2 * v / max_j - 1``.
    An all-zero appliance (zero scale) passes through unchanged.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    for j in range(stats.n_app):
        scale = stats.per_appliance_sigma[j]
        if scale == 0.0:
            continue
        if stats.scheme == SCHEME_SIX_SIGMA:
            out[..., j, :] = values[..., j, :] / (6.0 * scale)
        else:
            out[..., j, :] = 2.0 * values[..., j, :] / scale - 1.0
    return out


def denormalize_values(values: np.ndarray, stats: NormStats) -> np.ndarray:
    """Normalized-to-watts on a ``[..., n_app, T]`` array."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    for j in range(stats.n_app):
        scale = stats.per_appliance_sigma[j]
        if scale == 0.0:
            continue
        if stats.scheme == SCHEME_SIX_SIGMA:
            out[..., j, :] = values[..., j, :] * (6.0 * scale)
        else:
            out[..., j, :] = (values[..., j, :] + 1.0) * scale / 2.0
    return out


def normalize(ds: LoadDataset, stats: NormStats) -> LoadDataset:
    """Scale a raw dataset to normalized units, embedding the stats."""
    if ds.normalized:
        raise DataFormatError("dataset is already normalized")
    if stats.n_app != ds.n_app:
        raise DataFormatError(
            f"stats cover {stats.n_app} appliances, dataset has {ds.n_app}"
        )
    _check_zero_scale(ds.stack(), stats.per_appliance_sigma)
    out = [
        LoadDay(normalize_values(day.values, stats), sample_id=day.sample_id, day_type=day.day_type)
        for day in ds.samples
    ]
    return LoadDataset(samples=out, stats=stats, normalized=True)


def denormalize(ds: LoadDataset) -> LoadDataset:
    """Map a normalized dataset back to watts (inverse of :func:`normalize`)."""
    if not ds.normalized:
        raise DataFormatError("dataset is not normalized")
    if ds.stats is None:
        raise DataFormatError("normalized dataset is missing its stats")
    if ds.stats.n_app != ds.n_app:
        raise DataFormatError("embedded stats do not match the dataset")
    out = [
        LoadDay(
            denormalize_values(day.values, ds.stats), sample_id=day.sample_id, day_type=day.day_type
        )
        for day in ds.samples
    ]
    return LoadDataset(samples=out, stats=ds.stats, normalized=False)


def write_stats(stats: NormStats, path) -> None:
    """Write a stats file, one ``appliance_index,sigma`` line per appliance."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for j, sigma in enumerate(stats.per_appliance_sigma):
            fh.write("%d,%.6f\n" % (j, sigma))


def read_stats(path, scheme: str = SCHEME_SIX_SIGMA) -> NormStats:
    """Read a stats file written by :func:`write_stats`."""
    sigmas: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            line = raw_line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataFormatError("expected 'appliance_index,sigma'", line=lineno)
            try:
                index = int(parts[0])
                sigma = float(parts[1])
            except ValueError:
                raise DataFormatError("malformed stats entry", line=lineno) from None
            if index != len(sigmas):
                raise DataFormatError(
                    f"appliance indices must be consecutive from 0, got {index}", line=lineno
                )
            if not math.isfinite(sigma) or sigma < 0:
                raise DataFormatError("sigma must be finite and >= 0", line=lineno)
            sigmas.append(sigma)
    if not sigmas:
        raise DataFormatError("stats file is empty")
    return NormStats(per_appliance_sigma=np.array(sigmas), scheme=scheme)
