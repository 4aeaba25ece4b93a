"""Return-series ingestion, loss derivation, chronological splits, and
the run configuration shared by every calibrator.

Dates are plain ISO calendar dates; a "trading day" is whatever rows
exist in the input. Everything downstream of loading is positional.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError

CALIBRATORS = ("swc", "twc", "rwc", "aci")
# "base" is the uncalibrated reference run that appears in report tables
_RUNNABLE = CALIBRATORS + ("base",)
BASES = ("hs", "gbdt", "external")


@dataclass(frozen=True)
class ReturnSeries:
    """Daily fractional returns on strictly increasing dates."""

    dates: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self) -> None:
        if len(self.dates) == 0:
            raise DataError("return series is empty")
        if len(self.dates) != len(self.returns):
            raise DataError("dates and returns lengths differ")
        for a, b in zip(self.dates, self.dates[1:]):
            if a >= b:
                raise DataError(f"dates not strictly increasing at {b}")
        if not np.all(np.isfinite(self.returns)):
            i = int(np.flatnonzero(~np.isfinite(self.returns))[0])
            raise DataError(f"non-finite return at {self.dates[i]}")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class LossSeries:
    """Losses y_t = -r_t, same dates and units as the source returns."""

    dates: tuple[str, ...]
    losses: np.ndarray

    def __len__(self) -> int:
        return len(self.dates)


def load_returns_csv(path: str, date_column: str = "date", return_column: str = "ret") -> ReturnSeries:
    """Read a returns CSV (header required, ISO dates, decimal returns).

    Rows may appear in any order on disk; the result is date-sorted.
    Duplicate dates, unparseable cells, and NaNs are hard errors that
    name the offending line.
    """
    rows: list[tuple[str, float]] = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in header]
        try:
            d_idx = header.index(date_column)
            r_idx = header.index(return_column)
        except ValueError:
            raise DataError(
                f"{path}: missing column; need {date_column!r} and {return_column!r}, have {header}"
            ) from None
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) <= max(d_idx, r_idx):
                raise DataError(f"{path}:{lineno}: too few fields")
            date = row[d_idx].strip()
            if not _iso_date_ok(date):
                raise DataError(f"{path}:{lineno}: bad date {date!r}")
            try:
                r = float(row[r_idx])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad return {row[r_idx]!r}") from None
            if math.isnan(r) or math.isinf(r):
                raise DataError(f"{path}:{lineno}: non-finite return")
            rows.append((date, r))
    if not rows:
        raise DataError(f"{path}: no data rows")
    rows.sort(key=lambda x: x[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate date {a}")
    dates = tuple(r[0] for r in rows)
    returns = np.array([r[1] for r in rows], dtype=float)
    return ReturnSeries(dates=dates, returns=returns)


def _iso_date_ok(s: str) -> bool:
    import datetime as dt

    try:
        dt.date.fromisoformat(s)
    except ValueError:
        return False
    return True


def to_losses(rs: ReturnSeries) -> LossSeries:
    return LossSeries(dates=rs.dates, losses=-rs.returns)


@dataclass(frozen=True)
class SplitConfig:
    """Chronological split boundaries, both inclusive."""

    train_end: str
    val_end: str

    def __post_init__(self) -> None:
        if not _iso_date_ok(self.train_end) or not _iso_date_ok(self.val_end):
            raise ConfigError("split boundaries must be ISO dates")
        if self.train_end >= self.val_end:
            raise ConfigError("train_end must precede val_end")


@dataclass(frozen=True)
class IndexRanges:
    """Half-open [start, stop) positions of each chronological segment."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]


def split(dates: tuple[str, ...], cfg: SplitConfig) -> IndexRanges:
    """Partition positions into train/val/test by inclusive end dates.
    Each segment must be nonempty."""
    n = len(dates)
    # ISO strings order lexicographically, so bisect on the raw strings
    import bisect

    t_end = bisect.bisect_right(dates, cfg.train_end)
    v_end = bisect.bisect_right(dates, cfg.val_end)
    if t_end == 0:
        raise DataError("empty segment: train")
    if v_end <= t_end:
        raise DataError("empty segment: val")
    if v_end >= n:
        raise DataError("empty segment: test")
    return IndexRanges(train=(0, t_end), val=(t_end, v_end), test=(v_end, n))


@dataclass(frozen=True)
class RunConfig:
    """Everything one calibration run needs."""

    alpha: float = 0.01
    m: int = 252
    lam: float = 0.0
    h: float = math.inf
    n_min: int = 0
    finite_sample_correction: bool = False
    aci_gamma: float = 0.005
    aci_alpha_min: float = 1e-4
    aci_alpha_max: float = 0.2
    base: str = "hs"
    calibrator: str = "swc"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha {self.alpha} outside (0, 1)")
        if self.m < 1:
            raise ConfigError("m must be a positive integer")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if not self.h > 0:
            raise ConfigError("h must be positive (inf allowed)")
        if self.n_min < 0:
            raise ConfigError("n_min must be >= 0 (0 disables)")
        if self.aci_gamma < 0:
            raise ConfigError("aci gamma must be >= 0")
        if not 0.0 < self.aci_alpha_min <= self.alpha <= self.aci_alpha_max < 1.0:
            raise ConfigError("need 0 < alpha_min <= alpha <= alpha_max < 1")
        if self.calibrator not in _RUNNABLE:
            raise ConfigError(f"unknown calibrator {self.calibrator!r}")
        if self.base not in BASES:
            raise ConfigError(f"unknown base forecaster {self.base!r}")

    def with_updates(self, **kw) -> "RunConfig":
        return replace(self, **kw)
