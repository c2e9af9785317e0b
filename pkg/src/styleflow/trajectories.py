"""Weekly style-popularity trajectories per city.

Records are quantized into ISO weeks anchored at the corpus's earliest
record; the popularity of a style in a (city, week) bin is the mean style
posterior of that bin's records.  Bins without records are missing (NaN),
never zero; :func:`interpolate_missing` fills and flags them before any
modeling step.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .datamodel import Corpus, DataError

WEEK_DAYS = 7


@dataclass
class TrajectoryPanel:
    """Aligned (style, city, week) popularity values.

    values[k, j, t] is the popularity of style k in city j during week t;
    NaN marks a bin with no records.  ``filled`` (set by
    :func:`interpolate_missing`) flags interpolated bins per (city, week).
    """

    week_starts: list[str]          # ISO dates of each week's Monday
    city_ids: list[str]
    values: np.ndarray              # (K, C, T)
    bin_counts: np.ndarray          # (C, T) ints
    filled: np.ndarray | None = None  # (C, T) bools

    @property
    def n_styles(self) -> int:
        return self.values.shape[0]

    @property
    def n_cities(self) -> int:
        return self.values.shape[1]

    @property
    def n_weeks(self) -> int:
        return self.values.shape[2]

    def city_index(self, city_id: str) -> int:
        try:
            return self.city_ids.index(city_id)
        except ValueError:
            raise KeyError(f"unknown city '{city_id}'") from None

    def series(self, style: int, city) -> np.ndarray:
        j = city if isinstance(city, int) else self.city_index(city)
        return self.values[style, j]

    def slice_weeks(self, start: int, stop: int) -> "TrajectoryPanel":
        return TrajectoryPanel(
            week_starts=self.week_starts[start:stop],
            city_ids=list(self.city_ids),
            values=self.values[:, :, start:stop].copy(),
            bin_counts=self.bin_counts[:, start:stop].copy(),
            filled=None if self.filled is None else self.filled[:, start:stop].copy(),
        )


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous, ordered train / validation / test week ranges."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]
    horizon: int

    @property
    def train_len(self) -> int:
        return self.train[1] - self.train[0]

    @property
    def test_start(self) -> int:
        return self.test[0]


def _week_anchor(corpus: Corpus) -> date:
    earliest = min(r.timestamp for r in corpus.records)
    d = earliest.date()
    return d - timedelta(days=d.weekday())  # Monday of the ISO week


def build_panel(corpus: Corpus, posteriors: np.ndarray, resolution: str = "week") -> TrajectoryPanel:
    """Bin records into weeks per city and average style posteriors per bin."""
    if resolution != "week":
        raise ValueError(f"unsupported resolution '{resolution}' (only 'week')")
    if not corpus.records:
        raise DataError("empty corpus")
    posteriors = np.asarray(posteriors, dtype=float)
    if posteriors.shape[0] != len(corpus.records):
        raise ValueError(
            f"posterior rows ({posteriors.shape[0]}) != record count ({len(corpus.records)})"
        )
    k = posteriors.shape[1]

    anchor = _week_anchor(corpus)
    week_of = np.array(
        [(r.timestamp.date() - anchor).days // WEEK_DAYS for r in corpus.records], dtype=int
    )
    t_total = int(week_of.max()) + 1

    city_ids = sorted({r.city_id for r in corpus.records})
    empty = sorted(set(corpus.cities) - set(city_ids))
    if empty:
        warnings.warn(f"dropping cities with no records: {empty}")
    city_index = {c: i for i, c in enumerate(city_ids)}
    rec_city = np.array([city_index[r.city_id] for r in corpus.records], dtype=int)

    sums = np.zeros((len(city_ids), t_total, k))
    counts = np.zeros((len(city_ids), t_total), dtype=int)
    np.add.at(sums, (rec_city, week_of), posteriors)
    np.add.at(counts, (rec_city, week_of), 1)

    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / counts[:, :, None]
    values = np.where(counts[None, :, :] > 0, np.transpose(means, (2, 0, 1)), np.nan)

    week_starts = [(anchor + timedelta(days=WEEK_DAYS * t)).isoformat() for t in range(t_total)]
    return TrajectoryPanel(
        week_starts=week_starts, city_ids=city_ids, values=values, bin_counts=counts
    )


def interpolate_missing(panel: TrajectoryPanel) -> TrajectoryPanel:
    """Fill missing bins by linear interpolation (edges: nearest observed value).

    Returns a new panel whose ``filled`` mask flags the interpolated bins.
    """
    values = panel.values.copy()
    missing = panel.bin_counts == 0
    t = panel.n_weeks
    idx = np.arange(t)
    for j in range(panel.n_cities):
        gaps = missing[j]
        if not gaps.any():
            continue
        obs = np.flatnonzero(~gaps)
        if obs.size == 0:
            raise DataError(f"city '{panel.city_ids[j]}' has no observed weeks")
        for k in range(panel.n_styles):
            values[k, j, gaps] = np.interp(idx[gaps], obs, values[k, j, obs])
    return TrajectoryPanel(
        week_starts=list(panel.week_starts),
        city_ids=list(panel.city_ids),
        values=values,
        bin_counts=panel.bin_counts.copy(),
        filled=missing.copy(),
    )


def smooth_panel(panel: TrajectoryPanel, window: int = 1) -> TrajectoryPanel:
    """Centered moving average per series; window 1 is a no-op.

    The window shrinks symmetrically near the edges.  Requires an odd window.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be a positive odd integer")
    if window == 1:
        return panel
    half = window // 2
    t = panel.n_weeks
    values = np.empty_like(panel.values)
    for s in range(t):
        lo = max(0, s - half)
        hi = min(t, s + half + 1)
        values[:, :, s] = np.nanmean(panel.values[:, :, lo:hi], axis=2)
    return TrajectoryPanel(
        week_starts=list(panel.week_starts),
        city_ids=list(panel.city_ids),
        values=values,
        bin_counts=panel.bin_counts.copy(),
        filled=None if panel.filled is None else panel.filled.copy(),
    )


def deseasonalize(panel: TrajectoryPanel, season: int = 52) -> TrajectoryPanel:
    """Subtract the value one season earlier; drops the first ``season`` weeks."""
    t = panel.n_weeks
    if t <= season:
        raise DataError(f"panel length {t} must exceed season {season}")
    values = panel.values[:, :, season:] - panel.values[:, :, :-season]
    filled = None
    if panel.filled is not None:
        filled = panel.filled[:, season:] | panel.filled[:, :-season]
    return TrajectoryPanel(
        week_starts=list(panel.week_starts[season:]),
        city_ids=list(panel.city_ids),
        values=values,
        bin_counts=panel.bin_counts[:, season:].copy(),
        filled=filled,
    )


MIN_TRAIN_LEN = 9  # 8 lags + 1


def split(panel: TrajectoryPanel, horizon: int = 26, val_len: int = 26) -> SplitSpec:
    """Last ``horizon`` weeks for test, ``val_len`` just before for validation."""
    t = panel.n_weeks
    if horizon < 1 or val_len < 0:
        raise ValueError("horizon must be >= 1 and val_len >= 0")
    if t <= horizon + val_len + MIN_TRAIN_LEN:
        raise DataError(
            f"panel length {t} too short for horizon {horizon} + validation {val_len} "
            f"+ minimum training length {MIN_TRAIN_LEN}"
        )
    test_start = t - horizon
    val_start = test_start - val_len
    return SplitSpec(
        train=(0, val_start),
        validation=(val_start, test_start),
        test=(test_start, t),
        horizon=horizon,
    )


def global_trajectory(panel: TrajectoryPanel, style: int) -> np.ndarray:
    """Per-week mean of a style's popularity over cities with data that week."""
    if not 0 <= style < panel.n_styles:
        raise ValueError(f"style {style} out of range")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN weeks stay NaN
        return np.nanmean(panel.values[style], axis=0)


def save_panel_csv(panel: TrajectoryPanel, path: str | Path) -> None:
    """CSV export: one row per (style, city, week); missing values are empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["style_id", "city_id", "week", "value", "bin_count"])
        for k in range(panel.n_styles):
            for j, city in enumerate(panel.city_ids):
                for t, week in enumerate(panel.week_starts):
                    v = panel.values[k, j, t]
                    writer.writerow(
                        [k, city, week, "" if np.isnan(v) else repr(float(v)), int(panel.bin_counts[j, t])]
                    )


def load_panel_csv(path: str | Path) -> TrajectoryPanel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file not found: {path}")
    cells: dict[tuple[int, str, str], tuple[float, int]] = {}
    styles: set[int] = set()
    cities: set[str] = set()
    weeks: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            k = int(row["style_id"])
            city = row["city_id"]
            week = row["week"]
            value = float(row["value"]) if row["value"] != "" else np.nan
            cells[(k, city, week)] = (value, int(row["bin_count"]))
            styles.add(k)
            cities.add(city)
            weeks.add(week)
    week_starts = sorted(weeks)
    city_ids = sorted(cities)
    n_styles = max(styles) + 1
    values = np.full((n_styles, len(city_ids), len(week_starts)), np.nan)
    counts = np.zeros((len(city_ids), len(week_starts)), dtype=int)
    for (k, city, week), (v, c) in cells.items():
        j = city_ids.index(city)
        t = week_starts.index(week)
        values[k, j, t] = v
        counts[j, t] = c
    return TrajectoryPanel(week_starts=week_starts, city_ids=city_ids, values=values, bin_counts=counts)


def save_panel_json(panel: TrajectoryPanel, path: str | Path) -> None:
    def _nan_to_none(a: np.ndarray):
        return [[[None if np.isnan(v) else v for v in row] for row in mat] for mat in a.tolist()]

    doc = {
        "week_starts": panel.week_starts,
        "city_ids": panel.city_ids,
        "values": _nan_to_none(panel.values),
        "bin_counts": panel.bin_counts.tolist(),
        "filled": None if panel.filled is None else panel.filled.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_panel_json(path: str | Path) -> TrajectoryPanel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    values = np.array(
        [[[np.nan if v is None else v for v in row] for row in mat] for mat in doc["values"]],
        dtype=float,
    )
    return TrajectoryPanel(
        week_starts=list(doc["week_starts"]),
        city_ids=list(doc["city_ids"]),
        values=values,
        bin_counts=np.asarray(doc["bin_counts"], dtype=int),
        filled=None if doc.get("filled") is None else np.asarray(doc["filled"], dtype=bool),
    )
