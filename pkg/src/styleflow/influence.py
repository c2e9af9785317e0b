"""Directed influence discovery between city trajectories.

A city influences another (for one style) when its lagged history adds
statistically significant explanatory power to the target's own
autoregression.  The discovered lag is the edge weight, so long-term
influencers weigh more than instantaneous ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .datamodel import CityMetadata, DataError
from .numstats import InsufficientDataError, f_test, fit_ar, haversine, spearman
from .trajectories import SplitSpec, TrajectoryPanel, global_trajectory

DEFAULT_LAGS = range(1, 9)


class GrangerResult(NamedTuple):
    significant: bool
    p_value: float
    degenerate: bool = False


@dataclass(frozen=True)
class InfluenceEdge:
    source: str
    target: str
    style: int
    lag: int
    p_value: float

    @property
    def weight(self) -> float:
        return float(self.lag)


@dataclass
class InfluenceTensor:
    """Dense lag tensor: lags[k, i, j] = lag of city i's influence on city j
    for style k (0 = no influence), with the matching p-values."""

    city_ids: list[str]
    lags: np.ndarray       # (K, C, C) int
    p_values: np.ndarray   # (K, C, C); 1.0 where no edge
    skipped: list[dict] = field(default_factory=list)

    @property
    def n_styles(self) -> int:
        return self.lags.shape[0]

    @property
    def n_cities(self) -> int:
        return self.lags.shape[1]

    def edges(self) -> list[InfluenceEdge]:
        out = []
        for k, i, j in zip(*np.nonzero(self.lags)):
            out.append(
                InfluenceEdge(
                    source=self.city_ids[i],
                    target=self.city_ids[j],
                    style=int(k),
                    lag=int(self.lags[k, i, j]),
                    p_value=float(self.p_values[k, i, j]),
                )
            )
        return out


@dataclass
class InfluenceScores:
    """Lag-weighted influence sums per city, averaged over styles."""

    city_ids: list[str]
    exerted: np.ndarray            # (C,)
    received: np.ndarray           # (C,)
    net: np.ndarray                # (C,) = exerted - received
    exerted_per_style: np.ndarray  # (K, C)

    def as_dict(self, kind: str = "net") -> dict[str, float]:
        vec = getattr(self, kind)
        return {c: float(v) for c, v in zip(self.city_ids, vec)}


def granger_test(
    target: np.ndarray,
    candidate: np.ndarray,
    d: int = 8,
    lag: int = 1,
    alpha: float = 0.05,
    cumulative: bool = False,
) -> GrangerResult:
    """Test whether ``candidate`` Granger-causes ``target`` at one lag.

    Fits the restricted AR(d) on the target and the extension with the
    candidate's lag (lags 1..lag when ``cumulative``); both fits share the
    same effective sample window so their RSS values are comparable.
    A constant target is reported as degenerate, never significant.
    """
    target = np.asarray(target, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if target.shape != candidate.shape:
        raise ValueError("target and candidate must have equal length")
    m = 1 if cumulative else lag
    t0 = max(d, lag)
    if np.ptp(target[t0:]) == 0.0:
        return GrangerResult(False, 1.0, degenerate=True)
    restricted = fit_ar(target, d, t0=t0)
    extended = fit_ar(target, d, exog=(candidate, m, lag), t0=t0)
    p = f_test(
        restricted.rss,
        extended.rss,
        extra_params=lag - m + 1,
        residual_df=extended.residual_df,
    )
    return GrangerResult(p < alpha, p, degenerate=False)


def _train_values(panel: TrajectoryPanel, split: SplitSpec | None) -> np.ndarray:
    values = panel.values
    if split is not None:
        values = values[:, :, split.train[0] : split.train[1]]
    if np.isnan(values).any():
        raise DataError("panel contains missing bins; run interpolate_missing first")
    return values


def _lag_sweep(
    target: np.ndarray,
    candidate: np.ndarray,
    d: int,
    lags: Iterable[int],
    alpha: float,
    lag_correction: str,
    cumulative: bool,
) -> tuple[int, float, bool]:
    """Pick the significant lag with minimum p-value; (0, 1.0) when none.

    ``lag_correction="bonferroni"`` (default) holds the per-pair false
    positive rate at alpha across the lag sweep; "none" compares each lag's
    p-value to alpha directly.
    """
    lag_list = list(lags)
    if lag_correction not in ("bonferroni", "none"):
        raise ValueError(f"unknown lag_correction '{lag_correction}'")
    threshold = alpha / len(lag_list) if lag_correction == "bonferroni" else alpha
    best_lag, best_p = 0, 1.0
    for lag in lag_list:
        result = granger_test(target, candidate, d=d, lag=lag, alpha=alpha, cumulative=cumulative)
        if result.degenerate:
            return 0, 1.0, True
        if result.p_value < threshold and result.p_value < best_p:
            best_lag, best_p = lag, result.p_value
    return best_lag, best_p, False


def _benjamini_hochberg(tensor: InfluenceTensor, alpha: float, n_lags: int) -> None:
    """Keep only edges surviving BH at alpha over all candidate pairs (in place)."""
    mask = tensor.lags > 0
    if not mask.any():
        return
    # Pair-level p adjusted for the lag sweep, then BH across pairs.
    pair_p = np.minimum(tensor.p_values[mask] * n_lags, 1.0)
    order = np.argsort(pair_p)
    m = len(pair_p)
    keep = np.zeros(m, dtype=bool)
    max_i = -1
    for rank, idx in enumerate(order, start=1):
        if pair_p[idx] <= alpha * rank / m:
            max_i = rank
    if max_i > 0:
        keep[order[:max_i]] = True
    flat_idx = np.flatnonzero(mask.ravel())
    drop = flat_idx[~keep]
    tensor.lags.ravel()[drop] = 0
    tensor.p_values.ravel()[drop] = 1.0


def discover_tensor(
    panel: TrajectoryPanel,
    d: int = 8,
    lags: Iterable[int] = DEFAULT_LAGS,
    alpha: float = 0.05,
    split: SplitSpec | None = None,
    lag_correction: str = "bonferroni",
    bh: bool = False,
    cumulative: bool = False,
) -> InfluenceTensor:
    """Run the lag-swept Granger test over every ordered city pair and style.

    Only training-range weeks are used when ``split`` is given.  Degenerate
    pairs are skipped and recorded in the tensor's ``skipped`` report.
    """
    values = _train_values(panel, split)
    k, c, _ = values.shape
    lag_list = list(lags)
    tensor = InfluenceTensor(
        city_ids=list(panel.city_ids),
        lags=np.zeros((k, c, c), dtype=int),
        p_values=np.ones((k, c, c)),
    )
    if c < 2:
        return tensor
    for style in range(k):
        for i in range(c):
            for j in range(c):
                if i == j:
                    continue
                try:
                    lag, p, degenerate = _lag_sweep(
                        values[style, j], values[style, i], d, lag_list, alpha,
                        lag_correction, cumulative,
                    )
                except InsufficientDataError as exc:
                    tensor.skipped.append(
                        {"style": style, "source": panel.city_ids[i],
                         "target": panel.city_ids[j], "reason": str(exc)}
                    )
                    continue
                if degenerate:
                    tensor.skipped.append(
                        {"style": style, "source": panel.city_ids[i],
                         "target": panel.city_ids[j], "reason": "constant target series"}
                    )
                    continue
                if lag > 0:
                    tensor.lags[style, i, j] = lag
                    tensor.p_values[style, i, j] = p
    if bh:
        _benjamini_hochberg(tensor, alpha, len(lag_list))
    return tensor


def influence_scores(tensor: InfluenceTensor) -> InfluenceScores:
    """Exerted / received / net scores, lag-weighted and averaged over styles."""
    k = max(tensor.n_styles, 1)
    lags = tensor.lags.astype(float)
    exerted = lags.sum(axis=(0, 2)) / k
    received = lags.sum(axis=(0, 1)) / k
    return InfluenceScores(
        city_ids=list(tensor.city_ids),
        exerted=exerted,
        received=received,
        net=exerted - received,
        exerted_per_style=lags.sum(axis=2),
    )


def rank_cities(scores: InfluenceScores, by: str = "net") -> list[str]:
    """City ids in descending score order; ties break alphabetically."""
    if by not in ("net", "exerted", "received"):
        raise ValueError(f"unknown ranking key '{by}'")
    vec = getattr(scores, by)
    return [c for c, _ in sorted(zip(scores.city_ids, vec), key=lambda cv: (-cv[1], cv[0]))]


@dataclass
class WorldInfluence:
    """Per (style, city) influence of a city's series on the global trajectory."""

    city_ids: list[str]
    lags: np.ndarray       # (K, C)
    p_values: np.ndarray   # (K, C)
    skipped: list[dict] = field(default_factory=list)


def city_to_world(
    panel: TrajectoryPanel,
    d: int = 8,
    lags: Iterable[int] = DEFAULT_LAGS,
    alpha: float = 0.05,
    split: SplitSpec | None = None,
    leave_self_out: bool = False,
    lag_correction: str = "bonferroni",
    cumulative: bool = False,
) -> WorldInfluence:
    """Granger-test every city series against the style's global trajectory."""
    values = _train_values(panel, split)
    k, c, _ = values.shape
    result = WorldInfluence(
        city_ids=list(panel.city_ids),
        lags=np.zeros((k, c), dtype=int),
        p_values=np.ones((k, c)),
    )
    if c < 2:
        result.skipped.append({"reason": "single-city panel: global trajectory equals the city itself"})
        return result
    lag_list = list(lags)
    for style in range(k):
        mean_all = values[style].mean(axis=0)
        for i in range(c):
            if leave_self_out:
                target = (mean_all * c - values[style, i]) / (c - 1)
            else:
                target = mean_all
            lag, p, degenerate = _lag_sweep(
                target, values[style, i], d, lag_list, alpha, lag_correction, cumulative
            )
            if degenerate:
                result.skipped.append(
                    {"style": style, "city": panel.city_ids[i], "reason": "constant global series"}
                )
                continue
            if lag > 0:
                result.lags[style, i] = lag
                result.p_values[style, i] = p
    return result


METADATA_PROPERTIES = ("gdp", "avg_temperature", "latitude", "population", "sample_count")


@dataclass
class CorrelationReport:
    """Spearman correlations of influence structure with city properties."""

    world_rank: dict[str, float | None]
    direction: dict[str, float | None]
    direction_city_counts: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "world_rank": self.world_rank,
                "direction": self.direction,
                "direction_city_counts": self.direction_city_counts,
            },
            sort_keys=True,
            indent=2,
        )


def correlate_metadata(
    scores: InfluenceScores,
    tensor: InfluenceTensor,
    meta: dict[str, CityMetadata],
    min_exerted_edges: int = 3,
) -> CorrelationReport:
    """Correlate net-score ranking and edge directions with city properties.

    World-rank level: Spearman of net scores against each property across
    cities.  Direction level: per influencer city, Spearman of its
    property differences to every other city against the lag weights it
    exerts on them, averaged over cities with enough outgoing edges;
    distance uses the haversine pair distance directly.
    """
    cities = scores.city_ids
    prop_values: dict[str, list[float | None]] = {}
    for prop in METADATA_PROPERTIES:
        prop_values[prop] = [
            getattr(meta[c], prop) if c in meta else None for c in cities
        ]

    world_rank: dict[str, float | None] = {}
    for prop, vals in prop_values.items():
        pairs = [(v, n) for v, n in zip(vals, scores.net) if v is not None]
        if len(pairs) < 3:
            world_rank[prop] = None
            continue
        world_rank[prop] = spearman(
            np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])
        )
    world_rank["distance"] = None  # pairwise property; undefined at rank level

    weights = tensor.lags.astype(float).sum(axis=0) / max(tensor.n_styles, 1)  # (C, C)
    coords = {
        c: (meta[c].latitude, meta[c].longitude)
        for c in cities
        if c in meta and meta[c].latitude is not None and meta[c].longitude is not None
    }

    direction: dict[str, float | None] = {}
    counts: dict[str, int] = {}
    for prop in (*METADATA_PROPERTIES, "distance"):
        rhos = []
        for i, ci in enumerate(cities):
            if int((weights[i] > 0).sum()) < min_exerted_edges:
                continue
            diffs, w = [], []
            for j, cj in enumerate(cities):
                if i == j:
                    continue
                if prop == "distance":
                    if ci not in coords or cj not in coords:
                        continue
                    diffs.append(haversine(coords[ci], coords[cj]))
                else:
                    vi = prop_values[prop][i]
                    vj = prop_values[prop][j]
                    if vi is None or vj is None:
                        continue
                    diffs.append(vi - vj)
                w.append(weights[i, j])
            if len(diffs) < 3:
                continue
            rho = spearman(np.array(diffs), np.array(w))
            if rho is not None:
                rhos.append(rho)
        direction[prop] = float(np.mean(rhos)) if rhos else None
        counts[prop] = len(rhos)
    return CorrelationReport(world_rank=world_rank, direction=direction, direction_city_counts=counts)


@dataclass
class InfluenceDynamics:
    """Exerted influence per city across sliding windows."""

    city_ids: list[str]
    window_starts: list[int]
    window_start_weeks: list[str]
    exerted: np.ndarray  # (n_windows, C)


def influence_dynamics(
    panel: TrajectoryPanel,
    window: int = 52,
    step: int = 13,
    d: int = 8,
    lags: Iterable[int] = DEFAULT_LAGS,
    alpha: float = 0.05,
    lag_correction: str = "bonferroni",
) -> InfluenceDynamics:
    """Re-run discovery in sliding windows; emits exerted-score series."""
    t = panel.n_weeks
    if t < window + step:
        raise DataError(f"panel length {t} shorter than window {window} + step {step}")
    starts = list(range(0, t - window + 1, step))
    lag_list = list(lags)
    rows = []
    for s in starts:
        piece = panel.slice_weeks(s, s + window)
        tensor = discover_tensor(piece, d=d, lags=lag_list, alpha=alpha, lag_correction=lag_correction)
        rows.append(influence_scores(tensor).exerted)
    return InfluenceDynamics(
        city_ids=list(panel.city_ids),
        window_starts=starts,
        window_start_weeks=[panel.week_starts[s] for s in starts],
        exerted=np.vstack(rows),
    )


# ---------------------------------------------------------------------------
# exports

def tensor_to_json(tensor: InfluenceTensor, path: str | Path) -> None:
    doc = {
        "city_ids": tensor.city_ids,
        "n_styles": tensor.n_styles,
        "edges": [
            {"style": e.style, "source": e.source, "target": e.target,
             "lag": e.lag, "p_value": e.p_value}
            for e in tensor.edges()
        ],
        "skipped": tensor.skipped,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def tensor_from_json(path: str | Path) -> InfluenceTensor:
    with open(path) as fh:
        doc = json.load(fh)
    cities = list(doc["city_ids"])
    index = {c: i for i, c in enumerate(cities)}
    k = int(doc["n_styles"])
    tensor = InfluenceTensor(
        city_ids=cities,
        lags=np.zeros((k, len(cities), len(cities)), dtype=int),
        p_values=np.ones((k, len(cities), len(cities))),
        skipped=list(doc.get("skipped", [])),
    )
    for e in doc["edges"]:
        i, j = index[e["source"]], index[e["target"]]
        tensor.lags[e["style"], i, j] = int(e["lag"])
        tensor.p_values[e["style"], i, j] = float(e["p_value"])
    return tensor


def tensor_to_dot(tensor: InfluenceTensor) -> str:
    lines = ["digraph influence {"]
    for e in tensor.edges():
        lines.append(
            f'  "{e.source}" -> "{e.target}" [lag={e.lag}, style={e.style}, p={e.p_value:.6g}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def scores_to_csv(scores: InfluenceScores, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("city_id,exerted,received,net\n")
        for i, c in enumerate(scores.city_ids):
            fh.write(f"{c},{float(scores.exerted[i])!r},{float(scores.received[i])!r},{float(scores.net[i])!r}\n")


def scores_from_csv(path: str | Path) -> dict[str, dict[str, float]]:
    """Load a scores CSV back into {city: {exerted, received, net}}."""
    out: dict[str, dict[str, float]] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ["city_id", "exerted", "received", "net"]:
            raise DataError(f"{path}: unexpected scores header {header}")
        for line in fh:
            city, ex, re_, net = line.strip().split(",")
            out[city] = {"exerted": float(ex), "received": float(re_), "net": float(net)}
    return out


def ranking_to_csv(scores: InfluenceScores, path: str | Path, by: str = "net") -> None:
    ranked = rank_cities(scores, by=by)
    vec = scores.as_dict(by)
    with open(path, "w") as fh:
        fh.write(f"rank,city_id,{by}\n")
        for pos, c in enumerate(ranked, start=1):
            fh.write(f"{pos},{c},{float(vec[c])!r}\n")


def dynamics_to_csv(dynamics: InfluenceDynamics, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("city,window_start,exerted\n")
        for w, week in enumerate(dynamics.window_start_weeks):
            for i, c in enumerate(dynamics.city_ids):
                fh.write(f"{c},{week},{float(dynamics.exerted[w, i])!r}\n")


def dynamics_from_csv(path: str | Path) -> InfluenceDynamics:
    """Load a dynamics CSV back into an InfluenceDynamics."""
    rows: list[tuple[str, str, float]] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "city,window_start,exerted":
            raise DataError(f"{path}: unexpected dynamics header '{header}'")
        for line in fh:
            city, week, exerted = line.strip().split(",")
            rows.append((city, week, float(exerted)))
    weeks = sorted({r[1] for r in rows})
    cities = sorted({r[0] for r in rows})
    exerted = np.zeros((len(weeks), len(cities)))
    for city, week, value in rows:
        exerted[weeks.index(week), cities.index(city)] = value
    return InfluenceDynamics(
        city_ids=cities, window_starts=list(range(len(weeks))),
        window_start_weeks=weeks, exerted=exerted,
    )


def region_scores(
    scores: InfluenceScores, meta: dict[str, CityMetadata], level: str = "country"
) -> dict[str, dict[str, float]]:
    """Sum city scores by country or continent (world-map style aggregation)."""
    if level not in ("country", "continent"):
        raise ValueError("level must be 'country' or 'continent'")
    out: dict[str, dict[str, float]] = {}
    for i, c in enumerate(scores.city_ids):
        region = getattr(meta.get(c), level, None) if meta.get(c) else None
        if region is None:
            continue
        slot = out.setdefault(region, {"exerted": 0.0, "received": 0.0, "net": 0.0})
        slot["exerted"] += float(scores.exerted[i])
        slot["received"] += float(scores.received[i])
        slot["net"] += float(scores.net[i])
    return out


def region_scores_to_csv(regions: dict[str, dict[str, float]], path: str | Path, level: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"{level},exerted,received,net\n")
        for region in sorted(regions):
            r = regions[region]
            fh.write(f"{region},{r['exerted']!r},{r['received']!r},{r['net']!r}\n")
