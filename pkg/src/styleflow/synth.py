"""Synthetic panels and record files with planted influence structure.

The generator is the validation oracle for influence discovery: each city's
style series is a seasonal base plus a persistent local component, planted
lagged terms from influencer cities, and observation noise.  It can emit
the panel directly (for influence / forecasting tests) or sample attribute
records whose induced panel matches known per-bin style probabilities (for
end-to-end pipeline runs).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .datamodel import CityMetadata, save_city_metadata
from .trajectories import TrajectoryPanel

MAX_LAG = 8


@dataclass(frozen=True)
class PlantedEdge:
    source: int
    target: int
    style: int
    lag: int
    strength: float


@dataclass
class SyntheticSpec:
    """Configuration of a planted-structure panel.

    ``idio_sigma``/``idio_rho`` control the per-city AR(1) local component;
    setting ``idio_sigma=0`` and ``noise_sigma=0`` makes the panel exactly
    the seasonal base.
    """

    n_cities: int = 5
    n_styles: int = 3
    n_weeks: int = 160
    edges: list[PlantedEdge] = field(default_factory=list)
    seasonal_amplitude: float = 0.1
    noise_sigma: float = 0.01
    idio_sigma: float = 0.05
    idio_rho: float = 0.7
    seed: int = 0
    records_per_bin: int = 40
    n_attributes: int | None = None
    start_date: str = "2013-07-01"  # a Monday

    def validate(self) -> None:
        if self.n_cities < 1 or self.n_styles < 1 or self.n_weeks < 2:
            raise ValueError("need at least 1 city, 1 style, 2 weeks")
        for e in self.edges:
            if not 1 <= e.lag <= MAX_LAG:
                raise ValueError(f"edge lag {e.lag} outside [1, {MAX_LAG}]")
            if e.lag >= self.n_weeks:
                raise ValueError(f"edge lag {e.lag} >= panel length {self.n_weeks}")
            if not 0 <= e.source < self.n_cities or not 0 <= e.target < self.n_cities:
                raise ValueError("edge city index out of range")
            if e.source == e.target:
                raise ValueError("self-edges not allowed")
            if not 0 <= e.style < self.n_styles:
                raise ValueError("edge style out of range")


def city_name(i: int) -> str:
    return f"city{i:02d}"


def _week_labels(spec: SyntheticSpec) -> list[str]:
    start = date.fromisoformat(spec.start_date)
    return [(start + timedelta(days=7 * t)).isoformat() for t in range(spec.n_weeks)]


def synthesize_panel(spec: SyntheticSpec) -> tuple[TrajectoryPanel, dict]:
    """Generate the planted panel and its ground truth.

    Returns (panel, truth) where truth records the planted edges, the
    noise-free base series, and the per-bin style probabilities used by the
    record sampler.
    """
    spec.validate()
    rng = np.random.default_rng([spec.seed, 1])
    k, c, t = spec.n_styles, spec.n_cities, spec.n_weeks
    burn = MAX_LAG  # simulate a lead-in so lagged terms are defined from week 0
    tt = t + burn
    steps = np.arange(-burn, t)

    style_means = np.linspace(0.35, 0.65, k)
    phases = 2.0 * np.pi * np.arange(k) / max(k, 1)
    seasonal = (
        style_means[:, None]
        + spec.seasonal_amplitude * np.sin(2.0 * np.pi * steps[None, :] / 52.0 + phases[:, None])
    )  # (K, TT)

    idio = np.zeros((k, c, tt))
    if spec.idio_sigma > 0:
        innov_sd = spec.idio_sigma * np.sqrt(max(1.0 - spec.idio_rho**2, 0.0))
        idio[:, :, 0] = rng.normal(0.0, spec.idio_sigma, size=(k, c))
        shocks = rng.normal(0.0, innov_sd, size=(k, c, tt))
        for s in range(1, tt):
            idio[:, :, s] = spec.idio_rho * idio[:, :, s - 1] + shocks[:, :, s]

    base = seasonal[:, None, :] + idio  # (K, C, TT)
    if spec.noise_sigma > 0:
        base = base + rng.normal(0.0, spec.noise_sigma, size=base.shape)

    # influence transmits the source's observed base signal (seasonal + local
    # component + noise), so the planted lag carries a fresh white marker
    values = base.copy()
    for e in spec.edges:
        src = base[e.style, e.source]
        deviation = src - style_means[e.style]
        values[e.style, e.target, e.lag :] += e.strength * deviation[: tt - e.lag]

    values = values[:, :, burn:]
    probs = np.clip(values, 0.02, 0.98)
    probs = probs / probs.sum(axis=0, keepdims=True)

    panel = TrajectoryPanel(
        week_starts=_week_labels(spec),
        city_ids=[city_name(i) for i in range(c)],
        values=values,
        bin_counts=np.full((c, t), spec.records_per_bin, dtype=int),
    )
    truth = {
        "cities": panel.city_ids,
        "week_starts": panel.week_starts,
        "edges": [asdict(e) for e in spec.edges],
        "style_means": style_means.tolist(),
        "panel": values.tolist(),
        "bin_probabilities": probs.tolist(),
        "spec": {**asdict(spec), "edges": [asdict(e) for e in spec.edges]},
    }
    return panel, truth


def _attribute_anchors(n_styles: int, n_attributes: int) -> np.ndarray:
    """Well-separated per-style anchor vectors in attribute space."""
    anchors = np.full((n_styles, n_attributes), 0.1)
    for k in range(n_styles):
        hot = [(2 * k) % n_attributes, (2 * k + 1) % n_attributes]
        anchors[k, hot] = 0.9
    return anchors


def synthesize_metadata(spec: SyntheticSpec) -> dict[str, CityMetadata]:
    """Plausible seeded city properties for correlation / aggregation runs."""
    rng = np.random.default_rng([spec.seed, 2])
    out: dict[str, CityMetadata] = {}
    for i in range(spec.n_cities):
        lat = float(rng.uniform(-55.0, 65.0))
        out[city_name(i)] = CityMetadata(
            city_id=city_name(i),
            latitude=lat,
            longitude=float(rng.uniform(-180.0, 180.0)),
            gdp=float(np.round(rng.uniform(50.0, 900.0), 1)),
            population=float(rng.integers(500_000, 20_000_000)),
            avg_temperature=float(np.round(26.0 - 0.3 * abs(lat) + rng.normal(0, 2.0), 2)),
            country=f"country{i // 2:02d}",
            continent=f"continent{i // 4}",
        )
    return out


def generate_synthetic(
    spec: SyntheticSpec,
    out_dir: str | Path,
    write_metadata: bool = True,
) -> dict[str, Path]:
    """Write records CSV + ground-truth JSON (and metadata CSV) for a spec.

    Record sampling: in each (city, week) bin, ``records_per_bin`` garments
    draw a style from that bin's probabilities and an attribute vector near
    the style's anchor.  Identical spec + seed produces identical files.
    """
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, truth = synthesize_panel(spec)
    probs = np.asarray(truth["bin_probabilities"])  # (K, C, T)
    m = spec.n_attributes or max(2 * spec.n_styles, 2)
    anchors = _attribute_anchors(spec.n_styles, m)
    rng = np.random.default_rng([spec.seed, 3])
    start = date.fromisoformat(spec.start_date)

    records_path = out_dir / "records.csv"
    with open(records_path, "w", newline="") as fh:
        fh.write("city_id,timestamp," + ",".join(f"attr_{a + 1}" for a in range(m)) + "\n")
        for j in range(spec.n_cities):
            for t in range(spec.n_weeks):
                counts = rng.multinomial(spec.records_per_bin, probs[:, j, t])
                day_offsets = rng.integers(0, 7, size=spec.records_per_bin)
                hours = rng.integers(0, 24, size=spec.records_per_bin)
                r = 0
                for k, nk in enumerate(counts):
                    for _ in range(nk):
                        attrs = np.clip(
                            anchors[k] + rng.normal(0.0, 0.05, size=m), 0.0, 1.0
                        )
                        stamp = (
                            f"{(start + timedelta(days=7 * t + int(day_offsets[r]))).isoformat()}"
                            f"T{int(hours[r]):02d}:00:00+00:00"
                        )
                        fh.write(
                            f"{city_name(j)},{stamp},"
                            + ",".join(repr(float(v)) for v in attrs)
                            + "\n"
                        )
                        r += 1

    truth_path = out_dir / "ground_truth.json"
    with open(truth_path, "w") as fh:
        json.dump(truth, fh, sort_keys=True)

    paths = {"records": records_path, "ground_truth": truth_path}
    if write_metadata:
        meta_path = out_dir / "metadata.csv"
        save_city_metadata(synthesize_metadata(spec), meta_path)
        paths["metadata"] = meta_path
    return paths
