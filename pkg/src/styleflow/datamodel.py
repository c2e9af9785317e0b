"""Ingestion of attribute records and city metadata.

Records arrive as CSV (``city_id,timestamp,attr_1,...,attr_M``) or an
equivalent JSON document; city metadata as a one-row-per-city CSV.  A
loaded :class:`Corpus` is treated as immutable by every downstream module.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

METADATA_COLUMNS = ["city_id", "lat", "lon", "gdp", "population", "avg_temp", "country", "continent"]


class DataError(ValueError):
    """Invalid or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class AttributeRecord:
    """One observed garment: per-attribute probabilities at a time and place."""

    city_id: str
    timestamp: datetime
    attributes: np.ndarray

    def same_as(self, other: "AttributeRecord") -> bool:
        return (
            self.city_id == other.city_id
            and self.timestamp == other.timestamp
            and np.array_equal(self.attributes, other.attributes)
        )


@dataclass
class CityMetadata:
    city_id: str
    latitude: float | None = None
    longitude: float | None = None
    gdp: float | None = None
    population: float | None = None
    avg_temperature: float | None = None
    country: str | None = None
    continent: str | None = None
    sample_count: int = 0

    def __post_init__(self) -> None:
        if self.latitude is not None and not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"city '{self.city_id}': latitude {self.latitude} out of [-90, 90]")
        if self.longitude is not None and not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"city '{self.city_id}': longitude {self.longitude} out of [-180, 180]")
        if self.population is not None and self.population < 0:
            raise DataError(f"city '{self.city_id}': negative population")
        if self.sample_count < 0:
            raise DataError(f"city '{self.city_id}': negative sample_count")


@dataclass
class Corpus:
    """All ingested records plus per-city metadata and attribute names."""

    records: list[AttributeRecord]
    cities: dict[str, CityMetadata]
    attribute_names: list[str]
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def num_attributes(self) -> int:
        return len(self.attribute_names)

    def attribute_matrix(self) -> np.ndarray:
        """Stacked (N, M) matrix of record attribute vectors (cached)."""
        if self._matrix is None:
            self._matrix = np.vstack([r.attributes for r in self.records])
        return self._matrix

    def same_as(self, other: "Corpus") -> bool:
        return (
            self.attribute_names == other.attribute_names
            and self.cities == other.cities
            and len(self.records) == len(other.records)
            and all(a.same_as(b) for a, b in zip(self.records, other.records))
        )


def _parse_timestamp(raw: str, line_no: int) -> datetime:
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise DataError(f"line {line_no}: bad timestamp '{raw}': {exc}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_attribute(raw: str, name: str, line_no: int) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise DataError(f"line {line_no}: attribute '{name}' is not a number: '{raw}'") from exc
    if not 0.0 <= value <= 1.0:
        raise DataError(f"line {line_no}: attribute '{name}' = {value} outside [0, 1]")
    return value


def load_records(
    path: str | Path,
    schema: dict | None = None,
    metadata: dict[str, CityMetadata] | None = None,
    strict: bool = False,
) -> Corpus:
    """Load attribute records from CSV into a Corpus.

    The header must name a city column, a timestamp column, and M attribute
    columns.  ``schema`` may remap the special columns, e.g.
    ``{"city_id": "city", "timestamp": "ts"}``; every remaining column is an
    attribute.  With ``strict`` and ``metadata`` given, records from cities
    absent from the metadata are rejected.  Per-city ``sample_count`` is
    filled during ingestion.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"records file not found: {path}")
    schema = schema or {}
    city_col = schema.get("city_id", "city_id")
    ts_col = schema.get("timestamp", "timestamp")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if city_col not in header or ts_col not in header:
            raise DataError(f"{path}: header must contain '{city_col}' and '{ts_col}' columns")
        city_idx = header.index(city_col)
        ts_idx = header.index(ts_col)
        attr_cols = [(i, name) for i, name in enumerate(header) if i not in (city_idx, ts_idx)]
        if not attr_cols:
            raise DataError(f"{path}: header declares no attribute columns")
        attribute_names = [name for _, name in attr_cols]

        records: list[AttributeRecord] = []
        counts: dict[str, int] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            city = row[city_idx].strip()
            if not city:
                raise DataError(f"line {line_no}: empty city_id")
            if strict and metadata is not None and city not in metadata:
                raise DataError(f"line {line_no}: unknown city '{city}' (strict mode)")
            ts = _parse_timestamp(row[ts_idx].strip(), line_no)
            attrs = np.array(
                [_parse_attribute(row[i], name, line_no) for i, name in attr_cols],
                dtype=float,
            )
            records.append(AttributeRecord(city_id=city, timestamp=ts, attributes=attrs))
            counts[city] = counts.get(city, 0) + 1

    cities: dict[str, CityMetadata] = {}
    for city, n in sorted(counts.items()):
        if metadata is not None and city in metadata:
            cities[city] = replace(metadata[city], sample_count=n)
        else:
            cities[city] = CityMetadata(city_id=city, sample_count=n)
    if metadata is not None:
        for city, meta in metadata.items():
            if city not in cities:
                cities[city] = replace(meta, sample_count=0)

    return Corpus(records=records, cities=cities, attribute_names=attribute_names)


def save_records(corpus: Corpus, path: str | Path) -> None:
    """Write a Corpus back to the canonical records CSV (lossless round trip)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["city_id", "timestamp", *corpus.attribute_names])
        for rec in corpus.records:
            writer.writerow(
                [rec.city_id, rec.timestamp.isoformat(), *[repr(float(v)) for v in rec.attributes]]
            )


def _parse_optional_float(raw: str) -> float | None:
    raw = raw.strip()
    if raw == "" or raw.lower() in ("null", "none", "na", "n/a"):
        return None
    return float(raw)


def load_city_metadata(path: str | Path) -> dict[str, CityMetadata]:
    """Load the per-city metadata CSV; missing fields become None."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"metadata file not found: {path}")
    out: dict[str, CityMetadata] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in METADATA_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: metadata header missing columns {missing}")
        idx = {c: header.index(c) for c in METADATA_COLUMNS}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            city = row[idx["city_id"]].strip()
            if city in out:
                raise DataError(f"line {line_no}: duplicate city_id '{city}'")
            try:
                meta = CityMetadata(
                    city_id=city,
                    latitude=_parse_optional_float(row[idx["lat"]]),
                    longitude=_parse_optional_float(row[idx["lon"]]),
                    gdp=_parse_optional_float(row[idx["gdp"]]),
                    population=_parse_optional_float(row[idx["population"]]),
                    avg_temperature=_parse_optional_float(row[idx["avg_temp"]]),
                    country=row[idx["country"]].strip() or None,
                    continent=row[idx["continent"]].strip() or None,
                )
            except ValueError as exc:
                if isinstance(exc, DataError):
                    raise DataError(f"line {line_no}: {exc}") from None
                raise DataError(f"line {line_no}: bad numeric field: {exc}") from exc
            out[city] = meta
    return out


def save_city_metadata(cities: dict[str, CityMetadata], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METADATA_COLUMNS)
        for city_id in sorted(cities):
            m = cities[city_id]
            writer.writerow(
                [
                    m.city_id,
                    "" if m.latitude is None else repr(m.latitude),
                    "" if m.longitude is None else repr(m.longitude),
                    "" if m.gdp is None else repr(m.gdp),
                    "" if m.population is None else repr(m.population),
                    "" if m.avg_temperature is None else repr(m.avg_temperature),
                    m.country or "",
                    m.continent or "",
                ]
            )


def load_records_json(path: str | Path, metadata: dict[str, CityMetadata] | None = None,
                      strict: bool = False) -> Corpus:
    """JSON variant of :func:`load_records` (same fields as the CSV)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"records file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    names = doc.get("attribute_names")
    rows = doc.get("records")
    if not isinstance(names, list) or not isinstance(rows, list):
        raise DataError(f"{path}: expected 'attribute_names' and 'records' keys")
    m = len(names)
    records: list[AttributeRecord] = []
    counts: dict[str, int] = {}
    for i, row in enumerate(rows):
        city = row.get("city_id", "")
        if not city:
            raise DataError(f"record {i}: empty city_id")
        if strict and metadata is not None and city not in metadata:
            raise DataError(f"record {i}: unknown city '{city}' (strict mode)")
        attrs = np.asarray(row.get("attributes", []), dtype=float)
        if len(attrs) != m:
            raise DataError(f"record {i}: expected {m} attributes, got {len(attrs)}")
        if np.any(attrs < 0.0) or np.any(attrs > 1.0):
            bad = int(np.argmax((attrs < 0.0) | (attrs > 1.0)))
            raise DataError(f"record {i}: attribute '{names[bad]}' = {attrs[bad]} outside [0, 1]")
        records.append(
            AttributeRecord(
                city_id=city,
                timestamp=_parse_timestamp(row.get("timestamp", ""), i),
                attributes=attrs,
            )
        )
        counts[city] = counts.get(city, 0) + 1
    cities = {}
    for city, n in sorted(counts.items()):
        base = metadata.get(city) if metadata else None
        cities[city] = replace(base, sample_count=n) if base else CityMetadata(city_id=city, sample_count=n)
    return Corpus(records=records, cities=cities, attribute_names=list(names))


def save_records_json(corpus: Corpus, path: str | Path) -> None:
    doc = {
        "attribute_names": corpus.attribute_names,
        "records": [
            {
                "city_id": r.city_id,
                "timestamp": r.timestamp.isoformat(),
                "attributes": [float(v) for v in r.attributes],
            }
            for r in corpus.records
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
