"""Meter readings, profile matrices and the two aggregation levels.

A year is a fixed 365 x 48 grid of half-hourly kWh readings. Missing cells
are stored as NaN and ignored by every per-slot statistic.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DuplicateReading, EmptyFile, MalformedRow, SlotAllMissing

N_DAYS = 365
N_SLOTS = 48
N_CELLS = N_DAYS * N_SLOTS

CSV_COLUMNS = ("entity_id", "sector_id", "day_index", "slot_index", "kwh")


class Granularity(str, enum.Enum):
    DISAGGREGATED = "disaggregated"
    AGGREGATED = "aggregated"


@dataclass(frozen=True)
class Reading:
    entity_id: str
    day_index: int
    slot_index: int
    kwh: float

    def __post_init__(self):
        if not 0 <= self.day_index < N_DAYS:
            raise ValueError(f"day_index {self.day_index} outside 0..{N_DAYS - 1}")
        if not 0 <= self.slot_index < N_SLOTS:
            raise ValueError(f"slot_index {self.slot_index} outside 0..{N_SLOTS - 1}")
        if not (math.isfinite(self.kwh) and self.kwh >= 0):
            raise ValueError(f"kwh must be finite and non-negative, got {self.kwh}")


@dataclass(eq=False)
class MeterSeries:
    """One entity's year of readings; ``values`` is (365, 48) with NaN for gaps."""

    entity_id: str
    sector_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (N_DAYS, N_SLOTS):
            raise ValueError(f"expected a {N_DAYS}x{N_SLOTS} grid, got {self.values.shape}")
        observed = self.values[~np.isnan(self.values)]
        if np.any(~np.isfinite(observed)) or np.any(observed < 0):
            raise ValueError(f"entity {self.entity_id!r} has negative or infinite readings")

    @property
    def coverage(self) -> float:
        return float(np.count_nonzero(~np.isnan(self.values))) / N_CELLS

    def flat(self) -> np.ndarray:
        """Readings in time order, day-major then slot."""
        return self.values.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, MeterSeries):
            return NotImplemented
        return (
            self.entity_id == other.entity_id
            and self.sector_id == other.sector_id
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass
class ProfileMatrix:
    row_ids: tuple[str, ...]
    features: np.ndarray
    feature_names: tuple[str, ...]
    granularity: Granularity = Granularity.DISAGGREGATED

    def __post_init__(self):
        self.row_ids = tuple(str(r) for r in self.row_ids)
        self.feature_names = tuple(self.feature_names)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.granularity = Granularity(self.granularity)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise ValueError(f"profile matrix must be non-empty, got {n}x{d}")
        if len(self.row_ids) != n:
            raise ValueError(f"{len(self.row_ids)} row ids for {n} rows")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} feature names for {d} columns")
        if len(set(self.row_ids)) != n:
            raise ValueError("row ids must be unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("profile matrix contains missing or non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "ProfileMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return ProfileMatrix(
            tuple(self.row_ids[i] for i in idx),
            self.features[idx],
            self.feature_names,
            self.granularity,
        )


@dataclass
class LabeledDataset:
    matrix: ProfileMatrix
    labels: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.matrix.n_rows,):
            raise ValueError(f"{self.labels.size} labels for {self.matrix.n_rows} rows")
        if not self.n_classes:
            self.n_classes = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")

    @property
    def X(self) -> np.ndarray:
        return self.matrix.features

    @property
    def y(self) -> np.ndarray:
        return self.labels

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(self.matrix.take(idx), self.labels[idx], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv(path, schema: Mapping[str, str] | None = None) -> list[MeterSeries]:
    """Read long-format readings into one :class:`MeterSeries` per entity.

    ``schema`` maps canonical column names (``entity_id``, ``sector_id``,
    ``day_index``, ``slot_index``, ``kwh``) to the names used in the file.
    Series are returned sorted by entity id.
    """
    path = Path(path)
    schema = dict(schema or {})
    names = {c: schema.get(c, c) for c in CSV_COLUMNS}

    if path.stat().st_size == 0:
        raise EmptyFile(f"{path} is empty")
    try:
        df = pd.read_csv(
            path,
            dtype={names["entity_id"]: str, names["sector_id"]: str},
            keep_default_na=False,
            na_values={names["kwh"]: [""], names["day_index"]: [""], names["slot_index"]: [""]},
            encoding="utf-8",
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError:
        raise EmptyFile(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise MalformedRow(0, f"unparseable CSV: {exc}") from None

    missing = [c for c, n in names.items() if n not in df.columns]
    if missing:
        raise MalformedRow(1, f"header lacks column(s) {', '.join(names[c] for c in missing)}")
    if len(df) == 0:
        raise EmptyFile(f"{path} has a header but no readings")

    df = df[[names[c] for c in CSV_COLUMNS]]
    df.columns = list(CSV_COLUMNS)
    return _frame_to_series(df)


def _frame_to_series(df: pd.DataFrame) -> list[MeterSeries]:
    line = np.arange(len(df)) + 2  # header is line 1

    def fail(mask, reason):
        i = int(np.flatnonzero(mask)[0])
        raise MalformedRow(int(line[i]), reason)

    for col in ("entity_id", "sector_id"):
        bad = (df[col].str.len() == 0).to_numpy()
        if bad.any():
            fail(bad, f"empty {col}")

    numeric = {}
    for col in ("day_index", "slot_index", "kwh"):
        vals = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=np.float64)
        bad = np.isnan(vals)
        if bad.any():
            fail(bad, f"{col} is not a number")
        numeric[col] = vals

    day, slot, kwh = numeric["day_index"], numeric["slot_index"], numeric["kwh"]
    for col, vals, hi in (("day_index", day, N_DAYS), ("slot_index", slot, N_SLOTS)):
        bad = vals != np.floor(vals)
        if bad.any():
            fail(bad, f"{col} must be an integer")
        bad = (vals < 0) | (vals >= hi)
        if bad.any():
            fail(bad, f"{col} out of range 0..{hi - 1}")
    bad = ~np.isfinite(kwh) | (kwh < 0)
    if bad.any():
        fail(bad, "kwh must be finite and non-negative")

    ent_codes, ent_ids = pd.factorize(df["entity_id"], sort=True)
    day = day.astype(np.int64)
    slot = slot.astype(np.int64)
    cell = (ent_codes.astype(np.int64) * N_DAYS + day) * N_SLOTS + slot
    dup = pd.Series(cell).duplicated().to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise DuplicateReading(str(df["entity_id"].iat[i]), int(day[i]), int(slot[i]), int(line[i]))

    sectors = df.groupby("entity_id", sort=True)["sector_id"]
    n_sect = sectors.nunique()
    if (n_sect > 1).any():
        bad_ent = n_sect.index[(n_sect > 1).to_numpy()][0]
        fail((df["entity_id"] == bad_ent).to_numpy() & (df["sector_id"] != sectors.first()[bad_ent]).to_numpy(),
             f"entity {bad_ent!r} appears under more than one sector_id")
    first_sector = sectors.first()

    grid = np.full((len(ent_ids), N_DAYS, N_SLOTS), np.nan)
    grid[ent_codes, day, slot] = kwh
    return [
        MeterSeries(str(e), str(first_sector[e]), grid[i])
        for i, e in enumerate(ent_ids)
    ]


def write_csv(series: Sequence[MeterSeries], path) -> None:
    """Write readings in the ingestion format; missing cells are omitted."""
    frames = []
    for s in series:
        day, slot = np.nonzero(~np.isnan(s.values))
        frames.append(pd.DataFrame({
            "entity_id": s.entity_id,
            "sector_id": s.sector_id,
            "day_index": day,
            "slot_index": slot,
            "kwh": s.values[day, slot],
        }))
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=CSV_COLUMNS)
    # 17 significant digits round-trip float64 exactly
    df.to_csv(path, index=False, float_format="%.17g")


# ---------------------------------------------------------------------------
# Profiles


def filter_by_coverage(series: Sequence[MeterSeries], threshold: float = 0.9) -> list[MeterSeries]:
    return [s for s in series if s.coverage >= threshold]


def mean_daily_profile(series: MeterSeries) -> np.ndarray:
    """Per-slot mean over the days with an observation.

    Computed as a reference reading plus the mean deviation from it, so a
    slot whose readings are all equal returns that reading exactly.
    """
    observed = ~np.isnan(series.values)
    counts = observed.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise SlotAllMissing(int(empty[0]), series.entity_id)
    ref = series.values[np.argmax(observed, axis=0), np.arange(N_SLOTS)]
    dev = np.where(observed, series.values - ref, 0.0)
    return ref + dev.sum(axis=0) / counts


def daily_profile_sd(series: MeterSeries) -> np.ndarray:
    """Per-slot population standard deviation over observed days."""
    mean = mean_daily_profile(series)
    observed = ~np.isnan(series.values)
    dev = np.where(observed, series.values - mean, 0.0)
    return np.sqrt((dev**2).sum(axis=0) / observed.sum(axis=0))


def feature_names(features: str = "mean") -> tuple[str, ...]:
    names = tuple(f"f{s:02d}" for s in range(N_SLOTS))
    if features == "mean":
        return names
    if features == "mean+std":
        return names + tuple(f"s{s:02d}" for s in range(N_SLOTS))
    raise ValueError(f"unknown feature mode {features!r}; expected 'mean' or 'mean+std'")


def profile_features(series: MeterSeries, features: str = "mean") -> np.ndarray:
    feature_names(features)  # validates the mode
    mean = mean_daily_profile(series)
    if features == "mean":
        return mean
    return np.concatenate([mean, daily_profile_sd(series)])


def disaggregated_matrix(series: Sequence[MeterSeries], features: str = "mean") -> ProfileMatrix:
    """One row per entity, ordered by entity id."""
    ordered = sorted(series, key=lambda s: s.entity_id)
    rows = np.array([profile_features(s, features) for s in ordered])
    return ProfileMatrix(
        tuple(s.entity_id for s in ordered),
        rows,
        feature_names(features),
        Granularity.DISAGGREGATED,
    )


def aggregate_by_sector(series: Sequence[MeterSeries], features: str = "mean") -> ProfileMatrix:
    """One row per sector: the element-wise mean of its members' profiles."""
    by_sector: dict[str, list[np.ndarray]] = {}
    for s in sorted(series, key=lambda s: s.entity_id):
        if not s.sector_id:
            raise ValueError(f"entity {s.entity_id!r} has no sector_id")
        by_sector.setdefault(s.sector_id, []).append(profile_features(s, features))
    sectors = sorted(by_sector)
    rows = np.array([np.mean(by_sector[k], axis=0) for k in sectors])
    return ProfileMatrix(tuple(sectors), rows, feature_names(features), Granularity.AGGREGATED)


def build_matrix(series: Sequence[MeterSeries], granularity, features: str = "mean") -> ProfileMatrix:
    if Granularity(granularity) is Granularity.AGGREGATED:
        return aggregate_by_sector(series, features)
    return disaggregated_matrix(series, features)


def lag_features(series, order: int = 1) -> np.ndarray:
    """Rows ``(x[k], x[k-order], ..., x[k-1])`` over the flattened series.

    Any window touching a missing reading is dropped.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    x = series.flat() if isinstance(series, MeterSeries) else np.asarray(series, dtype=np.float64)
    n = x.size - order
    if n <= 0:
        return np.empty((0, order + 1))
    cols = [x[order:]] + [x[j : j + n] for j in range(order)]
    rows = np.column_stack(cols)
    return rows[~np.isnan(rows).any(axis=1)]


# ---------------------------------------------------------------------------
# Matrix and label files


def write_matrix(matrix: ProfileMatrix, path) -> None:
    df = pd.DataFrame(matrix.features, columns=list(matrix.feature_names))
    df.insert(0, "row_id", list(matrix.row_ids))
    df.to_csv(path, index=False, float_format="%.6g")


def read_matrix(path, granularity=Granularity.DISAGGREGATED) -> ProfileMatrix:
    path = Path(path)
    if path.stat().st_size == 0:
        raise EmptyFile(f"{path} is empty")
    df = pd.read_csv(path, dtype={"row_id": str}, keep_default_na=False, float_precision="round_trip")
    if "row_id" not in df.columns:
        raise MalformedRow(1, "matrix header lacks row_id")
    if len(df) == 0:
        raise EmptyFile(f"{path} has no rows")
    feats = df.drop(columns="row_id")
    try:
        values = feats.to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise MalformedRow(0, f"non-numeric feature value: {exc}") from None
    return ProfileMatrix(tuple(df["row_id"]), values, tuple(feats.columns), granularity)


def write_labels(path, row_ids: Sequence[str], labels: Sequence[int]) -> None:
    pd.DataFrame({"row_id": list(row_ids), "label": np.asarray(labels, dtype=np.int64)}).to_csv(
        path, index=False
    )


def read_labels(path) -> dict[str, int]:
    df = pd.read_csv(path, dtype={"row_id": str}, keep_default_na=False)
    if list(df.columns[:2]) != ["row_id", "label"]:
        raise MalformedRow(1, "labels header must be row_id,label")
    return dict(zip(df["row_id"], df["label"].astype(int)))


def labeled_dataset(matrix: ProfileMatrix, labels: Mapping[str, int], n_classes: int = 0) -> LabeledDataset:
    try:
        y = [labels[r] for r in matrix.row_ids]
    except KeyError as exc:
        raise MalformedRow(0, f"no label for row {exc.args[0]!r}") from None
    return LabeledDataset(matrix, np.asarray(y), n_classes)
