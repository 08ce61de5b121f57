"""Dataset loading, min-max normalization and 3x3 feature-map assembly.

The nine indices are laid out row-major on the feature map in dataset column
order::

    hsr_km    rail_km    hsr_pass
    hsr_pkm   rail_pass  rail_pkm
    gdp       income     coaches
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import DegenerateRangeError, ParseError, ValidationError

INDEX_NAMES = (
    "hsr_km",
    "rail_km",
    "hsr_pass",
    "hsr_pkm",
    "rail_pass",
    "rail_pkm",
    "gdp",
    "income",
    "coaches",
)
TARGET = "fleet_size"
COLUMNS = ("year", TARGET) + INDEX_NAMES

# (row, col) of each index on the feature map
FEATURE_LAYOUT = {name: divmod(i, 3) for i, name in enumerate(INDEX_NAMES)}

# Fleet size actually observed in 2016; held out from training.
HOLDOUT_YEAR = 2016
HOLDOUT_FLEET_SIZE = 2586


class NormPolicy(str, Enum):
    ALL_YEARS = "all-years"
    TRAIN_YEARS = "train-years"

    @classmethod
    def parse(cls, value) -> "NormPolicy":
        if isinstance(value, cls):
            return value
        if value == "train-years-only":
            return cls.TRAIN_YEARS
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(
                f"unknown normalization policy {value!r}; "
                f"expected one of {[p.value for p in cls]}"
            ) from None


@dataclass(frozen=True)
class YearRecord:
    year: int
    indices: tuple
    fleet_size: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(float(v) for v in self.indices))
        if len(self.indices) != len(INDEX_NAMES):
            raise ValidationError(
                f"year {self.year}: expected {len(INDEX_NAMES)} indices, got {len(self.indices)}"
            )
        for name, v in zip(INDEX_NAMES, self.indices):
            if not math.isfinite(v):
                raise ValidationError(f"year {self.year}: {name} is not finite")
            if v < 0:
                raise ValidationError(f"year {self.year}: {name} is negative ({v})")
        if self.fleet_size is not None and self.fleet_size <= 0:
            raise ValidationError(f"year {self.year}: fleet_size must be positive")

    def __getitem__(self, name: str) -> float:
        return self.indices[INDEX_NAMES.index(name)]

    @property
    def has_target(self) -> bool:
        return self.fleet_size is not None


def _parse_number(text, line, column):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(v):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", line)
    return v


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # assume a binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def load_dataset(source) -> list[YearRecord]:
    """Parse a dataset CSV.

    ``source`` may be a path, raw bytes, or a text/binary file object. The header
    must equal ``COLUMNS`` exactly and rows must be sorted by strictly increasing
    year. An empty ``fleet_size`` cell means the size is unknown.
    """
    fh, owned = _open_text(source)
    try:
        rows = list(csv.reader(fh))
    finally:
        if owned:
            fh.close()

    if not rows:
        raise ParseError("empty dataset", 1)
    if tuple(c.strip() for c in rows[0]) != COLUMNS:
        raise ParseError(f"header must be {','.join(COLUMNS)!r}", 1)

    records = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(row)}", lineno)
        try:
            year = int(row[0])
        except ValueError:
            raise ParseError(f"bad year {row[0]!r}", lineno) from None
        fleet_text = row[1].strip()
        if fleet_text:
            fleet = _parse_number(fleet_text, lineno, TARGET)
            if fleet != int(fleet):
                raise ParseError(f"fleet_size must be an integer, got {fleet_text!r}", lineno)
            fleet = int(fleet)
        else:
            fleet = None
        values = tuple(_parse_number(t, lineno, c) for t, c in zip(row[2:], INDEX_NAMES))
        if year in seen:
            raise ValidationError(f"line {lineno}: duplicate year {year}")
        if records and year < records[-1].year:
            raise ValidationError(f"line {lineno}: rows not sorted by year")
        seen.add(year)
        try:
            records.append(YearRecord(year, values, fleet))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
    if not records:
        raise ParseError("dataset has a header but no rows", 2)
    return records


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def save_dataset(records: Iterable[YearRecord], sink: IO[str] | None = None) -> str:
    """Write records as CSV (LF line endings). Returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        fleet = "" if r.fleet_size is None else str(r.fleet_size)
        writer.writerow([str(r.year), fleet] + [_fmt(v) for v in r.indices])
    text = buf.getvalue()
    if sink is not None:
        sink.write(text)
    return text


def bundled_dataset_path():
    return resources.files("emufleet") / "resources" / "emu.csv"


def load_bundled_dataset() -> list[YearRecord]:
    """2007-2015 observed indices with fleet sizes, plus 2016-2020 index forecasts."""
    return load_dataset(bundled_dataset_path().read_bytes())


def training_records(records: Sequence[YearRecord]) -> list[YearRecord]:
    return [r for r in records if r.has_target]


def forecast_records(records: Sequence[YearRecord]) -> list[YearRecord]:
    return [r for r in records if not r.has_target]


@dataclass(frozen=True)
class NormalizationSpec:
    feature_min: tuple
    feature_max: tuple
    target_min: float
    target_max: float
    policy: NormPolicy = NormPolicy.TRAIN_YEARS

    def bounds(self, feature: str | int) -> tuple[float, float]:
        if feature in (TARGET, "target"):
            return self.target_min, self.target_max
        i = feature if isinstance(feature, int) else INDEX_NAMES.index(feature)
        return self.feature_min[i], self.feature_max[i]


def fit_normalization(records: Sequence[YearRecord], policy=NormPolicy.TRAIN_YEARS) -> NormalizationSpec:
    """Per-feature min/max over the policy's years; target range over years with a known fleet size.

    ``train-years`` (the default) takes feature ranges from the years with a known
    fleet size only, so later years may normalize above 1. This is the setting
    under which the bundled published checkpoint reproduces its published fitted
    values and forecasts. ``all-years`` includes the forecast years as well.
    """
    policy = NormPolicy.parse(policy)
    if len(records) < 2:
        raise ValidationError("need at least 2 records to fit normalization")
    train = training_records(records)
    pool = records if policy is NormPolicy.ALL_YEARS else train
    if len(train) < 2:
        raise ValidationError("need at least 2 records with a known fleet size")

    x = np.array([r.indices for r in pool], dtype=float)
    lo, hi = x.min(axis=0), x.max(axis=0)
    for name, a, b in zip(INDEX_NAMES, lo, hi):
        if not b > a:
            raise DegenerateRangeError(f"feature {name} is constant ({a}) over the {policy.value} range")
    t = [r.fleet_size for r in train]
    t_lo, t_hi = float(min(t)), float(max(t))
    if not t_hi > t_lo:
        raise DegenerateRangeError(f"target is constant ({t_lo})")
    return NormalizationSpec(
        tuple(float(v) for v in lo), tuple(float(v) for v in hi), t_lo, t_hi, policy
    )


def normalize(value, feature, spec: NormalizationSpec):
    lo, hi = spec.bounds(feature)
    return (value - lo) / (hi - lo)


def denormalize(value, feature, spec: NormalizationSpec):
    lo, hi = spec.bounds(feature)
    return value * (hi - lo) + lo


def assemble_feature_map(record: YearRecord, spec: NormalizationSpec) -> np.ndarray:
    """Normalized 3x3 feature map for one year."""
    if len(record.indices) != len(INDEX_NAMES):
        raise ValidationError(f"year {record.year}: missing indices")
    lo = np.asarray(spec.feature_min)
    hi = np.asarray(spec.feature_max)
    values = (np.asarray(record.indices, dtype=float) - lo) / (hi - lo)
    return values.reshape(3, 3)


def feature_vector(record: YearRecord, spec: NormalizationSpec) -> np.ndarray:
    """Normalized indices as a flat 9-vector (input of the fully connected baseline)."""
    return assemble_feature_map(record, spec).ravel()
