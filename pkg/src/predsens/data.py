"""CSV ingestion and encoding into a numeric design matrix.

The encoded matrix is laid out group by group in raw column order. Each
group is one of:

* ``continuous``: one column, standardized with mean/std from the table the
  schema was fitted on (population std, so the fitted column has std 1);
* ``binary``: one 0/1 column. ``categories[1]`` is the label encoded as 1. For
  the protected group this is always the privileged value;
* ``onehot``: one column per category, in ``categories`` order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
ONEHOT = "onehot"

SCHEMA_VERSION = 1

ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
)
ADULT_CONTINUOUS = ("age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week")


@dataclass(frozen=True)
class TableFormat:
    """How to read a delimited file into a raw table."""

    columns: tuple[str, ...] | None = ADULT_COLUMNS  # None: take names from a header row
    label_column: str = "income"
    header: bool = False
    missing_marker: str = "?"
    comment_prefix: str | None = "|"
    delimiter: str = ","
    # Columns forced continuous; every other attribute is categorical.
    # None means auto-detect: a column is continuous if every value parses as float.
    continuous: tuple[str, ...] | None = ADULT_CONTINUOUS
    label_suffix_strip: str = "."  # the official Adult test file writes ">50K."

    def normalize_label(self, value: str) -> str:
        if self.label_suffix_strip and value.endswith(self.label_suffix_strip):
            return value[: -len(self.label_suffix_strip)]
        return value


ADULT = TableFormat()


@dataclass
class RawTable:
    columns: list[str]
    rows: list[list[str]]
    line_numbers: list[int]  # 1-based source line of each kept row
    dropped: int = 0
    label_column: str | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}; have {self.columns}") from None
        return [r[j] for r in self.rows]


def load_csv(path, fmt: TableFormat = ADULT, *, require_label: bool = True) -> RawTable:
    """Read ``path``, trimming cells and dropping rows that contain the missing marker.

    With ``require_label=False`` rows may omit a trailing label column.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return parse_csv_lines(text.splitlines(), fmt, source=str(path), require_label=require_label)


def parse_csv_lines(lines, fmt: TableFormat = ADULT, *, source: str = "<input>",
                    require_label: bool = True) -> RawTable:
    columns = list(fmt.columns) if fmt.columns is not None else None
    rows: list[list[str]] = []
    line_numbers: list[int] = []
    dropped = 0
    reader = csv.reader(lines, delimiter=fmt.delimiter, skipinitialspace=True)
    for lineno, cells in enumerate(reader, start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if fmt.comment_prefix and cells[0].lstrip().startswith(fmt.comment_prefix):
            continue
        cells = [c.strip() for c in cells]
        if columns is None:
            if not fmt.header:
                raise DataError("format has neither column names nor a header row")
            columns = cells
            continue
        if len(cells) != len(columns):
            label_optional = not require_label and columns[-1] == fmt.label_column
            if not (label_optional and len(cells) == len(columns) - 1):
                raise DataError(f"{source}: line {lineno}: expected {len(columns)} fields, got {len(cells)}")
        if fmt.missing_marker and fmt.missing_marker in cells:
            dropped += 1
            continue
        rows.append(cells)
        line_numbers.append(lineno)
    if not rows:
        raise DataError(f"{source}: no data rows")
    log.info("%s: %d rows kept, %d dropped for missing values", source, len(rows), dropped)
    label = fmt.label_column if fmt.label_column in columns else None
    return RawTable(columns, rows, line_numbers, dropped, label)


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    kind: str
    start: int
    end: int
    categories: tuple[str, ...] | None = None
    mean: float | None = None
    std: float | None = None

    @property
    def width(self) -> int:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {
            "name": self.name, "kind": self.kind, "start": self.start, "end": self.end,
            "categories": list(self.categories) if self.categories is not None else None,
            "mean": self.mean, "std": self.std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureGroup:
        cats = d.get("categories")
        return cls(d["name"], d["kind"], int(d["start"]), int(d["end"]),
                   tuple(cats) if cats is not None else None, d.get("mean"), d.get("std"))


@dataclass(frozen=True)
class FeatureSchema:
    groups: tuple[FeatureGroup, ...]
    protected: str
    privileged_value: str
    label_column: str
    label_positive: str

    def __post_init__(self):
        pos = 0
        for g in self.groups:
            if g.start != pos or g.end <= g.start:
                raise DataError(f"group {g.name!r} span [{g.start}, {g.end}) is not contiguous at {pos}")
            if g.kind == ONEHOT and g.width != len(g.categories):
                raise DataError(f"one-hot group {g.name!r} width {g.width} != {len(g.categories)} categories")
            if g.kind in (BINARY, CONTINUOUS) and g.width != 1:
                raise DataError(f"group {g.name!r} of kind {g.kind} must have width 1")
            pos = g.end
        prot = self.group(self.protected)
        if prot.kind == CONTINUOUS or self.privileged_value not in prot.categories:
            raise DataError(f"privileged value {self.privileged_value!r} is not a category of {self.protected!r}")

    @property
    def width(self) -> int:
        return self.groups[-1].end if self.groups else 0

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    def group(self, name: str) -> FeatureGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise DataError(f"unknown feature group {name!r}")

    def privileged_mask(self, features: np.ndarray) -> np.ndarray:
        """Boolean privileged-group membership for each encoded row."""
        g = self.group(self.protected)
        features = np.atleast_2d(features)
        if g.kind == BINARY:
            return features[:, g.start] == 1.0
        return features[:, g.start + g.categories.index(self.privileged_value)] == 1.0

    def decode(self, name: str, row: np.ndarray) -> str | float:
        """Recover the raw value of group ``name`` from one encoded row."""
        g = self.group(name)
        cells = np.asarray(row)[g.start:g.end]
        if g.kind == CONTINUOUS:
            return float(cells[0]) * g.std + g.mean
        if g.kind == BINARY:
            return g.categories[int(cells[0])]
        return g.categories[int(np.argmax(cells))]

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "groups": [g.to_dict() for g in self.groups],
            "protected": self.protected,
            "privileged_value": self.privileged_value,
            "label_column": self.label_column,
            "label_positive": self.label_positive,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSchema:
        if d.get("version") != SCHEMA_VERSION:
            raise DataError(f"unsupported schema version {d.get('version')!r}")
        return cls(tuple(FeatureGroup.from_dict(g) for g in d["groups"]), d["protected"],
                   d["privileged_value"], d["label_column"], d["label_positive"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> FeatureSchema:
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


@dataclass
class EncodedDataset:
    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int8 in {0, 1}; all zeros if the source had no labels
    schema: FeatureSchema
    has_labels: bool = True
    source_lines: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> EncodedDataset:
        idx = np.asarray(idx)
        lines = [self.source_lines[i] for i in idx] if self.source_lines else []
        return EncodedDataset(self.features[idx], self.labels[idx], self.schema, self.has_labels, lines)

    @property
    def privileged(self) -> np.ndarray:
        return self.schema.privileged_mask(self.features)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def fit_schema(table: RawTable, protected: str, privileged_value: str, label_positive: str = ">50K",
               fmt: TableFormat = ADULT) -> FeatureSchema:
    """Derive vocabularies and standardization statistics from ``table`` alone."""
    if protected not in table.columns or protected == table.label_column:
        raise DataError(f"protected attribute {protected!r} is not a feature column")
    groups = []
    pos = 0
    for j, name in enumerate(table.columns):
        if name == table.label_column:
            continue
        values = [r[j] for r in table.rows]
        if fmt.continuous is not None:
            continuous = name in fmt.continuous
        else:
            continuous = name != protected and all(_is_float(v) for v in values)
        if continuous:
            try:
                col = np.array([float(v) for v in values])
            except ValueError as exc:
                raise DataError(f"column {name!r}: non-numeric value in continuous column ({exc})") from None
            mean, std = float(col.mean()), float(col.std())
            if not std > 0.0:
                raise DataError(f"column {name!r} is constant (std 0); cannot standardize")
            groups.append(FeatureGroup(name, CONTINUOUS, pos, pos + 1, None, mean, std))
            pos += 1
            continue
        cats = sorted(set(values))
        if name == protected:
            if privileged_value not in cats:
                raise DataError(f"privileged value {privileged_value!r} does not occur in column {name!r}")
            if len(cats) == 2:
                cats = [c for c in cats if c != privileged_value] + [privileged_value]
        if len(cats) == 1:
            log.warning("column %r has a single category %r", name, cats[0])
        if len(cats) <= 2:
            groups.append(FeatureGroup(name, BINARY, pos, pos + 1, tuple(cats)))
            pos += 1
        else:
            groups.append(FeatureGroup(name, ONEHOT, pos, pos + len(cats), tuple(cats)))
            pos += len(cats)
    label_col = table.label_column or fmt.label_column
    return FeatureSchema(tuple(groups), protected, privileged_value, label_col, label_positive)


def encode(table: RawTable, schema: FeatureSchema, fmt: TableFormat = ADULT) -> EncodedDataset:
    n = len(table)
    X = np.zeros((n, schema.width), dtype=np.float64)
    index = {name: j for j, name in enumerate(table.columns)}
    for g in schema.groups:
        if g.name not in index:
            raise DataError(f"table has no column {g.name!r} required by the schema")
        j = index[g.name]
        if g.kind == CONTINUOUS:
            try:
                col = np.array([float(r[j]) for r in table.rows])
            except ValueError as exc:
                raise DataError(f"column {g.name!r}: {exc}") from None
            X[:, g.start] = (col - g.mean) / g.std
            continue
        lookup = {c: k for k, c in enumerate(g.categories)}
        for i, r in enumerate(table.rows):
            k = lookup.get(r[j])
            if k is None:
                raise DataError(f"column {g.name!r}: value {r[j]!r} at line {table.line_numbers[i]} "
                                f"is not in the fitted vocabulary")
            if g.kind == BINARY:
                X[i, g.start] = float(k)
            else:
                X[i, g.start + k] = 1.0
    has_labels = False
    y = np.zeros(n, dtype=np.int8)
    if schema.label_column in index:
        j = index[schema.label_column]
        labelled = [len(r) > j for r in table.rows]
        if all(labelled):
            has_labels = True
            y = np.array([fmt.normalize_label(r[j]) == schema.label_positive for r in table.rows], dtype=np.int8)
    return EncodedDataset(X, y, schema, has_labels, list(table.line_numbers))


def split(dataset: EncodedDataset, fraction: float, seed: int) -> tuple[EncodedDataset, EncodedDataset]:
    """Shuffle and cut; the first part has ceil(N * fraction) rows."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    n_train = math.ceil(n * fraction)
    if n_train == 0 or n_train == n:
        raise DataError(f"split of {n} rows at fraction {fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))
