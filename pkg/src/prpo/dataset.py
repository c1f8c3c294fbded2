"""CSV + manifest loading, validation, and seeded train/test splits.

A dataset is a plain CSV (RFC 4180, header row required) plus a JSON
manifest describing the prediction task:

    {
      "task": "classification",            // or "regression"
      "question": "Will the client subscribe?",
      "label_column": "deposit",           // or give "columns" in full
      "columns": [                         // optional explicit specs
        {"name": "age", "kind": "numeric", "role": "feature"},
        ...
      ],
      "label_values": ["yes", "no"],       // classification only
      "label_range": [0.0, 100.0],         // regression; resolved from
                                           // the train split when absent
      "answer_format_hint": "...",         // optional, appended to prompts
      "on_missing": "reject",              // or "impute"
      "impute_value": "unknown"
    }

Feature values are carried as the rendered strings the prompt will
contain; numeric labels additionally keep their parsed value for reward
arithmetic.
"""

from __future__ import annotations

import csv
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import (
    DegenerateRangeError,
    DegenerateSplitError,
    EmptyDatasetError,
    LabelParseFailureError,
    MissingColumnError,
)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
FEATURE = "feature"
LABEL = "label"

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "numeric" | "categorical"
    role: str  # "feature" | "label"

    def __post_init__(self):
        if not self.name:
            raise ValueError("column name must be nonempty")
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.role not in (FEATURE, LABEL):
            raise ValueError(f"unknown column role {self.role!r}")


@dataclass(frozen=True)
class TaskManifest:
    task: str  # "classification" | "regression"
    question: str
    label_values: tuple[str, ...] = ()
    label_range: tuple[float, float] | None = None
    answer_format_hint: str = ""
    columns: tuple[ColumnSpec, ...] = ()
    on_missing: str = "reject"  # "reject" | "impute"
    impute_value: str = "unknown"

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION:
            if not self.label_values:
                raise ValueError("classification manifest needs label_values")
            deduped = {v.strip().casefold() for v in self.label_values}
            if len(deduped) != len(self.label_values):
                raise ValueError("label_values must be distinct")
        if self.label_range is not None:
            lo, hi = self.label_range
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise DegenerateRangeError(
                    f"label_range must satisfy min < max, got {self.label_range}"
                )
        if self.on_missing not in ("reject", "impute"):
            raise ValueError(f"unknown on_missing policy {self.on_missing!r}")
        if self.columns:
            names = [c.name for c in self.columns]
            if len(set(names)) != len(names):
                raise ValueError("column names must be unique")
            labels = [c for c in self.columns if c.role == LABEL]
            if len(labels) != 1:
                raise ValueError("exactly one column must have role=label")

    @property
    def label_column(self) -> str:
        for c in self.columns:
            if c.role == LABEL:
                return c.name
        raise ValueError("manifest has no resolved columns yet")

    @property
    def feature_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.role == FEATURE)


@dataclass(frozen=True)
class TabularExample:
    """One table row: ordered (name, value) pairs plus its label."""

    features: tuple[tuple[str, str], ...]
    label: str
    label_numeric: float | None = None

    @property
    def n_features(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[TabularExample, ...]
    test: tuple[TabularExample, ...]
    seed: int
    stratified: bool = False
    warning: str | None = None


def render_number(x: float) -> str:
    """Shortest round-trip decimal rendering; integral values drop the .0."""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _parse_number(text: str) -> float | None:
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _read_manifest(manifest_path: str | Path) -> tuple[TaskManifest, str | None]:
    """Parse a manifest JSON file; column kinds may be deferred to the CSV."""
    raw = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    columns: list[ColumnSpec] = []
    if "columns" in raw:
        for item in raw["columns"]:
            columns.append(ColumnSpec(item["name"], item["kind"], item["role"]))
    elif "label_column" in raw:
        # kinds and the feature set are inferred against the CSV header later
        columns = []
    else:
        raise ValueError("manifest needs either 'columns' or 'label_column'")
    label_range = raw.get("label_range")
    return TaskManifest(
        task=raw["task"],
        question=raw["question"],
        label_values=tuple(raw.get("label_values", ())),
        label_range=tuple(label_range) if label_range is not None else None,
        answer_format_hint=raw.get("answer_format_hint", ""),
        columns=tuple(columns),
        on_missing=raw.get("on_missing", "reject"),
        impute_value=str(raw.get("impute_value", "unknown")),
    ), raw.get("label_column")


def _infer_kind(values: list[str]) -> str:
    non_missing = [v for v in values if v != ""]
    if non_missing and all(_parse_number(v) is not None for v in non_missing):
        return NUMERIC
    return CATEGORICAL


def _resolve_columns(
    manifest: TaskManifest,
    label_column: str | None,
    header: list[str],
    rows: list[list[str]],
) -> TaskManifest:
    if manifest.columns:
        for spec in manifest.columns:
            if spec.name not in header:
                raise MissingColumnError(f"manifest column {spec.name!r} not in CSV header")
        return manifest
    if label_column is None or label_column not in header:
        raise MissingColumnError(f"label column {label_column!r} not in CSV header")
    specs = []
    for i, name in enumerate(header):
        kind = _infer_kind([r[i] for r in rows])
        role = LABEL if name == label_column else FEATURE
        specs.append(ColumnSpec(name, kind, role))
    return replace(manifest, columns=tuple(specs))


def load_dataset(
    csv_path: str | Path, manifest_path: str | Path
) -> tuple[list[TabularExample], TaskManifest]:
    """Load a CSV against its manifest, returning examples in row order.

    Rows with missing cells are rejected or constant-imputed per the
    manifest's on_missing policy. Numeric cells are re-rendered in the
    shortest round-trip decimal form so prompts are platform-stable.
    """
    manifest, label_column = _read_manifest(manifest_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{csv_path} has no header row")
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyDatasetError(f"{csv_path} has a header but no data rows")

    manifest = _resolve_columns(manifest, label_column, header, rows)
    col_index = {name: i for i, name in enumerate(header)}
    feature_specs = manifest.feature_columns
    label_idx = col_index[manifest.label_column]

    examples: list[TabularExample] = []
    for row_no, row in enumerate(rows):
        if len(row) != len(header):
            raise MissingColumnError(
                f"row {row_no} has {len(row)} cells, header has {len(header)}"
            )
        features: list[tuple[str, str]] = []
        drop = False
        for spec in feature_specs:
            cell = row[col_index[spec.name]].strip()
            if spec.kind == NUMERIC:
                number = _parse_number(cell) if cell else None
                if number is None:
                    if manifest.on_missing == "impute":
                        features.append((spec.name, manifest.impute_value))
                        continue
                    drop = True
                    break
                features.append((spec.name, render_number(number)))
            else:
                if cell == "":
                    if manifest.on_missing == "impute":
                        features.append((spec.name, manifest.impute_value))
                        continue
                    drop = True
                    break
                features.append((spec.name, cell))
        if drop:
            continue

        raw_label = row[label_idx].strip()
        if manifest.task == CLASSIFICATION:
            canonical = _match_label(raw_label, manifest.label_values)
            if canonical is None:
                raise LabelParseFailureError(
                    row_no, f"label {raw_label!r} not in {list(manifest.label_values)}"
                )
            examples.append(TabularExample(tuple(features), canonical))
        else:
            number = _parse_number(raw_label)
            if number is None:
                raise LabelParseFailureError(row_no, f"label {raw_label!r} is not a number")
            examples.append(
                TabularExample(tuple(features), render_number(number), label_numeric=number)
            )

    if not examples:
        raise EmptyDatasetError(f"{csv_path}: every row was rejected")
    return examples, manifest


def _match_label(raw: str, label_values: tuple[str, ...]) -> str | None:
    folded = raw.strip().casefold()
    for value in label_values:
        if value.strip().casefold() == folded:
            return value
    return None


def resolve_label_range(
    manifest: TaskManifest, train: list[TabularExample] | tuple[TabularExample, ...]
) -> TaskManifest:
    """Fill a regression manifest's label_range from the train split if absent."""
    if manifest.task != REGRESSION or manifest.label_range is not None:
        return manifest
    values = [ex.label_numeric for ex in train if ex.label_numeric is not None]
    if not values:
        raise DegenerateRangeError("no numeric labels to resolve label_range from")
    lo, hi = min(values), max(values)
    if not lo < hi:
        raise DegenerateRangeError(f"train labels are constant ({lo}); range is degenerate")
    return replace(manifest, label_range=(lo, hi))


def split(
    dataset: list[TabularExample] | tuple[TabularExample, ...],
    test_fraction: float,
    seed: int,
    stratify: bool = True,
) -> DatasetSplit:
    """Seeded train/test split, stratified by label when feasible.

    Stratification requires every label class to appear at least twice;
    otherwise the split falls back to a plain shuffle and the result
    carries a warning.
    """
    if not dataset:
        raise DegenerateSplitError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")

    n = len(dataset)
    rng = random.Random(seed)
    warning = None

    if stratify:
        counts = Counter(ex.label for ex in dataset)
        if len(counts) < 2 or min(counts.values()) < 2:
            stratify = False
            warning = (
                "stratification requested but needs >= 2 classes with >= 2 rows each; "
                "split unstratified"
            )

    if stratify:
        by_label: dict[str, list[int]] = {}
        for i, ex in enumerate(dataset):
            by_label.setdefault(ex.label, []).append(i)
        test_idx: list[int] = []
        for label in sorted(by_label):
            members = by_label[label][:]
            rng.shuffle(members)
            take = round(test_fraction * len(members))
            test_idx.extend(members[:take])
    else:
        order = list(range(n))
        rng.shuffle(order)
        test_idx = order[: round(test_fraction * n)]

    test_set = set(test_idx)
    if not test_set or len(test_set) == n:
        raise DegenerateSplitError(
            f"test_fraction={test_fraction} on {n} rows leaves one side empty"
        )
    train = tuple(ex for i, ex in enumerate(dataset) if i not in test_set)
    test = tuple(ex for i, ex in enumerate(dataset) if i in test_set)
    return DatasetSplit(train=train, test=test, seed=seed, stratified=stratify, warning=warning)
