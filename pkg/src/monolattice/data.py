"""Schema and dataset files.

The schema is JSON: an optional label column name and one entry per feature
(kind, lattice size, calibration keypoints, bounds, monotone direction,
missing policy, categories and order pairs).  Data is CSV with a header row;
a configurable token (empty cell by default) marks missing values.

Ranking data comes in two layouts: one row per pair with per-feature column
suffixes ``+`` and ``-``, or two rows per pair sharing a pair-id column with
the label column marking the preferred row.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibrators import DataError, FeatureKind, FeatureSpec, MissingPolicy
from .monotonicity import parse_direction


# --------------------------------------------------------------------------
# schema


def load_schema(path) -> tuple[list[FeatureSpec], str | None]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"schema {path}: invalid JSON ({e})") from None
    if not isinstance(raw, dict) or "features" not in raw:
        raise DataError(f"schema {path}: expected an object with a 'features' list")
    specs = []
    for entry in raw["features"]:
        if "name" not in entry:
            raise DataError(f"schema {path}: feature entry without a name")
        kind = FeatureKind(entry.get("kind", "continuous"))
        missing = MissingPolicy(entry.get("missing", "none"))
        size = entry.get("size", 3 if missing is MissingPolicy.VERTEX else 2)
        bounds = entry.get("bounds")
        try:
            specs.append(
                FeatureSpec(
                    name=str(entry["name"]),
                    kind=kind,
                    size=int(size),
                    keypoints=int(entry.get("keypoints", 2)),
                    bounds=None if bounds is None else (float(bounds[0]), float(bounds[1])),
                    monotone=parse_direction(str(entry.get("monotone", "none"))),
                    missing=missing,
                    categories=(
                        None
                        if entry.get("categories") is None
                        else [str(c) for c in entry["categories"]]
                    ),
                    order_pairs=[(str(a), str(b)) for a, b in entry.get("order", [])],
                    allow_unseen=bool(entry.get("allow_unseen", False)),
                )
            )
        except (TypeError, ValueError) as e:
            raise DataError(f"schema {path}: feature {entry.get('name')}: {e}") from None
    if not specs:
        raise DataError(f"schema {path}: no features")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DataError(f"schema {path}: duplicate feature names")
    label = raw.get("label")
    return specs, None if label is None else str(label)


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    columns: list  # per feature: float ndarray (nan = missing) or list[str | None]
    labels: np.ndarray | None

    @property
    def num_rows(self) -> int:
        col = self.columns[0]
        return len(col)

    def row(self, i: int) -> list:
        return [col[i] for col in self.columns]


@dataclass
class PairDataset:
    plus_columns: list
    minus_columns: list

    @property
    def num_pairs(self) -> int:
        return len(self.plus_columns[0])

    def plus_row(self, i: int) -> list:
        return [col[i] for col in self.plus_columns]

    def minus_row(self, i: int) -> list:
        return [col[i] for col in self.minus_columns]

    def fit_columns(self) -> list:
        """Per feature, both sides pooled (for knot and category fitting)."""
        out = []
        for plus, minus in zip(self.plus_columns, self.minus_columns):
            if isinstance(plus, np.ndarray):
                out.append(np.concatenate([plus, minus]))
            else:
                out.append(list(plus) + list(minus))
        return out


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: {len(row)} cells, header has {len(header)}"
                )
            rows.append(row)
    return [h.strip() for h in header], rows


def _parse_column(
    spec: FeatureSpec, cells: list[str], missing_token: str, where: str
):
    if spec.kind is FeatureKind.CONTINUOUS:
        out = np.empty(len(cells))
        for i, cell in enumerate(cells):
            if cell == missing_token:
                out[i] = np.nan
            else:
                try:
                    out[i] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{where}: feature {spec.name}: {cell!r} is not a number"
                    ) from None
        return out
    return [None if cell == missing_token else cell for cell in cells]


def load_dataset(
    path,
    specs: list[FeatureSpec],
    label_column: str | None = None,
    missing_token: str = "",
    require_labels: bool = False,
) -> Dataset:
    header, rows = _read_rows(path)
    index = {name: i for i, name in enumerate(header)}
    columns = []
    for spec in specs:
        if spec.name not in index:
            raise DataError(f"{path}: no column for feature {spec.name!r}")
        cells = [r[index[spec.name]] for r in rows]
        columns.append(_parse_column(spec, cells, missing_token, str(path)))
    labels = None
    if label_column is not None and label_column in index:
        raw = [r[index[label_column]] for r in rows]
        try:
            labels = np.array([float(v) for v in raw])
        except ValueError:
            raise DataError(f"{path}: label column {label_column!r} is not numeric") from None
    if require_labels and labels is None:
        raise DataError(f"{path}: label column {label_column!r} not found")
    return Dataset(columns, labels)


def load_pair_dataset(
    path,
    specs: list[FeatureSpec],
    pair_id_column: str | None = None,
    label_column: str | None = None,
    missing_token: str = "",
) -> PairDataset:
    """Ranking pairs; column-suffix layout unless a pair-id column is given."""
    header, rows = _read_rows(path)
    index = {name: i for i, name in enumerate(header)}
    where = str(path)

    if pair_id_column is None:
        plus_cols, minus_cols = [], []
        for spec in specs:
            for suffix, cols in (("+", plus_cols), ("-", minus_cols)):
                name = spec.name + suffix
                if name not in index:
                    raise DataError(f"{path}: no column {name!r} for feature {spec.name!r}")
                cols.append(
                    _parse_column(
                        spec, [r[index[name]] for r in rows], missing_token, where
                    )
                )
        return PairDataset(plus_cols, minus_cols)

    if pair_id_column not in index:
        raise DataError(f"{path}: pair-id column {pair_id_column!r} not found")
    if label_column is None or label_column not in index:
        raise DataError(
            f"{path}: two-row pair data needs a label column marking the preferred row"
        )
    groups: dict[str, list[list[str]]] = {}
    order: list[str] = []
    for r in rows:
        key = r[index[pair_id_column]]
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    plus_rows, minus_rows = [], []
    for key in order:
        group = groups[key]
        if len(group) != 2:
            raise DataError(f"{path}: pair {key!r} has {len(group)} rows, expected 2")
        labels = [g[index[label_column]] for g in group]
        if sorted(labels) != ["0", "1"]:
            raise DataError(
                f"{path}: pair {key!r} labels {labels} must be exactly one 1 and one 0"
            )
        winner = group[0] if labels[0] == "1" else group[1]
        loser = group[1] if labels[0] == "1" else group[0]
        plus_rows.append(winner)
        minus_rows.append(loser)
    plus_cols, minus_cols = [], []
    for spec in specs:
        if spec.name not in index:
            raise DataError(f"{path}: no column for feature {spec.name!r}")
        col = index[spec.name]
        plus_cols.append(
            _parse_column(spec, [r[col] for r in plus_rows], missing_token, where)
        )
        minus_cols.append(
            _parse_column(spec, [r[col] for r in minus_rows], missing_token, where)
        )
    return PairDataset(plus_cols, minus_cols)
