"""CSV ingestion, manifests, standardization and train/test splitting."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import ManifestError, ParseError
from ..pairdata import AlignedViews, RankedView, align_views

logger = logging.getLogger(__name__)


@dataclass
class ViewSource:
    view_id: int
    csv_path: str
    key_column: str
    rank_column: str
    drop_columns: list = field(default_factory=list)


@dataclass
class DatasetManifest:
    views: list
    name: str = ""
    notes: str = ""

    def __post_init__(self):
        if len(self.views) < 2:
            raise ManifestError("a manifest needs at least 2 views")
        paths = [v.csv_path for v in self.views]
        if len(set(paths)) != len(paths):
            raise ManifestError("view csv paths must be distinct")
        for v in self.views:
            if not v.key_column or not v.rank_column:
                raise ManifestError(f"view {v.view_id}: key and rank column names must be non-empty")

    @classmethod
    def load(cls, path):
        """Read a JSON manifest; relative csv paths resolve against its folder."""
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        base = os.path.dirname(os.path.abspath(path))
        views = []
        for i, v in enumerate(raw.get("views", [])):
            try:
                csv_path = v["csv_path"]
                views.append(ViewSource(
                    int(v.get("view_id", i)),
                    csv_path if os.path.isabs(csv_path) else os.path.join(base, csv_path),
                    v["key_column"],
                    v["rank_column"],
                    list(v.get("drop_columns", [])),
                ))
            except KeyError as exc:
                raise ManifestError(f"manifest view {i} lacks field {exc}") from None
        return cls(views, raw.get("name", ""), raw.get("notes", ""))

    def dump(self, path):
        base = os.path.dirname(os.path.abspath(path))
        payload = {
            "name": self.name,
            "notes": self.notes,
            "views": [
                {
                    "view_id": v.view_id,
                    "csv_path": os.path.relpath(v.csv_path, base),
                    "key_column": v.key_column,
                    "rank_column": v.rank_column,
                    "drop_columns": v.drop_columns,
                }
                for v in self.views
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _to_number(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def read_view_csv(source):
    """Parse one view's CSV into a :class:`RankedView`.

    A column is treated as categorical and dropped when most of its
    non-empty cells are not numbers. In a retained column, a non-numeric
    cell is a parse error and an empty cell is filled with the column mean.
    """
    try:
        df = pd.read_csv(source.csv_path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"{source.csv_path}: {exc}") from None
    for col in (source.key_column, source.rank_column):
        if col not in df.columns:
            raise ManifestError(f"{source.csv_path}: missing column {col!r}")

    keys = df[source.key_column].str.strip()
    dup = keys.duplicated(keep="first")
    if dup.any():
        logger.warning("%s: dropping %d duplicate keys (first occurrence kept)",
                       source.csv_path, int(dup.sum()))
        df, keys = df[~dup], keys[~dup]

    ranks = []
    for row, cell in enumerate(df[source.rank_column]):
        value = _to_number(cell)
        if value is None or not np.isfinite(value) or value <= 0:
            raise ParseError(f"{source.csv_path}: row {row + 1}, column {source.rank_column!r}: "
                             f"invalid rank {cell!r}")
        ranks.append(value)

    skip = {source.key_column, source.rank_column, *source.drop_columns}
    features, dropped = [], []
    for col in df.columns:
        if col in skip:
            continue
        cells = df[col].str.strip()
        filled = cells[cells != ""]
        parsed = [_to_number(c) for c in filled]
        n_bad = sum(p is None for p in parsed)
        if filled.size == 0 or n_bad * 2 > filled.size:
            dropped.append(col)
            continue
        values = np.empty(len(cells))
        missing = []
        for row, cell in enumerate(cells):
            if cell == "":
                missing.append(row)
                continue
            value = _to_number(cell)
            if value is None or not np.isfinite(value):
                raise ParseError(f"{source.csv_path}: row {row + 1}, column {col!r}: "
                                 f"non-numeric value {cell!r}")
            values[row] = value
        if missing:
            mask = np.ones(len(cells), dtype=bool)
            mask[missing] = False
            values[missing] = values[mask].mean()
            logger.info("%s: column %r has %d empty cells filled with the mean",
                        source.csv_path, col, len(missing))
        features.append((col, values))
    if dropped:
        logger.info("%s: dropped categorical columns %s", source.csv_path, dropped)
    if not features:
        raise ParseError(f"{source.csv_path}: no numeric feature columns")
    X = np.column_stack([v for _, v in features])
    return RankedView(source.view_id, keys.tolist(), X, ranks, [c for c, _ in features])


def load_views(manifest):
    return [read_view_csv(v) for v in manifest.views]


def write_view_csv(view, path, key_column="key", rank_column="rank", columns=None):
    """Write a view as CSV: key first, then rank, then features."""
    columns = columns or view.columns or [f"f{j}" for j in range(view.dim)]
    df = pd.DataFrame(view.X, columns=columns)
    df.insert(0, rank_column, view.r)
    df.insert(0, key_column, view.keys)
    df.to_csv(path, index=False, float_format="%.17g")


def standardize(X, means=None, stds=None):
    """Column-wise z-score with population std; zero-variance columns become 0.

    Pass ``means``/``stds`` to apply previously fitted statistics.
    """
    X = np.asarray(X, dtype=np.float64)
    if means is None:
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        # exact test: a rounded mean of a constant column leaves a one-ulp "spread"
        const = X.max(axis=0) == X.min(axis=0)
        means = np.where(const, X[0], means)
        stds = np.where(const | (stds == 0), 1.0, stds)
    return (X - means) / stds, means, stds


def split_samples(n, test_fraction, seed):
    """Seeded split of ``range(n)`` into sorted train and test index arrays."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def standardize_aligned(aligned, stats=None):
    """Standardize every view; returns the new views and the fitted stats."""
    views, fitted = [], []
    for v, view in enumerate(aligned.views):
        if stats is None:
            X, m, s = standardize(view.X)
        else:
            X, m, s = standardize(view.X, *stats[v])
        fitted.append((m, s))
        views.append(RankedView(view.view_id, view.keys, X, view.r, view.columns))
    return AlignedViews(views, aligned.r_bar.copy()), fitted


__all__ = [
    "DatasetManifest",
    "ViewSource",
    "align_views",
    "load_views",
    "read_view_csv",
    "split_samples",
    "standardize",
    "standardize_aligned",
    "write_view_csv",
]
