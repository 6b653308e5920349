"""Datasets: the biased synthetic generator, client splits, CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import multivariate_normal

from .errors import (
    CovarianceError,
    DegenerateSplitError,
    DomainError,
    EmptyClientError,
    LengthMismatchError,
    ParseError,
    UnknownCategoryError,
)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    a: np.ndarray
    client: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DomainError("features must be a 2-D matrix")
        y = np.asarray(self.y, dtype=np.int64)
        a = np.asarray(self.a, dtype=np.int64)
        if y.shape != (X.shape[0],) or a.shape != (X.shape[0],):
            raise LengthMismatchError("features, labels and groups must have equal length")
        if not np.all(np.isin(y, (0, 1))):
            raise DomainError("labels must be 0/1")
        if np.any(a < 0):
            raise DomainError("sensitive values must be non-negative integers")
        if not np.all(np.isfinite(X)):
            raise DomainError("features contain missing or infinite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        if self.client is not None:
            c = np.asarray(self.client, dtype=np.int64)
            if c.shape != y.shape:
                raise LengthMismatchError("client assignment must match the sample count")
            object.__setattr__(self, "client", c)

    def __len__(self) -> int:
        return int(self.y.size)

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def n_groups(self) -> int:
        return int(self.a.max()) + 1 if self.y.size else 0

    @property
    def n_clients(self) -> int:
        return 1 if self.client is None else int(self.client.max()) + 1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.a[idx], None if self.client is None else self.client[idx])

    def client_data(self, i: int) -> "Dataset":
        if self.client is None:
            if i != 0:
                raise DomainError("dataset has no client assignment")
            return self
        return self.subset(np.flatnonzero(self.client == i))

    def to_csv(self, path) -> None:
        cols = [f"x{j}" for j in range(self.d)] + ["y", "a"] + ([] if self.client is None else ["client"])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(cols)
            for k in range(len(self)):
                row = [repr(float(v)) for v in self.X[k]] + [int(self.y[k]), int(self.a[k])]
                if self.client is not None:
                    row.append(int(self.client[k]))
                wr.writerow(row)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 5000
    label_rate: float = 0.6
    mean0: tuple[float, ...] = (-2.0, -2.0)
    cov0: tuple[tuple[float, ...], ...] = ((10.0, 1.0), (1.0, 3.0))
    mean1: tuple[float, ...] = (2.0, 2.0)
    cov1: tuple[tuple[float, ...], ...] = ((5.0, 1.0), (1.0, 5.0))
    seed: int = 0
    sensitive_feature: bool = True  # append a as the last model input


def _check_cov(cov: np.ndarray) -> None:
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise CovarianceError("covariance must be a symmetric square matrix")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance is not positive definite") from exc


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Two Gaussian classes; the sensitive bit follows the class-density ratio.

    ``a ~ Bern(p1(x) / (p0(x) + p1(x)))`` where ``p_y`` is the class-``y``
    density, so the positive-class region is dominated by group 1.
    """
    m0, m1 = np.asarray(spec.mean0, float), np.asarray(spec.mean1, float)
    c0, c1 = np.asarray(spec.cov0, float), np.asarray(spec.cov1, float)
    _check_cov(c0)
    _check_cov(c1)
    if m0.shape != m1.shape or c0.shape != (m0.size, m0.size) or c1.shape != c0.shape:
        raise DomainError("means and covariances must agree in dimension")
    rng = np.random.default_rng(spec.seed)
    y = (rng.random(spec.n) < spec.label_rate).astype(np.int64)
    X = np.empty((spec.n, m0.size))
    n1 = int(y.sum())
    X[y == 1] = rng.multivariate_normal(m1, c1, size=n1)
    X[y == 0] = rng.multivariate_normal(m0, c0, size=spec.n - n1)
    p0 = multivariate_normal(m0, c0).pdf(X)
    p1 = multivariate_normal(m1, c1).pdf(X)
    a = (rng.random(spec.n) < p1 / (p0 + p1)).astype(np.int64)
    if spec.sensitive_feature:
        X = np.column_stack([X, a])
    return Dataset(X, y, a)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

SPLITS: dict[str, tuple[tuple[float, ...], ...]] = {
    "medium": ((0.5, 0.3, 0.2), (0.2, 0.4, 0.4)),
    "low": ((0.33, 0.33, 0.34), (0.33, 0.33, 0.34)),
    "high": ((0.7, 0.1, 0.2), (0.1, 0.8, 0.1)),
}


@dataclass(frozen=True)
class SplitSpec:
    """Row ``a`` gives the fraction of group-``a`` samples sent to each client."""

    proportions: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        P = np.asarray(self.proportions, dtype=float)
        if P.ndim != 2 or np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise DomainError("each group's proportions must be non-negative and sum to 1")

    @classmethod
    def named(cls, name: str) -> "SplitSpec":
        if name not in SPLITS:
            raise DomainError(f"unknown split {name!r}; choose from {sorted(SPLITS)}")
        return cls(SPLITS[name])

    @property
    def n_clients(self) -> int:
        return len(self.proportions[0])


def split_clients(ds: Dataset, split: SplitSpec, seed: int = 0) -> Dataset:
    """Within each group, a seeded permutation is cut at the cumulative proportions."""
    P = np.asarray(split.proportions, dtype=float)
    if P.shape[0] < ds.n_groups:
        raise DomainError("split has fewer rows than there are sensitive groups")
    rng = np.random.default_rng(seed)
    client = np.empty(len(ds), dtype=np.int64)
    for g in range(ds.n_groups):
        idx = rng.permutation(np.flatnonzero(ds.a == g))
        cuts = np.rint(np.cumsum(P[g]) * idx.size).astype(int)
        cuts[-1] = idx.size
        start = 0
        for i, stop in enumerate(cuts):
            client[idx[start:stop]] = i
            start = stop
    counts = np.bincount(client, minlength=P.shape[1])
    if np.any(counts == 0):
        raise EmptyClientError(f"client(s) {np.flatnonzero(counts == 0).tolist()} received no samples")
    return replace(ds, client=client)


def train_test_split(ds: Dataset, ratio: float = 0.7, seed: int = 0, max_draws: int = 100) -> tuple[Dataset, Dataset]:
    """Seeded shuffle and cut; redraws until both parts contain every group."""
    if not 0.0 < ratio < 1.0:
        raise DomainError("ratio must lie strictly between 0 and 1")
    n = len(ds)
    n_train = int(round(ratio * n))
    groups = np.unique(ds.a)
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        if np.array_equal(np.unique(ds.a[tr]), groups) and np.array_equal(np.unique(ds.a[te]), groups):
            return ds.subset(np.sort(tr)), ds.subset(np.sort(te))
    raise DegenerateSplitError(f"no split with every group on both sides after {max_draws} draws")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    label_col: str
    sensitive_col: str
    numeric_cols: tuple[str, ...] = ()
    categorical_cols: tuple[str, ...] = ()
    client_col: str | None = None
    positive_label: str | None = None


@dataclass
class Preprocessor:
    """Fitted column transforms; records everything needed to reproduce a matrix."""

    schema: CsvSchema
    categories: dict[str, list[str]] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    label_values: list[str] = field(default_factory=list)
    sensitive_values: list[str] = field(default_factory=list)
    client_values: list[str] = field(default_factory=list)

    def feature_names(self) -> list[str]:
        names = list(self.schema.numeric_cols)
        for col in self.schema.categorical_cols:
            names += [f"{col}={v}" for v in self.categories[col]]
        return names

    def manifest(self) -> dict:
        return {
            "features": self.feature_names(),
            "categories": self.categories,
            "means": self.means,
            "stds": self.stds,
            "label_values": self.label_values,
            "positive_label": self.label_values[1],
            "sensitive_values": self.sensitive_values,
            "client_values": self.client_values,
        }

    @classmethod
    def fit(cls, rows: list[dict[str, str]], schema: CsvSchema) -> "Preprocessor":
        pre = cls(schema)
        for col in schema.numeric_cols:
            vals = np.array([_number(r, col, k + 2) for k, r in enumerate(rows)])  # file line numbers
            pre.means[col] = float(vals.mean())
            pre.stds[col] = float(max(vals.std(), 1e-12))
        for col in schema.categorical_cols:
            pre.categories[col] = sorted({r[col] for r in rows})
        labels = sorted({r[schema.label_col] for r in rows})
        if len(labels) > 2 or (len(labels) == 2 and schema.positive_label not in (None, *labels)):
            raise ParseError("label column must be binary", column=schema.label_col)
        if schema.positive_label is not None:
            neg = [v for v in labels if v != schema.positive_label]
            labels = (neg or ["<none>"]) + [schema.positive_label]
        elif len(labels) == 1:
            labels = ["<none>", labels[0]] if labels[0] not in ("0", "false", "no") else [labels[0], "<none>"]
        pre.label_values = labels
        pre.sensitive_values = sorted({r[schema.sensitive_col] for r in rows})
        if len(pre.sensitive_values) < 2:
            raise ParseError("sensitive column needs at least two values", column=schema.sensitive_col)
        if schema.client_col is not None:
            pre.client_values = sorted({r[schema.client_col] for r in rows}, key=_natural)
        return pre

    def transform(self, rows: list[dict[str, str]], first_row: int = 2) -> Dataset:
        s = self.schema
        cols = []
        for col in s.numeric_cols:
            vals = np.array([_number(r, col, k + first_row) for k, r in enumerate(rows)])
            cols.append((vals - self.means[col]) / self.stds[col])
        for col in s.categorical_cols:
            cats = self.categories[col]
            pos = {v: j for j, v in enumerate(cats)}
            onehot = np.zeros((len(rows), len(cats)))
            for k, r in enumerate(rows):
                if r[col] not in pos:
                    raise UnknownCategoryError(f"value {r[col]!r} of column {col!r} was not seen during fitting")
                onehot[k, pos[r[col]]] = 1.0
            cols.append(onehot)
        X = np.column_stack(cols) if cols else np.zeros((len(rows), 0))
        y = np.array([self._index(self.label_values, r[s.label_col], s.label_col) for r in rows])
        a = np.array([self._index(self.sensitive_values, r[s.sensitive_col], s.sensitive_col) for r in rows])
        client = None
        if s.client_col is not None:
            client = np.array([self._index(self.client_values, r[s.client_col], s.client_col) for r in rows])
        return Dataset(X, y, a, client)

    @staticmethod
    def _index(values: list[str], v: str, col: str) -> int:
        try:
            return values.index(v)
        except ValueError:
            raise UnknownCategoryError(f"value {v!r} of column {col!r} was not seen during fitting") from None


def _natural(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def _number(row: dict[str, str], col: str, k: int) -> float:
    raw = row[col]
    try:
        val = float(raw)
    except ValueError:
        raise ParseError(f"cannot parse {raw!r} as a number", row=k, column=col) from None
    if not np.isfinite(val):
        raise ParseError("missing or non-finite value", row=k, column=col)
    return val


def read_rows(path, schema: CsvSchema) -> list[dict[str, str]]:
    needed = [schema.label_col, schema.sensitive_col, *schema.numeric_cols, *schema.categorical_cols]
    if schema.client_col:
        needed.append(schema.client_col)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in needed if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}", row=1)
        rows = []
        for k, r in enumerate(reader, start=2):
            if None in r or any(r[c] is None for c in needed):
                raise ParseError("wrong number of fields", row=k)
            for c in needed:
                if r[c].strip() == "":
                    raise ParseError("missing value", row=k, column=c)
            rows.append({c: r[c].strip() for c in needed})
    if not rows:
        raise ParseError("file has no data rows")
    return rows


def load_csv(path, schema: CsvSchema, preprocessor: Preprocessor | None = None) -> tuple[Dataset, Preprocessor]:
    """Read, one-hot encode and standardise a CSV file.

    Pass a fitted ``preprocessor`` (e.g. from the training file) to transform
    further files with the same statistics and category layout.
    """
    rows = read_rows(path, schema)
    pre = preprocessor or Preprocessor.fit(rows, schema)
    return pre.transform(rows), pre


def make_clients(ds: Dataset, n_clients: int | None = None) -> list[Dataset]:
    if ds.client is None:
        return [ds]
    I = n_clients or ds.n_clients
    parts = [ds.client_data(i) for i in range(I)]
    for i, p in enumerate(parts):
        if len(p) == 0:
            raise EmptyClientError(f"client {i} has no samples")
    return parts


def stack(parts: Sequence[Dataset]) -> Dataset:
    """Concatenate datasets, numbering clients by position."""
    return Dataset(
        np.vstack([p.X for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.a for p in parts]),
        np.concatenate([np.full(len(p), i) for i, p in enumerate(parts)]),
    )
