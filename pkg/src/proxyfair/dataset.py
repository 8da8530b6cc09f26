"""Tabular ingestion, feature encoding and group construction."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, DataError, ParseError

logger = logging.getLogger(__name__)

ADULT_COLUMNS = (
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
)
ADULT_NUMERIC = ("age", "fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week")
ADULT_CATEGORICAL = (
    "workclass",
    "education",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "native-country",
)
ADULT_LABELS = {">50K": 1, "<=50K": 0}
MISSING = "?"


@dataclass(frozen=True)
class Dataset:
    labels: np.ndarray
    raw_columns: Mapping[str, np.ndarray]
    features: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ContractError("labels must be a vector")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must contain only 0 and 1")
        object.__setattr__(self, "labels", labels.astype(np.int8))
        for col, values in self.raw_columns.items():
            if len(values) != labels.size:
                raise ContractError(f"raw column {col!r} has {len(values)} rows, expected {labels.size}")
        if self.features is not None:
            X = np.asarray(self.features, dtype=float)
            if X.ndim != 2 or X.shape[0] != labels.size:
                raise ContractError(f"features shape {X.shape} does not match {labels.size} labels")
            if not np.isfinite(X).all():
                raise DataError("features contain non-finite values")
            object.__setattr__(self, "features", X)

    @property
    def example_count(self) -> int:
        return int(self.labels.size)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.raw_columns[name]
        except KeyError:
            raise KeyError(f"column {name!r} not in dataset (have {sorted(self.raw_columns)})") from None

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(self.labels, self.raw_columns, features, self.name)


@dataclass(frozen=True)
class GroupSet:
    """Named binary membership masks over the examples of one dataset.

    ``catch_all`` names a group that collects everything not selected by a
    filtering step (see :func:`top_m_groups`); post-shift pins its shift to 0.
    """

    name: str
    masks: tuple[np.ndarray, ...]
    group_names: tuple[str, ...]
    is_partition: bool = False
    catch_all: str | None = None

    def __post_init__(self):
        masks = tuple(np.asarray(m, dtype=bool) for m in self.masks)
        names = tuple(str(n) for n in self.group_names)
        if not masks:
            raise ContractError(f"groupset {self.name!r} has no groups")
        if len(masks) != len(names):
            raise ContractError("one name per mask required")
        if len(set(names)) != len(names):
            raise ContractError(f"duplicate group names in {self.name!r}")
        n = masks[0].size
        for gname, m in zip(names, masks):
            if m.ndim != 1 or m.size != n:
                raise ContractError(f"mask {gname!r} has length {m.size}, expected {n}")
            if not m.any():
                raise ContractError(f"group {gname!r} in {self.name!r} is empty")
        if self.is_partition:
            counts = np.sum(masks, axis=0)
            if not (counts == 1).all():
                raise ContractError(f"groupset {self.name!r} is not a partition")
        if self.catch_all is not None and self.catch_all not in names:
            raise ContractError(f"catch-all group {self.catch_all!r} not among groups")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "group_names", names)

    @property
    def n_examples(self) -> int:
        return int(self.masks[0].size)

    def __len__(self):
        return len(self.masks)

    def counts(self) -> dict[str, int]:
        return {n: int(m.sum()) for n, m in zip(self.group_names, self.masks)}

    def mask(self, group: str) -> np.ndarray:
        return self.masks[self.group_names.index(group)]

    def index(self) -> np.ndarray:
        """Group index per example; only defined for partitions."""
        if not self.is_partition:
            raise ContractError(f"groupset {self.name!r} is not a partition")
        return np.argmax(np.stack(self.masks), axis=0)

    @classmethod
    def from_labels(cls, name, labels, order=None, catch_all=None) -> "GroupSet":
        labels = np.asarray(labels)
        values = list(order) if order is not None else sorted(set(labels.tolist()))
        masks, names = [], []
        for v in values:
            m = labels == v
            if m.any():
                masks.append(m)
                names.append(str(v))
        return cls(name, tuple(masks), tuple(names), is_partition=True, catch_all=catch_all)


# --- ingestion ---------------------------------------------------------------


def _read_adult_file(path: Path, report: dict):
    rows = []
    dropped = 0
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, skipinitialspace=True), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) == 1 and row[0].startswith("|"):
                # header line of the official test file
                continue
            if len(row) != len(ADULT_COLUMNS):
                raise ParseError(
                    f"expected {len(ADULT_COLUMNS)} fields, found {len(row)}", line=lineno, path=str(path)
                )
            row = [f.strip() for f in row]
            if MISSING in row:
                dropped += 1
                continue
            token = row[-1].rstrip(".")
            if token not in ADULT_LABELS:
                raise DataError(f"{path}:line {lineno}: unknown label token {row[-1]!r}")
            row[-1] = token
            rows.append((lineno, row))
    report["rows_read"] = len(rows) + dropped
    report["rows_dropped_missing"] = dropped
    report["rows_retained"] = len(rows)
    return rows


def _rows_to_dataset(rows, name) -> Dataset:
    raw = {}
    for j, col in enumerate(ADULT_COLUMNS[:-1]):
        values = [r[j] for _, r in rows]
        if col in ADULT_NUMERIC:
            try:
                raw[col] = np.array(values, dtype=float)
            except ValueError as exc:
                bad = next(ln for ln, r in rows if not _is_number(r[j]))
                raise ParseError(f"non-numeric value in column {col!r}", line=bad) from exc
        else:
            raw[col] = np.array(values, dtype=object)
    labels = np.array([ADULT_LABELS[r[-1]] for _, r in rows], dtype=np.int8)
    return Dataset(labels=labels, raw_columns=raw, name=name)


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_adult_split(path, split="train", report: dict | None = None) -> Dataset:
    """Read one Adult file; ``report`` receives that file's row counts."""
    report = {} if report is None else report
    path = Path(path)
    if not path.exists():
        raise DataError(f"{split} file not found: {path}")
    report["path"] = str(path)
    rows = _read_adult_file(path, report)
    if not rows:
        raise DataError(f"{split} file {path} has no complete rows")
    ds = _rows_to_dataset(rows, split)
    report["label_positive_count"] = int(ds.labels.sum())
    return ds


def load_adult(train_path, test_path=None, report: dict | None = None) -> tuple[Dataset, Dataset | None]:
    """Read the official UCI Adult train/test files.

    Rows containing a ``?`` marker are dropped. When ``report`` is given it is
    filled with the ingestion summary (see :func:`ingestion_report`). Without
    ``test_path`` only the training split is read and ``None`` is returned
    in its place.
    """
    report = {} if report is None else report
    report["train"] = {}
    train = load_adult_split(train_path, "train", report["train"])
    test = None
    if test_path is not None:
        report["test"] = {}
        test = load_adult_split(test_path, "test", report["test"])
    report["missing_value_rule"] = "drop rows containing '?'"
    report["categories"] = {col: sorted(set(train.column(col).tolist())) for col in ADULT_CATEGORICAL}
    return train, test


# --- encoding ----------------------------------------------------------------


@dataclass(frozen=True)
class EncodingSpec:
    excluded_columns: tuple[str, ...] = ()
    categorical_columns: tuple[str, ...] = ()
    numeric_columns: tuple[str, ...] = ()

    @classmethod
    def adult(cls, excluded=("sex", "race")) -> "EncodingSpec":
        excluded = tuple(excluded)
        return cls(
            excluded_columns=excluded,
            categorical_columns=tuple(c for c in ADULT_CATEGORICAL if c not in excluded),
            numeric_columns=tuple(c for c in ADULT_NUMERIC if c not in excluded),
        )


@dataclass(frozen=True)
class Encoder:
    """Statistics fitted on a training split; applies identically to any split."""

    numeric: tuple[tuple[str, float, float], ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]
    warnings: tuple[str, ...] = ()

    @property
    def feature_names(self) -> list[str]:
        names = [col for col, _, _ in self.numeric]
        for col, cats in self.categorical:
            names.extend(f"{col}={c}" for c in cats)
        return names

    @classmethod
    def fit(cls, data: Dataset, spec: EncodingSpec) -> "Encoder":
        overlap = set(spec.excluded_columns) & (set(spec.categorical_columns) | set(spec.numeric_columns))
        if overlap:
            raise ContractError(f"excluded columns also listed for encoding: {sorted(overlap)}")
        for col in (*spec.categorical_columns, *spec.numeric_columns):
            data.column(col)
        numeric, warnings = [], []
        for col in spec.numeric_columns:
            x = np.asarray(data.column(col), dtype=float)
            mean, std = float(x.mean()), float(x.std())
            if std == 0.0:
                warnings.append(f"numeric column {col!r} has zero variance; encoded as constant 0")
                logger.warning(warnings[-1])
            numeric.append((col, mean, std))
        categorical = [
            (col, tuple(sorted(set(map(str, data.column(col).tolist())))))
            for col in spec.categorical_columns
        ]
        return cls(tuple(numeric), tuple(categorical), tuple(warnings))

    def transform(self, data: Dataset) -> np.ndarray:
        blocks = []
        for col, mean, std in self.numeric:
            x = np.asarray(data.column(col), dtype=float)
            blocks.append(((x - mean) / std if std > 0 else np.zeros_like(x))[:, None])
        for col, cats in self.categorical:
            values = np.asarray(data.column(col)).astype(str)
            blocks.append((values[:, None] == np.array(cats)[None, :]).astype(float))
        if not blocks:
            return np.zeros((data.example_count, 0))
        return np.hstack(blocks)

    def to_json(self) -> dict:
        return {
            "numeric": [{"column": c, "mean": m, "std": s} for c, m, s in self.numeric],
            "categorical": [{"column": c, "categories": list(cats)} for c, cats in self.categorical],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, obj) -> "Encoder":
        return cls(
            tuple((d["column"], float(d["mean"]), float(d["std"])) for d in obj["numeric"]),
            tuple((d["column"], tuple(d["categories"])) for d in obj["categorical"]),
            tuple(obj.get("warnings", ())),
        )


@dataclass(frozen=True)
class Encoded:
    train: np.ndarray
    test: np.ndarray
    encoder: Encoder

    @property
    def feature_names(self):
        return self.encoder.feature_names

    @property
    def warnings(self):
        return self.encoder.warnings


def encode(train: Dataset, test: Dataset, spec: EncodingSpec) -> Encoded:
    """One-hot and z-score encode both splits using training statistics only.

    Test-only categories encode to all-zero rows in that column's block.
    """
    enc = Encoder.fit(train, spec)
    return Encoded(enc.transform(train), enc.transform(test), enc)


# --- group construction --------------------------------------------------------


def categorical_groups(data: Dataset, column: str, name: str | None = None) -> GroupSet:
    values = np.asarray(data.column(column)).astype(str)
    return GroupSet.from_labels(name or column, values)


def quantile_boundaries(values, k: int) -> np.ndarray:
    """Lower empirical ``j/k`` quantiles, ``j = 1..k-1``."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    n = v.size
    idx = [int(np.ceil(j * n / k)) - 1 for j in range(1, k)]
    return v[idx]


def quantile_groups(values, k: int, reference=None, name: str = "quantile") -> GroupSet:
    """Partition examples into ``k`` quantile buckets of ``reference`` (default: ``values``).

    A value equal to a boundary belongs to the lower bucket. Buckets that are
    empty in ``reference`` merge into their lower neighbour; a merged group is
    named after the bucket range it covers, e.g. ``q0-1of3``. When applying
    training buckets to another split, groups with no members there are
    dropped.
    """
    x = np.asarray(values, dtype=float)
    ref = x if reference is None else np.asarray(reference, dtype=float)
    bounds = quantile_boundaries(ref, k)
    ref_bucket = np.searchsorted(bounds, ref, side="left")
    bucket = np.searchsorted(bounds, x, side="left")
    merged: list[list[int]] = []
    for j in range(k):
        if (ref_bucket == j).any() or not merged:
            merged.append([j])
        else:
            merged[-1].append(j)
    masks, names = [], []
    for members in merged:
        m = np.isin(bucket, members)
        if not m.any():
            continue
        lo, hi = members[0], members[-1]
        names.append(f"q{lo}of{k}" if lo == hi else f"q{lo}-{hi}of{k}")
        masks.append(m)
    if len(merged) < k:
        logger.info("quantile_groups: %d of %d buckets survive after merging ties", len(merged), k)
    return GroupSet(name, tuple(masks), tuple(names), is_partition=True)


def top_m_groups(groups: GroupSet, m: int, min_count: int, rest_name: str = "rest") -> GroupSet:
    """Keep the ``m`` largest groups having at least ``min_count`` members.

    Everything else is merged into a catch-all group ``rest_name`` (omitted
    when empty).
    """
    if not groups.is_partition:
        raise ContractError("top_m_groups requires a partition")
    counts = groups.counts()
    eligible = [g for g in groups.group_names if counts[g] >= min_count]
    if not eligible:
        raise DataError(f"no group in {groups.name!r} has at least {min_count} members")
    eligible.sort(key=lambda g: (-counts[g], g))
    keep = eligible[:m]
    if rest_name in keep:
        raise ContractError(f"group name {rest_name!r} collides with the catch-all name")
    masks = [groups.mask(g) for g in keep]
    names = list(keep)
    rest = ~np.any(masks, axis=0)
    catch_all = None
    if rest.any():
        masks.append(rest)
        names.append(rest_name)
        catch_all = rest_name
    return GroupSet(f"{groups.name}-top{m}", tuple(masks), tuple(names), is_partition=True, catch_all=catch_all)


def ingestion_report(train: Dataset, test: Dataset | None, report: Mapping) -> dict:
    out = dict(report)
    out["train_examples"] = train.example_count
    if test is not None:
        out["test_examples"] = test.example_count
    return out

