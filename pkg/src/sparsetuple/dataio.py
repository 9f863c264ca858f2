"""Dataset parsing, serialization, and deterministic k-fold splitting.

Two text formats are understood: sparse svmlight-style lines
(``<label> <index>:<value> ...`` with 1-based strictly increasing indices
and ``#`` comments) and CSV with a header containing a ``label`` column.
Features are stored dense; the sparse format is an input convention, not a
storage contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import as_label_array

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "FoldPlan",
    "parse_svmlight",
    "serialize_svmlight",
    "parse_csv",
    "kfold_split",
]

_LABEL_TOKENS = {"+1": 1, "1": 1, "-1": -1}


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class Dataset:
    """A tuple of n points: an n-by-d feature matrix plus +1/-1 labels."""

    features: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError("features must be a matrix with n >= 1 rows and d >= 1 columns")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        labels = as_label_array(self.labels)
        if labels.size != feats.shape[0]:
            raise ValueError(
                f"length mismatch: {feats.shape[0]} feature rows vs {labels.size} labels"
            )
        if self.ids is not None and len(self.ids) != feats.shape[0]:
            raise ValueError("ids, when given, must have one entry per point")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _decode(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    return str(data)


def _parse_label(token: str, line_no: int) -> int:
    try:
        return _LABEL_TOKENS[token]
    except KeyError:
        raise DatasetFormatError(f"label {token!r} not in {{+1, -1}}", line_no) from None


def parse_svmlight(data) -> Dataset:
    """Parse svmlight-style text into a dense Dataset."""
    text = _decode(data)
    rows: list[list[tuple[int, float]]] = []
    labels: list[int] = []
    max_index = 0
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], line_no))
        entries: list[tuple[int, float]] = []
        previous = 0
        for token in tokens[1:]:
            index_str, sep, value_str = token.partition(":")
            if not sep or not index_str or not value_str:
                raise DatasetFormatError(f"malformed feature entry {token!r}", line_no)
            try:
                index = int(index_str)
            except ValueError:
                raise DatasetFormatError(f"malformed feature index in {token!r}", line_no) from None
            if index < 1:
                raise DatasetFormatError(f"feature index {index} must be >= 1", line_no)
            if index <= previous:
                raise DatasetFormatError(
                    f"feature indices not strictly increasing at {token!r}", line_no
                )
            try:
                value = float(value_str)
            except ValueError:
                raise DatasetFormatError(f"malformed feature value in {token!r}", line_no) from None
            if not np.isfinite(value):
                raise DatasetFormatError(f"non-finite feature value in {token!r}", line_no)
            entries.append((index, value))
            previous = index
        max_index = max(max_index, previous)
        rows.append(entries)
    if not rows:
        raise DatasetFormatError("empty dataset")
    if max_index == 0:
        raise DatasetFormatError("no feature indices seen; d must be >= 1")
    features = np.zeros((len(rows), max_index), dtype=np.float64)
    for i, entries in enumerate(rows):
        for index, value in entries:
            features[i, index - 1] = value
    return Dataset(features, np.array(labels, dtype=np.int64))


def serialize_svmlight(dataset: Dataset) -> str:
    """Render a Dataset back to svmlight text.

    Nonzero entries only, except that the feature dimension is pinned by an
    explicit ``d:0.0`` entry on the first line whenever column d is zero
    everywhere, so parse(serialize(ds)) reproduces the exact matrix shape.
    """
    lines = []
    entry_lists = []
    max_nonzero = 0
    for i in range(dataset.n):
        row = dataset.features[i]
        nz = np.flatnonzero(row != 0.0)
        entry_lists.append([(int(j) + 1, float(row[j])) for j in nz])
        if nz.size:
            max_nonzero = max(max_nonzero, int(nz[-1]) + 1)
    if max_nonzero < dataset.d:
        entry_lists[0].append((dataset.d, 0.0))
    for i, entries in enumerate(entry_lists):
        label = "+1" if dataset.labels[i] == 1 else "-1"
        parts = [label] + [f"{index}:{value!r}" for index, value in entries]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_csv(data) -> Dataset:
    """Parse header-first CSV with a ``label`` column into a Dataset."""
    import csv
    import io

    text = _decode(data)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetFormatError("empty dataset") from None
    header = [name.strip() for name in header]
    if "label" not in header:
        raise DatasetFormatError("missing required column 'label'", 1)
    label_col = header.index("label")
    feature_cols = [i for i in range(len(header)) if i != label_col]
    if not feature_cols:
        raise DatasetFormatError("no feature columns besides 'label'", 1)
    labels: list[int] = []
    rows: list[list[float]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DatasetFormatError(
                f"expected {len(header)} cells, found {len(row)}", line_no
            )
        labels.append(_parse_label(row[label_col].strip(), line_no))
        values = []
        for col in feature_cols:
            cell = row[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DatasetFormatError(
                    f"non-numeric feature cell {cell!r} in column {header[col]!r}", line_no
                ) from None
            if not np.isfinite(value):
                raise DatasetFormatError(
                    f"non-finite feature cell in column {header[col]!r}", line_no
                )
            values.append(value)
        rows.append(values)
    if not rows:
        raise DatasetFormatError("empty dataset")
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64))


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of each point index to one of k folds."""

    k: int
    assignments: np.ndarray

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64)
        if assignments.ndim != 1:
            raise ValueError("assignments must be 1-D")
        if np.any(assignments < 0) or np.any(assignments >= self.k):
            raise ValueError("fold assignments out of range")
        object.__setattr__(self, "assignments", assignments)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def kfold_split(n: int, k: int, seed: int, stratified: bool = False, labels=None) -> FoldPlan:
    """Deterministic k-fold partition of n points.

    Plain mode deals a seeded shuffle round-robin, so fold sizes differ by
    at most one.  Stratified mode deals each class in turn with a continuing
    fold cursor, balancing both total fold sizes and per-class counts to
    within one.  Identical (n, k, seed, stratified, labels) always produce
    an identical plan.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    if stratified:
        if labels is None:
            raise ValueError("stratified splitting requires labels")
        y = as_label_array(labels)
        if y.size != n:
            raise ValueError(f"length mismatch: n={n} vs {y.size} labels")
        cursor = 0
        for cls in (1, -1):
            members = np.flatnonzero(y == cls)
            perm = rng.permutation(members)
            for offset, index in enumerate(perm):
                assignments[index] = (cursor + offset) % k
            cursor += members.size
    else:
        perm = rng.permutation(n)
        for position, index in enumerate(perm):
            assignments[index] = position % k
    return FoldPlan(k, assignments)
