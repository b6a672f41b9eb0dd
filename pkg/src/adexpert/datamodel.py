"""Labeled datasets: CSV ingestion, label partitioning, splitting, and a
synthetic cohort generator."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from adexpert.mlcore.rng import keyed_rng


class DataError(ValueError):
    """Raised when input data violates a documented format or invariant."""


class Label(IntEnum):
    CN = 0
    SMC = 1
    MCI = 2

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DataError(f"unknown label {text!r}; expected one of CN, SMC, MCI") from None


N_CLASSES = len(Label)

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_number(token: str) -> float:
    """Parse a plain decimal literal. NaN/Inf spellings and thousands
    separators are rejected."""
    token = token.strip()
    if not _NUMBER.match(token):
        raise ValueError(f"not a decimal number: {token!r}")
    value = float(token)
    if not np.isfinite(value):
        raise ValueError(f"non-finite value: {token!r}")
    return value


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.feature_names))
        y = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        names = tuple(self.feature_names)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[1] != len(names):
            raise DataError(f"{X.shape[1]} feature columns but {len(names)} names")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise DataError("feature values must be finite")
        if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
            raise DataError("labels must be encoded as CN=0, SMC=1, MCI=2")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def label_list(self) -> list[Label]:
        return [Label(int(v)) for v in self.labels]

    def class_counts(self) -> dict[Label, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in Label if np.any(self.labels == lab)}

    def subset(self, index: Sequence[int] | np.ndarray) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index], self.feature_names)

    def select_columns(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return Dataset(
            self.features[:, columns],
            self.labels,
            tuple(self.feature_names[c] for c in columns),
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.feature_names != self.feature_names:
            raise DataError("feature schemas differ")
        return Dataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            self.feature_names,
        )


def load_dataset_csv(path: str | Path, label_column: str = "label") -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_pos = header.index(label_column)
        names = [h for i, h in enumerate(header) if i != label_pos]
        rows, labels = [], []
        for row_no, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(cells)} cells, expected {len(header)}")
            try:
                labels.append(Label.parse(cells[label_pos]))
            except DataError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from None
            values = []
            for i, cell in enumerate(cells):
                if i == label_pos:
                    continue
                try:
                    values.append(parse_number(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {header[i]!r}: cannot parse {cell!r} as a number"
                    ) from None
            rows.append(values)
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return Dataset(X, np.array(labels, dtype=np.int64), tuple(names))


def write_dataset_csv(ds: Dataset, path: str | Path, label_column: str = "label") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.feature_names, label_column])
        for row, lab in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [Label(int(lab)).name])


def split_by_labels(ds: Dataset) -> dict[Label, Dataset]:
    out = {}
    for lab in Label:
        idx = np.flatnonzero(ds.labels == lab)
        if idx.size:
            out[lab] = ds.subset(idx)
    return out


def split_indices(
    labels: np.ndarray,
    test_fraction: float,
    seed: int,
    stratified: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train, test) index arrays."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 2:
        raise DataError("need at least 2 samples to split")
    test = []
    if stratified:
        for lab in np.unique(labels):
            idx = np.flatnonzero(labels == lab)
            if idx.size < 2:
                raise DataError(
                    f"class {Label(int(lab)).name} has {idx.size} sample(s); stratified split needs at least 2"
                )
            n_test = min(max(int(np.floor(test_fraction * idx.size + 0.5)), 1), idx.size - 1)
            perm = keyed_rng(seed, 0x5717, int(lab)).permutation(idx)
            test.append(perm[:n_test])
    else:
        n_test = min(max(int(np.floor(test_fraction * n + 0.5)), 1), n - 1)
        test.append(keyed_rng(seed, 0x5717).permutation(n)[:n_test])
    test_idx = np.sort(np.concatenate(test))
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx


def train_test_split(
    ds: Dataset,
    test_fraction: float = 0.25,
    seed: int = 0,
    stratified: bool = True,
) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds.labels, test_fraction, seed, stratified)
    return ds.subset(train_idx), ds.subset(test_idx)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the Gaussian stand-in cohort.

    Informative feature ``j`` (the first ``n_informative`` columns) shifts the
    mean of class ``j % 3`` by ``class_separation`` noise standard deviations;
    every other class keeps mean 0 on that feature.
    """

    class_counts: Mapping[Label, int]
    n_features: int
    n_informative: int
    class_separation: float
    seed: int = 0
    feature_prefix: str = field(default="f", compare=False)

    def __post_init__(self):
        counts = {Label.parse(k) if isinstance(k, str) else Label(k): int(v) for k, v in dict(self.class_counts).items()}
        object.__setattr__(self, "class_counts", dict(sorted(counts.items())))
        if not counts:
            raise DataError("class_counts must name at least one class")
        for lab, c in counts.items():
            if c <= 0:
                raise DataError(f"class {lab.name} count must be > 0, got {c}")
        if self.n_features <= 0:
            raise DataError("n_features must be > 0")
        if not 0 <= self.n_informative <= self.n_features:
            raise DataError("n_informative must be within [0, n_features]")
        if not self.class_separation >= 0:
            raise DataError("class_separation must be >= 0")
        if self.seed < 0:
            raise DataError("seed must be unsigned")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SyntheticSpec":
        required = {"class_counts", "n_features", "n_informative", "class_separation", "seed"}
        missing = required - set(doc)
        if missing:
            raise DataError(f"synthetic spec missing fields: {sorted(missing)}")
        unknown = set(doc) - required
        if unknown:
            raise DataError(f"synthetic spec has unknown fields: {sorted(unknown)}")
        return cls(
            class_counts=doc["class_counts"],
            n_features=int(doc["n_features"]),
            n_informative=int(doc["n_informative"]),
            class_separation=float(doc["class_separation"]),
            seed=int(doc["seed"]),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "class_counts": {lab.name: c for lab, c in self.class_counts.items()},
            "n_features": self.n_features,
            "n_informative": self.n_informative,
            "class_separation": self.class_separation,
            "seed": self.seed,
        }

    def class_means(self) -> np.ndarray:
        """(3, n_features) matrix of class-conditional means."""
        means = np.zeros((N_CLASSES, self.n_features))
        for j in range(self.n_informative):
            means[j % N_CLASSES, j] = self.class_separation
        return means


ADNI_COUNTS = {Label.CN: 259, Label.SMC: 231, Label.MCI: 71}


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    labels = np.concatenate([np.full(c, int(lab)) for lab, c in spec.class_counts.items()])
    labels = rng.permutation(labels)
    X = rng.standard_normal((labels.size, spec.n_features))
    X += spec.class_means()[labels]
    width = max(3, len(str(spec.n_features - 1)))
    names = tuple(f"{spec.feature_prefix}{j:0{width}d}" for j in range(spec.n_features))
    return Dataset(X, labels, names)
