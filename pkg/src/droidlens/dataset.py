"""Feature datasets: assembly, CSV persistence, labeling, synthesis.

A Dataset ties together row ids, an n by d feature matrix, and binary
labels (0 benign, 1 malware).  The on-disk CSV format is fixed at 256
opcode columns; in memory any width is allowed so that small synthetic
problems can exercise the learners.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import DatasetError, NoVerdictsError
from .rng import derive_rng

N_OPCODE_FEATURES = 256
CSV_HEADER = ["id", "label"] + [f"op_{i:02x}" for i in range(N_OPCODE_FEATURES)]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable rows of (id, feature vector, label).

    Feature values are float64.  Raw ingest produces non-negative
    counts; oversampling keeps them non-negative but fractional.  The
    matrix itself accepts any finite reals so derived fixtures (for
    example standardized or signed toy problems) can reuse the type.
    """

    ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        if len(ids) != n or labels.shape != (n,):
            raise DatasetError(
                f"length mismatch: {len(ids)} ids, {n} feature rows, "
                f"{labels.shape[0] if labels.ndim == 1 else 'non-vector'} labels"
            )
        if n and not np.isfinite(features).all():
            raise DatasetError("features contain NaN or infinity")
        bad = set(np.unique(labels)) - {0, 1}
        if bad:
            raise DatasetError(f"labels outside {{0, 1}}: {sorted(bad)}")
        features = features.copy()
        labels = labels.copy()
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def equals(self, other: "Dataset") -> bool:
        return (
            self.ids == other.ids
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            ids=tuple(self.ids[i] for i in idx),
            features=self.features[idx],
            labels=self.labels[idx],
        )


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise DatasetError("cannot concatenate zero datasets")
    dims = {p.dim for p in parts}
    if len(dims) > 1:
        raise DatasetError(f"feature widths differ: {sorted(dims)}")
    return Dataset(
        ids=tuple(i for p in parts for i in p.ids),
        features=np.vstack([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
    )


def _format_cell(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_dataset(ds: Dataset, path) -> None:
    """Write `id,label,op_00,...,op_ff` CSV (258 columns).

    Integer-valued features are printed as integers; fractional values
    use repr, which round-trips float64 exactly.
    """
    if ds.n and ds.dim != N_OPCODE_FEATURES:
        raise DatasetError(
            f"CSV format holds {N_OPCODE_FEATURES} feature columns, dataset has {ds.dim}"
        )
    if ds.n and ds.features.min() < 0:
        raise DatasetError("negative feature values cannot be persisted as counts")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(ds.n):
            row = [ds.ids[i], str(int(ds.labels[i]))]
            row.extend(_format_cell(v) for v in ds.features[i])
            writer.writerow(row)


def read_dataset(path) -> Dataset:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a CSV header") from None
        if header != CSV_HEADER:
            raise DatasetError(f"{path}: bad header, expected id,label,op_00,...,op_ff")
        ids: list[str] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise DatasetError(
                    f"{path}: line {line_no}: {len(row)} fields, expected {len(CSV_HEADER)}"
                )
            try:
                label = float(row[1])
                values = [float(cell) for cell in row[2:]]
            except ValueError as exc:
                raise DatasetError(f"{path}: line {line_no}: {exc}") from None
            if label not in (0.0, 1.0):
                raise DatasetError(f"{path}: line {line_no}: label {row[1]} outside {{0, 1}}")
            ids.append(row[0])
            labels.append(int(label))
            rows.append(values)
    features = (
        np.array(rows, dtype=np.float64)
        if rows
        else np.empty((0, N_OPCODE_FEATURES), dtype=np.float64)
    )
    return Dataset(ids=tuple(ids), features=features, labels=np.array(labels, dtype=np.int64))


@dataclass(frozen=True)
class ScanVerdicts:
    """Per-engine detection verdicts for one file hash."""

    file_hash: str
    engines: Mapping[str, bool]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "engines", MappingProxyType({str(k): bool(v) for k, v in self.engines.items()})
        )

    @property
    def detections(self) -> int:
        return sum(self.engines.values())


def consensus_label(v: ScanVerdicts, threshold: int = 1) -> int:
    """1 (malware) iff at least ``threshold`` engines flagged the file."""
    if threshold < 1:
        raise DatasetError(f"threshold must be positive, got {threshold}")
    if not v.engines:
        raise NoVerdictsError(f"no engine verdicts for {v.file_hash}; label unknown")
    return 1 if v.detections >= threshold else 0


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian blob mixture: one center per class-labeled component."""

    centers: tuple[tuple[float, ...], ...]
    per_center_count: int
    noise_sigma: float
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        centers = tuple(tuple(float(x) for x in c) for c in self.centers)
        labels = tuple(int(x) for x in self.labels)
        if not centers:
            raise DatasetError("blob spec needs at least one center")
        dims = {len(c) for c in centers}
        if len(dims) > 1:
            raise DatasetError(f"centers have mixed dimensions: {sorted(dims)}")
        if len(labels) != len(centers):
            raise DatasetError(f"{len(centers)} centers but {len(labels)} labels")
        if any(lab not in (0, 1) for lab in labels):
            raise DatasetError("blob labels must be 0 or 1")
        if self.per_center_count < 1:
            raise DatasetError("per_center_count must be at least 1")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be non-negative")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "labels", labels)


def synth_blobs(spec: BlobSpec, seed: int) -> Dataset:
    """Sample labeled Gaussian blobs; negative coordinates clamp to 0.

    Deterministic for a fixed seed: one derived stream, centers drawn
    in declaration order.
    """
    rng = derive_rng(seed, "synth_blobs")
    dim = len(spec.centers[0])
    ids: list[str] = []
    labels: list[int] = []
    blocks: list[np.ndarray] = []
    for ci, (center, label) in enumerate(zip(spec.centers, spec.labels)):
        block = np.asarray(center, dtype=np.float64) + rng.normal(
            0.0, spec.noise_sigma, size=(spec.per_center_count, dim)
        )
        np.maximum(block, 0.0, out=block)
        blocks.append(block)
        ids.extend(f"blob{ci:02d}-{ri:04d}" for ri in range(spec.per_center_count))
        labels.extend([label] * spec.per_center_count)
    return Dataset(
        ids=tuple(ids),
        features=np.vstack(blocks),
        labels=np.array(labels, dtype=np.int64),
    )
