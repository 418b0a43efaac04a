from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import MalformedFile, NonFiniteEntry


def _frozen_array(values, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise ValueError(f"Expected a {ndim}-d array, got shape {array.shape}")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class RepresentationMatrix:
    """Last-layer activations, one sample per row."""
    data: np.ndarray

    def __post_init__(self):
        array = _frozen_array(self.data, 2)
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise MalformedFile("<memory>", f"empty matrix of shape {array.shape}")
        bad = np.argwhere(~np.isfinite(array))
        if bad.size:
            row, column = bad[0]
            raise NonFiniteEntry(int(row), int(column))
        object.__setattr__(self, 'data', array)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def take(self, rows: Sequence[int]) -> 'RepresentationMatrix':
        return RepresentationMatrix(self.data[np.asarray(rows, dtype=np.intp)])


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """A representation matrix with a class label and identifier per row."""
    matrix: RepresentationMatrix
    labels: Tuple[str, ...]
    sample_ids: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        sample_ids = tuple(str(sample_id) for sample_id in self.sample_ids)
        if len(labels) != self.matrix.m:
            raise MalformedFile(
                "<labels>", f"{len(labels)} labels for {self.matrix.m} rows"
            )
        if len(sample_ids) != self.matrix.m:
            raise MalformedFile(
                "<labels>", f"{len(sample_ids)} sample ids for {self.matrix.m} rows"
            )
        if len(set(sample_ids)) != len(sample_ids):
            raise MalformedFile("<labels>", "sample ids are not unique")
        if not labels:
            raise MalformedFile("<labels>", "no class identifiers")
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'sample_ids', sample_ids)

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def class_ids(self) -> List[str]:
        return sorted(set(self.labels))

    def take(self, rows: Sequence[int]) -> 'LabeledDataset':
        rows = list(rows)
        return LabeledDataset(
            matrix=self.matrix.take(rows),
            labels=tuple(self.labels[i] for i in rows),
            sample_ids=tuple(self.sample_ids[i] for i in rows),
        )


@dataclass(frozen=True, eq=False)
class CleanReference:
    """Per-feature mean of clean test representations."""
    mean: np.ndarray
    count: int

    def __post_init__(self):
        mean = _frozen_array(self.mean, 1)
        if self.count < 1:
            raise ValueError("Clean reference needs at least one sample")
        if not np.all(np.isfinite(mean)):
            raise ValueError("Clean reference mean has non-finite entries")
        object.__setattr__(self, 'mean', mean)


@dataclass(frozen=True, eq=False)
class ClassPartition:
    """Rows of one class, with their indices in the source dataset."""
    class_id: str
    matrix: RepresentationMatrix
    row_map: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class PreprocessedClass:
    """Centralized, unit-length rows of one class."""
    matrix: RepresentationMatrix
    class_id: str
    row_map: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        norms = np.linalg.norm(self.matrix.data, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(
                f"Row {worst} has norm {norms[worst]!r}, expected unit length"
            )
        row_map = tuple(int(i) for i in self.row_map) or tuple(range(self.matrix.m))
        if len(row_map) != self.matrix.m:
            raise ValueError("row_map length does not match the matrix")
        object.__setattr__(self, 'row_map', row_map)

    @property
    def X(self) -> np.ndarray:
        return self.matrix.data

    @property
    def m(self) -> int:
        return self.matrix.m

    @property
    def n(self) -> int:
        return self.matrix.n
