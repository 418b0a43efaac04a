import csv
import logging
import os
import struct
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DegenerateSample, MalformedFile, NonFiniteEntry
from ..models.representation import (
    ClassPartition,
    CleanReference,
    LabeledDataset,
    PreprocessedClass,
    RepresentationMatrix,
)
from ..utils.seeding import class_sort_key

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'binary')
MAGIC = b'PIDN'
FORMAT_VERSION = 1
# magic, version (u32), rows (u64), cols (u64); all little-endian
HEADER = struct.Struct('<4sIQQ')
DEGENERATE_NORM = 1e-12


def infer_format(path: str, fmt: Optional[str] = None) -> str:
    """Explicit format wins; otherwise `.csv` files are CSV and the rest binary."""
    if fmt:
        if fmt not in FORMATS:
            raise ValueError(f"Unknown matrix format {fmt!r}; expected one of {FORMATS}")
        return fmt
    return 'csv' if path.lower().endswith('.csv') else 'binary'


def _check_finite(data: np.ndarray, path: str) -> None:
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        row, column = bad[0]
        raise NonFiniteEntry(int(row), int(column), path)


def _load_csv(path: str) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=',', comments='#', dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise MalformedFile(path, str(e)) from e
    if data.size == 0:
        raise MalformedFile(path, "no data rows")
    return data


def _load_binary(path: str) -> np.ndarray:
    with open(path, 'rb') as f:
        payload = f.read()
    if len(payload) < HEADER.size:
        raise MalformedFile(path, f"file shorter than the {HEADER.size}-byte header")
    magic, version, rows, cols = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise MalformedFile(path, f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedFile(path, f"unsupported format version {version}")
    if rows < 1 or cols < 1:
        raise MalformedFile(path, f"empty shape {rows}x{cols}")
    expected = rows * cols * 8
    body = len(payload) - HEADER.size
    if body != expected:
        raise MalformedFile(
            path, f"header declares {rows}x{cols} values but payload holds {body // 8}"
        )
    data = np.frombuffer(payload, dtype='<f8', offset=HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)


def load_matrix(path: str, fmt: Optional[str] = None) -> RepresentationMatrix:
    """
    Load a representation matrix from disk.

    Args:
        path: Matrix file
        fmt: 'csv' or 'binary'; inferred from the extension when omitted

    Returns:
        RepresentationMatrix with every entry finite

    Raises:
        MalformedFile: Bad magic, shape or row length
        NonFiniteEntry: A NaN or infinite value, with its position
    """
    fmt = infer_format(path, fmt)
    data = _load_csv(path) if fmt == 'csv' else _load_binary(path)
    _check_finite(data, path)
    logger.debug(f"Loaded {data.shape[0]}x{data.shape[1]} {fmt} matrix from {path}")
    return RepresentationMatrix(data)


def save_matrix(matrix: RepresentationMatrix, path: str, fmt: Optional[str] = None) -> None:
    """Write a matrix in the CSV or binary format read by load_matrix."""
    fmt = infer_format(path, fmt)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    data = np.asarray(matrix.data, dtype=np.float64)
    if fmt == 'csv':
        np.savetxt(
            path, data, fmt='%.17g', delimiter=',',
            header=f"rows={data.shape[0]},cols={data.shape[1]}", comments='# ',
        )
    else:
        with open(path, 'wb') as f:
            f.write(HEADER.pack(MAGIC, FORMAT_VERSION, data.shape[0], data.shape[1]))
            f.write(data.astype('<f8').tobytes(order='C'))
    logger.debug(f"Wrote {data.shape[0]}x{data.shape[1]} {fmt} matrix to {path}")


def load_labels(path: str, m: int) -> Tuple[List[str], List[str]]:
    """
    Parse a `sample_index,class_id[,sample_id]` label file.

    Args:
        path: Label file
        m: Row count of the matrix the labels refer to

    Returns:
        (labels, sample_ids), both indexed by matrix row
    """
    labels: List[Optional[str]] = [None] * m
    sample_ids: List[Optional[str]] = [None] * m
    with open(path, newline='') as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or not ''.join(row).strip() or row[0].lstrip().startswith('#'):
                continue
            try:
                index = int(row[0])
            except ValueError:
                if line_no == 1:
                    continue  # header
                raise MalformedFile(path, f"line {line_no}: bad sample index {row[0]!r}")
            if len(row) < 2:
                raise MalformedFile(path, f"line {line_no}: missing class_id")
            if not 0 <= index < m:
                raise MalformedFile(
                    path, f"line {line_no}: sample index {index} outside 0..{m - 1}"
                )
            if labels[index] is not None:
                raise MalformedFile(path, f"line {line_no}: duplicate sample index {index}")
            labels[index] = row[1].strip()
            sample_ids[index] = row[2].strip() if len(row) > 2 and row[2].strip() else str(index)
    missing = [i for i, label in enumerate(labels) if label is None]
    if missing:
        raise MalformedFile(
            path, f"{len(missing)} rows have no label (first missing index {missing[0]})"
        )
    return labels, sample_ids


def load_dataset(matrix_path: str, labels_path: str, fmt: Optional[str] = None) -> LabeledDataset:
    """Load a matrix and its label file as one dataset."""
    matrix = load_matrix(matrix_path, fmt)
    labels, sample_ids = load_labels(labels_path, matrix.m)
    dataset = LabeledDataset(matrix=matrix, labels=tuple(labels), sample_ids=tuple(sample_ids))
    logger.info(
        f"Loaded {dataset.m} samples in {len(dataset.class_ids)} classes from {matrix_path}"
    )
    return dataset


def save_labels(path: str, dataset: LabeledDataset) -> None:
    """Write the label file for a dataset (row order is sample_index)."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['sample_index', 'class_id', 'sample_id'])
        for index, (label, sample_id) in enumerate(zip(dataset.labels, dataset.sample_ids)):
            writer.writerow([index, label, sample_id])


def save_dataset(dataset: LabeledDataset, matrix_path: str, labels_path: str,
                 fmt: Optional[str] = None) -> None:
    save_matrix(dataset.matrix, matrix_path, fmt)
    save_labels(labels_path, dataset)


def compute_clean_mean(clean: RepresentationMatrix) -> CleanReference:
    """Per-feature mean of the clean test representations."""
    return CleanReference(mean=clean.data.mean(axis=0), count=clean.m)


def preprocess(X: Union[RepresentationMatrix, ClassPartition], ref: CleanReference,
               class_id: Optional[str] = None,
               row_map: Optional[Sequence[int]] = None) -> PreprocessedClass:
    """
    Centralize rows against the clean mean, then scale them to unit length.

    Args:
        X: Class rows, or a partition carrying its class id and row map
        ref: Clean reference from compute_clean_mean
        class_id: Overrides the partition's class id
        row_map: Overrides the partition's row map

    Raises:
        DegenerateSample: A row coincides with the clean mean
    """
    if isinstance(X, ClassPartition):
        class_id = X.class_id if class_id is None else class_id
        row_map = X.row_map if row_map is None else row_map
        X = X.matrix
    if X.n != ref.mean.shape[0]:
        raise MalformedFile(
            "<memory>", f"{X.n} features but the clean reference has {ref.mean.shape[0]}"
        )
    row_map = tuple(row_map) if row_map is not None else tuple(range(X.m))
    centered = X.data - ref.mean
    norms = np.linalg.norm(centered, axis=1)
    degenerate = np.flatnonzero(norms < DEGENERATE_NORM)
    if degenerate.size:
        raise DegenerateSample(int(row_map[degenerate[0]]))
    return PreprocessedClass(
        matrix=RepresentationMatrix(centered / norms[:, None]),
        class_id='' if class_id is None else str(class_id),
        row_map=row_map,
    )


def partition_by_class(ds: LabeledDataset) -> Dict[str, ClassPartition]:
    """Split a dataset by label, preserving row order inside each class."""
    rows_by_class: Dict[str, List[int]] = {}
    for index, label in enumerate(ds.labels):
        rows_by_class.setdefault(label, []).append(index)
    return {
        class_id: ClassPartition(
            class_id=class_id,
            matrix=ds.matrix.take(rows_by_class[class_id]),
            row_map=tuple(rows_by_class[class_id]),
        )
        for class_id in sorted(rows_by_class, key=class_sort_key)
    }
