"""Reader and writer for the LIBSVM sparse text format.

Grammar, one sample per line:

    <label> <index>:<value> <index>:<value> ...

with 1-based, strictly increasing indices per line and whitespace
separation. Labels must be -1/+1 (0/1 files are accepted with a
warning and remapped). Stored zeros are dropped on read. Comment
suffixes starting with '#' are ignored, as are blank lines.
"""

from __future__ import annotations

import os

import numpy as np

from .sparse import LabeledDataset, SparseMatrixCSR, map_binary_labels


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM input; message carries the 1-based line number."""


def read_libsvm(path: str | os.PathLike, num_features: int | None = None) -> LabeledDataset:
    """Parse a LIBSVM text file into a :class:`LabeledDataset`.

    ``num_features`` widens the feature count beyond the largest index
    seen (it is an error to pass fewer). Indices are converted to
    0-based on ingestion.
    """
    labels: list[float] = []
    row_ptr = [0]
    col_idx: list[int] = []
    values: list[float] = []
    max_col = -1

    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise LibsvmFormatError(
                    f"line {lineno}: label {parts[0]!r} is not a number"
                ) from None

            prev = 0
            for token in parts[1:]:
                try:
                    idx_s, val_s = token.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise LibsvmFormatError(
                        f"line {lineno}: malformed feature token {token!r}"
                    ) from None
                if idx < 1:
                    raise LibsvmFormatError(
                        f"line {lineno}: index {idx} below 1 (indices are 1-based)"
                    )
                if idx <= prev:
                    raise LibsvmFormatError(
                        f"line {lineno}: index {idx} not greater than previous {prev}"
                    )
                prev = idx
                if val == 0.0:
                    continue
                col_idx.append(idx - 1)
                values.append(val)
                max_col = max(max_col, idx - 1)
            row_ptr.append(len(col_idx))

    n = max_col + 1
    if num_features is not None:
        if num_features < n:
            raise ValueError(
                f"num_features={num_features} below largest index {n} in file"
            )
        n = num_features

    samples = SparseMatrixCSR(
        row_ptr=np.asarray(row_ptr, dtype=np.int64),
        col_idx=np.asarray(col_idx, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        shape=(len(labels), n),
    )
    return LabeledDataset(samples=samples, labels=map_binary_labels(np.asarray(labels)))


def write_libsvm(dataset: LabeledDataset, path: str | os.PathLike) -> None:
    """Write a dataset back out; read_libsvm(write_libsvm(d)) == d.

    Values are printed with repr-level precision so the round trip is
    exact for float64.
    """
    mat = dataset.samples
    with open(path, "w", encoding="ascii") as fh:
        for r in range(mat.rows):
            cols, vals = mat.row(r)
            label = int(dataset.labels[r])
            tokens = [f"{label:+d}"]
            tokens += [f"{c + 1}:{float(v)!r}" for c, v in zip(cols, vals)]
            fh.write(" ".join(tokens) + "\n")
