from ..blocks import partition_blocks
from .libsvm import LibsvmFormatError, read_libsvm, write_libsvm
from .sparse import LabeledDataset, SparseMatrixCSR, map_binary_labels
from .synth import (
    GraphSpec,
    gen_diag_dominant,
    gen_graph,
    gen_imbalanced_quadratic,
    gen_logistic,
)

__all__ = [
    "GraphSpec",
    "LabeledDataset",
    "LibsvmFormatError",
    "SparseMatrixCSR",
    "gen_diag_dominant",
    "gen_graph",
    "gen_imbalanced_quadratic",
    "gen_logistic",
    "map_binary_labels",
    "partition_blocks",
    "read_libsvm",
    "write_libsvm",
]
