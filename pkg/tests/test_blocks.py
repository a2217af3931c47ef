import numpy as np
import pytest

from asyncfp.blocks import BlockLayout, partition_blocks


def test_layout_offsets_and_dim() -> None:
    layout = BlockLayout(sizes=(3, 1, 2))
    assert layout.m == 3
    assert layout.dim == 6
    assert layout.offsets == (0, 3, 4)
    assert layout.slice_of(0) == slice(0, 3)
    assert layout.slice_of(2) == slice(4, 6)


def test_layout_rejects_bad_sizes() -> None:
    with pytest.raises(ValueError):
        BlockLayout(sizes=())
    with pytest.raises(ValueError):
        BlockLayout(sizes=(2, 0, 1))


def test_block_of_covers_every_coordinate() -> None:
    layout = BlockLayout(sizes=(2, 5, 1, 4))
    owners = [layout.block_of(j) for j in range(layout.dim)]
    assert owners == [0, 0, 1, 1, 1, 1, 1, 2, 3, 3, 3, 3]
    np.testing.assert_array_equal(
        layout.blocks_of(np.arange(layout.dim)), owners
    )
    with pytest.raises(IndexError):
        layout.block_of(layout.dim)


def test_scalar_layout() -> None:
    layout = BlockLayout.scalar(4)
    assert layout.sizes == (1, 1, 1, 1)
    assert layout.slice_of(3) == slice(3, 4)


def test_partition_n100_target50_gives_two_halves() -> None:
    layout = partition_blocks(100, 50)
    assert layout.sizes == (50, 50)


def test_partition_n101_splits_51_50() -> None:
    layout = partition_blocks(101, 50)
    assert layout.sizes == (51, 50)


def test_partition_large_n_sizes_near_target() -> None:
    layout = partition_blocks(47236, 50)
    assert layout.m == 945
    assert set(layout.sizes) <= {49, 50, 51}
    # disjoint, ordered, complete: offsets tile [0, n) exactly
    assert layout.dim == 47236
    ends = np.asarray(layout.offsets) + np.asarray(layout.sizes)
    np.testing.assert_array_equal(ends[:-1], layout.offsets[1:])


def test_partition_tiny_n_single_block() -> None:
    assert partition_blocks(1, 50).sizes == (1,)
    assert partition_blocks(24, 50).sizes == (24,)
    assert partition_blocks(25, 50).m == 1


def test_partition_rejects_nonpositive() -> None:
    with pytest.raises(ValueError):
        partition_blocks(0, 50)
    with pytest.raises(ValueError):
        partition_blocks(10, 0)
