"""Contiguous block partitions of a flat coordinate vector.

Every solver in this package views the unknown as one float64 vector split
into m contiguous blocks. Block i owns the half-open index range
[offset[i], offset[i] + size[i]); the ranges tile [0, n) exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BlockLayout:
    """Partition of ``range(dim)`` into contiguous blocks.

    Parameters
    ----------
    sizes : tuple of int
        Block sizes, all >= 1. ``dim`` is their sum.
    """

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.sizes) == 0:
            raise ValueError("a block layout needs at least one block")
        if any(int(s) <= 0 for s in self.sizes):
            raise ValueError(f"block sizes must be positive, got {self.sizes}")
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        offs = np.concatenate(([0], np.cumsum(sizes)))
        object.__setattr__(self, "offsets", tuple(int(o) for o in offs[:-1]))
        object.__setattr__(self, "_bounds", offs)

    @property
    def m(self) -> int:
        """Number of blocks."""
        return len(self.sizes)

    @property
    def dim(self) -> int:
        """Total number of scalar coordinates."""
        return self.offsets[-1] + self.sizes[-1]

    def slice_of(self, i: int) -> slice:
        """Half-open index slice owned by block ``i``."""
        o = self.offsets[i]
        return slice(o, o + self.sizes[i])

    def block_of(self, index: int) -> int:
        """Block owning scalar coordinate ``index``."""
        if not 0 <= index < self.dim:
            raise IndexError(f"coordinate {index} outside [0, {self.dim})")
        bounds = np.asarray(self._bounds)
        return int(np.searchsorted(bounds, index, side="right") - 1)

    def blocks_of(self, indices: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`block_of` for an index array."""
        bounds = np.asarray(self._bounds)
        out = np.searchsorted(bounds, indices, side="right") - 1
        if np.any((indices < 0) | (indices >= self.dim)):
            raise IndexError("coordinate index outside layout range")
        return out

    @classmethod
    def scalar(cls, n: int) -> "BlockLayout":
        """One block per scalar coordinate."""
        return cls(sizes=(1,) * int(n))

    @classmethod
    def uniform(cls, n: int, m: int) -> "BlockLayout":
        """m blocks of size n // m, the first n % m blocks one larger."""
        n, m = int(n), int(m)
        if not 1 <= m <= n:
            raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
        base, extra = divmod(n, m)
        return cls(sizes=tuple(base + 1 if i < extra else base for i in range(m)))


def partition_blocks(n: int, target_size: int = 50) -> BlockLayout:
    """Split ``n`` coordinates into contiguous blocks of roughly ``target_size``.

    The block count is the rounding of n / target_size (at least 1), so block
    sizes land within one of each other and straddle the target: n=100 gives
    {50, 50}, n=101 gives {51, 50}, n=47236 gives 945 blocks of size 49 or 50.
    """
    n = int(n)
    if n <= 0:
        raise ValueError(f"need n >= 1, got {n}")
    if target_size <= 0:
        raise ValueError(f"need target_size >= 1, got {target_size}")
    count = max(1, int(np.floor(n / target_size + 0.5)))
    count = min(count, n)
    return BlockLayout.uniform(n, count)
