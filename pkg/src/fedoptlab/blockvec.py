"""Block-partitioned vectors z = (z_1, ..., z_m) in (R^d)^m.

These are the per-client parameter blocks used by all round-based
algorithms.  Averages accumulate in ascending client order so that traces
are bit-reproducible across runs and thread counts.
"""

from __future__ import annotations

import numpy as np


class BlockVector:
    """Immutable stack of m client vectors of common dimension d.

    The blocks are stored as rows of a dense, C-contiguous (m, d) array.
    All operations are pure functions returning new instances, so values
    are safe to share across threads.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=float, copy=True, order="C")
        if arr.ndim != 2:
            raise ValueError(f"expected an (m, d) array of blocks, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"need m >= 1 and d >= 1, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BlockVector is immutable")

    @classmethod
    def from_blocks(cls, blocks) -> "BlockVector":
        """Build from an ordered sequence of m equal-length 1-d vectors."""
        rows = [np.asarray(b, dtype=float).reshape(-1) for b in blocks]
        if not rows:
            raise ValueError("need at least one block")
        d = rows[0].size
        for j, r in enumerate(rows):
            if r.size != d:
                raise ValueError(f"block {j} has dimension {r.size}, expected {d}")
        return cls(np.vstack(rows))

    @classmethod
    def filled(cls, m: int, x) -> "BlockVector":
        """m copies of the same vector x (the usual consensus start)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(np.tile(x, (m, 1)))

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def blocks(self):
        """List of the m blocks as read-only row views."""
        return [self.data[j] for j in range(self.m)]

    def norm(self) -> float:
        """Euclidean norm on the product space (R^d)^m."""
        return float(np.linalg.norm(self.data.ravel()))

    def __add__(self, other: "BlockVector") -> "BlockVector":
        return BlockVector(self.data + other.data)

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        return BlockVector(self.data - other.data)

    def __mul__(self, c: float) -> "BlockVector":
        return BlockVector(self.data * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"BlockVector(m={self.m}, d={self.d})"


def block_average(z: BlockVector) -> np.ndarray:
    """(1/m) sum_j z_j, accumulated in ascending client order."""
    acc = z.data[0].copy()
    for j in range(1, z.m):
        acc += z.data[j]
    acc /= z.m
    return acc


def reflect_consensus(z: BlockVector) -> BlockVector:
    """Reflection across the consensus subspace: block j maps to 2*zbar - z_j.

    This is the reflected resolvent of the indicator of the subspace
    {z : z_1 = ... = z_m}.  It preserves the block average, is an
    involution, and is nonexpansive in the block-Euclidean norm.
    """
    avg = block_average(z)
    return BlockVector(2.0 * avg[None, :] - z.data)


def broadcast_add(x, z: BlockVector) -> BlockVector:
    """Add a single vector x to every block: block j becomes x + z_j."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != z.d:
        raise ValueError(f"dimension mismatch: x has {x.size} entries, blocks have {z.d}")
    return BlockVector(x[None, :] + z.data)
