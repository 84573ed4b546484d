"""Block vectors over a product of Euclidean spaces.

A :class:`BlockVector` holds the variables ``(x, y_1, ..., y_p)`` of a
multi-block problem. Complex blocks are treated as real inner-product
spaces, i.e. ``<u, v> = Re sum(conj(u) * v)``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

__all__ = ["BlockVector", "inner", "triple_norm", "axpy", "real_inner"]


def real_inner(u: np.ndarray, v: np.ndarray) -> float:
    """Real inner product of two arrays of identical shape."""
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    return float(np.real(np.vdot(u, v)))


class BlockVector:
    """Ordered tuple of dense arrays with product-space arithmetic.

    Parameters
    ----------
    blocks : sequence of array_like
        The blocks. Each is stored as a contiguous numpy array.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable[np.ndarray]):
        self.blocks = tuple(np.ascontiguousarray(b) for b in blocks)
        if not self.blocks:
            raise ValueError("a BlockVector needs at least one block")

    @property
    def field(self) -> str:
        if any(np.iscomplexobj(b) for b in self.blocks):
            return "complex"
        return "real"

    @property
    def shapes(self) -> tuple:
        return tuple(b.shape for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def __iter__(self):
        return iter(self.blocks)

    def __repr__(self) -> str:
        return f"BlockVector(shapes={self.shapes}, field={self.field})"

    def check_compatible(self, other: "BlockVector") -> None:
        if not isinstance(other, BlockVector):
            raise TypeError(f"expected BlockVector, got {type(other).__name__}")
        if self.shapes != other.shapes:
            raise ValueError(f"block shapes differ: {self.shapes} vs {other.shapes}")
        if self.field != other.field:
            raise ValueError(f"field mismatch: {self.field} vs {other.field}")

    def replace(self, i: int, block: np.ndarray) -> "BlockVector":
        """Copy of ``self`` with block ``i`` swapped for ``block``."""
        block = np.asarray(block)
        if block.shape != self.blocks[i].shape:
            raise ValueError(f"block {i}: shape {block.shape} != {self.blocks[i].shape}")
        blocks = list(self.blocks)
        blocks[i] = block
        return BlockVector(blocks)

    def copy(self) -> "BlockVector":
        return BlockVector([b.copy() for b in self.blocks])

    def zeros_like(self) -> "BlockVector":
        return BlockVector([np.zeros_like(b) for b in self.blocks])

    def __add__(self, other: "BlockVector") -> "BlockVector":
        self.check_compatible(other)
        return BlockVector([a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "BlockVector") -> "BlockVector":
        self.check_compatible(other)
        return BlockVector([a - b for a, b in zip(self.blocks, other.blocks)])

    def __mul__(self, a) -> "BlockVector":
        return BlockVector([a * b for b in self.blocks])

    __rmul__ = __mul__

    def __neg__(self) -> "BlockVector":
        return BlockVector([-b for b in self.blocks])

    def inner(self, other: "BlockVector") -> float:
        return inner(self, other)

    def norm(self) -> float:
        return triple_norm(self)

    def block_norms(self) -> np.ndarray:
        return np.array([_scaled_norm(b.ravel()) for b in self.blocks])


def _scaled_norm(a: np.ndarray) -> float:
    # divide by the largest magnitude first so tiny entries do not square to 0
    m = np.max(np.abs(a)) if a.size else 0.0
    if m == 0 or not np.isfinite(m):
        return float(m)
    return float(m * np.linalg.norm(a / m))


def inner(v: BlockVector, w: BlockVector) -> float:
    """Sum of the per-block real inner products."""
    v.check_compatible(w)
    return sum(real_inner(a, b) for a, b in zip(v.blocks, w.blocks))


def triple_norm(v: BlockVector) -> float:
    """Product-space norm ``sqrt(sum_i ||v_i||^2)``."""
    return _scaled_norm(v.block_norms())


def axpy(a, v: BlockVector, w: BlockVector) -> BlockVector:
    """Return ``a * v + w`` blockwise."""
    v.check_compatible(w)
    return BlockVector([a * x + y for x, y in zip(v.blocks, w.blocks)])

