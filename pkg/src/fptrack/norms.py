"""Vector norms used for contraction declarations, drift, and tracking error."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

L2 = "l2"
LINF = "linf"


@dataclass(frozen=True)
class Norm:
    """A vector norm, optionally annotated with an agent block layout.

    The block layout does not change the value of the norm (sub-vectors are
    measured with the same flat norm, so a blockwise max under ``linf`` equals
    the flat max); it records how agent sub-vectors tile the state for
    blockwise analyses.
    """

    kind: str = L2
    block_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (L2, LINF):
            raise PreconditionError(f"unknown norm kind {self.kind!r}")
        if self.block_sizes is not None:
            sizes = tuple(int(s) for s in self.block_sizes)
            if any(s <= 0 for s in sizes):
                raise PreconditionError("block sizes must be positive")
            object.__setattr__(self, "block_sizes", sizes)

    @property
    def is_l2(self) -> bool:
        return self.kind == L2

    @property
    def is_linf(self) -> bool:
        return self.kind == LINF

    def of(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if v.size == 0:
            return 0.0
        if self.kind == L2:
            return float(np.linalg.norm(v.ravel()))
        return float(np.max(np.abs(v)))

    def of_rows(self, m) -> np.ndarray:
        """Norm of each row of a 2-d array."""
        m = np.asarray(m, dtype=float)
        if self.kind == L2:
            return np.linalg.norm(m, axis=1)
        return np.max(np.abs(m), axis=1)

    def distance(self, a, b) -> float:
        return self.of(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))

    def __str__(self):
        return self.kind


def block_offsets(block_sizes) -> np.ndarray:
    """Start offsets of each block, plus the total length as final entry."""
    return np.concatenate([[0], np.cumsum(np.asarray(block_sizes, dtype=int))])
