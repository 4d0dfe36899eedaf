"""Affine oracle families: x -> A x + b(t) with exact fixed points and drift.

The driver of every bound certificate test: the fixed point at time t is
known in closed form (the drift path itself, by construction), the induced
contraction factor is set exactly by scaling, and the per-step drift is an
exact, chosen quantity.
"""
from __future__ import annotations

import numpy as np

from ..async_sim import DependencyGraph
from ..core import MapFamily, seeded_stream
from ..domains import Domain
from ..errors import PreconditionError
from ..norms import LINF, Norm
from ._paths import DriftPath

COUPLINGS = ("dense", "chain", "diagonal")


class AffineFamily(MapFamily):
    """Map family x -> A x + b(t), with b(t) chosen so the fixed point is a given path."""

    def __init__(self, A, path: DriftPath, norm: Norm, **kwargs):
        self.A = np.asarray(A, dtype=float)
        self.path = path
        m = self.A.shape[0]
        eye_minus_A = np.eye(m) - self.A
        cache = {}

        def offset(t):
            b = cache.get(t)
            if b is None:
                b = eye_minus_A @ path.point(t)
                cache[t] = b
            return b

        super().__init__(
            dim=m,
            domain=Domain.all_space(m),
            evaluate=lambda x, t: self.A @ x + offset(t),
            fixed_point=lambda t: path.point(t),
            evaluate_batch=lambda X, t: X @ self.A.T + offset(t),
            declared_norm=norm,
            **kwargs,
        )

    def drift_sup(self, horizon) -> float:
        """Exact maximum per-step fixed-point movement over the horizon."""
        return self.path.max_step(horizon)

    def dependency_graph(self) -> DependencyGraph:
        """Scalar-agent graph with an edge wherever A actually couples blocks."""
        edges = [(j, i) for i in range(self.dim) for j in range(self.dim)
                 if i != j and self.A[i, j] != 0.0]
        return DependencyGraph([1] * self.dim, edges)


def _coupling_mask(dim, coupling, rng) -> np.ndarray:
    base = rng.uniform(0.25, 1.0, size=(dim, dim)) * rng.choice([-1.0, 1.0], size=(dim, dim))
    if coupling == "dense":
        return base
    mask = np.zeros((dim, dim))
    for i in range(dim):
        mask[i, i] = 1.0
        if coupling == "chain":
            if i > 0:
                mask[i, i - 1] = 1.0
            if i < dim - 1:
                mask[i, i + 1] = 1.0
    return base * mask


def build_affine_family(dim, norm: Norm, contraction, drift: DriftPath, seed,
                        coupling="dense", blockwise=False) -> AffineFamily:
    """Construct an affine family with an exactly known contraction factor.

    Scaling rules:

    * ``linf``: every row of A is scaled to absolute sum ``contraction``, so
      the induced max-norm factor equals it exactly (and each scalar agent's
      blockwise constant too).
    * ``l2``: A is scaled so its spectral norm equals ``contraction``.
    * ``l2`` with ``blockwise=True``: rows are scaled to equal Euclidean
      length ``contraction / sqrt(dim)``. The declared factor is then the
      blockwise aggregate sqrt(sum of squared row constants) = ``contraction``
      (a valid global constant, at least the induced norm), which is the
      constant the refined stale-copy bound is stated for.

    ``drift`` prescribes the fixed-point trajectory itself; offsets are
    derived as b(t) = (I - A) path(t), so fixed points and per-step drift are
    exact in the family norm.
    """
    dim = int(dim)
    contraction = float(contraction)
    if not (0.0 < contraction < 1.0):
        raise PreconditionError("contraction target must lie in (0, 1)")
    if coupling not in COUPLINGS:
        raise PreconditionError(f"unknown coupling {coupling!r}; use one of {COUPLINGS}")
    if drift.dim != dim:
        raise PreconditionError("drift path dimension does not match the family")
    rng = seeded_stream(seed, 17)
    R = _coupling_mask(dim, coupling, rng)
    block_lipschitz = None
    if norm.kind == LINF:
        row_sums = np.abs(R).sum(axis=1)
        A = R * (contraction / row_sums)[:, None]
        block_lipschitz = np.full(dim, contraction)
        declared = contraction
    elif blockwise:
        row_norms = np.linalg.norm(R, axis=1)
        A = R * (contraction / np.sqrt(dim) / row_norms)[:, None]
        block_lipschitz = np.full(dim, contraction / np.sqrt(dim))
        declared = contraction
    else:
        A = R * (contraction / np.linalg.norm(R, ord=2))
        declared = contraction
    return AffineFamily(
        A,
        drift,
        norm,
        lipschitz=declared,
        block_sizes=[1] * dim if block_lipschitz is not None else None,
        block_lipschitz=block_lipschitz,
        name=f"affine-{norm.kind}-{coupling}-m{dim}",
    )
