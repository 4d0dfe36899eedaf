"""Drift processes: trajectories followed by fixed points or exogenous signals.

Four kinds cover the experiments: ``constant``, ``linear`` (constant-speed
ray), ``random_walk`` (seeded steps of exactly the stated size, so the
realized per-step drift equals the bound), and ``piecewise`` (a linear path
with one faster segment).
"""
from __future__ import annotations

import numpy as np

from ..core import seeded_stream
from ..errors import PreconditionError
from ..norms import Norm

KINDS = ("constant", "linear", "random_walk", "piecewise")


class DriftPath:
    """A time-indexed point ``point(t)`` in R^dim, t = 1, 2, ...

    ``rate`` is the per-step movement measured in ``norm``; for ``piecewise``
    the speed switches to ``fast_rate`` on ``fast_window = (t_start, t_end)``
    (inclusive start, exclusive end). Random-walk steps are uniform random
    directions scaled to exactly ``rate``, so drift bounds are tight.
    """

    def __init__(self, kind, dim, rate=0.0, seed=0, start=None, direction=None,
                 norm: Norm | None = None, fast_rate=None, fast_window=None):
        if kind not in KINDS:
            raise PreconditionError(f"unknown drift kind {kind!r}; use one of {KINDS}")
        self.kind = kind
        self.dim = int(dim)
        self.rate = float(rate)
        if self.rate < 0.0:
            raise PreconditionError("drift rate must be nonnegative")
        self.seed = int(seed)
        self.norm = norm if norm is not None else Norm()
        self.start = (
            np.asarray(start, dtype=float).reshape(self.dim)
            if start is not None
            else np.zeros(self.dim)
        )
        if direction is None:
            g = seeded_stream(self.seed, 331).standard_normal(self.dim)
            direction = g if np.linalg.norm(g) > 0 else np.ones(self.dim)
        direction = np.asarray(direction, dtype=float).reshape(self.dim)
        scale = self.norm.of(direction)
        if scale == 0.0:
            raise PreconditionError("drift direction must be nonzero")
        self._unit = direction / scale
        if kind == "piecewise":
            if fast_rate is None or fast_window is None:
                raise PreconditionError("piecewise drift needs fast_rate and fast_window")
            self.fast_rate = float(fast_rate)
            self.fast_window = (int(fast_window[0]), int(fast_window[1]))
        else:
            self.fast_rate, self.fast_window = None, None
        self._walk = [self.start.copy()]  # random_walk cache, index k -> point(k+1)

    def _speed(self, t) -> float:
        if self.kind == "piecewise" and self.fast_window[0] <= t < self.fast_window[1]:
            return self.fast_rate
        return self.rate

    def point(self, t) -> np.ndarray:
        t = int(t)
        if t < 1:
            raise PreconditionError("time indices start at 1")
        if self.kind == "constant":
            return self.start.copy()
        if self.kind == "linear":
            return self.start + (t - 1) * self.rate * self._unit
        if self.kind == "piecewise":
            travelled = sum(self._speed(tau) for tau in range(1, t))
            return self.start + travelled * self._unit
        while len(self._walk) < t:  # random_walk: extend the cached trajectory
            k = len(self._walk)
            g = seeded_stream(self.seed, 332, k).standard_normal(self.dim)
            n = self.norm.of(g)
            step = (self.rate / n) * g if n > 0 else np.zeros(self.dim)
            self._walk.append(self._walk[-1] + step)
        return self._walk[t - 1].copy()

    def step_size(self, t) -> float:
        """Norm of point(t+1) - point(t); exact for every kind."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "random_walk":
            return self.rate
        return self._speed(t)

    def max_step(self, horizon) -> float:
        """Largest per-step movement over t = 1..horizon-1."""
        if self.kind == "constant" or int(horizon) <= 1:
            return 0.0
        return max(self.step_size(t) for t in range(1, int(horizon)))


def scalar_signal(kind, rate=0.0, seed=0, start=0.0, norm=None, **kw) -> "ScalarSignal":
    return ScalarSignal(DriftPath(kind, 1, rate=rate, seed=seed, start=[float(start)],
                                  direction=[1.0] if kind in ("linear", "piecewise") else None,
                                  norm=norm, **kw))


class ScalarSignal:
    """Scalar view of a 1-d drift path (exogenous inputs, references)."""

    def __init__(self, path: DriftPath):
        if path.dim != 1:
            raise PreconditionError("scalar signals require a 1-d path")
        self.path = path

    def value(self, t) -> float:
        return float(self.path.point(t)[0])
