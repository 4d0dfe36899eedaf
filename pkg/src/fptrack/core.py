"""Map families, batch fixed-point solving, online tracking, assumption audits.

The central object is a :class:`MapFamily`: a time-indexed family of self-maps
``x -> f(x, t)`` on a declared domain, carrying declared per-step contraction
factors. :class:`InexactMapFamily` wraps a family with approximate evaluations
whose deviation from the exact map is bounded per step.

Time indices are 1-based throughout (``t = 1, 2, ...``); arrays are 0-based,
so ``points[k]`` corresponds to ``t = k + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import Domain, DomainSampler
from .errors import (
    DomainViolationError,
    LengthMismatchError,
    NonConvergenceError,
    PreconditionError,
)
from .norms import L2, LINF, Norm


def seeded_stream(seed, *key) -> np.random.Generator:
    """Deterministic generator for a (seed, key...) tuple.

    Streams for distinct keys are independent, so draws do not depend on the
    order in which callers consume them.
    """
    parts = [int(seed)] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(parts))


class MapFamily:
    """Time-indexed family of self-maps on a declared domain.

    Parameters
    ----------
    dim : int
        State dimension m.
    domain : Domain
        Set the maps are declared to preserve.
    evaluate : callable
        ``evaluate(x, t) -> ndarray`` for ``t >= 1``; must map the domain
        into itself for every t.
    lipschitz : float or callable
        Declared per-step contraction factor; a scalar or ``t -> float``.
    lipschitz_sup : float, optional
        Supremum of the declared factors over the horizon of interest.
        Defaults to ``lipschitz`` when that is a scalar. Must be < 1.
    block_sizes, block_lipschitz : optional
        Agent decomposition of the state with per-block constants. For an
        l2 family the blockwise constants satisfy sum(L_i^2) = L^2 with L
        the declared supremum; builders are responsible for that identity.
    fixed_point : callable, optional
        Closed-form fixed point ``t -> ndarray``, when known.
    evaluate_batch : callable, optional
        Vectorized ``(X, t) -> ndarray`` over rows, used to speed up audits.
    declared_norm : Norm, optional
        Norm in which the contraction declaration holds (default l2). Bound
        certificates only apply when the experiment norm matches it.
    """

    def __init__(
        self,
        dim,
        domain: Domain,
        evaluate,
        lipschitz,
        lipschitz_sup=None,
        block_sizes=None,
        block_lipschitz=None,
        fixed_point=None,
        evaluate_batch=None,
        declared_norm=None,
        name="map-family",
    ):
        self.dim = int(dim)
        self.domain = domain
        self._evaluate = evaluate
        if callable(lipschitz):
            self._lipschitz = lipschitz
            if lipschitz_sup is None:
                raise PreconditionError(
                    "lipschitz_sup is required when the declared factor varies with t"
                )
        else:
            const = float(lipschitz)
            self._lipschitz = lambda t, c=const: c
            if lipschitz_sup is None:
                lipschitz_sup = const
        self.lipschitz_sup = float(lipschitz_sup)
        if not (0.0 <= self.lipschitz_sup < 1.0):
            raise PreconditionError(
                f"declared contraction supremum must lie in [0, 1); got {self.lipschitz_sup}"
            )
        self.block_sizes = tuple(int(s) for s in block_sizes) if block_sizes else None
        if self.block_sizes and sum(self.block_sizes) != self.dim:
            raise PreconditionError("block sizes must sum to the state dimension")
        self.block_lipschitz = (
            np.asarray(block_lipschitz, dtype=float) if block_lipschitz is not None else None
        )
        if self.block_lipschitz is not None and self.block_sizes is None:
            raise PreconditionError("block_lipschitz requires block_sizes")
        self.declared_norm = declared_norm if declared_norm is not None else Norm(L2)
        if self.block_lipschitz is not None and self.declared_norm.kind == L2:
            # l2 block decompositions must aggregate exactly to the declaration
            aggregate = float(np.sqrt(np.sum(self.block_lipschitz ** 2)))
            if abs(aggregate - self.lipschitz_sup) > 1e-9:
                raise PreconditionError(
                    f"blockwise constants aggregate to {aggregate:.12g}, "
                    f"declared supremum is {self.lipschitz_sup:.12g}"
                )
        self.fixed_point = fixed_point
        self.evaluate_batch = evaluate_batch
        self.name = name

    def evaluate(self, x, t) -> np.ndarray:
        return np.asarray(self._evaluate(np.asarray(x, dtype=float), int(t)), dtype=float)

    # Exact family: approximation error is identically zero.
    def exact_evaluate(self, x, t) -> np.ndarray:
        return self.evaluate(x, t)

    def lipschitz_at(self, t) -> float:
        return float(self._lipschitz(int(t)))

    def error_bound_at(self, t) -> float:
        return 0.0

    @property
    def error_sup(self) -> float:
        return 0.0

    def __repr__(self):
        return f"<{type(self).__name__} {self.name!r} dim={self.dim} L<={self.lipschitz_sup:g}>"


class InexactMapFamily:
    """Approximate evaluations of a base family, off by a bounded amount.

    ``evaluate(x, t)`` must stay within ``error_bound(t)`` of the base map at
    every point of the domain (in the family's norm) and must itself map the
    domain into itself.
    """

    def __init__(self, base: MapFamily, evaluate, error_bound, error_sup=None,
                 norm: Norm | None = None, evaluate_batch=None, name=None):
        self.base = base
        self._evaluate = evaluate
        if callable(error_bound):
            self._error_bound = error_bound
            if error_sup is None:
                raise PreconditionError(
                    "error_sup is required when the error bound varies with t"
                )
        else:
            const = float(error_bound)
            self._error_bound = lambda t, c=const: c
            if error_sup is None:
                error_sup = const
        self.error_sup = float(error_sup)
        if self.error_sup < 0.0:
            raise PreconditionError("error bound must be nonnegative")
        self.norm = norm if norm is not None else Norm(L2)
        self.evaluate_batch = evaluate_batch
        self.name = name or f"inexact({base.name})"

    # -- pass-through declarations of the base family ------------------------
    @property
    def dim(self):
        return self.base.dim

    @property
    def domain(self):
        return self.base.domain

    @property
    def lipschitz_sup(self):
        return self.base.lipschitz_sup

    @property
    def block_sizes(self):
        return self.base.block_sizes

    @property
    def block_lipschitz(self):
        return self.base.block_lipschitz

    @property
    def fixed_point(self):
        return self.base.fixed_point

    @property
    def declared_norm(self):
        return self.base.declared_norm

    def lipschitz_at(self, t) -> float:
        return self.base.lipschitz_at(t)

    # -- approximate evaluation ----------------------------------------------
    def evaluate(self, x, t) -> np.ndarray:
        return np.asarray(self._evaluate(np.asarray(x, dtype=float), int(t)), dtype=float)

    def exact_evaluate(self, x, t) -> np.ndarray:
        return self.base.evaluate(x, t)

    def error_bound_at(self, t) -> float:
        return float(self._error_bound(int(t)))

    def __repr__(self):
        return f"<InexactMapFamily {self.name!r} e_sup={self.error_sup:g}>"


def bounded_noise_draw(rng: np.random.Generator, dim: int, radius: float, norm: Norm) -> np.ndarray:
    """One draw from the closed radius-ball of the norm (uniform by volume)."""
    if radius == 0.0 or dim == 0:
        return np.zeros(dim)
    if norm.kind == LINF:
        return rng.uniform(-radius, radius, size=dim)
    g = rng.standard_normal(dim)
    g /= np.linalg.norm(g)
    return radius * rng.uniform(0.0, 1.0) ** (1.0 / dim) * g


def with_output_noise(base: MapFamily, error_bound, seed, norm: Norm | None = None,
                      adversarial=False, direction=None, error_sup=None) -> InexactMapFamily:
    """Perturb a family's outputs by a bounded, seeded amount.

    The perturbation at step t is a deterministic function of ``(seed, t)``:
    uniform on the ball of radius ``error_bound(t)`` by default, or a constant
    offset of that radius along ``direction`` when ``adversarial`` is set
    (this makes steady-state bounds near-tight). Outputs are projected back
    onto the domain, which cannot increase the deviation because projections
    are nonexpansive and the exact output lies in the domain.
    """
    norm = norm if norm is not None else Norm(L2)
    if callable(error_bound):
        bound_at = error_bound
        if error_sup is None:
            raise PreconditionError("error_sup required for a time-varying bound")
    else:
        const = float(error_bound)
        bound_at = lambda t, c=const: c  # noqa: E731 - tiny closure
        error_sup = const

    if adversarial:
        if direction is None:
            direction = np.ones(base.dim)
        direction = np.asarray(direction, dtype=float)
        unit = direction / norm.of(direction)

        def offset(t):
            return bound_at(t) * unit
    else:

        def offset(t):
            return bounded_noise_draw(seeded_stream(seed, t), base.dim, bound_at(t), norm)

    def evaluate(x, t):
        return base.domain.project(base.evaluate(x, t) + offset(t))

    return InexactMapFamily(base, evaluate, bound_at, error_sup=error_sup, norm=norm)


# ---------------------------------------------------------------------------
# Batch solving and fixed-point series
# ---------------------------------------------------------------------------


def solve_fixed_point(family, t, x0, tol=1e-12, max_iter=100_000, norm: Norm | None = None,
                      return_info=False):
    """Iterate the time-t map from ``x0`` until the residual drops below tol.

    Returns the final iterate (whose residual is at most ``tol`` thanks to the
    declared contraction). Raises :class:`NonConvergenceError` at the
    iteration cap and :class:`DomainViolationError` if an iterate leaves the
    declared domain, which signals a false self-map declaration.
    """
    if tol <= 0.0:
        raise PreconditionError("tolerance must be positive")
    norm = norm if norm is not None else Norm(L2)
    x = np.asarray(x0, dtype=float).reshape(family.dim)
    if not family.domain.contains(x):
        raise PreconditionError("initial point lies outside the declared domain")
    residuals = []
    for k in range(int(max_iter)):
        fx = family.evaluate(x, t)
        if not family.domain.contains(fx):
            raise DomainViolationError(
                f"iterate left the domain at time index {t} (iteration {k})"
            )
        r = norm.distance(fx, x)
        residuals.append(r)
        if r <= tol:
            if return_info:
                return fx, {"iterations": k + 1, "residuals": np.asarray(residuals)}
            return fx
        x = fx
    raise NonConvergenceError(
        f"no convergence after {max_iter} iterations at time index {t} "
        f"(residual {residuals[-1]:.3e} > tol {tol:.3e})",
        residual=residuals[-1],
        iterations=int(max_iter),
        time_index=int(t),
    )


@dataclass
class FixedPointSeries:
    """Reference fixed points of a family over a finite horizon.

    ``points[k]`` is the fixed point at t = k + 1; ``drifts[k]`` is the norm
    of the step between consecutive fixed points (the drift at t = k + 1) and
    ``drift_sup`` its maximum over the horizon, the finite-horizon stand-in
    for the drift supremum.
    """

    horizon: int
    points: np.ndarray
    residuals: np.ndarray
    drifts: np.ndarray
    drift_sup: float
    norm: Norm

    def __post_init__(self):
        if self.horizon != len(self.points):
            raise LengthMismatchError("horizon and points disagree")


def compute_fixed_point_series(family, horizon, norm: Norm | None = None, tol=1e-12,
                               max_iter=100_000, x0=None, use_closed_form=True) -> FixedPointSeries:
    """Solve for the fixed point at every t = 1..horizon.

    Uses the family's closed form when available, otherwise batch iteration
    warm-started from the previous fixed point. Residuals are always
    recomputed from the map so a bad closed form cannot pass silently.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    norm = norm if norm is not None else Norm(L2)
    base = getattr(family, "base", family)
    points = np.empty((horizon, base.dim))
    residuals = np.empty(horizon)
    closed = base.fixed_point if (use_closed_form and base.fixed_point is not None) else None
    warm = np.asarray(x0, dtype=float) if x0 is not None else base.domain.anchor()
    for k in range(horizon):
        t = k + 1
        if closed is not None:
            p = np.asarray(closed(t), dtype=float).reshape(base.dim)
        else:
            p = solve_fixed_point(base, t, warm, tol=tol, max_iter=max_iter, norm=norm)
            warm = p
        r = norm.distance(base.evaluate(p, t), p)
        if r > tol:
            raise NonConvergenceError(
                f"fixed-point residual {r:.3e} above tolerance at time index {t}",
                residual=r,
                time_index=t,
            )
        points[k] = p
        residuals[k] = r
    if horizon > 1:
        drifts = norm.of_rows(points[1:] - points[:-1])
    else:
        drifts = np.zeros(0)
    drift_sup = float(drifts.max()) if drifts.size else 0.0
    return FixedPointSeries(horizon, points, residuals, drifts, drift_sup, norm)


# ---------------------------------------------------------------------------
# Online tracking
# ---------------------------------------------------------------------------


@dataclass
class TrackingTrace:
    """Iterates of an online run together with reference fixed points.

    ``errors[k]`` is the tracking error at t = k + 1 in the trace norm.
    ``metadata`` carries the seed, per-step map-error bounds, and (for
    asynchronous runs) realized delay statistics.
    """

    iterates: np.ndarray
    reference: FixedPointSeries
    errors: np.ndarray
    norm: Norm
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.iterates)

    def tail_max(self, tail_fraction=0.1) -> float:
        """Maximum error over the trailing window (default last 10%)."""
        start = min(self.horizon - 1, int(np.floor(self.horizon * (1.0 - tail_fraction))))
        return float(self.errors[start:].max())


def tracking_error(iterates, reference, norm: Norm) -> np.ndarray:
    """Per-step distance between iterates and reference fixed points."""
    iterates = np.asarray(iterates, dtype=float)
    points = reference.points if isinstance(reference, FixedPointSeries) else np.asarray(reference, dtype=float)
    if len(iterates) != len(points):
        raise LengthMismatchError(
            f"iterates ({len(iterates)}) and reference ({len(points)}) differ in length"
        )
    return norm.of_rows(iterates - points)


def run_online_tracker(family, x0, horizon, norm: Norm | None = None, reference=None,
                       ref_tol=1e-12, ref_max_iter=100_000) -> TrackingTrace:
    """Run the online iteration ``x <- f~(x, t)`` for t = 1..horizon-1.

    The family may be exact or inexact; one map application is spent per time
    step. Reference fixed points are computed independently (closed form or
    batch iteration on the exact base family) and are not reused by the
    online iterates. A horizon of 1 returns the initial error only.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    norm = norm if norm is not None else Norm(L2)
    x = np.asarray(x0, dtype=float).reshape(family.dim)
    if not family.domain.contains(x):
        raise PreconditionError("initial point lies outside the declared domain")
    iterates = np.empty((horizon, family.dim))
    iterates[0] = x
    for k in range(horizon - 1):
        t = k + 1
        x = family.evaluate(x, t)
        if not family.domain.contains(x):
            raise DomainViolationError(f"online iterate left the domain at time index {t}")
        iterates[k + 1] = x
    if reference is None:
        reference = compute_fixed_point_series(
            family, horizon, norm=norm, tol=ref_tol, max_iter=ref_max_iter
        )
    errors = tracking_error(iterates, reference, norm)
    return TrackingTrace(
        iterates,
        reference,
        errors,
        norm,
        metadata={"map_error_bounds": map_error_bound_series(family, horizon),
                  "delay_stats": None},
    )


def map_error_bound_series(family, horizon) -> np.ndarray:
    """Declared approximation bounds for steps 1..horizon-1."""
    if getattr(family, "error_sup", 0.0) == 0.0:
        return np.zeros(max(int(horizon) - 1, 0))
    return np.array([family.error_bound_at(t) for t in range(1, int(horizon))])


# ---------------------------------------------------------------------------
# Empirical assumption audits
# ---------------------------------------------------------------------------


@dataclass
class LipschitzEstimate:
    """Sampled lower bound on a map's Lipschitz constant.

    ``value`` never exceeds the true constant; ``degenerate`` flags that all
    sampled pairs coincided (insufficient sampling).
    """

    value: float
    pairs_used: int
    degenerate: bool
    worst_pair: tuple | None = None


def _evaluate_rows(family, X, t):
    batch = getattr(family, "evaluate_batch", None)
    if batch is not None:
        return np.asarray(batch(np.asarray(X, dtype=float), int(t)), dtype=float)
    return np.stack([family.evaluate(x, t) for x in X])


def estimate_lipschitz(family, t, sampler: DomainSampler, n_pairs, norm: Norm) -> LipschitzEstimate:
    """Max sampled ratio ||f(x)-f(x')|| / ||x-x'|| over seeded domain pairs."""
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise PreconditionError("need at least one pair")
    X = sampler.draw(n_pairs)
    Y = sampler.draw(n_pairs)
    den = norm.of_rows(X - Y)
    mask = den > 0.0
    if not np.any(mask):
        return LipschitzEstimate(0.0, 0, True)
    num = norm.of_rows(_evaluate_rows(family, X[mask], t) - _evaluate_rows(family, Y[mask], t))
    ratios = num / den[mask]
    i = int(np.argmax(ratios))
    idx = np.flatnonzero(mask)[i]
    return LipschitzEstimate(float(ratios[i]), int(mask.sum()), False, (X[idx], Y[idx]))


@dataclass
class SelfMapCheck:
    ok: bool
    counterexample: np.ndarray | None
    n_checked: int


def verify_self_map(family, t, sampler: DomainSampler, n_samples, tol=1e-9) -> SelfMapCheck:
    """Sampled check that the time-t map sends the domain into itself."""
    n_samples = int(n_samples)
    if n_samples < 1:
        raise PreconditionError("need at least one sample")
    X = sampler.draw(n_samples)
    inside = family.domain.contains_rows(_evaluate_rows(family, X, t), tol=tol)
    if np.all(inside):
        return SelfMapCheck(True, None, n_samples)
    bad = int(np.argmin(inside))
    return SelfMapCheck(False, X[bad], n_samples)


@dataclass
class MapErrorCheck:
    max_observed: float
    bound: float
    ok: bool
    n_checked: int


def verify_map_error(family: InexactMapFamily, t, sampler: DomainSampler, n_samples,
                     norm: Norm, slack=1e-9) -> MapErrorCheck:
    """Sampled check of the declared approximation bound at time t."""
    n_samples = int(n_samples)
    X = sampler.draw(n_samples)
    approx = _evaluate_rows(family, X, t)
    exact = _evaluate_rows(family.base, X, t)
    observed = float(norm.of_rows(approx - exact).max()) if n_samples else 0.0
    bound = family.error_bound_at(t)
    return MapErrorCheck(observed, bound, observed <= bound + slack, n_samples)
