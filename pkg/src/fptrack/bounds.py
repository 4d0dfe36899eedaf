"""Closed-form tracking-error guarantees and the delayed-recursion verifier.

All functions are pure. Finite-horizon runs operationalize "limsup" as the
maximum over a trailing window of the horizon after a transient, which is the
convention used by the certificate checks in :mod:`fptrack.experiments`.

Naming: ``lipschitz`` is the contraction factor of the map family,
``map_error`` the uniform bound on the approximate map's deviation, ``drift``
the per-step movement of the fixed-point trajectory, ``max_delay`` the
worst-case staleness of a communicated block (in ticks), and ``max_stale``
the largest number of simultaneously outdated neighbor blocks at any agent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError, PreconditionError
from .norms import L2, Norm


@dataclass(frozen=True)
class BoundInputs:
    """Everything the asymptotic tracking bounds depend on."""

    lipschitz: float
    map_error: float = 0.0
    drift: float = 0.0
    max_delay: int = 0
    max_stale: int = 0
    dim: int = 1
    norm: Norm = Norm(L2)

    def __post_init__(self):
        if not math.isfinite(self.lipschitz) or self.lipschitz < 0.0:
            raise PreconditionError("lipschitz must be finite and nonnegative")
        if self.map_error < 0.0 or self.drift < 0.0:
            raise PreconditionError("map_error and drift must be nonnegative")
        if self.max_delay < 0 or self.max_stale < 0:
            raise PreconditionError("max_delay and max_stale must be nonnegative")
        if self.dim < 1:
            raise PreconditionError("dim must be positive")
        if self.max_stale > self.dim - 1:
            raise PreconditionError(
                f"max_stale must lie in [0, dim-1]; got {self.max_stale} with dim {self.dim}"
            )


def contraction_product(t, tau, lipschitz_series) -> float:
    """Product of per-step contraction factors over steps tau+1 .. t.

    ``lipschitz_series[k]`` holds the factor of step k+1, so the series must
    cover indices tau+1 .. t. Equals 1 when tau == t, and is bounded by
    ``sup_L ** (t - tau)`` for any upper bound sup_L on the series.
    """
    t, tau = int(t), int(tau)
    if tau < 0 or tau > t:
        raise IndexError(f"tau must lie in [0, t]; got tau={tau}, t={t}")
    if tau == t:
        return 1.0
    series = np.asarray(lipschitz_series, dtype=float)
    if len(series) < t:
        raise IndexError(f"series of length {len(series)} does not cover steps up to t={t}")
    return float(np.prod(series[tau:t]))


def per_step_bound(initial_error, map_error_series, drift_series, lipschitz_series, t) -> float:
    """Worst-case tracking error after t online steps.

    Unrolls the error recursion ``b(next) = L(t) * b + map_error(t) + drift(t)``
    from ``b = initial_error``; the result bounds the tracking error at time
    t+1. Series are indexed so that element k refers to step k+1 and must
    cover steps 1..t.
    """
    return float(per_step_bound_series(initial_error, map_error_series,
                                        drift_series, lipschitz_series, t)[t])


def per_step_bound_series(initial_error, map_error_series, drift_series,
                          lipschitz_series, t) -> np.ndarray:
    """Array of per-step bounds: entry k bounds the error at time k+1 (k <= t)."""
    t = int(t)
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    e = np.asarray(map_error_series, dtype=float)
    s = np.asarray(drift_series, dtype=float)
    L = np.asarray(lipschitz_series, dtype=float)
    if len(e) < t or len(s) < t or len(L) < t:
        raise LengthMismatchError(
            f"series must cover steps 1..{t}; got lengths {len(e)}, {len(s)}, {len(L)}"
        )
    out = np.empty(t + 1)
    out[0] = float(initial_error)
    for k in range(t):
        out[k + 1] = L[k] * out[k] + e[k] + s[k]
    return out


def _require_contractive(inputs: BoundInputs, factor: float, label: str) -> None:
    if factor >= 1.0:
        raise PreconditionError(
            f"{label}: effective contraction factor {factor:.6g} is >= 1, bound undefined"
        )


def tracking_bound_sync(inputs: BoundInputs) -> float:
    """Steady-state tracking error of the synchronous online iteration.

    ``(map_error + drift) / (1 - lipschitz)``; valid in the norm the family
    contracts in.
    """
    _require_contractive(inputs, inputs.lipschitz, "synchronous bound")
    return (inputs.map_error + inputs.drift) / (1.0 - inputs.lipschitz)


def tracking_bound_async_inf(inputs: BoundInputs) -> float:
    """Steady-state bound for asynchronous updates under the max norm.

    ``(map_error + drift * (1 + L * max_delay)) / (1 - L)``. Requires the
    family to contract in the max norm; staleness inflates only the drift
    term because outdated copies lag the moving fixed point.
    """
    if not inputs.norm.is_linf:
        raise PreconditionError("asynchronous max-norm bound requires the linf norm")
    _require_contractive(inputs, inputs.lipschitz, "asynchronous max-norm bound")
    L = inputs.lipschitz
    return (inputs.map_error + inputs.drift * (1.0 + L * inputs.max_delay)) / (1.0 - L)


def tracking_bound_async_l2_equiv(inputs: BoundInputs) -> float:
    """Asynchronous bound for l2 contractions via norm equivalence.

    An l2 contraction with factor L is a max-norm contraction with factor
    ``L * sqrt(dim)`` when that is below 1, so the max-norm bound applies with
    the inflated factor. Fails when ``L * sqrt(dim) >= 1``.
    """
    if not inputs.norm.is_l2:
        raise PreconditionError("norm-equivalence bound requires the l2 norm")
    eff = inputs.lipschitz * math.sqrt(inputs.dim)
    _require_contractive(inputs, eff, "norm-equivalence bound (lipschitz * sqrt(dim))")
    return (inputs.map_error + inputs.drift * (1.0 + eff * inputs.max_delay)) / (1.0 - eff)


def tracking_bound_async_l2_refined(inputs: BoundInputs) -> float:
    """Refined asynchronous l2 bound using the stale-neighbor count.

    Only ``max_stale`` neighbor blocks can be outdated at once, so the
    effective factor is ``L * sqrt(max_stale + 1)`` instead of
    ``L * sqrt(dim)``; never worse than the norm-equivalence bound when both
    apply. Requires ``L * sqrt(max_stale + 1) < 1`` (strictly).
    """
    if not inputs.norm.is_l2:
        raise PreconditionError("refined asynchronous bound requires the l2 norm")
    eff = inputs.lipschitz * math.sqrt(inputs.max_stale + 1.0)
    _require_contractive(inputs, eff, "refined bound (lipschitz * sqrt(max_stale + 1))")
    return (inputs.map_error + inputs.drift * (1.0 + eff * inputs.max_delay)) / (1.0 - eff)


# ---------------------------------------------------------------------------
# Step-size windows for regularized projected gradient maps
# ---------------------------------------------------------------------------


def min_regularization(smoothness, max_stale) -> float:
    """Smallest regularization weight that leaves the step-size window open.

    ``(sqrt(max_stale + 1) - 1) / 2 * smoothness``; zero when no blocks are
    ever stale, so any positive regularization works in that case.
    """
    if smoothness <= 0.0:
        raise PreconditionError("smoothness must be positive")
    if max_stale < 0:
        raise PreconditionError("max_stale must be nonnegative")
    return 0.5 * (math.sqrt(max_stale + 1.0) - 1.0) * float(smoothness)


def stale_contraction_threshold(max_stale) -> float:
    """Contraction factor a map must beat for the refined bound: 1/sqrt(max_stale+1)."""
    return 1.0 / math.sqrt(int(max_stale) + 1.0)


def stale_contraction_ratio(max_stale) -> float:
    """kappa = (sqrt(s+1) - 1)/(sqrt(s+1) + 1) for s stale blocks.

    The regularization threshold is ``kappa / (1 - kappa) * smoothness``,
    which is how :func:`min_regularization` arises.
    """
    root = math.sqrt(int(max_stale) + 1.0)
    return (root - 1.0) / (root + 1.0)


@dataclass(frozen=True)
class GradientProblemConstants:
    """Constants governing a regularized projected gradient map's step window."""

    smoothness: float
    regularization: float
    step_size: float
    max_stale: int = 0

    def __post_init__(self):
        if self.smoothness <= 0.0:
            raise PreconditionError("smoothness must be positive")
        if self.regularization < 0.0:
            raise PreconditionError("regularization must be nonnegative")
        if self.step_size <= 0.0:
            raise PreconditionError("step size must be positive")
        if self.max_stale < 0:
            raise PreconditionError("max_stale must be nonnegative")

    @property
    def kappa(self) -> float:
        return stale_contraction_ratio(self.max_stale)

    @property
    def contraction(self) -> float:
        return projected_gradient_contraction(
            self.step_size, self.smoothness, self.regularization
        )


def gradient_step_window(smoothness, regularization, max_stale):
    """Step sizes for which the regularized gradient map beats the stale threshold.

    Returns ``(lo, hi)`` with
    ``lo = (1/reg) * (1 - 1/sqrt(max_stale+1))`` and
    ``hi = (1/(smoothness+reg)) * (1 + 1/sqrt(max_stale+1))``,
    or ``None`` when ``lo > hi`` (empty window). The window is nonempty
    exactly when the regularization reaches :func:`min_regularization`.
    """
    if smoothness <= 0.0 or regularization <= 0.0:
        raise PreconditionError("smoothness and regularization must be positive")
    if max_stale < 0:
        raise PreconditionError("max_stale must be nonnegative")
    inv_root = 1.0 / math.sqrt(max_stale + 1.0)
    lo = (1.0 - inv_root) / float(regularization)
    hi = (1.0 + inv_root) / (float(smoothness) + float(regularization))
    if lo > hi:
        return None
    return (lo, hi)


def projected_gradient_contraction(step_size, smoothness, regularization) -> float:
    """Contraction factor of a projected regularized gradient map.

    For a convex objective with gradient-smoothness ``smoothness`` and a
    quadratic regularizer of weight ``regularization``, the projected step
    map has factor ``max(|1 - a*reg|, |1 - a*(smoothness+reg)|)`` at step
    size a; projection cannot increase it.
    """
    if step_size <= 0.0:
        raise PreconditionError("step size must be positive")
    a = float(step_size)
    return max(abs(1.0 - a * regularization), abs(1.0 - a * (smoothness + regularization)))


# ---------------------------------------------------------------------------
# Delayed geometric recursion (numeric verifier)
# ---------------------------------------------------------------------------


@dataclass
class DelayedRecursionResult:
    empirical_limsup: float
    bound: float
    passed: bool
    horizon: int


def delayed_recursion_check(offset, decay, max_lag, lag_schedule, horizon,
                            initial=None, tail_fraction=0.1, slack=1e-9) -> DelayedRecursionResult:
    """Simulate ``a(t) = offset + decay * a(t - lag(t))`` and test its tail.

    ``lag_schedule`` maps t (or indexes by t) to a lag in 1..max_lag; the
    first ``max_lag`` values of the sequence are given by ``initial``
    (defaulting to the equilibrium value ``offset / (1 - decay)``). Passes
    when the maximum over the trailing window does not exceed
    ``offset / (1 - decay) + slack``.
    """
    if not (0.0 < decay < 1.0):
        raise PreconditionError("decay must lie strictly between 0 and 1")
    if offset < 0.0:
        raise PreconditionError("offset must be nonnegative")
    max_lag = int(max_lag)
    horizon = int(horizon)
    if max_lag < 1 or horizon <= max_lag:
        raise PreconditionError("need max_lag >= 1 and horizon > max_lag")
    bound = offset / (1.0 - decay)
    a = np.empty(horizon + 1)  # a[1..horizon]; a[0] unused
    if initial is None:
        a[1 : max_lag + 1] = bound
    else:
        initial = np.asarray(initial, dtype=float)
        if len(initial) != max_lag:
            raise LengthMismatchError(f"initial must have length max_lag={max_lag}")
        a[1 : max_lag + 1] = initial
    lag_at = lag_schedule if callable(lag_schedule) else None
    lags = None if lag_at is not None else np.asarray(lag_schedule, dtype=int)
    for t in range(max_lag + 1, horizon + 1):
        lag = int(lag_at(t)) if lag_at is not None else int(lags[(t - max_lag - 1) % len(lags)])
        if not (1 <= lag <= max_lag):
            raise PreconditionError(f"lag {lag} at t={t} outside 1..{max_lag}")
        a[t] = offset + decay * a[t - lag]
    start = max(max_lag + 1, int(np.floor(horizon * (1.0 - tail_fraction))))
    tail_max = float(a[start : horizon + 1].max())
    return DelayedRecursionResult(tail_max, bound, tail_max <= bound + slack, horizon)
