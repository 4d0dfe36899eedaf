"""Box-constrained time-varying quadratic tracking problems.

The model: devices i = 1..N choose x_i in [lo_i, hi_i] to trade off quadratic
device costs (curvature a_i) against tracking a reference r(t) with the
measurable aggregate y(t) = c'x + w(t), weighted by ``tracking_weight``, plus
an optional quadratic regularizer. The projected gradient step for this
objective is a contraction whose factor follows from the extremal curvature
of the (constant) Hessian diag(a) + weight * c c' + reg * I.

The feedback variant replaces the modeled aggregate with a measurement of it,
turning the map family into an inexact one with a computable error bound.
The broadcast decomposition introduces one extra scalar block holding the
(scaled) measured aggregate, giving the star dependency structure used by the
asynchronous experiments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..async_sim import DependencyGraph
from ..core import InexactMapFamily, MapFamily, seeded_stream
from ..domains import Domain
from ..errors import ContractionUncertifiedError, PreconditionError
from ..norms import L2, Norm
from ._paths import ScalarSignal, scalar_signal


@dataclass
class TimeVaryingQP:
    """Instance data for the box-constrained quadratic tracking problem."""

    curvature: np.ndarray          # a_i > 0, one per device
    coupling: np.ndarray           # c, the aggregate's sensitivity to each device
    tracking_weight: float         # > 0
    regularization: float          # >= 0
    box_lo: np.ndarray
    box_hi: np.ndarray
    output_signal: ScalarSignal    # w(t), exogenous part of the aggregate
    reference_signal: ScalarSignal  # r(t)
    smoothness: float = field(init=False)

    def __post_init__(self):
        self.curvature = np.asarray(self.curvature, dtype=float)
        self.coupling = np.asarray(self.coupling, dtype=float).reshape(self.curvature.shape)
        self.box_lo = np.asarray(self.box_lo, dtype=float).reshape(self.curvature.shape)
        self.box_hi = np.asarray(self.box_hi, dtype=float).reshape(self.curvature.shape)
        if np.any(self.curvature <= 0.0):
            raise PreconditionError("device curvatures must be positive")
        if self.tracking_weight <= 0.0:
            raise PreconditionError("tracking weight must be positive")
        if self.regularization < 0.0:
            raise PreconditionError("regularization must be nonnegative")
        if np.any(self.box_lo >= self.box_hi):
            raise PreconditionError("boxes must have nonempty interior (lo < hi strictly)")
        # exact largest eigenvalue of diag(a) + weight * c c' (rank-one update)
        h = np.diag(self.curvature) + self.tracking_weight * np.outer(self.coupling, self.coupling)
        self.smoothness = float(np.linalg.eigvalsh(h)[-1])

    @property
    def n_devices(self) -> int:
        return self.curvature.size

    def gradient(self, x, t) -> np.ndarray:
        y = float(self.coupling @ x) + self.output_signal.value(t)
        return (
            self.curvature * x
            + self.tracking_weight * self.coupling * (y - self.reference_signal.value(t))
            + self.regularization * x
        )


def random_qp(n_devices, seed, regularization=None) -> TimeVaryingQP:
    """A seeded random instance with constant signals (used for window sweeps)."""
    rng = seeded_stream(seed, 411)
    n = int(n_devices)
    a = rng.uniform(0.5, 3.0, size=n)
    c = rng.uniform(-1.0, 1.0, size=n)
    if np.all(c == 0.0):
        c[0] = 1.0
    reg = float(regularization) if regularization is not None else float(rng.uniform(0.05, 1.5))
    half = rng.uniform(0.5, 2.0, size=n)
    return TimeVaryingQP(
        curvature=a,
        coupling=c,
        tracking_weight=float(rng.uniform(0.2, 2.0)),
        regularization=reg,
        box_lo=-half,
        box_hi=half,
        output_signal=scalar_signal("constant", start=float(rng.uniform(-1, 1))),
        reference_signal=scalar_signal("constant", start=float(rng.uniform(-1, 1))),
    )


class GradientMapFamily(MapFamily):
    """Projected regularized gradient step for a TimeVaryingQP."""

    def __init__(self, qp: TimeVaryingQP, step_size: float):
        self.qp = qp
        self.step_size = float(step_size)
        if self.step_size <= 0.0:
            raise PreconditionError("step size must be positive")
        n = qp.n_devices
        lo_curv = qp.regularization + float(qp.curvature.min())
        hi_curv = qp.regularization + qp.smoothness
        declared = max(abs(1.0 - self.step_size * lo_curv), abs(1.0 - self.step_size * hi_curv))
        a = self.step_size

        def evaluate(x, t):
            return np.clip(x - a * qp.gradient(x, t), qp.box_lo, qp.box_hi)

        def evaluate_batch(X, t):
            y = X @ qp.coupling + qp.output_signal.value(t)
            grad = (
                X * (qp.curvature + qp.regularization)
                + qp.tracking_weight * np.outer(y - qp.reference_signal.value(t), qp.coupling)
            )
            return np.clip(X - a * grad, qp.box_lo, qp.box_hi)

        super().__init__(
            dim=n,
            domain=Domain.box(qp.box_lo, qp.box_hi),
            evaluate=evaluate,
            lipschitz=declared,
            evaluate_batch=evaluate_batch,
            declared_norm=Norm(L2),
            name=f"qp-gradient-n{n}",
        )


def build_gradient_map(qp: TimeVaryingQP, step_size) -> GradientMapFamily:
    """Exact projected gradient map; declared factor from extremal curvature.

    The declared factor is ``max(|1 - a*lo|, |1 - a*hi|)`` with ``lo`` the
    regularization plus the smallest device curvature and ``hi`` the
    regularization plus the smoothness of the unregularized objective; both
    are eigenvalue bounds of the constant Hessian, so the sampled factor
    never exceeds the declaration.
    """
    return GradientMapFamily(qp, step_size)


def build_feedback_gradient_map(qp: TimeVaryingQP, step_size, noise_bound, seed,
                                norm: Norm | None = None, adversarial=False) -> InexactMapFamily:
    """Gradient map driven by a measured aggregate instead of the model.

    The measurement at step t is ``y + noise(t)`` with ``|noise| <=
    noise_bound``; since the projection is nonexpansive the map deviates from
    the exact one by at most ``step * weight * ||c|| * noise_bound`` (norm of
    the coupling taken in the experiment norm), which is the declared error
    bound.
    """
    norm = norm if norm is not None else Norm(L2)
    base = build_gradient_map(qp, step_size)
    nb = float(noise_bound)
    if nb < 0.0:
        raise PreconditionError("noise bound must be nonnegative")
    a = float(step_size)

    def noise(t):
        if adversarial:
            return nb
        return float(seeded_stream(seed, 3, t).uniform(-nb, nb))

    def evaluate(x, t):
        g = qp.gradient(x, t) + qp.tracking_weight * qp.coupling * noise(t)
        return np.clip(x - a * g, qp.box_lo, qp.box_hi)

    def evaluate_batch(X, t):
        y = X @ qp.coupling + qp.output_signal.value(t) + noise(t)
        grad = X * (qp.curvature + qp.regularization) + qp.tracking_weight * np.outer(
            y - qp.reference_signal.value(t), qp.coupling
        )
        return np.clip(X - a * grad, qp.box_lo, qp.box_hi)

    bound = a * qp.tracking_weight * norm.of(qp.coupling) * nb
    return InexactMapFamily(base, evaluate, bound, norm=norm,
                            name=f"qp-feedback-n{qp.n_devices}")


def star_partition(qp: TimeVaryingQP) -> DependencyGraph:
    """Star dependency structure: devices exchange only with an aggregator.

    Blocks are the N scalar device variables plus one aggregator block
    holding the broadcast measured aggregate; each device reads the
    aggregator and the aggregator reads every device.
    """
    n = qp.n_devices
    edges = [(n, i) for i in range(n)] + [(i, n) for i in range(n)]
    return DependencyGraph([1] * (n + 1), edges)


def build_broadcast_system(qp: TimeVaryingQP, step_size, noise_bound, seed,
                           agg_scale=None, adversarial=False):
    """Device/aggregator decomposition of the feedback gradient iteration.

    State: ``z = (x_1..x_N, m)`` where ``m`` stores the measured aggregate
    scaled by ``agg_scale`` (default ``sqrt(step * weight)``, which balances
    the two off-diagonal coupling blocks and keeps the joint map contractive
    for reasonable instances). Devices step using the aggregator's latest
    broadcast; the aggregator re-measures from the device values it has
    received. Measurement noise is bounded by ``noise_bound``, giving the
    error bound ``agg_scale * noise_bound`` on the joint state.

    Returns ``(family, graph)`` with ``graph = star_partition(qp)``.
    """
    n = qp.n_devices
    a = float(step_size)
    if a <= 0.0:
        raise PreconditionError("step size must be positive")
    nb = float(noise_bound)
    if nb < 0.0:
        raise PreconditionError("noise bound must be nonnegative")
    theta = float(agg_scale) if agg_scale is not None else float(np.sqrt(a * qp.tracking_weight))
    if theta <= 0.0:
        raise PreconditionError("aggregator scale must be positive")
    # Lipschitz certificate: spectral norm of the joint linear part; the box
    # projection on the device blocks cannot increase it.
    jac = np.zeros((n + 1, n + 1))
    jac[:n, :n] = np.diag(1.0 - a * (qp.curvature + qp.regularization))
    jac[:n, n] = -a * qp.tracking_weight * qp.coupling / theta
    jac[n, :n] = theta * qp.coupling
    declared = float(np.linalg.norm(jac, ord=2))
    if declared >= 1.0:
        raise ContractionUncertifiedError(
            f"broadcast system is not certified contractive (factor {declared:.4f} >= 1); "
            "reduce the step size, coupling, or tracking weight"
        )

    def split(z):
        return z[:n], z[n] / theta

    def base_evaluate(z, t):
        x, y = split(z)
        r = qp.reference_signal.value(t)
        g = (qp.curvature + qp.regularization) * x + qp.tracking_weight * qp.coupling * (y - r)
        x_new = np.clip(x - a * g, qp.box_lo, qp.box_hi)
        y_new = float(qp.coupling @ x) + qp.output_signal.value(t)
        return np.concatenate([x_new, [theta * y_new]])

    def base_evaluate_batch(Z, t):
        X, ys = Z[:, :n], Z[:, n] / theta
        r = qp.reference_signal.value(t)
        G = X * (qp.curvature + qp.regularization) + qp.tracking_weight * np.outer(
            ys - r, qp.coupling
        )
        Xn = np.clip(X - a * G, qp.box_lo, qp.box_hi)
        yn = X @ qp.coupling + qp.output_signal.value(t)
        return np.column_stack([Xn, theta * yn])

    lo = np.concatenate([qp.box_lo, [-np.inf]])
    hi = np.concatenate([qp.box_hi, [np.inf]])
    base = MapFamily(
        dim=n + 1,
        domain=Domain.box(lo, hi),
        evaluate=base_evaluate,
        lipschitz=declared,
        evaluate_batch=base_evaluate_batch,
        declared_norm=Norm(L2),
        name=f"qp-broadcast-n{n}",
    )

    def noise(t):
        if adversarial:
            return nb
        return float(seeded_stream(seed, 5, t).uniform(-nb, nb))

    def evaluate(z, t):
        out = base_evaluate(z, t)
        out[n] += theta * noise(t)
        return out

    def evaluate_batch(Z, t):
        out = base_evaluate_batch(Z, t)
        out[:, n] += theta * noise(t)
        return out

    family = InexactMapFamily(base, evaluate, theta * nb, norm=Norm(L2),
                              evaluate_batch=evaluate_batch,
                              name=f"qp-broadcast-feedback-n{n}")
    return family, star_partition(qp)
