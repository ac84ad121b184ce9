"""Allocation-ratio optimization under a synergy model.

The design problem: split a total sample across a shared control arm and, per
substudy, a monotherapy arm and a combination arm, so that the smaller of the
two Wald noncentrality parameters in every substudy is as large as possible.
A softmax re-parameterization turns the open-simplex constraint into an
unconstrained search; when there is a single substudy and the combination arm
is uncorrelated with control, the optimum has a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DomainError

__all__ = [
    "DesignScenario",
    "Allocation",
    "SoftmaxParams",
    "softmax_to_allocation",
    "wald_noncentrality",
    "closed_form_allocation",
    "optimize_allocation",
]

_SUM_TOL = 1e-9


def _as_tuple(value, length: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * length
    out = tuple(float(v) for v in value)
    if len(out) != length:
        raise DomainError(f"{name} must have one entry per substudy ({length}), got {len(out)}")
    return out


@dataclass(frozen=True)
class DesignScenario:
    """Per-substudy effect sizes, synergy, variance, and arm correlations.

    ``delta[k]`` is the monotherapy effect over control in substudy k and
    ``synergy[k]`` scales it to the combination effect.  Correlations with the
    monotherapy arm (``rho_combo_mono``) matter for power simulation but not
    for the allocation optimum; the combination-control correlation
    (``rho_combo_control``) enters the noncentrality denominator directly.
    """

    delta: tuple[float, ...]
    synergy: tuple[float, ...]
    sigma2: float = 1.0
    rho_combo_control: tuple[float, ...] = ()
    rho_combo_mono: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        delta = _as_tuple(self.delta, 1 if np.isscalar(self.delta) else len(self.delta), "delta")
        k = len(delta)
        synergy = _as_tuple(self.synergy, k, "synergy")
        rho_cc = _as_tuple(self.rho_combo_control or 0.0, k, "rho_combo_control")
        rho_cm = _as_tuple(self.rho_combo_mono or 0.0, k, "rho_combo_mono")
        if any(d <= 0 for d in delta):
            raise DomainError("every delta must be positive")
        if self.sigma2 <= 0:
            raise DomainError("sigma2 must be positive")
        for rho in (*rho_cc, *rho_cm):
            if not -1.0 <= rho <= 1.0:
                raise DomainError(f"correlations must lie in [-1, 1], got {rho}")
        if any(not math.isfinite(s) for s in synergy):
            raise DomainError("synergy values must be finite")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "synergy", synergy)
        object.__setattr__(self, "rho_combo_control", rho_cc)
        object.__setattr__(self, "rho_combo_mono", rho_cm)

    @property
    def K(self) -> int:
        return len(self.delta)

    @classmethod
    def single(
        cls,
        delta: float,
        synergy: float,
        sigma2: float = 1.0,
        rho_ab_a: float = 0.0,
        rho_ab_b: float = 0.0,
    ) -> "DesignScenario":
        return cls((delta,), (synergy,), sigma2, (rho_ab_a,), (rho_ab_b,))


@dataclass(frozen=True)
class Allocation:
    """Point on the open simplex, ordered (p_A, p_B1, p_AB1, ..., p_BK, p_ABK)."""

    ratios: tuple[float, ...]
    n_total: int | None = None

    def __post_init__(self) -> None:
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) < 3 or len(ratios) % 2 == 0:
            raise DomainError(f"allocation needs 2K+1 ratios, got {len(ratios)}")
        if any(not 0.0 < r < 1.0 for r in ratios):
            raise DomainError("allocation ratios must lie strictly in (0, 1)")
        if abs(sum(ratios) - 1.0) > _SUM_TOL:
            raise DomainError(f"allocation ratios must sum to 1, got {sum(ratios)!r}")
        if self.n_total is not None and self.n_total < 1:
            raise DomainError("n_total must be a positive integer")
        object.__setattr__(self, "ratios", ratios)

    @property
    def K(self) -> int:
        return (len(self.ratios) - 1) // 2

    @property
    def p_control(self) -> float:
        return self.ratios[0]

    def p_mono(self, k: int = 1) -> float:
        return self.ratios[2 * k - 1]

    def p_combo(self, k: int = 1) -> float:
        return self.ratios[2 * k]

    @classmethod
    def equal(cls, K: int = 1, n_total: int | None = None) -> "Allocation":
        n_arms = 2 * K + 1
        return cls((1.0 / n_arms,) * n_arms, n_total)

    def arm_counts(self, n_total: int | None = None) -> tuple[int, ...]:
        """Integer per-arm counts by largest-remainder rounding, each >= 1."""
        n = n_total if n_total is not None else self.n_total
        if n is None:
            raise DomainError("no total sample size available for rounding")
        if n < len(self.ratios):
            raise DomainError(f"need at least one subject per arm: N={n} < {len(self.ratios)}")
        raw = np.asarray(self.ratios) * n
        counts = np.floor(raw).astype(int)
        remainder = raw - counts
        for idx in np.argsort(-remainder)[: n - int(counts.sum())]:
            counts[idx] += 1
        # bump empty arms up to one subject, taking from the largest arm
        while np.any(counts == 0):
            counts[int(np.argmax(counts))] -= 1
            counts[int(np.argmin(counts))] += 1
        return tuple(int(c) for c in counts)


@dataclass(frozen=True)
class SoftmaxParams:
    """Unconstrained parameters mapping onto the allocation simplex."""

    theta: tuple[float, ...]

    def __post_init__(self) -> None:
        theta = tuple(float(t) for t in self.theta)
        if any(not math.isfinite(t) for t in theta):
            raise DomainError("softmax parameters must be finite")
        object.__setattr__(self, "theta", theta)


def _softmax(theta: np.ndarray) -> np.ndarray:
    shifted = theta - theta.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_to_allocation(
    theta: SoftmaxParams | Sequence[float], n_total: int | None = None
) -> Allocation:
    """Map unconstrained parameters to positive ratios summing to one.

    Invariant to adding a constant to every parameter, so optimizers can roam
    the redundant direction freely.
    """
    values = theta.theta if isinstance(theta, SoftmaxParams) else theta
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise DomainError("softmax parameters must be a finite 1-d vector")
    return Allocation(tuple(_softmax(arr)), n_total)


def _w1_denominator(p_combo: float, p_control: float, rho: float) -> float:
    return 1.0 / p_combo + 1.0 / p_control - 2.0 * rho / math.sqrt(p_combo * p_control)


def wald_noncentrality(
    scenario: DesignScenario, alloc: Allocation, n_total: int
) -> np.ndarray:
    """Per-substudy Wald noncentrality pairs, shape (K, 2).

    Column 0 is the combination-vs-control parameter, column 1 the
    monotherapy-vs-control parameter (independent of the combination arm).
    """
    if alloc.K != scenario.K:
        raise DomainError(f"allocation has K={alloc.K} but scenario has K={scenario.K}")
    if n_total < 1:
        raise DomainError("n_total must be at least 1")
    p_a = alloc.p_control
    out = np.empty((scenario.K, 2))
    for k in range(1, scenario.K + 1):
        delta = scenario.delta[k - 1]
        s = scenario.synergy[k - 1]
        rho = scenario.rho_combo_control[k - 1]
        denom1 = _w1_denominator(alloc.p_combo(k), p_a, rho)
        if denom1 <= 0.0:
            raise DomainError(
                f"combination-control variance is not positive in substudy {k} "
                f"(rho={rho}, p_combo={alloc.p_combo(k)}, p_control={p_a})"
            )
        out[k - 1, 0] = n_total * s**2 * delta**2 / (scenario.sigma2 * denom1)
        out[k - 1, 1] = (
            n_total * delta**2
            / (scenario.sigma2 * (1.0 / p_a + 1.0 / alloc.p_mono(k)))
        )
    return out


def closed_form_allocation(s: float, n_total: int | None = None) -> Allocation:
    """Closed-form single-substudy allocation for the zero-correlation case,
    determined by the synergy parameter alone.

    The formula gives the monotherapy arm s times the combination arm's share
    and maximizes the combination noncentrality along that ray.  At s = 1 it
    coincides with the max-min optimum; away from s = 1 the two noncentrality
    parameters are unequal here and :func:`optimize_allocation` finds a
    strictly better max-min point, so treat this as the analytic shortcut it
    is, not as the optimizer.
    """
    if s <= 0:
        raise DomainError(f"synergy must be positive, got {s}")
    root = math.sqrt(s + 1.0)
    p_a = (root - 1.0) / s
    p_b = (s + 1.0 - root) / (s + 1.0)
    p_ab = (s + 1.0 - root) / (s * (s + 1.0))
    return Allocation((p_a, p_b, p_ab), n_total)


def _scaled_objective(scenario: DesignScenario, ratios: np.ndarray) -> float:
    """min over substudies and comparisons of the N- and sigma2-free
    noncentrality; -inf where a variance term degenerates."""
    p_a = ratios[0]
    worst = math.inf
    for k in range(scenario.K):
        p_b = ratios[2 * k + 1]
        p_ab = ratios[2 * k + 2]
        delta2 = scenario.delta[k] ** 2
        denom1 = _w1_denominator(p_ab, p_a, scenario.rho_combo_control[k])
        if denom1 <= 0.0:
            return -math.inf
        w1 = scenario.synergy[k] ** 2 * delta2 / denom1
        w2 = delta2 / (1.0 / p_a + 1.0 / p_b)
        worst = min(worst, w1, w2)
    return worst


def optimize_allocation(
    scenario: DesignScenario,
    seed: int = 0,
    n_starts: int = 8,
    n_total: int | None = None,
) -> Allocation:
    """Max-min allocation over the softmax-parameterized simplex.

    Runs a derivative-free simplex search from ``n_starts`` seeded Gaussian
    starting points and keeps the best result, ties resolved by start index.
    The max-min objective is kinked where the noncentralities cross, so the
    search is always performed directly; the zero-correlation closed form is
    not substituted because it only solves the max-min problem at s = 1.
    """
    dim = 2 * scenario.K + 1

    def negated(theta: np.ndarray) -> float:
        return -_scaled_objective(scenario, _softmax(theta))

    best: tuple[float, int, np.ndarray] | None = None
    for start in range(n_starts):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, start])
        theta0 = rng.standard_normal(dim)
        result = minimize(
            negated,
            theta0,
            method="Nelder-Mead",
            options={
                "xatol": 1e-8,
                "fatol": 1e-10,
                "maxiter": 4000 * dim,
                "maxfev": 4000 * dim,
            },
        )
        if not result.success or not math.isfinite(result.fun):
            continue
        if best is None or result.fun < best[0]:
            best = (float(result.fun), start, np.asarray(result.x))
    if best is None:
        raise ConvergenceError(
            f"allocation optimizer failed from all {n_starts} starting points"
        )
    return softmax_to_allocation(best[2], n_total)
