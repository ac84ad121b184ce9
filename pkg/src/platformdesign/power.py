"""Monte Carlo power evaluation and minimal sample-size search.

Power is the minimum, across all comparisons, of the empirical rejection
proportions under the alternative.  The sample-size search doubles an initial
N until the target power is reached, then binary-searches the bracket.  One
pool of standard normal draws per seed is rescaled for every candidate N
(common random numbers), so the power curve the search walks is monotone and
the returned N* is stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import Allocation, DesignScenario
from .correlation import ArmCorrelations, arm_mean_covariance
from .errors import BudgetExceeded, DomainError
from .multiplicity import ThresholdResult
from .mvnorm import cholesky, std_normal_cdf

__all__ = [
    "PowerRequest",
    "PowerSummary",
    "SampleSizeResult",
    "mc_power",
    "mc_power_summary",
    "marginal_power_oracle",
    "find_sample_size",
]


@dataclass(frozen=True)
class PowerRequest:
    """Inputs for one Monte Carlo power evaluation."""

    scenario: DesignScenario
    alloc: Allocation
    threshold: ThresholdResult
    N: int
    n_sim: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_sim < 1_000:
            raise DomainError("n_sim must be at least 1000")
        if self.N < 2 * self.scenario.K + 1:
            raise DomainError(
                f"N={self.N} cannot give every one of {2 * self.scenario.K + 1} arms a subject"
            )


@dataclass(frozen=True)
class PowerSummary:
    """Per-comparison rejection proportions plus joint diagnostics.

    ``minimum`` is the power definition used throughout; ``reject_all`` (the
    probability that every comparison rejects) is auxiliary output only.
    """

    minimum: float
    per_comparison: tuple[float, ...]
    reject_all: float


def _draw_pool(dim: int, n_sim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 3])
    return rng.standard_normal((n_sim, dim))


def _z_statistics(means: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Standardized contrasts vs the control column, in test order
    (combo_1, mono_1, combo_2, mono_2, ...)."""
    n_arms = cov.shape[0]
    K = (n_arms - 1) // 2
    z = np.empty((means.shape[0], 2 * K))
    for k in range(1, K + 1):
        mono, combo = 2 * k - 1, 2 * k
        for out_col, arm in ((2 * (k - 1), combo), (2 * (k - 1) + 1, mono)):
            var = cov[arm, arm] + cov[0, 0] - 2.0 * cov[arm, 0]
            if var <= 0.0:
                raise DomainError("a contrast variance is not positive")
            z[:, out_col] = (means[:, arm] - means[:, 0]) / math.sqrt(var)
    return z


def _summarize(z: np.ndarray, critical_value: float) -> PowerSummary:
    rejected = np.abs(z) > critical_value
    per_comparison = rejected.mean(axis=0)
    return PowerSummary(
        minimum=float(per_comparison.min()),
        per_comparison=tuple(float(p) for p in per_comparison),
        reject_all=float(rejected.all(axis=1).mean()),
    )


def _summary_from_sizes(
    pool: np.ndarray,
    scenario: DesignScenario,
    arm_sizes,
    critical_value: float,
    correlations: ArmCorrelations | None = None,
) -> PowerSummary:
    mean, cov = arm_mean_covariance(scenario, arm_sizes, correlations)
    means = mean + pool @ cholesky(cov).factor.T
    return _summarize(_z_statistics(means, cov), critical_value)


def mc_power_summary(
    request: PowerRequest, correlations: ArmCorrelations | None = None
) -> PowerSummary:
    """Simulate arm means under the alternative and summarize rejections."""
    pool = _draw_pool(2 * request.scenario.K + 1, request.n_sim, request.seed)
    return _summary_from_sizes(
        pool,
        request.scenario,
        np.asarray(request.alloc.ratios) * request.N,
        request.threshold.critical_value,
        correlations,
    )


def mc_power(request: PowerRequest, correlations: ArmCorrelations | None = None) -> float:
    """Minimum empirical rejection proportion across the 2K comparisons."""
    return mc_power_summary(request, correlations).minimum


def marginal_power_oracle(W: float, c: float) -> float:
    """Exact two-sided rejection probability for one comparison.

    Under the alternative the statistic is normal with unit variance and mean
    sqrt(W), so the rejection probability is 1 - cdf(c - sqrt(W)) +
    cdf(-c - sqrt(W)).  Used as an independent cross-check on the Monte Carlo
    path.
    """
    if W < 0:
        raise DomainError("noncentrality must be nonnegative")
    if c <= 0:
        raise DomainError("critical value must be positive")
    shift = math.sqrt(W)
    return 1.0 - std_normal_cdf(c - shift) + std_normal_cdf(-c - shift)


@dataclass(frozen=True)
class SampleSizeResult:
    """Outcome of the doubling + binary-search procedure."""

    n_star: int
    achieved_power: float
    search_trace: tuple[tuple[int, float], ...]
    arm_counts: tuple[int, ...]


def find_sample_size(
    scenario: DesignScenario,
    alloc: Allocation,
    threshold: ThresholdResult,
    target_power: float,
    N0: int = 20,
    n_sim: int = 10_000,
    seed: int = 0,
    n_cap: int = 1_000_000,
    correlations: ArmCorrelations | None = None,
) -> SampleSizeResult:
    """Minimal total N whose Monte Carlo power reaches ``target_power``.

    Doubling from ``N0`` locates a passing upper bound, then binary search
    narrows to the smallest passing N.  All evaluations share one pool of
    draws rescaled per N.  The reported achieved power is re-evaluated at the
    largest-remainder-rounded integer arm counts.
    """
    if not 0.0 < target_power < 1.0:
        raise DomainError(f"target power must lie in (0, 1), got {target_power}")
    min_n = 2 * scenario.K + 1
    if N0 < min_n:
        raise DomainError(f"N0 must be at least {min_n}")

    pool = _draw_pool(2 * scenario.K + 1, n_sim, seed)
    ratios = np.asarray(alloc.ratios)
    trace: list[tuple[int, float]] = []

    def power_at(n: int) -> float:
        value = _summary_from_sizes(
            pool, scenario, ratios * n, threshold.critical_value, correlations
        ).minimum
        trace.append((n, value))
        return value

    n_star = _search_minimal_n(power_at, target_power, N0, min_n, n_cap)
    counts = alloc.arm_counts(n_star)
    achieved = _summary_from_sizes(
        pool, scenario, counts, threshold.critical_value, correlations
    ).minimum
    return SampleSizeResult(
        n_star=n_star,
        achieved_power=achieved,
        search_trace=tuple(trace),
        arm_counts=counts,
    )


def _search_minimal_n(
    power_at, target: float, n0: int, floor: int, cap: int
) -> int:
    """Doubling then binary search; assumes power_at is nondecreasing in N.

    If N0 already passes, the search floor is the smallest feasible N.
    Raises :class:`BudgetExceeded` when doubling passes ``cap`` without
    reaching the target.
    """
    n = n0
    current = power_at(n)
    if current >= target:
        low, high = floor, n
    else:
        while current < target:
            if 2 * n > cap:
                raise BudgetExceeded(
                    f"power {current:.4f} < {target} at N={n}; cap {cap} reached"
                )
            n *= 2
            current = power_at(n)
        low, high = n // 2, n

    while low < high:
        mid = (low + high) // 2
        if power_at(mid) >= target:
            high = mid
        else:
            low = mid + 1
    return low
