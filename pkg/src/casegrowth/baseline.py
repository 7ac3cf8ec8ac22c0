"""Two-point and fixed-window least-squares growth rate estimators.

A fixed ``delta``-day window fit of log incidence on the day index has a
closed-form expression as a convex combination of the ``delta - 1`` two-point
estimators inside the window.  The combination weights depend only on
``delta`` and the offset from the window's newest day, so they are computed
once per ``delta`` and cached.  The decomposition, weight laws and the
equality with the direct least-squares slope are exercised by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from casegrowth.errors import DomainError, InsufficientDataError

DELTA_GRID = tuple(range(2, 15))  # default search grid for window selection


@dataclass(frozen=True)
class RateEstimate:
    """A per-day exponential growth rate estimate for one county."""

    county: str
    day: int
    rate: float
    method: str
    window: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.rate):
            raise DomainError(f"non-finite rate for {self.county} day {self.day}")
        if self.day < 2:
            raise DomainError("a rate needs two observed days; day must be >= 2")


@dataclass(frozen=True)
class OLSWeights:
    """Convex weights over the two-point estimators in a fitting window.

    ``weights[k]`` multiplies the two-point estimate ending on day ``t - k``,
    i.e. storage is newest-first; ``day_for_index`` makes the offset explicit.
    """

    delta: int
    weights: tuple[float, ...]

    def day_for_index(self, t: int, k: int) -> int:
        return t - k

    def __len__(self) -> int:
        return len(self.weights)


def two_point_rate(ln_now: float, ln_prev: float) -> float:
    """Log-ratio of consecutive days' incident counts."""
    if not (np.isfinite(ln_now) and np.isfinite(ln_prev)):
        raise InsufficientDataError("two-point rate needs both log values finite")
    return ln_now - ln_prev


@lru_cache(maxsize=None)
def ols_weights(delta: int) -> OLSWeights:
    """Weights of the two-point decomposition of a ``delta``-day window fit.

    Window days are ``t - delta + 1 .. t``; the weight for the two-point
    estimate ending on day ``t_minus`` is

        sum_{i=t_minus..t} (i - m) / sum_{i=t-delta+1..t} (i - (t-delta+1)) (i - m)

    with ``m`` the window's mean day.  Translation invariance in ``t`` lets us
    evaluate at any anchor.
    """
    if delta < 2:
        raise DomainError(f"window size must be >= 2, got {delta}")
    t = 0  # anchor; weights depend only on the offset from t
    lo = t - delta + 1
    m = (2 * t - delta + 1) / 2
    denom = sum((i - lo) * (i - m) for i in range(lo, t + 1))
    weights = tuple(
        sum(i - m for i in range(t_minus, t + 1)) / denom
        for t_minus in range(t, t - delta + 1, -1)
    )
    return OLSWeights(delta, weights)


def ols_fixed_rate(table, county: str, t: int, delta: int) -> RateEstimate:
    """Fixed-window rate at (county, t): the weighted sum of two-point
    estimates inside the window, equal to the least-squares slope of log
    incidence on the day index over days ``t - delta + 1 .. t``.

    Every day in the window must be present; a gap is an error rather than a
    silent window shrink, since shrinking would change what ``delta`` means to
    the window selectors.
    """
    w = ols_weights(delta)
    ci = table.county_index(county)
    missing = [d for d in range(t - delta + 1, t + 1) if not table.has_ln(d, ci)]
    if missing:
        raise InsufficientDataError(
            f"county {county} day {t}: window {delta} missing days {missing}"
        )
    rate = 0.0
    for k, weight in enumerate(w.weights):
        day = w.day_for_index(t, k)
        rate += weight * (table.ln(day, ci) - table.ln(day - 1, ci))
    return RateEstimate(county=county, day=t, rate=rate, method=f"ols:{delta}", window=delta)


def window_slope(ln_values: np.ndarray) -> float:
    """Direct least-squares slope of a complete log-incidence window.

    Used by the selectors' inner loops on already-validated windows; the
    public path with gap checking is :func:`ols_fixed_rate`.
    """
    delta = ln_values.shape[0]
    rate = 0.0
    weights = ols_weights(delta).weights
    for k, weight in enumerate(weights):
        rate += weight * (ln_values[delta - 1 - k] - ln_values[delta - 2 - k])
    return rate
