"""Small numeric helpers shared across the toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError


@dataclass
class CompensatedSum:
    """Neumaier-compensated running sum.

    Long runs accumulate millions of small increments into counters
    whose magnitude grows to thousands of vehicles; naive summation
    drifts by more than the 1e-9 conservation budget. The compensation
    term keeps the error near one ulp of the total.
    """

    total: float = 0.0
    _comp: float = field(default=0.0, repr=False)

    def add(self, x: float) -> None:
        s = self.total + x
        if abs(self.total) >= abs(x):
            self._comp += (self.total - s) + x
        else:
            self._comp += (x - s) + self.total
        self.total = s

    @property
    def value(self) -> float:
        return self.total + self._comp


def piecewise_value(profile, t: float) -> float:
    """Value of a piecewise-constant profile [(t_start, value), ...] at time t.

    Breakpoints must be sorted ascending and start at or before t=0.
    """
    value = profile[0][1]
    for t_start, v in profile:
        if t_start <= t:
            value = v
        else:
            break
    return value


def validate_profile(profile, name: str) -> None:
    if not profile:
        raise ConfigurationError(f"{name}: empty demand profile")
    if profile[0][0] > 0:
        raise ConfigurationError(f"{name}: profile must define a value from t=0")
    prev = -math.inf
    for t_start, p in profile:
        if t_start <= prev:
            raise ConfigurationError(f"{name}: breakpoints must be strictly increasing")
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"{name}: arrival probability {p} outside [0, 1]")
        prev = t_start


def allocate_greens(weights, total: int, g_min: float, g_max: float) -> list[int]:
    """Split an integer time budget across phases proportionally to weights.

    The continuous solution scales all weights by one common multiplier
    and clamps each share into [g_min, g_max]; the multiplier is chosen
    (by bisection, the clamped sum is monotone in it) so the shares
    exhaust the budget. All-zero weights give equal shares. If every
    positive-weight phase saturates at g_max before the budget is
    spent, the remainder spreads equally over the zero-weight phases.
    The shares are then integerised by largest remainder; unit ties go
    to the lower index. The result sums exactly to ``total``.
    """
    n = len(weights)
    if n == 0:
        raise ConfigurationError("allocate_greens: no phases")
    if not n * g_min <= total <= n * g_max:
        raise ConfigurationError(
            f"allocate_greens: budget {total} infeasible for {n} phases in [{g_min}, {g_max}]"
        )
    weights = [max(0.0, float(w)) for w in weights]

    if sum(weights) == 0.0:
        share = [total / n] * n
    else:
        def clamped(scale: float) -> list[float]:
            return [min(max(w * scale, g_min), g_max) if w > 0 else float(g_min)
                    for w in weights]

        hi = 1.0
        while sum(clamped(hi)) < total and hi < 1e300:
            hi *= 4.0
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if sum(clamped(mid)) < total:
                lo = mid
            else:
                hi = mid
        share = clamped(hi)
        # Positive weights all capped: fill the rest over the others.
        deficit = total - sum(share)
        while deficit > 1e-9:
            open_idx = [i for i in range(n) if share[i] < g_max - 1e-12]
            add = deficit / len(open_idx)
            for i in open_idx:
                take = min(add, g_max - share[i])
                share[i] += take
                deficit -= take

    floors = [math.floor(s) for s in share]
    units = total - sum(floors)
    # Largest remainder; ties break to the lower index via the sort key.
    order = sorted(range(n), key=lambda i: (-(share[i] - floors[i]), i))
    result = list(floors)
    for i in order[:units]:
        result[i] += 1
    return result


def largest_remainder(targets, total: int) -> list[int]:
    """Integerise non-negative continuous targets to sum to ``total``.

    Largest fractional remainder wins extra units; ties go to the lower
    index.
    """
    floors = [math.floor(t) for t in targets]
    units = total - sum(floors)
    if units < 0:
        raise ConfigurationError("largest_remainder: targets exceed total")
    order = sorted(
        range(len(targets)), key=lambda i: (-(targets[i] - floors[i]), i)
    )
    result = list(floors)
    for i in order[:units]:
        result[i] += 1
    return result
