"""Hypothesis tests and t-distribution primitives for run comparisons.

Conventions shared by every test here:

* ``p_one_sided`` is the smaller tail probability of the observed
  statistic under the null.
* ``p_two_sided`` is ``min(1, 2 * p_one_sided)``, which keeps the
  doubling rule honest for discrete null distributions where the two
  tails are not symmetric.
* Degenerate inputs (zero variance, all-zero differences) produce a
  flagged result plus a DegenerateStatisticsWarning instead of raising,
  so batch comparisons keep going.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from scipy.special import betainc

from .errors import ConfigurationError, DegenerateStatisticsWarning

__all__ = [
    "SampleSummary",
    "TestResult",
    "student_t_cdf",
    "student_t_ppf",
    "t_two_sample",
    "t_paired",
    "wilcoxon_signed_rank",
    "mann_whitney_u",
    "average_ranks",
]

# Exact enumeration is the default up to this many effective observations;
# beyond it the tie-corrected normal approximation with continuity
# correction takes over. 2^12 sign vectors and C(12, k) splits both stay
# comfortably cheap.
EXACT_LIMIT = 12


@dataclass(frozen=True)
class SampleSummary:
    """Mean, sample standard deviation, and size of one group."""

    mean: float
    sd: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"sample summary needs n >= 2, got n={self.n}")
        if self.sd < 0:
            raise ConfigurationError(f"sample sd must be >= 0, got {self.sd}")

    @classmethod
    def from_sample(cls, values: Sequence[float]) -> "SampleSummary":
        n = len(values)
        if n < 2:
            raise ConfigurationError(f"sample needs n >= 2, got n={n}")
        mean = sum(values) / n
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        return cls(mean=mean, sd=math.sqrt(var), n=n)


@dataclass(frozen=True)
class TestResult:
    method: str
    statistic: float
    p_one_sided: float
    p_two_sided: float
    df: Optional[float] = None
    ci_95: Optional[tuple[float, float]] = None
    effect_size: Optional[float] = None
    exact: Optional[bool] = None
    degenerate: bool = False
    note: str = ""


def student_t_cdf(t: float, df: float) -> float:
    """CDF of Student's t with ``df`` degrees of freedom.

    Computed through the regularized incomplete beta function, which
    holds absolute error near 1e-14 across the useful range.
    """
    if df <= 0:
        raise ConfigurationError(f"degrees of freedom must be > 0, got {df}")
    if math.isnan(t):
        raise ConfigurationError("t statistic is NaN")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    x = df / (df + t * t)
    p = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return p if t <= 0 else 1.0 - p


def student_t_ppf(p: float, df: float) -> float:
    """Quantile of Student's t, inverted from the CDF by bisection."""
    if df <= 0:
        raise ConfigurationError(f"degrees of freedom must be > 0, got {df}")
    if not 0.0 < p < 1.0:
        raise ConfigurationError(f"quantile probability must be in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    lo, hi = -2.0, 2.0
    while student_t_cdf(lo, df) > p:
        lo *= 2.0
        if lo < -1e12:
            break
    while student_t_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e12:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, abs(lo)):
            break
    return 0.5 * (lo + hi)


def _tail_p(t_abs: float, df: float) -> tuple[float, float]:
    p_one = 1.0 - student_t_cdf(t_abs, df)
    return p_one, min(1.0, 2.0 * p_one)


def _degenerate_location(method: str, diff: float, note: str) -> TestResult:
    warnings.warn(f"{method}: {note}", DegenerateStatisticsWarning, stacklevel=3)
    if diff == 0.0:
        return TestResult(method=method, statistic=0.0, p_one_sided=0.5,
                          p_two_sided=1.0, degenerate=True, note=note)
    stat = math.copysign(math.inf, diff)
    return TestResult(method=method, statistic=stat, p_one_sided=0.0,
                      p_two_sided=0.0, degenerate=True, note=note)


def t_two_sample(a: SampleSummary, b: SampleSummary) -> TestResult:
    """Two-sample t test with a pooled variance estimate.

    Group sizes may differ; the pooled estimate weights each group's
    variance by its degrees of freedom. Works from summaries alone, so
    published mean/sd/n triples are enough to reproduce the test.
    """
    df = a.n + b.n - 2
    pooled_var = ((a.n - 1) * a.sd**2 + (b.n - 1) * b.sd**2) / df
    sp = math.sqrt(pooled_var)
    diff = a.mean - b.mean
    if sp == 0.0:
        return _degenerate_location("two_sample_t", diff, "pooled variance is zero")
    se = sp * math.sqrt(1.0 / a.n + 1.0 / b.n)
    t = diff / se
    p_one, p_two = _tail_p(abs(t), df)
    half = student_t_ppf(0.975, df) * se
    return TestResult(
        method="two_sample_t",
        statistic=t,
        df=float(df),
        p_one_sided=p_one,
        p_two_sided=p_two,
        ci_95=(diff - half, diff + half),
        effect_size=diff / sp,
    )


def t_paired(diffs: Sequence[float]) -> TestResult:
    """Paired t test on per-seed differences."""
    n = len(diffs)
    if n < 2:
        raise ConfigurationError(f"paired t test needs n >= 2 differences, got {n}")
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    sd = math.sqrt(var)
    if sd == 0.0:
        return _degenerate_location(
            "paired_t", mean,
            "all differences are zero" if mean == 0.0 else "all differences identical",
        )
    se = sd / math.sqrt(n)
    t = mean / se
    df = n - 1
    p_one, p_two = _tail_p(abs(t), df)
    half = student_t_ppf(0.975, df) * se
    return TestResult(
        method="paired_t",
        statistic=t,
        df=float(df),
        p_one_sided=p_one,
        p_two_sided=p_two,
        ci_95=(mean - half, mean + half),
        effect_size=mean / sd,
    )


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1; tied values share the average of their ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _continuity_z(stat: float, mu: float, sigma: float) -> float:
    if stat > mu:
        return (stat - mu - 0.5) / sigma
    if stat < mu:
        return (stat - mu + 0.5) / sigma
    return 0.0


def wilcoxon_signed_rank(diffs: Sequence[float],
                         exact_limit: int = EXACT_LIMIT) -> TestResult:
    """Wilcoxon signed-rank test on per-seed differences.

    Zero differences are dropped before ranking; ties in |d| share
    average ranks. With at most ``exact_limit`` nonzero differences the
    null distribution is enumerated over all sign assignments of the
    observed ranks (ties included), otherwise the tie-corrected normal
    approximation with continuity correction is used. The reported
    statistic is min(W+, W-).
    """
    nonzero = [d for d in diffs if d != 0.0]
    n = len(nonzero)
    if n == 0:
        warnings.warn("wilcoxon_signed_rank: all differences are zero",
                      DegenerateStatisticsWarning, stacklevel=2)
        return TestResult(method="wilcoxon_signed_rank", statistic=0.0,
                          p_one_sided=0.5, p_two_sided=1.0, degenerate=True,
                          note="all differences are zero")
    ranks = average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0.0)
    w_minus = sum(ranks) - w_plus
    statistic = min(w_plus, w_minus)
    note = f"w_plus={w_plus:g} w_minus={w_minus:g} n={n}"

    if n <= exact_limit:
        le = ge = 0
        total = 1 << n
        for mask in range(total):
            w = 0.0
            for i in range(n):
                if mask & (1 << i):
                    w += ranks[i]
            if w <= w_plus + 1e-12:
                le += 1
            if w >= w_plus - 1e-12:
                ge += 1
        p_one = min(le, ge) / total
        return TestResult(method="wilcoxon_signed_rank", statistic=statistic,
                          p_one_sided=p_one, p_two_sided=min(1.0, 2.0 * p_one),
                          exact=True, note=note)

    mu = n * (n + 1) / 4.0
    tie_term = 0.0
    seen: dict[float, int] = {}
    for d in nonzero:
        seen[abs(d)] = seen.get(abs(d), 0) + 1
    for count in seen.values():
        tie_term += count**3 - count
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    if sigma2 <= 0.0:
        warnings.warn("wilcoxon_signed_rank: null variance is zero (total ties)",
                      DegenerateStatisticsWarning, stacklevel=2)
        return TestResult(method="wilcoxon_signed_rank", statistic=statistic,
                          p_one_sided=0.5, p_two_sided=1.0, degenerate=True,
                          note="null variance is zero")
    z = _continuity_z(w_plus, mu, math.sqrt(sigma2))
    p_one = min(_normal_cdf(z), 1.0 - _normal_cdf(z))
    return TestResult(method="wilcoxon_signed_rank", statistic=statistic,
                      p_one_sided=p_one, p_two_sided=min(1.0, 2.0 * p_one),
                      exact=False, note=note)


def mann_whitney_u(a: Sequence[float], b: Sequence[float],
                   exact_limit: int = EXACT_LIMIT) -> TestResult:
    """Mann-Whitney U test for two independent samples.

    The reported statistic is U for the first sample. With
    ``len(a) + len(b) <= exact_limit`` the null distribution is
    enumerated over all assignments of the pooled (tied) ranks to
    group a, otherwise the tie-corrected normal approximation with
    continuity correction is used.
    """
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise ConfigurationError("mann_whitney_u: both samples must be non-empty")
    pooled = list(a) + list(b)
    ranks = average_ranks(pooled)
    r_a = sum(ranks[:na])
    u_a = r_a - na * (na + 1) / 2.0
    note = f"u_a={u_a:g} u_b={na * nb - u_a:g}"

    if na + nb <= exact_limit:
        le = ge = total = 0
        offset = na * (na + 1) / 2.0
        for combo in itertools.combinations(range(na + nb), na):
            u = sum(ranks[i] for i in combo) - offset
            total += 1
            if u <= u_a + 1e-12:
                le += 1
            if u >= u_a - 1e-12:
                ge += 1
        p_one = min(le, ge) / total
        return TestResult(method="mann_whitney_u", statistic=u_a,
                          p_one_sided=p_one, p_two_sided=min(1.0, 2.0 * p_one),
                          exact=True, note=note)

    n = na + nb
    mu = na * nb / 2.0
    seen: dict[float, int] = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    tie_term = sum(c**3 - c for c in seen.values())
    sigma2 = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma2 <= 0.0:
        warnings.warn("mann_whitney_u: null variance is zero (all values tied)",
                      DegenerateStatisticsWarning, stacklevel=2)
        return TestResult(method="mann_whitney_u", statistic=u_a,
                          p_one_sided=0.5, p_two_sided=1.0, degenerate=True,
                          note="null variance is zero")
    z = _continuity_z(u_a, mu, math.sqrt(sigma2))
    p_one = min(_normal_cdf(z), 1.0 - _normal_cdf(z))
    return TestResult(method="mann_whitney_u", statistic=u_a,
                      p_one_sided=p_one, p_two_sided=min(1.0, 2.0 * p_one),
                      exact=False, note=note)
