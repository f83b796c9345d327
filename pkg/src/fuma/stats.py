"""Statistical tests used to compare clusters on outcomes and features.

Conventions are fixed here so downstream reports are reproducible:
one-way ANOVA with eta-squared labeled large (> 0.26) / medium (> 0.13) /
small; rank-sum tests with midranks, exact enumeration for pooled n <= 12 and
a tie-corrected normal approximation with continuity correction otherwise;
Pearson chi-square on 2x2 tables without continuity correction; Holm-
Bonferroni step-down adjustment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import chdtrc, fdtrc, ndtr

EXACT_RANKSUM_LIMIT = 12


@dataclass(slots=True)
class StatsResult:
    """Outcome of a single hypothesis test."""

    test: str
    statistic: float
    p_value: float
    df: tuple[float, ...] | None = None
    effect_name: str | None = None
    effect_size: float | None = None
    effect_label: str | None = None
    adjusted_p: float | None = None
    method: str | None = None


def effect_size_label(eta_squared: float) -> str:
    if eta_squared > 0.26:
        return "large"
    if eta_squared > 0.13:
        return "medium"
    return "small"


def anova_one_way(groups: list[np.ndarray] | list[list[float]]) -> StatsResult:
    """One-way fixed-effects ANOVA across two or more groups.

    Raises ValueError for fewer than 2 groups, any group below 2 values, or
    when every value is identical (F undefined).  Perfect separation
    (zero within-group variance, nonzero between) yields p = 0.
    """
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2:
        raise ValueError("need at least 2 groups")
    if any(a.ndim != 1 or a.size < 2 for a in arrays):
        raise ValueError("each group needs at least 2 values")
    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    grand = sum(a.sum() for a in arrays) / n_total
    ssb = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrays)
    sst = ssb + ssw
    if sst == 0:
        raise ValueError("all values identical; F undefined")
    df = (float(k - 1), float(n_total - k))
    eta2 = ssb / sst
    if ssw == 0:
        return StatsResult(
            "anova", math.inf, 0.0, df, "eta_squared", eta2,
            effect_size_label(eta2),
        )
    f_stat = (ssb / df[0]) / (ssw / df[1])
    p = float(fdtrc(df[0], df[1], f_stat))
    return StatsResult(
        "anova", float(f_stat), p, df, "eta_squared", float(eta2),
        effect_size_label(float(eta2)),
    )


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=float)
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_rank_sum(
    a: list[float] | np.ndarray,
    b: list[float] | np.ndarray,
    alternative: str = "two-sided",
) -> StatsResult:
    """Wilcoxon rank-sum (Mann-Whitney) test of two independent samples.

    The statistic is U for sample ``a``.  ``alternative`` is "two-sided",
    "greater" (a tends larger), or "less".
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    u_obs = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)
    mu = n_a * n_b / 2.0

    if n <= EXACT_RANKSUM_LIMIT:
        # Enumerate every assignment of pooled ranks to sample a.
        tol = 1e-9
        hits = 0
        total = 0
        dev = abs(u_obs - mu)
        base = n_a * (n_a + 1) / 2.0
        for combo in itertools.combinations(range(n), n_a):
            u = float(sum(ranks[i] for i in combo) - base)
            total += 1
            if alternative == "two-sided":
                hits += abs(u - mu) >= dev - tol
            elif alternative == "greater":
                hits += u >= u_obs - tol
            else:
                hits += u <= u_obs + tol
        return StatsResult(
            "wilcoxon_rank_sum", u_obs, hits / total, (float(n_a), float(n_b)),
            method="exact",
        )

    # Normal approximation with tie-corrected variance.
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum()))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return StatsResult(
            "wilcoxon_rank_sum", u_obs, 1.0, (float(n_a), float(n_b)),
            method="normal",
        )
    sd = math.sqrt(var)
    if alternative == "two-sided":
        d = max(abs(u_obs - mu) - 0.5, 0.0)
        p = 2.0 * float(ndtr(-d / sd))
    elif alternative == "greater":
        p = float(ndtr(-(u_obs - mu - 0.5) / sd))
    else:
        p = float(ndtr((u_obs - mu + 0.5) / sd))
    return StatsResult(
        "wilcoxon_rank_sum", u_obs, min(p, 1.0), (float(n_a), float(n_b)),
        method="normal",
    )


def chi_square_proportions(table: list[list[float]] | np.ndarray) -> StatsResult:
    """Pearson chi-square on a 2x2 count table, no continuity correction.

    Effect size is Cramer's V.  Raises ValueError on any zero marginal.
    """
    obs = np.asarray(table, dtype=float)
    if obs.shape != (2, 2):
        raise ValueError("expected a 2x2 table")
    if (obs < 0).any():
        raise ValueError("counts must be nonnegative")
    row = obs.sum(axis=1)
    col = obs.sum(axis=0)
    total = obs.sum()
    if (row == 0).any() or (col == 0).any():
        raise ValueError("zero marginal; proportions undefined")
    expected = np.outer(row, col) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    p = float(chdtrc(1.0, stat))
    v = math.sqrt(stat / total)
    return StatsResult("chi_square", stat, p, (1.0,), "cramers_v", v)


def cramers_v(table: list[list[float]] | np.ndarray) -> float:
    return chi_square_proportions(table).effect_size  # type: ignore[return-value]


def holm_bonferroni(p_values: list[float]) -> list[float]:
    """Holm step-down adjusted p-values, returned in the input order."""
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError("p-values must lie in [0, 1]")
    m = len(p_values)
    if m == 0:
        return []
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p_values[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Adjusted Rand index between two partitions of the same elements."""
    if len(labels_a) != len(labels_b):
        raise ValueError("partitions cover different numbers of elements")
    n = len(labels_a)
    if n == 0:
        raise ValueError("empty partitions")
    contingency: dict[tuple, int] = {}
    count_a: dict[object, int] = {}
    count_b: dict[object, int] = {}
    for x, y in zip(labels_a, labels_b):
        contingency[(x, y)] = contingency.get((x, y), 0) + 1
        count_a[x] = count_a.get(x, 0) + 1
        count_b[y] = count_b.get(y, 0) + 1

    def comb2(m: int) -> float:
        return m * (m - 1) / 2.0

    sum_ij = sum(comb2(c) for c in contingency.values())
    sum_a = sum(comb2(c) for c in count_a.values())
    sum_b = sum(comb2(c) for c in count_b.values())
    total = comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        # Degenerate cases (all singletons / one block in both) agree exactly.
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))
