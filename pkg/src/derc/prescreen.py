"""Statistical feature prescreening.

Two passes: (1) drop near-duplicate features whose pairwise correlation is
both strong (|rho| >= threshold) and significant (p <= alpha); (2) keep
only features that discriminate the two classes, using Welch's t-test when
both class subsamples look normal and the Wilcoxon rank-sum test otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import ValidationError

MIN_NORMALITY_N = 8
EXACT_WILCOXON_MAX = 20
PRUNE_BLOCK = 256


@dataclass
class PrescreenConfig:
    alpha: float = 0.05
    rho_threshold: float = 0.90
    normality_alpha: float = 0.05

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")
        if not 0.0 < self.rho_threshold <= 1.0:
            raise ValidationError("rho_threshold must be in (0, 1]")


@dataclass
class PrescreenReport:
    kept_feature_ids: list[str]
    removed_by_correlation: list[str]
    removed_by_class_test: list[str]
    per_feature_pvalues: dict[str, float] = field(default_factory=dict)
    kept_indices: np.ndarray | None = None


def pearson_correlation_test(x, y):
    """Pearson rho and two-sided p from t = rho*sqrt((n-2)/(1-rho^2)).

    Constant vectors yield (0, 1) by convention.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValidationError("vectors must have equal length")
    n = len(x)
    if n < 3:
        raise ValidationError("need at least 3 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        return 0.0, 1.0
    rho = float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))
    if abs(rho) >= 1.0 - 1e-12:  # collinear up to rounding
        return float(np.sign(rho)), 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * stats.t.sf(abs(t), df=n - 2)
    return rho, float(min(p, 1.0))


def _pvalue_from_rho(rho: np.ndarray, n: int) -> np.ndarray:
    rho = np.clip(rho, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = np.abs(rho) * np.sqrt((n - 2) / np.maximum(1.0 - rho * rho, 0.0))
    return np.where(np.isinf(t), 0.0, 2.0 * stats.t.sf(t, df=n - 2))


def correlation_prune(data: Dataset, cfg: PrescreenConfig):
    """Greedy pruning of significantly near-duplicate feature pairs.

    Pairs (i, j), i < j, are scanned in index order; when a still-kept pair
    has |rho| >= threshold and p <= alpha the higher index is removed.
    Returns (kept indices, removed indices).
    """
    cfg.validate()
    x = np.asarray(data.values, dtype=float)
    n, d = x.shape
    if n < 3:
        raise ValidationError("need at least 3 samples for correlation pruning")

    # standardized columns: constant features become zero vectors (rho = 0)
    xc = x - x.mean(axis=0)
    norms = np.sqrt(np.sum(xc * xc, axis=0))
    nonzero = norms > 0
    xs = np.zeros_like(xc)
    xs[:, nonzero] = xc[:, nonzero] / norms[nonzero]

    removed = np.zeros(d, dtype=bool)
    for start in range(0, d, PRUNE_BLOCK):
        stop = min(start + PRUNE_BLOCK, d)
        block = xs[:, start:stop].T @ xs  # (block, d) correlations
        for i in range(start, stop):
            if removed[i]:
                continue
            row = block[i - start]
            cand = np.abs(row[i + 1:]) >= cfg.rho_threshold
            if not cand.any():
                continue
            j = np.nonzero(cand)[0] + i + 1
            j = j[~removed[j]]
            if len(j) == 0:
                continue
            pvals = _pvalue_from_rho(row[j], n)
            removed[j[pvals <= cfg.alpha]] = True
    kept = np.nonzero(~removed)[0]
    return kept, np.nonzero(removed)[0]


def normality_gate(x, alpha: float) -> bool:
    """Moment-based omnibus normality check (skewness + kurtosis, chi2 df=2).

    Returns True iff the sample is long enough (>= 8) and the test fails to
    reject normality at alpha.
    """
    x = np.asarray(x, dtype=float)
    if len(x) < MIN_NORMALITY_N:
        return False
    if np.ptp(x) == 0.0:
        return False
    _, p = stats.normaltest(x)
    return bool(p > alpha)


def _exact_rank_sum_pvalue(ranks2: np.ndarray, n_a: int, w2: float) -> float:
    """Exact two-sided p for the rank-sum statistic by subset-sum counting.

    ranks2 holds doubled midranks (integers even with ties); counts the
    number of size-n_a subsets whose doubled rank sum deviates from the
    null mean at least as much as the observed one.
    """
    vals = np.rint(ranks2).astype(int)
    n = len(vals)
    max_sum = int(vals.sum())
    # dp[k, s] = number of k-subsets with doubled rank sum s
    dp = np.zeros((n_a + 1, max_sum + 1))
    dp[0, 0] = 1.0
    for v in vals:
        dp[1:, v:] = dp[1:, v:] + dp[:-1, :max_sum + 1 - v]
    dist = dp[n_a]
    total = comb(n, n_a)
    mean2 = n_a * (n + 1)  # doubled null mean of the rank sum
    dev = abs(w2 - mean2) - 1e-9
    sums = np.arange(max_sum + 1)
    extreme = dist[np.abs(sums - mean2) >= dev].sum()
    return float(min(extreme / total, 1.0))


def wilcoxon_rank_sum(a, b) -> float:
    """Two-sided Wilcoxon rank-sum p-value.

    Exact permutation distribution (subset-sum counting over midranks) when
    both groups have <= 20 observations; normal approximation with tie
    correction otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    if np.ptp(pooled) == 0.0:
        return 1.0
    ranks = stats.rankdata(pooled)
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    w = ranks[:n_a].sum()
    if n_a <= EXACT_WILCOXON_MAX and n_b <= EXACT_WILCOXON_MAX:
        return _exact_rank_sum_pvalue(2.0 * ranks, n_a, 2.0 * w)
    mean = n_a * (n + 1) / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1))
    var = n_a * n_b / 12.0 * (n + 1 - tie_term)
    if var == 0.0:
        return 1.0
    z = (w - mean) / np.sqrt(var)
    return float(min(2.0 * stats.norm.sf(abs(z)), 1.0))


def welch_ttest(a, b) -> float:
    """Two-sided Welch (unequal variance) t-test p-value."""
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def class_test(x, labels, cfg: PrescreenConfig) -> float:
    """Per-feature class-discrimination p-value with a normality gate.

    Welch's t-test when both class subsamples pass the gate, Wilcoxon
    rank-sum otherwise.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    a = x[labels == 0]
    b = x[labels == 1]
    if len(a) == 0 or len(b) == 0:
        raise ValidationError("both classes must be non-empty")
    if np.ptp(x) == 0.0:
        return 1.0
    if normality_gate(a, cfg.normality_alpha) and normality_gate(b, cfg.normality_alpha):
        return welch_ttest(a, b)
    return wilcoxon_rank_sum(a, b)


def discriminative_filter(data: Dataset, cfg: PrescreenConfig) -> PrescreenReport:
    """Correlation pruning followed by the class-discrimination filter."""
    if data.labels is None:
        raise ValidationError("discriminative_filter requires labels")
    cfg.validate()
    kept_corr, removed_corr = correlation_prune(data, cfg)

    kept_ids = []
    kept_idx = []
    removed_test = []
    pvalues = {}
    for j in kept_corr:
        fid = data.feature_ids[j]
        p = class_test(data.values[:, j], data.labels, cfg)
        pvalues[fid] = p
        if p <= cfg.alpha:
            kept_ids.append(fid)
            kept_idx.append(int(j))
        else:
            removed_test.append(fid)
    return PrescreenReport(
        kept_feature_ids=kept_ids,
        removed_by_correlation=[data.feature_ids[j] for j in removed_corr],
        removed_by_class_test=removed_test,
        per_feature_pvalues=pvalues,
        kept_indices=np.asarray(kept_idx, dtype=int),
    )
