"""Two-sided Wilcoxon signed-rank test with exact small-sample p-values."""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List

import numpy as np
import numpy.typing as npt
from scipy.stats import norm, rankdata

from balds.error import BALDSShapeError, BALDSStatisticsError

MIN_PAIRS = 5
EXACT_LIMIT = 12


@dataclass(frozen=True)
class SignificanceReport:
    """
    Outcome of a paired comparison.

    Attributes:
        method: Paired values of the method under test
        baseline: Paired values of the (averaged) baseline
        statistic: min(W+, W-) over the non-zero differences
        p_value: Two-sided p-value
        band: "p<0.01", "p<0.05" or "p>=0.05"
        pairs: Number of non-zero differences the test used
        exact: True when the p-value comes from full sign enumeration
        all_zero: True when every difference was zero (p = 1)

    """

    method: List[float]
    baseline: List[float]
    statistic: float
    p_value: float
    band: str
    pairs: int
    exact: bool
    all_zero: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def significance_band(p_value: float) -> str:
    if p_value < 0.01:
        return "p<0.01"
    if p_value < 0.05:
        return "p<0.05"
    return "p>=0.05"


def _exact_p(ranks: npt.NDArray[np.float64], w_plus: float) -> float:
    """P(|W+ - E W+| >= |w_plus - E W+|) over all 2^n equally likely sign assignments."""
    n = ranks.shape[0]
    signs = (np.arange(2**n)[:, np.newaxis] >> np.arange(n)) & 1
    all_w_plus = signs @ ranks
    center = ranks.sum() / 2.0
    observed = abs(w_plus - center)
    extreme = np.abs(all_w_plus - center) >= observed - 1e-9
    return float(np.count_nonzero(extreme)) / float(2**n)


def _normal_p(ranks: npt.NDArray[np.float64], abs_diffs: npt.NDArray[np.float64], w_plus: float) -> float:
    n = ranks.shape[0]
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(abs_diffs, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    return float(2.0 * norm.sf(z))


def wilcoxon_signed_rank(a: npt.ArrayLike, b: npt.ArrayLike) -> SignificanceReport:
    """
    Compare paired samples `a` and `b`.

    Zero differences are dropped; tied absolute differences share their average
    rank. Up to 12 pairs the p-value is exact, beyond that it uses the normal
    approximation with continuity and tie corrections.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise BALDSShapeError(f"paired samples of shapes {x.shape} and {y.shape}")
    method, baseline = x.tolist(), y.tolist()
    diffs = x - y
    nonzero = diffs[diffs != 0]
    if nonzero.size == 0:
        return SignificanceReport(method, baseline, 0.0, 1.0, significance_band(1.0), 0, True, True)
    n = int(nonzero.size)
    if n < MIN_PAIRS:
        raise BALDSStatisticsError(
            f"{n} non-zero paired differences; the test needs at least {MIN_PAIRS}"
        )
    abs_diffs = np.abs(nonzero)
    ranks = np.asarray(rankdata(abs_diffs), dtype=np.float64)
    w_plus = float(ranks[nonzero > 0].sum())
    w_minus = float(ranks.sum()) - w_plus
    exact = n <= EXACT_LIMIT
    p = _exact_p(ranks, w_plus) if exact else _normal_p(ranks, abs_diffs, w_plus)
    p = min(p, 1.0)
    return SignificanceReport(
        method, baseline, min(w_plus, w_minus), p, significance_band(p), n, exact, False
    )
