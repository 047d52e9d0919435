"""A-line confusion metrics, Dice, Bland-Altman agreement, and OLS fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lipid import ALineLabels


class TooFewPairs(Exception):
    pass


class DegenerateX(Exception):
    pass


class DegenerateY(Exception):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class AgreementStats:
    bias: float
    sd_diff: float
    loa_low: float
    loa_high: float
    r2: Optional[float]
    slope: Optional[float]
    intercept: Optional[float]
    n: int


def aline_confusion(pred: ALineLabels | Sequence[ALineLabels],
                    truth: ALineLabels | Sequence[ALineLabels]) -> ConfusionCounts:
    """Confusion counts over all scored A-lines of one or more frames.

    A-lines flagged guidewire on either side are unobservable tissue and are
    excluded from scoring.
    """
    preds = [pred] if isinstance(pred, ALineLabels) else list(pred)
    truths = [truth] if isinstance(truth, ALineLabels) else list(truth)
    if len(preds) != len(truths):
        raise ValueError("pred and truth frame counts differ")
    tp = fp = fn = tn = 0
    for p, t in zip(preds, truths):
        if p.n_alines != t.n_alines:
            raise ValueError("pred and truth A-line counts differ")
        scored = ~(p.guidewire | t.guidewire)
        pl, tl = p.lipid[scored], t.lipid[scored]
        tp += int(np.sum(pl & tl))
        fp += int(np.sum(pl & ~tl))
        fn += int(np.sum(~pl & tl))
        tn += int(np.sum(~pl & ~tl))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def classification_scores(c: ConfusionCounts) -> dict[str, Optional[float]]:
    """precision, sensitivity, specificity, dice. A score whose denominator
    is zero comes back None; the others are still returned."""
    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den > 0 else None

    return {
        "precision": ratio(c.tp, c.tp + c.fp),
        "sensitivity": ratio(c.tp, c.tp + c.fn),
        "specificity": ratio(c.tn, c.tn + c.fp),
        "dice": ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
    }


def bland_altman(pairs: Sequence[tuple[float, float]]) -> dict[str, float]:
    """Bias and 95% limits of agreement of differences a - b.

    sd_diff is the sample (n-1) standard deviation; limits are
    bias +/- 1.96 sd_diff.
    """
    if len(pairs) < 2:
        raise TooFewPairs("need at least 2 pairs")
    a = np.asarray([p[0] for p in pairs], dtype=np.float64)
    b = np.asarray([p[1] for p in pairs], dtype=np.float64)
    d = a - b
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return {"bias": bias, "sd_diff": sd,
            "loa_low": bias - 1.96 * sd, "loa_high": bias + 1.96 * sd}


def linear_fit_r2(pairs: Sequence[tuple[float, float]]) -> dict[str, float]:
    """Ordinary least squares of b on a, with r2 = 1 - SSres/SStot."""
    if len(pairs) < 2:
        raise TooFewPairs("need at least 2 pairs")
    a = np.asarray([p[0] for p in pairs], dtype=np.float64)
    b = np.asarray([p[1] for p in pairs], dtype=np.float64)
    sxx = float(np.sum((a - a.mean()) ** 2))
    if sxx == 0.0:
        raise DegenerateX("variance of a is 0")
    sst = float(np.sum((b - b.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateY("variance of b is 0; r2 undefined")
    slope = float(np.sum((a - a.mean()) * (b - b.mean())) / sxx)
    intercept = float(b.mean() - slope * a.mean())
    ssr = float(np.sum((b - (slope * a + intercept)) ** 2))
    return {"slope": slope, "intercept": intercept, "r2": 1.0 - ssr / sst}


def agreement_stats(pairs: Sequence[tuple[float, float]]) -> AgreementStats:
    """Combined Bland-Altman + regression summary for one measurement.

    Regression fields are None when degenerate (constant a or b).
    """
    ba = bland_altman(pairs)
    try:
        fit = linear_fit_r2(pairs)
        slope, intercept, r2 = fit["slope"], fit["intercept"], fit["r2"]
    except (DegenerateX, DegenerateY):
        slope = intercept = r2 = None
    return AgreementStats(bias=ba["bias"], sd_diff=ba["sd_diff"],
                          loa_low=ba["loa_low"], loa_high=ba["loa_high"],
                          r2=r2, slope=slope, intercept=intercept, n=len(pairs))
