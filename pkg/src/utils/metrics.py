"""
Evaluation measures, ROC AUC, defect-proneness ratio and the Wilcoxon signed-rank test
"""
import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm, rankdata

from src.config import SCORE_THRESHOLD
from src.errors import (
    DegenerateDPRWarning,
    SampleSizeError,
    ShapeError,
    UndefinedMeasureError,
)
from src.utils.classifiers import Prediction
from src.utils.dataset import Release, Repository
from src.utils.simplify import SimplifiedTDS

logger = logging.getLogger(__name__)

# exact null distribution up to this many non-zero differences
WILCOXON_EXACT_MAX_N = 20
WILCOXON_MIN_N = 5

MEASURE_NAMES = ("prec", "pd", "pf", "f_measure", "g_measure", "accuracy", "auc", "dpr")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ShapeError("confusion counts must be nonnegative")
        if self.total == 0:
            raise ShapeError("confusion matrix is empty")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MeasureSet:
    """Evaluation measures; None marks an undefined value (zero denominator)"""

    prec: Optional[float]
    pd: Optional[float]
    pf: Optional[float]
    f_measure: Optional[float]
    g_measure: Optional[float]
    accuracy: Optional[float]
    auc: Optional[float] = None
    dpr: Optional[float] = None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)

    @property
    def undefined(self) -> List[str]:
        return [name for name, value in self.to_dict().items() if value is None]


@dataclass(frozen=True)
class WilcoxonResult:
    """Signed statistic W = (sum of positive ranks) - (sum of negative ranks)"""

    statistic: float
    p_value: float
    n: int
    method: str


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator else None


def _label_of(item: Union[Prediction, int]) -> int:
    return int(item.label) if isinstance(item, Prediction) else int(item)


def confusion(predictions: Sequence[Union[Prediction, int]], truth: Sequence[int]) -> ConfusionMatrix:
    """
    Count the four confusion cells with buggy as the positive class

    Args:
        predictions: Predictions (or predicted labels)
        truth: True labels, 1 = buggy

    Returns:
        ConfusionMatrix
    """
    if len(predictions) != len(truth):
        raise ShapeError(f"{len(predictions)} predictions for {len(truth)} labels")
    predicted = np.array([_label_of(p) for p in predictions], dtype=np.int64)
    actual = np.asarray(truth, dtype=np.int64)
    return ConfusionMatrix(
        tp=int(np.sum((predicted == 1) & (actual == 1))),
        fp=int(np.sum((predicted == 1) & (actual == 0))),
        tn=int(np.sum((predicted == 0) & (actual == 0))),
        fn=int(np.sum((predicted == 0) & (actual == 1))),
    )


def measures(cm: ConfusionMatrix) -> MeasureSet:
    """
    prec, pd, pf, f-measure, g-measure and accuracy of a confusion matrix

    f-measure is undefined when prec or pd is; g-measure when pd or pf is.
    A zero sum with defined inputs gives 0.
    """
    prec = _ratio(cm.tp, cm.tp + cm.fp)
    pd = _ratio(cm.tp, cm.tp + cm.fn)
    pf = _ratio(cm.fp, cm.fp + cm.tn)

    f_measure = None
    if prec is not None and pd is not None:
        f_measure = 2 * pd * prec / (pd + prec) if pd + prec else 0.0

    g_measure = None
    if pd is not None and pf is not None:
        g_measure = 2 * pd * (1 - pf) / (pd + (1 - pf)) if pd + (1 - pf) else 0.0

    accuracy = (cm.tp + cm.tn) / cm.total
    return MeasureSet(prec, pd, pf, f_measure, g_measure, accuracy)


def auc(scores: Sequence[float], truth: Sequence[int]) -> float:
    """
    Probability that a random buggy instance outranks a random clean one

    Computed from mid-ranks (Mann-Whitney U), so tied scores count one half.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.shape != truth.shape:
        raise ShapeError(f"{scores.size} scores for {truth.size} labels")
    n_pos = int(np.sum(truth == 1))
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMeasureError("AUC needs both buggy and clean instances")
    ranks = rankdata(scores, method="average")
    u = ranks[truth == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def _defect_ratio(data: Union[SimplifiedTDS, Repository, Release]) -> float:
    if isinstance(data, Repository):
        total = data.n_instances
        return sum(rel.n_defects for rel in data) / total if total else 0.0
    return data.defect_ratio


def dpr(tds: Union[SimplifiedTDS, Repository, Release], test: Release) -> float:
    """
    Defect-proneness ratio: training defect proportion over test defect proportion

    Args:
        tds: Training data
        test: Test release

    Returns:
        The ratio; 0.0 (with a DegenerateDPRWarning) when training has no defects
    """
    test_ratio = test.defect_ratio
    if test_ratio == 0:
        raise UndefinedMeasureError(f"DPR undefined: {test.name} has no buggy instances")
    train_ratio = _defect_ratio(tds)
    if train_ratio == 0:
        message = f"training data for {test.name} has no buggy instances; DPR is 0"
        logger.warning(message)
        warnings.warn(message, DegenerateDPRWarning, stacklevel=2)
        return 0.0
    return train_ratio / test_ratio


def evaluate(scores: Sequence[float], truth: Sequence[int],
             tds: Optional[Union[SimplifiedTDS, Repository]] = None,
             test: Optional[Release] = None) -> Tuple[ConfusionMatrix, MeasureSet]:
    """
    Confusion matrix and the full measure set for one prediction run

    AUC and DPR are left undefined instead of raising when their
    preconditions fail.
    """
    scores = np.asarray(scores, dtype=float)
    predicted = (scores >= SCORE_THRESHOLD).astype(np.int64)
    cm = confusion(list(predicted), truth)
    base = measures(cm)

    try:
        auc_value: Optional[float] = auc(scores, truth)
    except UndefinedMeasureError:
        auc_value = None

    dpr_value: Optional[float] = None
    if tds is not None and test is not None:
        try:
            dpr_value = dpr(tds, test)
        except UndefinedMeasureError:
            dpr_value = None

    return cm, MeasureSet(base.prec, base.pd, base.pf, base.f_measure, base.g_measure,
                          base.accuracy, auc_value, dpr_value)


def _exact_two_sided(doubled_ranks: np.ndarray, observed_positive: int) -> float:
    """P(|W| >= |w_obs|) under random signs, on doubled (integer) ranks"""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled_ranks:
        rank = int(rank)
        shifted = counts.copy()
        shifted[rank:] += counts[:total + 1 - rank]
        counts = shifted
    sums = np.arange(total + 1)
    extreme = np.abs(2 * sums - total) >= abs(2 * observed_positive - total)
    return float(counts[extreme].sum() / 2 ** doubled_ranks.size)


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """
    Two-sided paired Wilcoxon signed-rank test

    Zero differences are dropped. The exact null distribution is used for up
    to 20 remaining pairs, otherwise the normal approximation with tie correction.

    Args:
        a: First sample
        b: Paired second sample

    Returns:
        WilcoxonResult with the signed rank-sum statistic
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"paired samples differ in length: {a.size} vs {b.size}")
    diff = a - b
    diff = diff[diff != 0]
    if diff.size == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate")
    n = diff.size
    if n < WILCOXON_MIN_N:
        raise SampleSizeError(f"Wilcoxon test needs {WILCOXON_MIN_N} non-zero differences, got {n}")

    ranks = rankdata(np.abs(diff), method="average")
    positive = diff > 0
    statistic = float(ranks[positive].sum() - ranks[~positive].sum())

    if n <= WILCOXON_EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p_value = _exact_two_sided(doubled, int(doubled[positive].sum()))
        return WilcoxonResult(statistic, min(p_value, 1.0), n, "exact")

    _, tie_counts = np.unique(ranks, return_counts=True)
    var_plus = n * (n + 1) * (2 * n + 1) / 24 - np.sum(tie_counts ** 3 - tie_counts) / 48
    z = statistic / (2 * math.sqrt(var_plus))
    p_value = float(2 * norm.sf(abs(z)))
    return WilcoxonResult(statistic, min(p_value, 1.0), n, "normal")


def mean_with_exclusions(values: Sequence[Optional[float]]) -> Tuple[Optional[float], int, int]:
    """Arithmetic mean of the defined values, with used and excluded counts"""
    defined = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    excluded = len(values) - len(defined)
    if not defined:
        return None, 0, excluded
    return float(np.mean(defined)), len(defined), excluded


def relative_gain(new: Optional[float], base: Optional[float]) -> Optional[float]:
    """Percentage change from base to new"""
    if new is None or base is None or base == 0:
        return None
    return 100.0 * (new - base) / base
