"""
DPR-based choice between the two instance filters
"""
import io
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import RHO_GRID_STEPS
from src.errors import EmptyInputError, ParameterError, ParseError, SchemaError
from src.utils.metrics import relative_gain
from src.utils.simplify import Strategy

logger = logging.getLogger(__name__)

PAIR_COLUMNS = ("target", "dpr", "measure1", "measure2")

# resolution order when two combinations reach the same accuracy
COMBINATIONS = ("rho_plus", "rho_minus", "union", "intersection")


class Assumption(str, Enum):
    """rho_plus: riTDS-1 when DPR >= rho; rho_minus: riTDS-1 when DPR < rho"""

    RHO_PLUS = "rho_plus"
    RHO_MINUS = "rho_minus"

    @classmethod
    def parse(cls, text: str) -> "Assumption":
        key = text.strip().casefold()
        if len(key) > 1:
            key = key.replace("-", "_")
        aliases = {"plus": cls.RHO_PLUS, "rho_plus": cls.RHO_PLUS, "+": cls.RHO_PLUS,
                   "minus": cls.RHO_MINUS, "rho_minus": cls.RHO_MINUS, "-": cls.RHO_MINUS}
        if key not in aliases:
            raise ParameterError(f"unknown assumption '{text}'")
        return aliases[key]


@dataclass(frozen=True)
class PredictionPair:
    """One target's DPR and a measure under riTDS-1 (measure_1) and riTDS-2 (measure_2)"""

    target: str
    dpr: float
    measure_1: float
    measure_2: float

    def __post_init__(self):
        values = (self.dpr, self.measure_1, self.measure_2)
        if not all(np.isfinite(v) for v in values):
            raise ParameterError(f"pair for {self.target} has undefined values")
        if self.dpr <= 0:
            raise ParameterError(f"pair for {self.target} has non-positive DPR {self.dpr}")

    @property
    def prefers_ritds1(self) -> bool:
        return self.measure_1 > self.measure_2


class Groups(NamedTuple):
    ritds1: List[PredictionPair]
    ritds2: List[PredictionPair]


@dataclass(frozen=True)
class Interval:
    """Half-open DPR interval [low, high); None leaves a side unbounded"""

    low: Optional[float] = None
    high: Optional[float] = None

    def contains(self, dpr: float) -> bool:
        return (self.low is None or dpr >= self.low) and (self.high is None or dpr < self.high)

    def describe(self) -> str:
        if self.low is not None and self.high is not None:
            return f"{self.low:.2f} <= DPR < {self.high:.2f}"
        if self.low is not None:
            return f"{self.low:.2f} <= DPR"
        if self.high is not None:
            return f"DPR < {self.high:.2f}"
        return "any DPR"


@dataclass(frozen=True)
class RhoRule:
    """
    Fitted recommendation rule

    riTDS-1 is recommended when the DPR falls in any of the ranges, riTDS-2
    otherwise. Single-assumption rules carry one threshold; union and
    intersection rules carry both.
    """

    combination: str
    rho_plus: Optional[float]
    rho_minus: Optional[float]
    accuracy: float
    n_pairs: int
    classifier: Optional[str] = None
    measure: Optional[str] = None
    ranges: Tuple[Interval, ...] = field(init=False)

    def __post_init__(self):
        if self.combination not in COMBINATIONS:
            raise ParameterError(f"unknown rule combination '{self.combination}'")
        needs_plus = self.combination != "rho_minus"
        needs_minus = self.combination != "rho_plus"
        if (self.rho_plus is None) == needs_plus or (self.rho_minus is None) == needs_minus:
            raise ParameterError(f"{self.combination} rule has the wrong thresholds")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ParameterError(f"accuracy {self.accuracy} outside [0, 1]")
        object.__setattr__(self, "ranges", _ranges(self.combination, self.rho_plus, self.rho_minus))

    @property
    def assumption(self) -> Optional[Assumption]:
        if self.combination in (Assumption.RHO_PLUS.value, Assumption.RHO_MINUS.value):
            return Assumption(self.combination)
        return None

    @property
    def threshold(self) -> Optional[float]:
        if self.assumption is Assumption.RHO_PLUS:
            return self.rho_plus
        if self.assumption is Assumption.RHO_MINUS:
            return self.rho_minus
        return None

    def recommends_ritds1(self, dpr: float) -> bool:
        return any(interval.contains(dpr) for interval in self.ranges)

    def describe(self) -> str:
        return " or ".join(interval.describe() for interval in self.ranges) or "never"

    def to_dict(self) -> Dict[str, object]:
        return {
            "classifier": self.classifier,
            "measure": self.measure,
            "combination": self.combination,
            "rho_plus": self.rho_plus,
            "rho_minus": self.rho_minus,
            "accuracy": self.accuracy,
            "n_pairs": self.n_pairs,
            "ranges": [[iv.low, iv.high] for iv in self.ranges],
            "description": self.describe(),
        }


def _ranges(combination: str, rho_plus: Optional[float],
            rho_minus: Optional[float]) -> Tuple[Interval, ...]:
    if combination == "rho_plus":
        return (Interval(low=rho_plus),)
    if combination == "rho_minus":
        return (Interval(high=rho_minus),)
    if combination == "union":
        return (Interval(low=rho_plus), Interval(high=rho_minus))
    if rho_plus < rho_minus:
        return (Interval(low=rho_plus, high=rho_minus),)
    return ()


def rule_from_dict(data: Dict[str, object]) -> RhoRule:
    """Rebuild a rule written by RhoRule.to_dict"""
    try:
        return RhoRule(
            combination=str(data["combination"]),
            rho_plus=None if data.get("rho_plus") is None else float(data["rho_plus"]),
            rho_minus=None if data.get("rho_minus") is None else float(data["rho_minus"]),
            accuracy=float(data["accuracy"]),
            n_pairs=int(data.get("n_pairs", 0)),
            classifier=data.get("classifier"),
            measure=data.get("measure"),
        )
    except KeyError as e:
        raise ParseError(f"rule document lacks field {e}") from e


def group(pairs: Sequence[PredictionPair]) -> Groups:
    """
    Split pairs by which filter did better

    A strictly higher riTDS-1 measure puts a pair in the riTDS-1 group; ties
    go to riTDS-2.
    """
    if not pairs:
        raise ParameterError("no prediction pairs to group")
    ritds1 = [p for p in pairs if p.prefers_ritds1]
    ritds2 = [p for p in pairs if not p.prefers_ritds1]
    return Groups(ritds1, ritds2)


def group_dpr_medians(pairs: Sequence[PredictionPair]) -> Dict[str, Optional[float]]:
    """Median DPR of each group; None for an empty group"""
    groups = group(pairs)
    return {
        Strategy.RITDS1.value: float(np.median([p.dpr for p in groups.ritds1])) if groups.ritds1 else None,
        Strategy.RITDS2.value: float(np.median([p.dpr for p in groups.ritds2])) if groups.ritds2 else None,
    }


def _arrays(pairs: Sequence[PredictionPair]) -> Tuple[np.ndarray, np.ndarray]:
    dprs = np.array([p.dpr for p in pairs], dtype=float)
    wins = np.array([p.prefers_ritds1 for p in pairs], dtype=bool)
    return dprs, wins


def rho_grid(pairs: Sequence[PredictionPair]) -> np.ndarray:
    """
    Candidate thresholds: min + i * (max - min) / 100 for i = 0..100, then a
    sentinel just above max
    """
    if len(pairs) < 2:
        raise ParameterError(f"rho sweep needs at least 2 pairs, got {len(pairs)}")
    dprs, _ = _arrays(pairs)
    lo, hi = float(dprs.min()), float(dprs.max())
    if hi == lo:
        raise ParameterError(f"all pairs share DPR {lo}; no threshold can separate them")
    grid = np.linspace(lo, hi, RHO_GRID_STEPS + 1)
    return np.append(grid, np.nextafter(hi, np.inf))


def _recommend_masks(dprs: np.ndarray, grid: np.ndarray, assumption: Assumption) -> np.ndarray:
    """(len(grid), len(dprs)) boolean matrix: True recommends riTDS-1"""
    if assumption is Assumption.RHO_PLUS:
        return dprs[None, :] >= grid[:, None]
    return dprs[None, :] < grid[:, None]


def rho_curve(pairs: Sequence[PredictionPair], assumption: Assumption) -> pd.DataFrame:
    """
    Recommendation accuracy at every candidate threshold

    Returns:
        DataFrame with rho and accuracy columns, rho ascending
    """
    grid = rho_grid(pairs)
    dprs, wins = _arrays(pairs)
    correct = _recommend_masks(dprs, grid, Assumption(assumption)) == wins[None, :]
    return pd.DataFrame({"rho": grid, "accuracy": correct.mean(axis=1)})


def sweep_rho(pairs: Sequence[PredictionPair], assumption: Assumption,
              classifier: Optional[str] = None, measure: Optional[str] = None) -> RhoRule:
    """
    Fit the threshold of one assumption by grid search

    Args:
        pairs: At least two pairs with distinct DPR values
        assumption: rho_plus or rho_minus
        classifier: Label stored on the rule
        measure: Label stored on the rule

    Returns:
        RhoRule at the highest-accuracy threshold; ties resolve to the smallest rho
    """
    assumption = Assumption(assumption)
    curve = rho_curve(pairs, assumption)
    best = int(np.argmax(curve["accuracy"].to_numpy()))
    rho = float(curve["rho"].iloc[best])
    accuracy = float(curve["accuracy"].iloc[best])
    logger.debug("%s sweep over %d pairs: rho=%.4f accuracy=%.3f",
                 assumption.value, len(pairs), rho, accuracy)
    return RhoRule(
        combination=assumption.value,
        rho_plus=rho if assumption is Assumption.RHO_PLUS else None,
        rho_minus=rho if assumption is Assumption.RHO_MINUS else None,
        accuracy=accuracy,
        n_pairs=len(pairs),
        classifier=classifier,
        measure=measure,
    )


def _best_pair(correct: np.ndarray) -> Tuple[int, int, float]:
    """Argmax of a (plus, minus, pair) correctness cube; ties to the smallest thresholds"""
    accuracy = correct.mean(axis=2)
    flat = int(np.argmax(accuracy))
    i, j = np.unravel_index(flat, accuracy.shape)
    return int(i), int(j), float(accuracy[i, j])


def fit_rule(pairs: Sequence[PredictionPair], classifier: Optional[str] = None,
             measure: Optional[str] = None) -> RhoRule:
    """
    Fit the recommendation rule for one classifier

    rho_plus and rho_minus are swept on their own; the union (DPR >= a or
    DPR < b) and intersection (a <= DPR < b) are searched jointly over the
    same grid. The most accurate combination wins, with ties resolved in the
    order rho_plus, rho_minus, union, intersection.
    """
    grid = rho_grid(pairs)
    dprs, wins = _arrays(pairs)
    plus = _recommend_masks(dprs, grid, Assumption.RHO_PLUS)
    minus = _recommend_masks(dprs, grid, Assumption.RHO_MINUS)

    candidates = [
        sweep_rho(pairs, Assumption.RHO_PLUS, classifier, measure),
        sweep_rho(pairs, Assumption.RHO_MINUS, classifier, measure),
    ]
    for combination, joined in (("union", plus[:, None, :] | minus[None, :, :]),
                                ("intersection", plus[:, None, :] & minus[None, :, :])):
        i, j, accuracy = _best_pair(joined == wins[None, None, :])
        candidates.append(RhoRule(combination, float(grid[i]), float(grid[j]), accuracy,
                                  len(pairs), classifier, measure))

    best = candidates[0]
    for rule in candidates[1:]:
        if rule.accuracy > best.accuracy:
            best = rule
    logger.info("Rule for %s (%s): %s, accuracy %.3f",
                classifier or "pairs", measure or "measure", best.describe(), best.accuracy)
    return best


def recommend(dpr: float, rule: RhoRule) -> Strategy:
    """riTDS-1 inside the rule's ranges, riTDS-2 outside"""
    return Strategy.RITDS1 if rule.recommends_ritds1(dpr) else Strategy.RITDS2


@dataclass(frozen=True)
class RuleEvaluation:
    """Recommendation accuracy and the measure obtained by following the rule"""

    accuracy: float
    accuracy_ritds1: float
    accuracy_ritds2: float
    mean_measure: float
    mean_ritds1: float
    mean_ritds2: float
    mean_oracle: float
    accuracy_gain_ritds1: Optional[float]
    accuracy_gain_ritds2: Optional[float]
    measure_delta_ritds1: float
    measure_delta_ritds2: float

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def evaluate_rule(pairs: Sequence[PredictionPair], rule: RhoRule) -> RuleEvaluation:
    """
    Compare the rule with always choosing one filter

    Args:
        pairs: Prediction pairs (typically the rule's fitting data)
        rule: Fitted rule

    Returns:
        RuleEvaluation with accuracies, mean measures and relative accuracy gains (%)
    """
    if not pairs:
        raise ParameterError("no prediction pairs to evaluate")
    dprs, wins = _arrays(pairs)
    first = np.array([p.measure_1 for p in pairs])
    second = np.array([p.measure_2 for p in pairs])
    choose_first = np.array([rule.recommends_ritds1(d) for d in dprs], dtype=bool)

    accuracy = float(np.mean(choose_first == wins))
    accuracy_1 = float(np.mean(wins))
    accuracy_2 = float(np.mean(~wins))
    followed = np.where(choose_first, first, second)
    mean_followed = float(followed.mean())
    mean_1 = float(first.mean())
    mean_2 = float(second.mean())
    return RuleEvaluation(
        accuracy=accuracy,
        accuracy_ritds1=accuracy_1,
        accuracy_ritds2=accuracy_2,
        mean_measure=float(mean_followed),
        mean_ritds1=mean_1,
        mean_ritds2=mean_2,
        mean_oracle=float(np.maximum(first, second).mean()),
        accuracy_gain_ritds1=relative_gain(accuracy, accuracy_1),
        accuracy_gain_ritds2=relative_gain(accuracy, accuracy_2),
        measure_delta_ritds1=float(mean_followed - mean_1),
        measure_delta_ritds2=float(mean_followed - mean_2),
    )


def load_pairs(source: Union[str, Path, bytes, BinaryIO],
               classifier: Optional[str] = None,
               measure: Optional[str] = None) -> List[PredictionPair]:
    """
    Read prediction pairs from CSV with target, dpr, measure1 and measure2 columns

    Optional classifier and measure columns (as written by the experiment
    reports) filter the rows when a classifier or measure is requested.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise EmptyInputError(f"pairs file not found: {path}")
        raw = path.read_bytes()
    else:
        raw = source if isinstance(source, bytes) else source.read()
    try:
        df = pd.read_csv(io.BytesIO(raw), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError("pairs input is empty") from e

    df.columns = [str(c).strip().casefold() for c in df.columns]
    for column in PAIR_COLUMNS:
        if column not in df.columns:
            raise SchemaError(f"pairs input lacks column '{column}'", column=column)
    if classifier is not None:
        if "classifier" not in df.columns:
            raise SchemaError("pairs input has no classifier column", column="classifier")
        df = df[df["classifier"].str.casefold() == classifier.casefold()]
    if measure is not None and "measure" in df.columns:
        df = df[df["measure"] == measure]
    if df.empty:
        raise EmptyInputError("pairs input has no rows")

    pairs = []
    for index, row in df.iterrows():
        line = int(index) + 2
        try:
            values = [float(row[c]) for c in PAIR_COLUMNS[1:]]
        except ValueError as e:
            raise ParseError(f"non-numeric pair value at line {line}", row=line) from e
        pairs.append(PredictionPair(str(row["target"]), *values))
    return pairs
