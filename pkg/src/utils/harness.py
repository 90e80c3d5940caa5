"""
Leave-one-release-out experiments and report generation
"""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.config import DEFAULT_K, DEFAULT_R_VALUES, MAX_R, REPORT_SCHEMA_VERSION
from src.errors import ParameterError, ParseError, SampleSizeError, TDSError
from src.utils.classifiers import ModelKind, predict_scores, train
from src.utils.dataset import Release, Repository, candidate_pool, load_repository, load_schema
from src.utils.metrics import (
    MEASURE_NAMES,
    ConfusionMatrix,
    MeasureSet,
    dpr,
    evaluate,
    mean_with_exclusions,
    relative_gain,
    wilcoxon_signed_rank,
)
from src.utils.selector import PredictionPair, RhoRule, evaluate_rule, fit_rule, recommend
from src.utils.simplify import Strategy, flatten, select_rtds, simplify

logger = logging.getLogger(__name__)

R_STRATEGIES = (Strategy.RTDS, Strategy.RITDS1, Strategy.RITDS2, Strategy.RITDS_RHO)
RHO_MEASURES = ("f_measure", "g_measure")
STRATEGY_ORDER = {s: i for i, s in enumerate(Strategy)}
CLASSIFIER_ORDER = {c: i for i, c in enumerate(ModelKind)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run"""

    repo: str
    strategies: Tuple[Strategy, ...] = tuple(Strategy)
    classifiers: Tuple[ModelKind, ...] = tuple(ModelKind)
    r_values: Tuple[int, ...] = DEFAULT_R_VALUES
    k: int = DEFAULT_K
    seed: int = 0
    out_dir: Optional[str] = None
    rho_measure: str = "f_measure"
    jobs: int = 1
    clamp_negative: bool = False
    schema: str = "builtin:promise20"

    def __post_init__(self):
        strategies = tuple(sorted({Strategy(s) for s in self.strategies}, key=STRATEGY_ORDER.get))
        classifiers = tuple(sorted({ModelKind(c) for c in self.classifiers}, key=CLASSIFIER_ORDER.get))
        r_values = tuple(sorted({int(r) for r in self.r_values}))
        if not strategies:
            raise ParameterError("at least one strategy is required")
        if not classifiers:
            raise ParameterError("at least one classifier is required")
        if not r_values:
            raise ParameterError("at least one r value is required")
        if any(not 1 <= r <= MAX_R for r in r_values):
            raise ParameterError(f"r values must lie in [1, {MAX_R}], got {list(r_values)}")
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")
        if self.rho_measure not in RHO_MEASURES:
            raise ParameterError(f"rho measure must be one of {RHO_MEASURES}, got '{self.rho_measure}'")
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "classifiers", classifiers)
        object.__setattr__(self, "r_values", r_values)

    def to_dict(self) -> Dict[str, object]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "repo": str(self.repo),
            "strategies": [s.value for s in self.strategies],
            "classifiers": [c.value for c in self.classifiers],
            "r_values": list(self.r_values),
            "k": self.k,
            "seed": self.seed,
            "rho_measure": self.rho_measure,
            "clamp_negative": self.clamp_negative,
            "schema": self.schema,
        }


@dataclass(frozen=True)
class EvaluationRecord:
    """
    Outcome of one (target, strategy, classifier, r) cell

    Failed cells keep their reason and leave the measures empty.
    """

    target: str
    strategy: Strategy
    classifier: ModelKind
    r: int
    k: int
    tds_size: Optional[int] = None
    confusion: Optional[ConfusionMatrix] = None
    measures: Optional[MeasureSet] = None
    rtds_dpr: Optional[float] = None
    chosen_filter: Optional[str] = None
    sources: Tuple[str, ...] = field(default_factory=tuple)
    runtime: float = 0.0
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.reason is None

    @property
    def sort_key(self) -> Tuple[str, int, int, int]:
        return (self.target, STRATEGY_ORDER[self.strategy], CLASSIFIER_ORDER[self.classifier], self.r)

    def measure(self, name: str) -> Optional[float]:
        if self.measures is None:
            return None
        return getattr(self.measures, name)

    def to_dict(self) -> Dict[str, object]:
        return {
            "target": self.target,
            "strategy": self.strategy.value,
            "classifier": self.classifier.value,
            "r": self.r,
            "k": self.k,
            "tds_size": self.tds_size,
            "confusion": asdict(self.confusion) if self.confusion else None,
            "measures": self.measures.to_dict() if self.measures else None,
            "rtds_dpr": self.rtds_dpr,
            "chosen_filter": self.chosen_filter,
            "sources": list(self.sources),
            "runtime": self.runtime,
            "status": "ok" if self.ok else "failed",
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "EvaluationRecord":
        return cls(
            target=str(data["target"]),
            strategy=Strategy(data["strategy"]),
            classifier=ModelKind(data["classifier"]),
            r=int(data["r"]),
            k=int(data["k"]),
            tds_size=data.get("tds_size"),
            confusion=ConfusionMatrix(**data["confusion"]) if data.get("confusion") else None,
            measures=MeasureSet(**data["measures"]) if data.get("measures") else None,
            rtds_dpr=data.get("rtds_dpr"),
            chosen_filter=data.get("chosen_filter"),
            sources=tuple(data.get("sources", ())),
            runtime=float(data.get("runtime", 0.0)),
            reason=data.get("reason"),
        )


def _cells(config: ExperimentConfig) -> List[Tuple[Strategy, int]]:
    """(strategy, r) cells computed per target; riTDS-rho needs both filters"""
    wanted = set(config.strategies)
    if Strategy.RITDS_RHO in wanted:
        wanted.update((Strategy.RITDS1, Strategy.RITDS2))
    cells = []
    for strategy in sorted(wanted, key=STRATEGY_ORDER.get):
        if strategy is Strategy.RITDS_RHO:
            continue
        if strategy in R_STRATEGIES:
            cells.extend((strategy, r) for r in config.r_values)
        else:
            cells.append((strategy, 0))
    return cells


def _rtds_dpr(pool: Repository, target: Release, r: int) -> Optional[float]:
    try:
        return dpr(flatten(select_rtds(pool, target, r), Strategy.RTDS, r=r), target)
    except TDSError as e:
        logger.debug("No DPR for %s at r=%d: %s", target.name, r, e)
        return None


def _failed(target: Release, strategy: Strategy, kind: ModelKind, r: int, k: int,
            reason: str, **kwargs) -> EvaluationRecord:
    logger.warning("Cell %s / %s / %s / r=%d failed: %s", target.name, strategy.value, kind.value, r, reason)
    return EvaluationRecord(target.name, strategy, kind, r, k, reason=reason, **kwargs)


def run_target(repo: Repository, target: Release, config: ExperimentConfig) -> List[EvaluationRecord]:
    """
    Every configured cell for one target release, except riTDS-rho

    The simplified training set of a (strategy, r) cell is shared by all
    classifiers. The test set is the whole target release.
    """
    records: List[EvaluationRecord] = []
    try:
        pool = candidate_pool(repo, target)
    except TDSError as e:
        return [
            _failed(target, strategy, kind, r, config.k, str(e))
            for strategy, r in _cells(config)
            for kind in config.classifiers
        ]
    logger.debug("Target %s: %d candidate releases", target.name, len(pool))

    dprs = {r: _rtds_dpr(pool, target, r) for r in config.r_values}
    truth = target.labels
    for strategy, r in _cells(config):
        rtds_dpr = dprs.get(r) if r else None
        started = time.perf_counter()
        try:
            tds = simplify(pool, target, strategy, r=r or None, k=config.k)
        except TDSError as e:
            records.extend(_failed(target, strategy, kind, r, config.k, str(e), rtds_dpr=rtds_dpr)
                           for kind in config.classifiers)
            continue
        simplify_time = time.perf_counter() - started
        sources = tuple(f"{p}-{v}" for p, v in tds.source_releases)
        logger.debug("%s %s r=%d: %d instances", target.name, strategy.value, r, len(tds))

        for kind in config.classifiers:
            started = time.perf_counter()
            try:
                model = train(kind, tds)
                scores = predict_scores(model, target.metrics)
                cm, measures = evaluate(scores, truth, tds, target)
            except TDSError as e:
                records.append(_failed(target, strategy, kind, r, config.k, str(e),
                                       tds_size=len(tds), rtds_dpr=rtds_dpr, sources=sources))
                continue
            records.append(EvaluationRecord(
                target=target.name,
                strategy=strategy,
                classifier=kind,
                r=r,
                k=config.k,
                tds_size=len(tds),
                confusion=cm,
                measures=measures,
                rtds_dpr=rtds_dpr,
                sources=sources,
                runtime=simplify_time + time.perf_counter() - started,
            ))
    return records


def _index(records: Iterable[EvaluationRecord]) -> Dict[Tuple[str, Strategy, ModelKind, int], EvaluationRecord]:
    return {(rec.target, rec.strategy, rec.classifier, rec.r): rec for rec in records}


def rho_pairs(records: Sequence[EvaluationRecord], classifier: ModelKind,
              measure: str = "f_measure") -> List[PredictionPair]:
    """
    riTDS-1 / riTDS-2 prediction pairs of one classifier, one per (target, r)

    Cells with a failed filter, an undefined measure or no positive DPR are skipped.
    """
    index = _index(records)
    pairs = []
    for rec in sorted(records, key=lambda x: x.sort_key):
        if rec.strategy is not Strategy.RITDS1 or rec.classifier is not ModelKind(classifier):
            continue
        other = index.get((rec.target, Strategy.RITDS2, rec.classifier, rec.r))
        if other is None or not (rec.ok and other.ok):
            continue
        m1, m2 = rec.measure(measure), other.measure(measure)
        if m1 is None or m2 is None or not rec.rtds_dpr:
            continue
        pairs.append(PredictionPair(f"{rec.target}@r{rec.r}", rec.rtds_dpr, m1, m2))
    return pairs


def fit_rules(records: Sequence[EvaluationRecord], measure: str = "f_measure") -> Dict[ModelKind, RhoRule]:
    """Fitted filter-recommendation rule per classifier; classifiers without usable pairs are skipped"""
    rules = {}
    for kind in sorted({rec.classifier for rec in records}, key=CLASSIFIER_ORDER.get):
        pairs = rho_pairs(records, kind, measure)
        try:
            rules[kind] = fit_rule(pairs, classifier=kind.value, measure=measure)
        except ParameterError as e:
            logger.warning("No %s rule for %s: %s", measure, kind.value, e)
    return rules


def apply_rules(records: Sequence[EvaluationRecord], rules: Dict[ModelKind, RhoRule],
                config: ExperimentConfig) -> List[EvaluationRecord]:
    """riTDS-rho records: the recommended filter's outcome for every (target, classifier, r)"""
    index = _index(records)
    targets = sorted({rec.target for rec in records})
    out = []
    for target in targets:
        for kind in config.classifiers:
            for r in config.r_values:
                first = index.get((target, Strategy.RITDS1, kind, r))
                if first is None:
                    continue
                rule = rules.get(kind)
                if rule is None:
                    reason = f"no fitted rule for {kind.value}"
                elif not first.rtds_dpr:
                    reason = "DPR of the release-level training set is undefined"
                else:
                    chosen = recommend(first.rtds_dpr, rule)
                    source = index[(target, chosen, kind, r)] if chosen is Strategy.RITDS2 else first
                    out.append(replace(source, strategy=Strategy.RITDS_RHO, chosen_filter=chosen.value))
                    continue
                logger.warning("Cell %s / riTDS-rho / %s / r=%d failed: %s", target, kind.value, r, reason)
                out.append(EvaluationRecord(target, Strategy.RITDS_RHO, kind, r, config.k,
                                            rtds_dpr=first.rtds_dpr, reason=reason))
    return out


def run_experiment(config: ExperimentConfig, repo: Optional[Repository] = None) -> List[EvaluationRecord]:
    """
    Leave-one-release-out cross-project prediction over a repository

    Every release is the target once; its training data comes only from other
    projects. When riTDS-rho is requested, riTDS-1 and riTDS-2 are computed
    as well and kept in the output, since the rule is fitted on them.

    Args:
        config: Experiment parameters
        repo: Preloaded repository; loaded from config.repo when None

    Returns:
        Records sorted by (target, strategy, classifier, r)
    """
    if repo is None:
        repo = load_repository(config.repo, load_schema(config.schema), clamp_negative=config.clamp_negative)
    if len(repo.projects) < 2:
        raise ParameterError(f"cross-project prediction needs at least 2 projects, got {repo.projects}")

    logger.info("Running %d targets x %d cells x %d classifiers (jobs=%d)",
                len(repo), len(_cells(config)), len(config.classifiers), config.jobs)
    started = time.perf_counter()
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as executor:
            batches = list(executor.map(lambda t: run_target(repo, t, config), repo.releases))
    else:
        batches = [run_target(repo, target, config) for target in repo]
    records = [rec for batch in batches for rec in batch]

    if Strategy.RITDS_RHO in config.strategies:
        rules = fit_rules(records, config.rho_measure)
        records.extend(apply_rules(records, rules, config))

    records.sort(key=lambda rec: rec.sort_key)
    n_failed = sum(not rec.ok for rec in records)
    logger.info("Experiment finished: %d records (%d failed) in %.1fs",
                len(records), n_failed, time.perf_counter() - started)
    return records


# --- Reports --------------------------------------------------------------


def _summary_table(records: Sequence[EvaluationRecord]) -> pd.DataFrame:
    rows = []
    keys = sorted({(rec.strategy, rec.classifier, rec.r) for rec in records},
                  key=lambda x: (STRATEGY_ORDER[x[0]], CLASSIFIER_ORDER[x[1]], x[2]))
    for strategy, kind, r in keys:
        cell = [rec for rec in records if (rec.strategy, rec.classifier, rec.r) == (strategy, kind, r)]
        done = [rec for rec in cell if rec.ok]
        row: Dict[str, object] = {
            "strategy": strategy.value,
            "classifier": kind.value,
            "r": r,
            "n_targets": len(cell),
            "n_failed": len(cell) - len(done),
            "mean_tds_size": float(np.mean([rec.tds_size for rec in done])) if done else None,
        }
        for name in MEASURE_NAMES:
            mean, _, excluded = mean_with_exclusions([rec.measure(name) for rec in done])
            row[f"mean_{name}"] = mean
            row[f"{name}_excluded"] = excluded
        if strategy is Strategy.RITDS_RHO:
            row["chose_ritds1"] = sum(rec.chosen_filter == Strategy.RITDS1.value for rec in done)
        rows.append(row)
    return pd.DataFrame(rows)


def _paired(records: Sequence[EvaluationRecord], strategy: Strategy, baseline: Strategy,
            kind: ModelKind, r: int, measure: str) -> Tuple[List[float], List[float]]:
    index = _index(records)
    a, b = [], []
    for rec in sorted(records, key=lambda x: x.sort_key):
        if (rec.strategy, rec.classifier, rec.r) != (strategy, kind, r) or not rec.ok:
            continue
        base = index.get((rec.target, baseline, kind, 0))
        if base is None or not base.ok:
            continue
        x, y = rec.measure(measure), base.measure(measure)
        if x is not None and y is not None:
            a.append(x)
            b.append(y)
    return a, b


def _wilcoxon_table(records: Sequence[EvaluationRecord]) -> pd.DataFrame:
    """riTDS variants against iTDS, paired by target"""
    rows = []
    present = {(rec.strategy, rec.classifier, rec.r) for rec in records}
    for kind in sorted({rec.classifier for rec in records}, key=CLASSIFIER_ORDER.get):
        if (Strategy.ITDS, kind, 0) not in present:
            continue
        for strategy in (Strategy.RITDS1, Strategy.RITDS2, Strategy.RITDS_RHO):
            for r in sorted({rec.r for rec in records if rec.strategy is strategy}):
                if (strategy, kind, r) not in present:
                    continue
                for measure in RHO_MEASURES:
                    a, b = _paired(records, strategy, Strategy.ITDS, kind, r, measure)
                    row: Dict[str, object] = {
                        "classifier": kind.value,
                        "strategy": strategy.value,
                        "baseline": Strategy.ITDS.value,
                        "r": r,
                        "measure": measure,
                        "n": len(a),
                        "mean": float(np.mean(a)) if a else None,
                        "mean_baseline": float(np.mean(b)) if b else None,
                    }
                    row["ratio"] = (row["mean"] / row["mean_baseline"]
                                    if a and row["mean_baseline"] else None)
                    try:
                        result = wilcoxon_signed_rank(a, b)
                        row.update(statistic=result.statistic, p_value=result.p_value, method=result.method)
                    except SampleSizeError:
                        row.update(statistic=None, p_value=None, method="insufficient")
                    rows.append(row)
    return pd.DataFrame(rows)


def _rule_table(records: Sequence[EvaluationRecord]) -> Tuple[pd.DataFrame, List[Dict[str, object]]]:
    """Per classifier and grouping measure: fitted rule and its comparison with single filters"""
    rows = []
    documents = []
    for measure in RHO_MEASURES:
        for kind, rule in fit_rules(records, measure).items():
            pairs = rho_pairs(records, kind, measure)
            result = evaluate_rule(pairs, rule)
            documents.append({**rule.to_dict(), "evaluation": result.to_dict()})
            rows.append({"classifier": kind.value, "measure": measure, "rule": rule.describe(),
                         "combination": rule.combination, **result.to_dict()})
    return pd.DataFrame(rows), documents


def _mean_measure(records: Sequence[EvaluationRecord], strategy: Strategy, kind: ModelKind,
                  r: int, name: str) -> Optional[float]:
    values = [rec.measure(name) for rec in records
              if (rec.strategy, rec.classifier, rec.r) == (strategy, kind, r) and rec.ok]
    return mean_with_exclusions(values)[0]


def _precision_increments(records: Sequence[EvaluationRecord]) -> pd.DataFrame:
    """Relative change (%) of mean precision from riTDS-1 and riTDS-2 to riTDS-rho"""
    rows = []
    for kind in sorted({rec.classifier for rec in records}, key=CLASSIFIER_ORDER.get):
        for r in sorted({rec.r for rec in records if rec.strategy is Strategy.RITDS_RHO}):
            rho = _mean_measure(records, Strategy.RITDS_RHO, kind, r, "prec")
            rows.append({
                "classifier": kind.value,
                "r": r,
                "prec_gain_ritds1": relative_gain(rho, _mean_measure(records, Strategy.RITDS1, kind, r, "prec")),
                "prec_gain_ritds2": relative_gain(rho, _mean_measure(records, Strategy.RITDS2, kind, r, "prec")),
            })
    return pd.DataFrame(rows)


def summarize(records: Sequence[EvaluationRecord]) -> Dict[str, pd.DataFrame]:
    """
    Report tables over a set of records

    Returns:
        Dict with "summary" (means per strategy/classifier/r with exclusion
        counts), "wilcoxon" (riTDS variants against iTDS), "rules"
        (recommendation accuracy per classifier and measure) and
        "precision" (riTDS-rho precision increments)
    """
    if not records:
        raise ParameterError("no records to summarize")
    records = sorted(records, key=lambda x: x.sort_key)
    rules, _ = _rule_table(records)
    return {
        "summary": _summary_table(records),
        "wilcoxon": _wilcoxon_table(records),
        "rules": rules,
        "precision": _precision_increments(records),
    }


def _write_csv(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    return path


def write_summary(records: Sequence[EvaluationRecord], out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write the deterministic report files derived from records

    summary.csv, wilcoxon.csv, rules.csv, precision.csv, pairs.csv and
    rho_rules.json
    """
    out = Path(out_dir)
    records = sorted(records, key=lambda x: x.sort_key)
    out.mkdir(parents=True, exist_ok=True)
    tables = summarize(records)
    paths = {name: _write_csv(df, out / f"{name}.csv") for name, df in tables.items()}

    _, documents = _rule_table(records)
    rules_path = out / "rho_rules.json"
    rules_path.write_text(json.dumps({"schema_version": REPORT_SCHEMA_VERSION, "rules": documents},
                                     indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["rho_rules"] = rules_path

    pair_rows = [
        {"classifier": kind.value, "measure": measure, "target": p.target, "dpr": p.dpr,
         "measure1": p.measure_1, "measure2": p.measure_2}
        for measure in RHO_MEASURES
        for kind in sorted({rec.classifier for rec in records}, key=CLASSIFIER_ORDER.get)
        for p in rho_pairs(records, kind, measure)
    ]
    paths["pairs"] = _write_csv(pd.DataFrame(pair_rows, columns=["classifier", "measure", "target", "dpr",
                                                                 "measure1", "measure2"]),
                                out / "pairs.csv")
    for name, path in paths.items():
        logger.info("Wrote %s report to %s", name, path)
    return paths


def write_reports(records: Sequence[EvaluationRecord], out_dir: Union[str, Path],
                  config: Optional[ExperimentConfig] = None) -> Dict[str, Path]:
    """
    Persist records.jsonl, the derived reports and the run configuration

    Args:
        records: Experiment records
        out_dir: Output directory (created when missing)
        config: Configuration echoed to config.json

    Returns:
        Mapping of report name to path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.jsonl"
    with records_path.open("w", encoding="utf-8") as fh:
        for rec in sorted(records, key=lambda x: x.sort_key):
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    paths = {"records": records_path}
    if config is not None:
        config_path = out / "config.json"
        config_path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
        paths["config"] = config_path
    paths.update(write_summary(records, out))
    return paths


def load_records(path: Union[str, Path]) -> List[EvaluationRecord]:
    """Read records.jsonl back"""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"records file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(EvaluationRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"bad record at line {line_no}: {e}", row=line_no) from e
    return records
