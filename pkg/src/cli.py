"""
Command-line interface: ingest, simplify, predict, experiment, sweep-rho, report
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd

from src.config import DEFAULT_K, DEFAULT_R_VALUES, SCORE_THRESHOLD, configure_logging, default_data_dir
from src.errors import ParameterError, TDSError, UsageError
from src.utils.classifiers import ModelKind, model_to_json, predict_scores, train
from src.utils.dataset import (
    TRANSFORMED_COLUMN,
    Release,
    Repository,
    candidate_pool,
    describe_repository,
    load_repository,
    load_schema,
    log_transform,
    parse_csv,
    read_release,
    write_release,
)
from src.utils.harness import (
    RHO_MEASURES,
    ExperimentConfig,
    load_records,
    run_experiment,
    write_reports,
    write_summary,
)
from src.utils.metrics import dpr, evaluate
from src.utils.selector import Assumption, fit_rule, load_pairs, recommend, rho_curve, rule_from_dict, sweep_rho
from src.utils.simplify import Strategy, flatten, select_rtds, simplify

logger = logging.getLogger(__name__)

T = TypeVar("T")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 is kept for data errors"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _one_of(parse: Callable[[str], T]) -> Callable[[str], T]:
    def convert(text: str) -> T:
        try:
            return parse(text)
        except (ParameterError, ValueError) as e:
            raise argparse.ArgumentTypeError(str(e)) from e
    return convert


def _list_of(parse: Callable[[str], T]) -> Callable[[str], List[T]]:
    one = _one_of(parse)

    def convert(text: str) -> List[T]:
        return [one(item) for item in text.split(",") if item.strip()]
    return convert


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--schema", default="builtin:promise20",
                        help="builtin:promise20 or a file with one metric name per line")
    parser.add_argument("--clamp-negative", action="store_true",
                        help="Set negative metric values to 0 before the log transform")


def _add_repo(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--repo", help="Directory of release CSVs (default: $RITDS_DATA_DIR)")
    _add_common(parser)


def build_parser() -> argparse.ArgumentParser:
    """Construct the argument parser"""
    parser = _Parser(prog="ritds", description="Multi-granularity training data simplification "
                                               "for cross-project defect prediction")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    _register_ingest(subparsers)
    _register_simplify(subparsers)
    _register_predict(subparsers)
    _register_experiment(subparsers)
    _register_sweep_rho(subparsers)
    _register_report(subparsers)
    return parser


def _register_ingest(subparsers) -> None:
    parser = subparsers.add_parser("ingest", help="Validate release files and write normalized CSVs")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--input", nargs="+", metavar="PATH", help="Release CSV files")
    source.add_argument("--repo", help="Directory of release CSVs (default: $RITDS_DATA_DIR)")
    _add_common(parser)
    parser.add_argument("--no-transform", action="store_true", help="Keep raw metric values")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.set_defaults(handler=_handle_ingest)


def _register_simplify(subparsers) -> None:
    parser = subparsers.add_parser("simplify", help="Build the simplified training set of one target")
    _add_repo(parser)
    parser.add_argument("--target", required=True, help="Target release as project:version (or project-version)")
    parser.add_argument("--strategy", required=True, type=_one_of(Strategy.parse),
                        help="none, rtds, itds, ritds1, ritds2 or ritds-rho")
    parser.add_argument("--r", type=int, help="Releases kept at the release level")
    parser.add_argument("--k", type=int, default=DEFAULT_K, help="Neighbourhood size")
    parser.add_argument("--rules", help="rho_rules.json for strategy ritds-rho")
    parser.add_argument("--classifier", type=_one_of(ModelKind.parse), help="Rule to apply for strategy ritds-rho")
    parser.add_argument("--out", required=True, help="Output CSV; provenance goes to <out>.provenance.json")
    parser.set_defaults(handler=_handle_simplify)


def _register_predict(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="Train on one CSV and evaluate on another")
    parser.add_argument("--train", required=True, help="Training CSV (a release or a simplify output)")
    parser.add_argument("--test", required=True, help="Test release CSV")
    parser.add_argument("--classifier", required=True, type=_one_of(ModelKind.parse), help="nb, lr or dt")
    parser.add_argument("--no-transform", action="store_true", help="Inputs are used as given")
    _add_common(parser)
    parser.add_argument("--out", required=True, help="Output directory")
    parser.set_defaults(handler=_handle_predict)


def _register_experiment(subparsers) -> None:
    parser = subparsers.add_parser("experiment", help="Leave-one-release-out experiment")
    _add_repo(parser)
    parser.add_argument("--strategies", type=_list_of(Strategy.parse), default=list(Strategy),
                        help="Comma-separated strategies (default: all)")
    parser.add_argument("--classifiers", type=_list_of(ModelKind.parse), default=list(ModelKind),
                        help="Comma-separated classifiers (default: nb,lr,dt)")
    parser.add_argument("--r", dest="r_values", type=_list_of(int), default=list(DEFAULT_R_VALUES),
                        help="Comma-separated r values (default: 1,2,3)")
    parser.add_argument("--k", type=int, default=DEFAULT_K, help="Neighbourhood size")
    parser.add_argument("--seed", type=int, default=0, help="Recorded for provenance")
    parser.add_argument("--jobs", type=int, default=1, help="Parallel targets")
    parser.add_argument("--rho-measure", choices=RHO_MEASURES, default="f_measure",
                        help="Measure grouping the riTDS-rho pairs")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.set_defaults(handler=_handle_experiment)


def _register_sweep_rho(subparsers) -> None:
    parser = subparsers.add_parser("sweep-rho", help="Fit the DPR threshold from prediction pairs")
    parser.add_argument("--pairs", required=True, help="CSV with target, dpr, measure1, measure2")
    parser.add_argument("--assumption", choices=("plus", "minus", "both"), default="both")
    parser.add_argument("--classifier", help="Restrict to rows of this classifier")
    parser.add_argument("--measure", choices=RHO_MEASURES, default="f_measure",
                        help="Rows of this grouping measure when the file has a measure column")
    parser.add_argument("--out", required=True, help="Output JSON")
    parser.set_defaults(handler=_handle_sweep_rho)


def _register_report(subparsers) -> None:
    parser = subparsers.add_parser("report", help="Regenerate reports from records.jsonl")
    parser.add_argument("--records", required=True, help="records.jsonl of an experiment")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.set_defaults(handler=_handle_report)


def _repo_dir(args: argparse.Namespace) -> Path:
    repo = args.repo or default_data_dir()
    if repo is None:
        raise UsageError("no repository given: pass --repo or set RITDS_DATA_DIR")
    path = Path(repo)
    if not path.is_dir():
        raise UsageError(f"repository directory not found: {path}")
    return path


def _load(args: argparse.Namespace, transform: bool = True) -> Repository:
    return load_repository(_repo_dir(args), load_schema(args.schema),
                           clamp_negative=args.clamp_negative, transform=transform)


def _find_target(repo: Repository, name: str) -> Release:
    project, sep, version = name.rpartition(":")
    for release in repo:
        if release.name == name or (sep and release.key == (project, version)):
            return release
    raise ParameterError(f"target release '{name}' is not in the repository",
                         hint=f"known releases: {', '.join(r.name for r in repo)}")


def _write_json(path: Path, document: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_inputs(args: argparse.Namespace) -> Repository:
    schema = load_schema(args.schema)
    releases = []
    for name in args.input:
        if not Path(name).is_file():
            raise UsageError(f"input file not found: {name}")
        release = read_release(name, schema)
        if not args.no_transform and not release.log_transformed:
            release = log_transform(release, clamp=args.clamp_negative)
        releases.append(release)
    return Repository(tuple(releases))


def _handle_ingest(args: argparse.Namespace) -> int:
    repo = _read_inputs(args) if args.input else _load(args, transform=not args.no_transform)
    out = Path(args.out)
    for release in repo:
        write_release(release, out / f"{release.name}.csv")
    summary = describe_repository(repo)
    summary.to_csv(out / "summary.csv", index=False, lineterminator="\n")
    print(summary.to_string(index=False))
    logger.info("Wrote %d releases to %s", len(repo), out)
    return 0


def _ritds_rho_filter(args: argparse.Namespace, pool: Repository, target: Release) -> Strategy:
    if not args.rules or args.classifier is None:
        raise UsageError("strategy ritds-rho needs --rules and --classifier")
    if args.r is None:
        raise UsageError("strategy ritds-rho needs --r")
    if not Path(args.rules).is_file():
        raise UsageError(f"rules file not found: {args.rules}")
    document = json.loads(Path(args.rules).read_text(encoding="utf-8"))
    rules = [rule_from_dict(d) for d in document.get("rules", [])
             if d.get("classifier") == args.classifier.value]
    if not rules:
        raise ParameterError(f"no rule for {args.classifier.value} in {args.rules}")
    value = dpr(flatten(select_rtds(pool, target, args.r), Strategy.RTDS, r=args.r), target)
    chosen = recommend(value, rules[0])
    logger.info("DPR %.3f for %s: %s recommended", value, target.name, chosen.value)
    return chosen


def _handle_simplify(args: argparse.Namespace) -> int:
    repo = _load(args)
    target = _find_target(repo, args.target)
    pool = candidate_pool(repo, target)
    strategy = args.strategy
    if strategy is Strategy.RITDS_RHO:
        strategy = _ritds_rho_filter(args, pool, target)
    tds = simplify(pool, target, strategy, r=args.r, k=args.k)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame = tds.to_frame()
    frame[TRANSFORMED_COLUMN] = 1
    frame.to_csv(out, index=False, lineterminator="\n")
    provenance = {**tds.provenance(), "target": target.name, "requested": args.strategy.value}
    _write_json(out.with_name(out.name + ".provenance.json"), provenance)
    print(f"{tds.strategy.value}: {len(tds)} instances from {len(tds.composition())} releases -> {out}")
    return 0


def _read_release(path: str, args: argparse.Namespace, role: str) -> Release:
    source = Path(path)
    if not source.is_file():
        raise UsageError(f"{role} file not found: {source}")
    # a simplify output mixes projects, so the identity is taken from the file name
    release = parse_csv(source.read_bytes(), load_schema(args.schema), project=role, version=source.stem)
    if not args.no_transform and not release.log_transformed:
        release = log_transform(release, clamp=args.clamp_negative)
    return release


def _handle_predict(args: argparse.Namespace) -> int:
    training = _read_release(args.train, args, "train")
    test = _read_release(args.test, args, "test")
    model = train(args.classifier, training)
    scores = predict_scores(model, test.metrics)
    cm, measures = evaluate(scores, test.labels, training, test)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({
        "row": np.arange(len(test)),
        "score": scores,
        "predicted": (scores >= SCORE_THRESHOLD).astype(int),
        "actual": test.labels,
    }).to_csv(out / "predictions.csv", index=False, float_format="%.6f", lineterminator="\n")
    _write_json(out / "measures.json", {"confusion": asdict(cm), "measures": measures.to_dict(),
                                        "classifier": args.classifier.value})
    (out / "model.json").write_text(model_to_json(model) + "\n", encoding="utf-8")
    print(json.dumps(measures.to_dict(), indent=2))
    return 0


def _handle_experiment(args: argparse.Namespace) -> int:
    repo_dir = _repo_dir(args)
    config = ExperimentConfig(
        repo=str(repo_dir),
        strategies=tuple(args.strategies),
        classifiers=tuple(args.classifiers),
        r_values=tuple(args.r_values),
        k=args.k,
        seed=args.seed,
        out_dir=args.out,
        rho_measure=args.rho_measure,
        jobs=args.jobs,
        clamp_negative=args.clamp_negative,
        schema=args.schema,
    )
    records = run_experiment(config)
    paths = write_reports(records, args.out, config)
    failed = sum(not rec.ok for rec in records)
    print(f"{len(records)} records ({failed} failed) -> {paths['records'].parent}")
    return 0


def _curve(pairs, assumption: Assumption) -> dict:
    curve = rho_curve(pairs, assumption)
    return {"rho": curve["rho"].tolist(), "accuracy": curve["accuracy"].tolist()}


def _handle_sweep_rho(args: argparse.Namespace) -> int:
    pairs = load_pairs(args.pairs, classifier=args.classifier, measure=args.measure)
    assumptions = [Assumption.parse(args.assumption)] if args.assumption != "both" else list(Assumption)
    document = {
        "n_pairs": len(pairs),
        "sweeps": [
            {**sweep_rho(pairs, a, classifier=args.classifier, measure=args.measure).to_dict(),
             "curve": _curve(pairs, a)}
            for a in assumptions
        ],
    }
    if args.assumption == "both":
        document["combined"] = fit_rule(pairs, classifier=args.classifier, measure=args.measure).to_dict()
    _write_json(Path(args.out), document)
    for sweep in document["sweeps"]:
        print(f"{sweep['combination']}: {sweep['description']} (accuracy {sweep['accuracy']:.3f})")
    return 0


def _handle_report(args: argparse.Namespace) -> int:
    records = load_records(args.records)
    paths = write_summary(records, args.out)
    print(f"Wrote {len(paths)} reports to {args.out}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Returns:
        0 on success, 1 on usage errors, 2 on data errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    configure_logging(-1 if args.quiet else args.verbose)
    try:
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"ritds: error: {e.message}", file=sys.stderr)
        return e.exit_code
    except TDSError as e:
        print(f"ritds: error: {e.message}", file=sys.stderr)
        if e.hint:
            print(f"hint: {e.hint}", file=sys.stderr)
        return e.exit_code
