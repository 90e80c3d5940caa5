"""
Defect dataset ingestion, preprocessing and synthetic fixtures
"""
import io
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import (
    DomainError,
    EmptyInputError,
    NoCandidatesError,
    ParameterError,
    ParseError,
    SchemaError,
    ShapeError,
)

logger = logging.getLogger(__name__)

PROMISE_METRICS = (
    "WMC", "DIT", "LCOM", "RFC", "CBO", "NOC", "CA", "CE", "DAM", "NPM",
    "MFA", "CAM", "MOA", "IC", "CBM", "AMC", "LCOM3", "MAX_CC", "AVG_CC", "LOC",
)

BUG_COLUMN = "bug"
PROJECT_COLUMNS = ("project", "name")
VERSION_COLUMN = "version"
TRANSFORMED_COLUMN = "log_transformed"
UNNAMED_PROJECT = "unnamed"
UNNAMED_VERSION = "0"


class Label(IntEnum):
    """Binary defect label; buggy is the positive class"""

    NON_BUGGY = 0
    BUGGY = 1


@dataclass(frozen=True)
class MetricSchema:
    """Ordered metric names shared by every instance of a repository"""

    names: Tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(name).strip() for name in self.names)
        if not names:
            raise SchemaError("metric schema is empty")
        folded = [name.casefold() for name in names]
        if len(set(folded)) != len(folded):
            raise SchemaError(f"metric names are not unique: {list(names)}")
        object.__setattr__(self, "names", names)

    @property
    def arity(self) -> int:
        return len(self.names)

    @classmethod
    def promise20(cls) -> "MetricSchema":
        return cls(PROMISE_METRICS)


@dataclass(frozen=True)
class Instance:
    """One class file: metric values, raw bug count and derived label"""

    metrics: Tuple[float, ...]
    bug_count: int

    @property
    def label(self) -> Label:
        return binarize(self.bug_count)


@dataclass(frozen=True, eq=False)
class Release:
    """
    One version of one project

    Metric values are held as a read-only (m, n) matrix in file row order;
    instances are materialised on demand.
    """

    project: str
    version: str
    schema: MetricSchema
    metrics: np.ndarray
    bugs: np.ndarray
    log_transformed: bool = False

    def __post_init__(self):
        metrics = np.array(self.metrics, dtype=float, copy=True)
        bugs = np.array(self.bugs, dtype=np.int64, copy=True)
        if metrics.ndim != 2 or metrics.shape[0] == 0:
            raise EmptyInputError(f"release {self.project}-{self.version} has no instances")
        if metrics.shape[1] != self.schema.arity:
            raise ShapeError(
                f"release {self.project}-{self.version} has {metrics.shape[1]} metrics, "
                f"schema expects {self.schema.arity}"
            )
        if bugs.shape != (metrics.shape[0],):
            raise ShapeError("bug counts do not match the number of instances")
        if not np.all(np.isfinite(metrics)):
            raise DomainError(f"release {self.project}-{self.version} has non-finite metric values")
        if np.any(bugs < 0):
            raise DomainError(f"release {self.project}-{self.version} has negative bug counts")
        metrics.setflags(write=False)
        bugs.setflags(write=False)
        object.__setattr__(self, "project", str(self.project))
        object.__setattr__(self, "version", str(self.version))
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "bugs", bugs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Release):
            return NotImplemented
        return (
            self.key == other.key
            and self.schema == other.schema
            and self.log_transformed == other.log_transformed
            and np.array_equal(self.metrics, other.metrics)
            and np.array_equal(self.bugs, other.bugs)
        )

    def __len__(self) -> int:
        return self.metrics.shape[0]

    @property
    def key(self) -> Tuple[str, str]:
        return (self.project, self.version)

    @property
    def name(self) -> str:
        return f"{self.project}-{self.version}"

    @property
    def labels(self) -> np.ndarray:
        return (self.bugs > 0).astype(np.int64)

    @property
    def n_defects(self) -> int:
        return int(np.count_nonzero(self.bugs))

    @property
    def defect_ratio(self) -> float:
        return self.n_defects / len(self)

    @property
    def instances(self) -> Tuple[Instance, ...]:
        return tuple(self.instance(i) for i in range(len(self)))

    def instance(self, row: int) -> Instance:
        return Instance(tuple(float(v) for v in self.metrics[row]), int(self.bugs[row]))

    def to_frame(self) -> pd.DataFrame:
        """Canonical tabular form: project, version, metrics in schema order, bug"""
        df = pd.DataFrame(self.metrics, columns=list(self.schema.names))
        df.insert(0, VERSION_COLUMN, self.version)
        df.insert(0, PROJECT_COLUMNS[0], self.project)
        df[BUG_COLUMN] = self.bugs
        if self.log_transformed:
            df[TRANSFORMED_COLUMN] = 1
        return df


@dataclass(frozen=True)
class Repository:
    """A set of releases with unique (project, version) keys"""

    releases: Tuple[Release, ...] = field(default_factory=tuple)

    def __post_init__(self):
        releases = tuple(self.releases)
        seen = set()
        for release in releases:
            if release.key in seen:
                raise ParameterError(f"duplicate release {release.name} in repository")
            seen.add(release.key)
        schemas = {release.schema for release in releases}
        if len(schemas) > 1:
            raise SchemaError("releases in a repository must share one metric schema")
        object.__setattr__(self, "releases", releases)

    def __len__(self) -> int:
        return len(self.releases)

    def __iter__(self) -> Iterator[Release]:
        return iter(self.releases)

    @property
    def projects(self) -> List[str]:
        return sorted({release.project for release in self.releases})

    @property
    def n_instances(self) -> int:
        return sum(len(release) for release in self.releases)

    def find(self, project: str, version: str) -> Release:
        for release in self.releases:
            if release.project == project and release.version == version:
                return release
        raise ParameterError(f"release {project}-{version} is not in the repository")


def binarize(bug_count: int) -> Label:
    """A class is non-buggy only when it has no recorded bugs"""
    return Label.BUGGY if bug_count > 0 else Label.NON_BUGGY


def load_schema(spec: str) -> MetricSchema:
    """
    Resolve a schema argument

    Args:
        spec: "builtin:promise20" or a path to a file with one metric name per line

    Returns:
        MetricSchema
    """
    if spec == "builtin:promise20":
        return MetricSchema.promise20()
    path = Path(spec)
    if not path.is_file():
        raise SchemaError(f"schema file not found: {spec}")
    names = [
        line.strip()
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    return MetricSchema(tuple(names))


def _find_column(columns: Dict[str, str], candidates: Sequence[str]) -> Optional[str]:
    for candidate in candidates:
        if candidate.casefold() in columns:
            return columns[candidate.casefold()]
    return None


def _single_value(df: pd.DataFrame, column: str) -> str:
    values = df[column].astype(str).str.strip().unique()
    if len(values) != 1:
        raise ParseError(f"column '{column}' must hold a single value, found {list(values)[:5]}",
                         column=column)
    return values[0]


def _numeric_column(df: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(df[column].str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        # +2: header line plus 1-based numbering
        raise ParseError(
            f"non-numeric value {df[column].iloc[row]!r} in column '{column}' at line {row + 2}",
            row=row + 2,
            column=column,
        )
    return values


def parse_csv(source: Union[bytes, BinaryIO],
              schema: MetricSchema,
              project: Optional[str] = None,
              version: Optional[str] = None,
              default_project: str = UNNAMED_PROJECT,
              default_version: str = UNNAMED_VERSION) -> Release:
    """
    Parse a PROMISE-style defect CSV

    Columns are matched by header name, case-insensitively; extra columns such
    as the class name are ignored. The project and version columns are
    optional: without them (and without explicit arguments) the release is
    named by default_project and default_version.

    Args:
        source: UTF-8 CSV bytes or a binary stream
        schema: Metric schema the file must provide
        project: Project name, overriding any project/name column
        version: Version, overriding any version column
        default_project: Project name used when there is no project/name column
        default_version: Version used when there is no version column

    Returns:
        Release with instances in file row order
    """
    raw = source if isinstance(source, bytes) else source.read()
    try:
        df = pd.read_csv(io.BytesIO(raw), encoding="utf-8", dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise EmptyInputError("input is empty") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"input is not valid UTF-8: {e}") from e

    columns = {str(c).strip().casefold(): c for c in df.columns}
    missing = [name for name in (*schema.names, BUG_COLUMN) if name.casefold() not in columns]
    if missing:
        raise SchemaError(f"missing required column '{missing[0]}'", column=missing[0])
    if df.empty:
        raise EmptyInputError("input has a header but no data rows")

    if project is None:
        project_column = _find_column(columns, PROJECT_COLUMNS)
        project = default_project if project_column is None else _single_value(df, project_column)
    if version is None:
        version_column = _find_column(columns, (VERSION_COLUMN,))
        version = default_version if version_column is None else _single_value(df, version_column)

    metrics = np.column_stack([_numeric_column(df, columns[name.casefold()]) for name in schema.names])
    bug_column = columns[BUG_COLUMN]
    bugs = _numeric_column(df, bug_column)
    bad = np.flatnonzero((bugs < 0) | (bugs != np.floor(bugs)))
    if bad.size:
        row = int(bad[0])
        raise ParseError(
            f"bug count {df[bug_column].iloc[row]!r} at line {row + 2} is not a nonnegative integer",
            row=row + 2,
            column=bug_column,
        )

    transformed = False
    transformed_column = _find_column(columns, (TRANSFORMED_COLUMN,))
    if transformed_column is not None:
        transformed = _single_value(df, transformed_column) in ("1", "true", "True")

    return Release(project, version, schema, metrics, bugs.astype(np.int64), log_transformed=transformed)


def serialize_release(release: Release) -> str:
    """Canonical CSV text for a release"""
    return release.to_frame().to_csv(index=False, lineterminator="\n")


def write_release(release: Release, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_release(release), encoding="utf-8")
    return path


def clamp_negative(release: Release) -> Release:
    """Replace negative metric values with 0"""
    return Release(release.project, release.version, release.schema,
                   np.maximum(release.metrics, 0.0), release.bugs, release.log_transformed)


def log_transform(release: Release, clamp: bool = False) -> Release:
    """
    Apply f' = ln(f + 1) to every metric value

    Args:
        release: Release with raw metric values
        clamp: Set negative values to 0 first instead of failing

    Returns:
        New release flagged as transformed
    """
    if release.log_transformed:
        raise ParameterError(f"release {release.name} is already log-transformed")
    metrics = release.metrics
    if clamp:
        metrics = np.maximum(metrics, 0.0)
    negative = np.argwhere(metrics < 0)
    if negative.size:
        row, col = (int(v) for v in negative[0])
        metric = release.schema.names[col]
        raise DomainError(
            f"negative value {metrics[row, col]} for {metric} in {release.name} row {row}",
            row=row,
            metric=metric,
            hint="pass clamp=True (--clamp-negative) to set negative values to 0",
        )
    return Release(release.project, release.version, release.schema,
                   np.log1p(metrics), release.bugs, log_transformed=True)


def release_identity(stem: str) -> Tuple[str, str]:
    """Project and version from a file stem split at the last '-' (ant-1.3 -> ant / 1.3)"""
    project, sep, version = stem.rpartition("-")
    if not sep or not project or not version:
        return stem, UNNAMED_VERSION
    return project, version


def read_release(path: Union[str, Path], schema: MetricSchema) -> Release:
    """
    Parse one release file

    Project and version come from the file's columns when they hold a single
    value, otherwise from the file name.
    """
    path = Path(path)
    if not path.is_file():
        raise EmptyInputError(f"release file not found: {path}")
    raw = path.read_bytes()
    project, version = release_identity(path.stem)
    try:
        return parse_csv(raw, schema, default_project=project, default_version=version)
    except ParseError as e:
        # a name column of class names is not a project column
        if e.column is None or e.column.casefold() not in (*PROJECT_COLUMNS, VERSION_COLUMN):
            raise
        return parse_csv(raw, schema, project=project, version=version)


def load_repository(directory: Union[str, Path],
                    schema: MetricSchema,
                    clamp_negative: bool = False,
                    transform: bool = True) -> Repository:
    """
    Load every CSV file in a directory as one release

    Project and version come from the file's columns when present, otherwise
    from the file name (ant-1.3.csv -> ant / 1.3).

    Args:
        directory: Folder holding the release CSVs
        schema: Metric schema
        clamp_negative: Clamp negative metrics to 0 before the log transform
        transform: Apply the log transform to raw releases

    Returns:
        Repository in file-name order
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyInputError(f"repository directory not found: {directory}")
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise EmptyInputError(f"no CSV files in {directory}")

    releases = []
    for path in paths:
        release = read_release(path, schema)
        if transform and not release.log_transformed:
            release = log_transform(release, clamp=clamp_negative)
        logger.debug("Loaded %s: %d instances, %.1f%% defective",
                     release.name, len(release), 100 * release.defect_ratio)
        releases.append(release)

    repo = Repository(tuple(releases))
    logger.info("Loaded %d releases (%d instances) from %s", len(repo), repo.n_instances, directory)
    return repo


def describe_repository(repo: Repository) -> pd.DataFrame:
    """
    Per-release counts in the layout of the PROMISE data summary

    Returns:
        DataFrame with Release, #Instances, #Defects and %Defects columns
    """
    rows = [
        {
            "Release": release.name,
            "#Instances": len(release),
            "#Defects": release.n_defects,
            "%Defects": round(100 * release.defect_ratio, 1),
        }
        for release in repo
    ]
    return pd.DataFrame(rows, columns=["Release", "#Instances", "#Defects", "%Defects"])


def candidate_pool(repo: Repository, target: Release) -> Repository:
    """
    Releases eligible for training on a target: everything outside the target's project

    Args:
        repo: Full repository
        target: Target release (must belong to repo)

    Returns:
        Repository of candidate releases
    """
    repo.find(*target.key)
    project = target.project.casefold()
    pool = Repository(tuple(r for r in repo if r.project.casefold() != project))
    if len(pool) == 0:
        raise NoCandidatesError(f"no releases outside project '{target.project}'")
    return pool


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator parameters for a two-cluster synthetic release"""

    n_instances: int
    defect_ratio: float
    seed: int
    buggy_mean: Union[float, Sequence[float]] = 3.0
    clean_mean: Union[float, Sequence[float]] = 1.0
    buggy_spread: Union[float, Sequence[float]] = 1.0
    clean_spread: Union[float, Sequence[float]] = 1.0
    schema: MetricSchema = field(default_factory=MetricSchema.promise20)
    project: str = "synthetic"
    version: str = "1.0"


def synthesize(spec: SyntheticSpec) -> Release:
    """
    Draw a release with one Gaussian cluster per class

    Values are clipped at 0 so the result can be log-transformed. The number of
    buggy instances is round(n * ratio).

    Args:
        spec: Generator parameters

    Returns:
        Raw (untransformed) Release, deterministic for a fixed seed
    """
    if spec.n_instances < 1:
        raise ParameterError(f"n_instances must be >= 1, got {spec.n_instances}")
    if not 0.0 <= spec.defect_ratio <= 1.0:
        raise ParameterError(f"defect_ratio must be in [0, 1], got {spec.defect_ratio}")

    rng = np.random.default_rng(spec.seed)
    n, arity = spec.n_instances, spec.schema.arity
    n_buggy = int(round(n * spec.defect_ratio))
    labels = np.zeros(n, dtype=bool)
    labels[rng.permutation(n)[:n_buggy]] = True

    def per_feature(value) -> np.ndarray:
        arr = np.broadcast_to(np.asarray(value, dtype=float), (arity,))
        return arr.copy()

    means = np.where(labels[:, None], per_feature(spec.buggy_mean), per_feature(spec.clean_mean))
    spreads = np.where(labels[:, None], per_feature(spec.buggy_spread), per_feature(spec.clean_spread))
    metrics = np.maximum(rng.normal(means, spreads), 0.0)
    bugs = np.where(labels, 1 + rng.poisson(1.0, size=n), 0)
    return Release(spec.project, spec.version, spec.schema, metrics, bugs)
