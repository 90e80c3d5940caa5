"""
Training-data simplification at release and instance granularity
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from src.config import DEFAULT_K
from src.errors import NoCandidatesError, ParameterError, ShapeError
from src.utils.dataset import Instance, MetricSchema, Release, Repository

logger = logging.getLogger(__name__)

STATISTICS = ("median", "mean", "min", "max", "std")

# rows of the query matrix handled per distance block
_CHUNK = 256


class Strategy(str, Enum):
    """Training-data strategies; NONE is the unsimplified baseline"""

    NONE = "none"
    RTDS = "rTDS"
    ITDS = "iTDS"
    RITDS1 = "riTDS-1"
    RITDS2 = "riTDS-2"
    RITDS_RHO = "riTDS-rho"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        key = text.strip().casefold().replace("-", "").replace("_", "")
        aliases = {
            "none": cls.NONE,
            "rtds": cls.RTDS,
            "itds": cls.ITDS,
            "ritds1": cls.RITDS1,
            "ritds2": cls.RITDS2,
            "ritdsrho": cls.RITDS_RHO,
            "ritdsρ": cls.RITDS_RHO,
        }
        if key not in aliases:
            raise ParameterError(f"unknown strategy '{text}'")
        return aliases[key]


class InstanceOrigin(NamedTuple):
    project: str
    version: str
    row: int


@dataclass(frozen=True, eq=False)
class CharacteristicVector:
    """Per-feature (median, mean, min, max, std) of a release, flattened feature by feature"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 1 or values.size % len(STATISTICS):
            raise ShapeError(f"characteristic vector length {values.size} is not a multiple of 5")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def as_frame(self, schema: Optional[MetricSchema] = None) -> pd.DataFrame:
        table = self.values.reshape(-1, len(STATISTICS))
        index = list(schema.names) if schema is not None else None
        return pd.DataFrame(table, columns=list(STATISTICS), index=index)


@dataclass(frozen=True, eq=False)
class SimplifiedTDS:
    """
    A training set with provenance

    Instances are kept in canonical order: (project, version, row) ascending.
    """

    schema: MetricSchema
    metrics: np.ndarray
    bugs: np.ndarray
    origins: Tuple[InstanceOrigin, ...]
    strategy: Strategy
    r: int
    k: int
    source_releases: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        metrics = np.array(self.metrics, dtype=float, copy=True).reshape(-1, self.schema.arity)
        bugs = np.array(self.bugs, dtype=np.int64, copy=True)
        origins = tuple(InstanceOrigin(*o) for o in self.origins)
        if not (metrics.shape[0] == bugs.shape[0] == len(origins)):
            raise ShapeError("metrics, bug counts and origins differ in length")
        if len(set(origins)) != len(origins):
            raise ParameterError("simplified training set holds duplicate source rows")
        if self.r < 0 or self.k < 1:
            raise ParameterError(f"invalid parameters r={self.r}, k={self.k}")
        metrics.setflags(write=False)
        bugs.setflags(write=False)
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "bugs", bugs)
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "source_releases", tuple(tuple(s) for s in self.source_releases))

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def labels(self) -> np.ndarray:
        return (self.bugs > 0).astype(np.int64)

    @property
    def n_defects(self) -> int:
        return int(np.count_nonzero(self.bugs))

    @property
    def defect_ratio(self) -> float:
        return self.n_defects / len(self) if len(self) else 0.0

    @property
    def instances(self) -> Tuple[Instance, ...]:
        return tuple(
            Instance(tuple(float(v) for v in self.metrics[i]), int(self.bugs[i]))
            for i in range(len(self))
        )

    def subset(self, indices: Sequence[int], strategy: Strategy, r: int, k: int) -> "SimplifiedTDS":
        """Select rows by canonical index; indices are sorted and deduplicated"""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        return SimplifiedTDS(
            self.schema,
            self.metrics[idx],
            self.bugs[idx],
            tuple(self.origins[i] for i in idx),
            strategy,
            r,
            k,
            self.source_releases,
        )

    def composition(self) -> pd.DataFrame:
        """Number of selected instances per source release"""
        df = pd.DataFrame(self.origins, columns=list(InstanceOrigin._fields))
        df["buggy"] = self.labels
        return (df.groupby(["project", "version"], as_index=False)
                  .agg(instances=("row", "size"), buggy=("buggy", "sum")))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.origins, columns=list(InstanceOrigin._fields))
        metrics = pd.DataFrame(self.metrics, columns=list(self.schema.names))
        df = pd.concat([df, metrics], axis=1)
        df["bug"] = self.bugs
        return df

    def provenance(self) -> Dict[str, object]:
        return {
            "strategy": self.strategy.value,
            "r": self.r,
            "k": self.k,
            "size": len(self),
            "source_releases": [f"{p}-{v}" for p, v in self.source_releases],
            "origins": [[o.project, o.version, o.row] for o in self.origins],
        }


def flatten(repo: Repository, strategy: Strategy = Strategy.NONE,
            r: int = 0, k: int = DEFAULT_K) -> SimplifiedTDS:
    """
    Pool every instance of a repository into one training set

    Args:
        repo: Releases to pool
        strategy: Strategy tag for the result
        r: Number of releases the pool came from (0 when not release-selected)
        k: Neighbourhood size recorded in provenance

    Returns:
        SimplifiedTDS in canonical order
    """
    if len(repo) == 0:
        raise NoCandidatesError("cannot pool an empty repository")
    releases = sorted(repo, key=lambda rel: rel.key)
    schema = releases[0].schema
    origins = [
        InstanceOrigin(rel.project, rel.version, row)
        for rel in releases
        for row in range(len(rel))
    ]
    return SimplifiedTDS(
        schema,
        np.vstack([rel.metrics for rel in releases]),
        np.concatenate([rel.bugs for rel in releases]),
        tuple(origins),
        strategy,
        r,
        k,
        tuple(rel.key for rel in releases),
    )


def characterize(release: Release) -> CharacteristicVector:
    """
    Distributional characteristics of every feature

    Statistics are taken over column-sorted values so the result does not
    depend on instance order. Standard deviation uses the population form.

    Args:
        release: Non-empty release

    Returns:
        CharacteristicVector of length 5 x arity
    """
    values = np.sort(release.metrics, axis=0)
    lo = values[0]
    hi = values[-1]
    median = np.median(values, axis=0)
    mean = np.clip(values.mean(axis=0), lo, hi)
    std = np.where(hi > lo, values.std(axis=0, ddof=0), 0.0)
    return CharacteristicVector(np.column_stack([median, mean, lo, hi, std]).ravel())


def distance_releases(a: CharacteristicVector, b: CharacteristicVector) -> float:
    """Euclidean distance between two characteristic vectors"""
    if len(a) != len(b):
        raise ShapeError(f"characteristic vectors differ in length: {len(a)} vs {len(b)}")
    return float(np.sqrt(np.sum((a.values - b.values) ** 2)))


def distance_instances(a: Instance, b: Instance) -> float:
    """Euclidean distance between the metric values of two instances"""
    if len(a.metrics) != len(b.metrics):
        raise ShapeError(f"instances differ in arity: {len(a.metrics)} vs {len(b.metrics)}")
    diff = np.asarray(a.metrics, dtype=float) - np.asarray(b.metrics, dtype=float)
    return float(np.sqrt(np.sum(diff ** 2)))


def _check_k(k: int) -> None:
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")


def _check_schema(pool_schema: MetricSchema, target: Release) -> None:
    if pool_schema != target.schema:
        raise ShapeError("training pool and target use different metric schemas")


def _knn_rows(query: np.ndarray, reference: np.ndarray, k: int) -> np.ndarray:
    """
    Indices of the k nearest reference rows for each query row

    Equal distances keep reference order, so the reference matrix must already
    be in tie-break order.
    """
    k = min(k, reference.shape[0])
    out = np.empty((query.shape[0], k), dtype=np.int64)
    for start in range(0, query.shape[0], _CHUNK):
        block = cdist(query[start:start + _CHUNK], reference, "euclidean")
        out[start:start + _CHUNK] = np.argsort(block, axis=1, kind="stable")[:, :k]
    return out


def release_distances(pool: Repository, target: Release) -> pd.DataFrame:
    """
    distance_R from the target to every candidate release, nearest first

    Returns:
        DataFrame with project, version, distance columns
    """
    target_vector = characterize(target)
    rows = [
        {"project": rel.project, "version": rel.version,
         "distance": distance_releases(characterize(rel), target_vector)}
        for rel in pool
    ]
    df = pd.DataFrame(rows, columns=["project", "version", "distance"])
    return df.sort_values(["distance", "project", "version"], kind="mergesort").reset_index(drop=True)


def select_rtds(pool: Repository, target: Release, r: int) -> Repository:
    """
    The r candidate releases nearest to the target by distributional characteristics

    Args:
        pool: Candidate releases
        target: Target release
        r: Number of releases to keep

    Returns:
        Repository ordered by ascending distance
    """
    if len(pool) == 0:
        raise NoCandidatesError("candidate pool is empty")
    if not 1 <= r <= len(pool):
        raise ParameterError(f"r must be in [1, {len(pool)}], got {r}")
    ranked = release_distances(pool, target)
    chosen = ranked.head(r)
    selected = tuple(pool.find(p, v) for p, v in zip(chosen["project"], chosen["version"]))
    logger.debug("rTDS for %s (r=%d): %s", target.name, r, [rel.name for rel in selected])
    return Repository(selected)


def _as_pool(pool: Union[Repository, SimplifiedTDS]) -> SimplifiedTDS:
    if isinstance(pool, SimplifiedTDS):
        if len(pool) == 0:
            raise NoCandidatesError("training pool is empty")
        return pool
    if len(pool) == 0:
        raise NoCandidatesError("training pool is empty")
    return flatten(pool)


def select_itds(pool_instances: Union[Repository, SimplifiedTDS], target: Release,
                k: int = DEFAULT_K) -> SimplifiedTDS:
    """
    Union of the k nearest pool instances of every target instance

    Args:
        pool_instances: Candidate instances (a repository is pooled first)
        target: Target release
        k: Neighbours per target instance

    Returns:
        SimplifiedTDS tagged iTDS
    """
    _check_k(k)
    pool = _as_pool(pool_instances)
    _check_schema(pool.schema, target)
    nearest = _knn_rows(target.metrics, pool.metrics, k)
    return pool.subset(nearest.ravel(), Strategy.ITDS, r=0, k=k)


def filter_ritds1(rtds: Repository, target: Release, k: int = DEFAULT_K) -> SimplifiedTDS:
    """
    Test-set-driven filter: each target instance keeps its k nearest rTDS instances

    Args:
        rtds: Releases chosen at the release level
        target: Target release
        k: Neighbours per target instance

    Returns:
        Deduplicated SimplifiedTDS tagged riTDS-1
    """
    _check_k(k)
    pool = _as_pool(rtds)
    _check_schema(pool.schema, target)
    nearest = _knn_rows(target.metrics, pool.metrics, k)
    return pool.subset(nearest.ravel(), Strategy.RITDS1, r=len(rtds), k=k)


def label_map(pool: SimplifiedTDS, target: Release, k: int) -> Dict[int, np.ndarray]:
    """
    Map each labelled target row to the pool rows that labelled it

    Every pool instance labels its k nearest target instances; equal distances
    resolve to the lower target row.
    """
    labelled = _knn_rows(pool.metrics, target.metrics, k)
    labellers = np.repeat(np.arange(pool.metrics.shape[0]), labelled.shape[1])
    targets = labelled.ravel()
    order = np.lexsort((labellers, targets))
    targets, labellers = targets[order], labellers[order]
    keys, starts = np.unique(targets, return_index=True)
    groups = np.split(labellers, starts[1:])
    return {int(key): group for key, group in zip(keys, groups)}


def filter_ritds2(rtds: Repository, target: Release, k: int = DEFAULT_K) -> SimplifiedTDS:
    """
    Training-set-driven filter

    Phase 1: every rTDS instance labels its k nearest target instances.
    Phase 2: labelled target instances, in ascending row order, each take the
    nearest of their labellers not already taken; a target whose labellers are
    all taken adds nothing.

    Args:
        rtds: Releases chosen at the release level
        target: Target release
        k: Target instances labelled per training instance

    Returns:
        SimplifiedTDS tagged riTDS-2
    """
    _check_k(k)
    pool = _as_pool(rtds)
    _check_schema(pool.schema, target)
    labels = label_map(pool, target, k)

    chosen: List[int] = []
    taken = np.zeros(pool.metrics.shape[0], dtype=bool)
    for row in sorted(labels):
        candidates = labels[row]
        dist = cdist(pool.metrics[candidates], target.metrics[row:row + 1], "euclidean").ravel()
        for idx in candidates[np.lexsort((candidates, dist))]:
            if not taken[idx]:
                taken[idx] = True
                chosen.append(int(idx))
                break

    return pool.subset(chosen, Strategy.RITDS2, r=len(rtds), k=k)


def _excludes_target_project(pool: Repository, target: Release) -> None:
    project = target.project.casefold()
    leaked = [rel.name for rel in pool if rel.project.casefold() == project]
    if leaked:
        raise ParameterError(f"training pool contains releases of the target project: {leaked}")


def simplify(pool: Repository, target: Release, strategy: Strategy,
             r: Optional[int] = None, k: int = DEFAULT_K) -> SimplifiedTDS:
    """
    Build the training set for a target with the given strategy

    Args:
        pool: Candidate releases (target project excluded)
        target: Target release
        strategy: none, rTDS, iTDS, riTDS-1 or riTDS-2
        r: Releases kept at the release level (rTDS and riTDS-*)
        k: Neighbourhood size (iTDS and riTDS-*)

    Returns:
        SimplifiedTDS with provenance
    """
    strategy = Strategy(strategy)
    _excludes_target_project(pool, target)
    _check_k(k)
    needs_r = strategy in (Strategy.RTDS, Strategy.RITDS1, Strategy.RITDS2)
    if needs_r and r is None:
        raise ParameterError(f"strategy {strategy.value} needs r")

    if strategy is Strategy.NONE:
        tds = flatten(pool, Strategy.NONE, r=0, k=k)
    elif strategy is Strategy.ITDS:
        tds = select_itds(pool, target, k)
    elif strategy is Strategy.RTDS:
        tds = flatten(select_rtds(pool, target, r), Strategy.RTDS, r=r, k=k)
    elif strategy is Strategy.RITDS1:
        tds = filter_ritds1(select_rtds(pool, target, r), target, k)
    elif strategy is Strategy.RITDS2:
        tds = filter_ritds2(select_rtds(pool, target, r), target, k)
    else:
        raise ParameterError(f"strategy {strategy.value} is resolved by the filter selector")

    logger.debug("%s for %s (r=%s, k=%d): %d instances", strategy.value, target.name, r, k, len(tds))
    return tds
