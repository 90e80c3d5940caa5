"""
Release builders shared by the test modules
"""
from typing import Iterable, Sequence, Tuple

import numpy as np
from hypothesis import settings

from src.utils.dataset import MetricSchema, Release, Repository, SyntheticSpec, synthesize

SMALL_SCHEMA = MetricSchema(("wmc", "cbo", "loc"))

# (project, version, #instances, #defects) of the 34 PROMISE releases
PROMISE_COUNTS: Tuple[Tuple[str, str, int, int], ...] = (
    ("ant", "1.3", 125, 20), ("ant", "1.4", 178, 40), ("ant", "1.5", 293, 32),
    ("ant", "1.6", 351, 92), ("ant", "1.7", 745, 166),
    ("camel", "1.0", 339, 13), ("camel", "1.2", 608, 216), ("camel", "1.4", 872, 145),
    ("camel", "1.6", 965, 188),
    ("ivy", "1.1", 111, 63), ("ivy", "1.4", 241, 16), ("ivy", "2.0", 352, 40),
    ("jedit", "3.2", 272, 90), ("jedit", "4.0", 306, 75),
    ("lucene", "2.0", 195, 91), ("lucene", "2.2", 247, 144), ("lucene", "2.4", 340, 203),
    ("poi", "1.5", 237, 141), ("poi", "2.0", 314, 37), ("poi", "2.5", 385, 248),
    ("poi", "3.0", 442, 281),
    ("synapse", "1.0", 157, 16), ("synapse", "1.1", 222, 60), ("synapse", "1.2", 256, 86),
    ("velocity", "1.4", 196, 147), ("velocity", "1.5", 214, 142), ("velocity", "1.6", 229, 78),
    ("xalan", "2.4", 723, 110), ("xalan", "2.5", 803, 387), ("xalan", "2.6", 885, 411),
    ("xerces", "init", 162, 77), ("xerces", "1.2", 440, 71), ("xerces", "1.3", 453, 69),
    ("xerces", "1.4", 588, 437),
)


def integer_release(project: str, version: str, n: int, seed: int,
                    high: int = 6, buggy: Sequence[int] = (),
                    schema: MetricSchema = SMALL_SCHEMA) -> Release:
    """Small-integer metrics so distance ties are exact"""
    rng = np.random.default_rng(seed)
    metrics = rng.integers(0, high, size=(n, schema.arity)).astype(float)
    bugs = np.zeros(n, dtype=np.int64)
    bugs[list(buggy)] = 1
    return Release(project, version, schema, metrics, bugs)


def release_from_rows(project: str, version: str, rows: Iterable[Sequence[float]],
                      bugs: Sequence[int], schema: MetricSchema = None) -> Release:
    rows = np.asarray(list(rows), dtype=float)
    if schema is None:
        schema = MetricSchema(tuple(f"m{i}" for i in range(rows.shape[1])))
    return Release(project, version, schema, rows, np.asarray(bugs, dtype=np.int64))


def synthetic_release(project: str, version: str, n: int, ratio: float, seed: int,
                      schema: MetricSchema = SMALL_SCHEMA, **kwargs) -> Release:
    spec = SyntheticSpec(n, ratio, seed, schema=schema, project=project, version=version, **kwargs)
    return synthesize(spec)


def promise_shaped_repository(schema: MetricSchema = SMALL_SCHEMA, seed: int = 0) -> Repository:
    """Synthetic stand-in with the instance and defect counts of the PROMISE releases"""
    releases = [
        synthetic_release(project, version, n, defects / n, seed + i, schema=schema)
        for i, (project, version, n, defects) in enumerate(PROMISE_COUNTS)
    ]
    return Repository(tuple(releases))


def fixture_runs(count: int) -> settings:
    """
    Settings that run `count` generated cases under the default profile

    Lighter profiles (HYPOTHESIS_PROFILE=fast) scale the count down in proportion.
    """
    scale = settings().max_examples / settings.get_profile("default").max_examples
    return settings(max_examples=max(1, round(count * scale)))
