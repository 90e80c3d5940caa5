import os

import hypothesis
import numpy as np
import pytest

from src.utils.dataset import Repository, log_transform, write_release
from tests.factories import synthetic_release

hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

np.seterr(all="warn")


@pytest.fixture
def small_repo() -> Repository:
    """Three projects, five log-transformed releases with separated classes"""
    layout = [("alpha", "1.0", 40, 0.3), ("alpha", "2.0", 36, 0.4),
              ("beta", "1.0", 30, 0.2), ("beta", "1.1", 44, 0.5),
              ("gamma", "0.9", 28, 0.25)]
    releases = [
        log_transform(synthetic_release(p, v, n, ratio, seed=11 + i, buggy_mean=6.0, clean_mean=2.0))
        for i, (p, v, n, ratio) in enumerate(layout)
    ]
    return Repository(tuple(releases))


@pytest.fixture
def repo_dir(tmp_path, small_repo):
    """The small repository written out as one CSV per release"""
    for release in small_repo:
        write_release(release, tmp_path / "repo" / f"{release.name}.csv")
    return tmp_path / "repo"
