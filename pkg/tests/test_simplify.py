import math
from typing import List, Set, Tuple

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import NoCandidatesError, ParameterError, ShapeError
from src.utils.dataset import Instance, Repository, candidate_pool
from src.utils.simplify import (
    CharacteristicVector,
    Strategy,
    characterize,
    distance_instances,
    distance_releases,
    filter_ritds1,
    filter_ritds2,
    flatten,
    label_map,
    release_distances,
    select_itds,
    select_rtds,
    simplify,
)
from tests.factories import fixture_runs, integer_release, promise_shaped_repository, release_from_rows

Origin = Tuple[str, str, int]


# --- exhaustive re-implementations -----------------------------------------


def _euclid(u, v) -> float:
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(u, v)))


def _pool_rows(repo: Repository) -> List[Tuple[Origin, Tuple[float, ...]]]:
    rows = []
    for rel in sorted(repo, key=lambda r: (r.project, r.version)):
        for row in range(len(rel)):
            rows.append(((rel.project, rel.version, row), tuple(rel.metrics[row])))
    return rows


def oracle_nearest_per_target(repo: Repository, target, k: int) -> Set[Origin]:
    pool = _pool_rows(repo)
    chosen = set()
    for query in target.metrics:
        ranked = sorted(range(len(pool)), key=lambda i: (_euclid(pool[i][1], query), i))
        chosen.update(pool[i][0] for i in ranked[:k])
    return chosen


def oracle_training_driven(repo: Repository, target, k: int) -> Set[Origin]:
    pool = _pool_rows(repo)
    labellers = {}
    for i, (_, metrics) in enumerate(pool):
        ranked = sorted(range(len(target)), key=lambda t: (_euclid(metrics, target.metrics[t]), t))
        for t in ranked[:k]:
            labellers.setdefault(t, []).append(i)
    taken = set()
    for t in sorted(labellers):
        for i in sorted(labellers[t], key=lambda i: (_euclid(pool[i][1], target.metrics[t]), i)):
            if i not in taken:
                taken.add(i)
                break
    return {pool[i][0] for i in taken}


def oracle_nearest_releases(pool: Repository, target, r: int) -> List[Tuple[str, str]]:
    reference = characterize(target).values
    ranked = sorted(pool, key=lambda rel: (_euclid(characterize(rel).values, reference), rel.project, rel.version))
    return [rel.key for rel in ranked[:r]]


def origins(tds) -> Set[Origin]:
    return {tuple(o) for o in tds.origins}


def mixed_pool(seed: int, sizes=(9, 7, 8, 6, 10)) -> Repository:
    projects = ["alpha", "beta", "gamma", "delta", "eps"]
    return Repository(tuple(
        integer_release(projects[i], "1.0", n, seed=seed + i, buggy=range(0, n, 3))
        for i, n in enumerate(sizes)
    ))


# --- characteristics and distances ----------------------------------------


class TestCharacterize:
    def test_constant_feature(self):
        release = release_from_rows("p", "1", [[4.0, 1.0], [4.0, 2.0], [4.0, 3.0]], [0, 1, 0])
        table = characterize(release).values.reshape(-1, 5)
        assert table[0].tolist() == [4.0, 4.0, 4.0, 4.0, 0.0]

    def test_hand_computed_values(self):
        release = release_from_rows("p", "1", [[3.0], [1.0], [4.0], [2.0]], [0, 0, 1, 1])
        median, mean, lo, hi, std = characterize(release).values
        assert (median, mean, lo, hi) == (2.5, 2.5, 1.0, 4.0)
        assert std == pytest.approx(math.sqrt(1.25))

    def test_single_instance(self):
        release = release_from_rows("p", "1", [[7.5, 0.5]], [1])
        assert characterize(release).values.tolist() == [7.5, 7.5, 7.5, 7.5, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0]

    def test_length_is_five_per_metric(self):
        assert len(characterize(integer_release("p", "1", 12, seed=0))) == 15

    @given(st.integers(0, 2 ** 16))
    def test_bounds_and_row_order_invariance(self, seed):
        release = integer_release("p", "1", 17, seed=seed, high=50)
        table = characterize(release).values.reshape(-1, 5)
        median, mean, lo, hi, std = table.T
        assert np.all(lo <= median) and np.all(median <= hi)
        assert np.all(lo <= mean) and np.all(mean <= hi)
        assert np.all(std >= 0)
        shuffled = np.random.default_rng(seed).permutation(len(release))
        permuted = release_from_rows("p", "1", release.metrics[shuffled], release.bugs[shuffled],
                                     schema=release.schema)
        assert np.array_equal(characterize(permuted).values, characterize(release).values)


class TestDistances:
    def test_release_distance_three_four_five(self):
        a = CharacteristicVector(np.zeros(10))
        b = CharacteristicVector(np.array([3.0, 0, 0, 0, 0, 0, 0, 4.0, 0, 0]))
        assert distance_releases(a, b) == 5.0
        assert distance_releases(b, a) == 5.0
        assert distance_releases(a, a) == 0.0

    def test_release_distance_length_mismatch(self):
        with pytest.raises(ShapeError):
            distance_releases(CharacteristicVector(np.zeros(5)), CharacteristicVector(np.zeros(10)))

    def test_characterized_releases_match_direct_formula(self):
        a, b = integer_release("p", "1", 9, seed=1), integer_release("q", "1", 11, seed=2)
        va, vb = characterize(a), characterize(b)
        assert distance_releases(va, vb) == pytest.approx(_euclid(va.values, vb.values))

    def test_instance_distance_single_axis(self):
        a = Instance((1.0, 2.0, 100.0), 0)
        b = Instance((1.0, 2.0, 107.0), 3)
        assert distance_instances(a, a) == 0.0
        assert distance_instances(a, b) == 7.0

    def test_instance_arity_mismatch(self):
        with pytest.raises(ShapeError):
            distance_instances(Instance((1.0,), 0), Instance((1.0, 2.0), 0))

    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
           st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
    def test_instance_distance_matches_oracle(self, u, v):
        a, b = Instance(tuple(u), 0), Instance(tuple(v), 0)
        assert distance_instances(a, b) == pytest.approx(_euclid(u, v), rel=1e-9, abs=1e-9)
        assert distance_instances(a, b) == distance_instances(b, a)


# --- release level ----------------------------------------------------------


class TestSelectRtds:
    def test_whole_pool_is_ranked(self):
        pool = mixed_pool(3)
        target = integer_release("target", "1", 8, seed=99)
        chosen = select_rtds(pool, target, len(pool))
        assert sorted(rel.key for rel in chosen) == sorted(rel.key for rel in pool)
        assert [rel.key for rel in chosen] == oracle_nearest_releases(pool, target, len(pool))

    def test_statistical_duplicate_is_nearest(self):
        target = integer_release("target", "1", 8, seed=5)
        twin = release_from_rows("twin", "1", target.metrics[::-1], target.bugs, schema=target.schema)
        pool = Repository(mixed_pool(3).releases + (twin,))
        assert [rel.key for rel in select_rtds(pool, target, 1)] == [("twin", "1")]

    @fixture_runs(100)
    @given(st.integers(0, 2 ** 16), st.integers(1, 5))
    def test_matches_exhaustive_sort(self, seed, r):
        pool = mixed_pool(seed)
        target = integer_release("target", "1", 6, seed=seed + 100)
        assert [rel.key for rel in select_rtds(pool, target, r)] == oracle_nearest_releases(pool, target, r)

    def test_equal_distances_fall_back_to_release_name(self):
        base = integer_release("x", "1", 5, seed=1)
        copies = [release_from_rows(p, v, base.metrics, base.bugs, schema=base.schema)
                  for p, v in [("zeta", "1"), ("beta", "2"), ("beta", "1")]]
        target = integer_release("target", "1", 5, seed=2)
        chosen = select_rtds(Repository(tuple(copies)), target, 2)
        assert [rel.key for rel in chosen] == [("beta", "1"), ("beta", "2")]

    @pytest.mark.parametrize("r", [0, 6])
    def test_r_out_of_range(self, r):
        with pytest.raises(ParameterError):
            select_rtds(mixed_pool(1), integer_release("target", "1", 4, seed=0), r)

    def test_distance_table_is_sorted(self):
        table = release_distances(mixed_pool(4), integer_release("target", "1", 4, seed=0))
        assert list(table.columns) == ["project", "version", "distance"]
        assert table["distance"].is_monotonic_increasing


# --- instance level ---------------------------------------------------------


class TestSelectItds:
    def test_saturated_pool_is_returned_whole(self):
        pool = Repository((integer_release("a", "1", 4, seed=1),))
        tds = select_itds(pool, integer_release("t", "1", 3, seed=2), k=10)
        assert len(tds) == 4
        assert tds.strategy is Strategy.ITDS and tds.r == 0

    def test_unique_nearest_neighbour(self):
        pool = Repository((release_from_rows("a", "1", [[0, 0], [5, 5], [9, 9]], [0, 1, 0]),))
        target = release_from_rows("t", "1", [[4.8, 5.1]], [1])
        assert origins(select_itds(pool, target, k=1)) == {("a", "1", 1)}

    def test_matches_exhaustive_union(self):
        pool = mixed_pool(7, sizes=(6, 6, 6, 6, 6))
        target = integer_release("t", "1", 5, seed=70)
        tds = select_itds(pool, target, k=10)
        assert origins(tds) == oracle_nearest_per_target(pool, target, 10)
        assert len(tds) <= min(30, 10 * 5)

    @fixture_runs(100)
    @given(st.integers(0, 2 ** 16), st.integers(1, 12))
    def test_matches_exhaustive_search(self, seed, k):
        pool = mixed_pool(seed)
        target = integer_release("t", "1", 8, seed=seed + 500)
        tds = select_itds(pool, target, k)
        assert origins(tds) == oracle_nearest_per_target(pool, target, k)
        assert tds.strategy is Strategy.ITDS

    def test_empty_pool(self):
        with pytest.raises(NoCandidatesError):
            select_itds(Repository(()), integer_release("t", "1", 2, seed=0), k=3)

    def test_k_must_be_positive(self):
        with pytest.raises(ParameterError):
            select_itds(mixed_pool(1), integer_release("t", "1", 2, seed=0), k=0)


class TestFilterRitds1:
    def test_small_rtds_is_kept_whole(self):
        rtds = Repository((integer_release("a", "1", 5, seed=3),))
        tds = filter_ritds1(rtds, integer_release("t", "1", 4, seed=4), k=10)
        assert len(tds) == 5
        assert tds.strategy is Strategy.RITDS1

    def test_disjoint_clusters(self):
        near = release_from_rows("a", "1", [[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 0, 1])
        far = release_from_rows("b", "1", [[50, 50], [50, 51], [51, 50]], [1, 0, 0])
        target = release_from_rows("t", "1", [[0.2, 0.2], [0.9, 0.8]], [0, 1])
        tds = filter_ritds1(Repository((near, far)), target, k=3)
        assert {o[0] for o in origins(tds)} == {"a"}
        assert origins(tds) == oracle_nearest_per_target(Repository((near, far)), target, 3)

    @fixture_runs(100)
    @given(st.integers(0, 2 ** 16), st.integers(1, 12))
    def test_matches_exhaustive_search(self, seed, k):
        rtds = mixed_pool(seed)
        target = integer_release("t", "1", 9, seed=seed + 1000)
        assert origins(filter_ritds1(rtds, target, k)) == oracle_nearest_per_target(rtds, target, k)

    def test_empty_rtds(self):
        with pytest.raises(NoCandidatesError):
            filter_ritds1(Repository(()), integer_release("t", "1", 2, seed=0), k=3)


class TestFilterRitds2:
    def test_single_training_instance(self):
        rtds = Repository((release_from_rows("a", "1", [[1.0, 1.0]], [1]),))
        target = release_from_rows("t", "1", [[0, 0], [2, 2], [5, 1]], [0, 1, 0])
        tds = filter_ritds2(rtds, target, k=2)
        assert origins(tds) == {("a", "1", 0)}

    def test_full_labelling_caps_at_the_smaller_side(self):
        rtds = mixed_pool(2, sizes=(4, 3))
        target = integer_release("t", "1", 5, seed=9)
        tds = filter_ritds2(rtds, target, k=len(target))
        assert len(tds) == min(7, 5)
        assert all(len(group) == 7 for group in label_map(flatten(rtds), target, len(target)).values())

    def test_hand_traced_fixture(self):
        # six training points on a line against four targets, k = 1
        training = release_from_rows("a", "1", [[0, 0], [1, 0], [2, 0], [10, 0], [11, 0], [30, 0]],
                                     [0, 0, 1, 1, 0, 1])
        target = release_from_rows("t", "1", [[0.4, 0], [10.6, 0], [20, 0], [1.9, 0]], [0, 1, 0, 1])
        rtds = Repository((training,))
        # labels: row0 <- {0, 1}, row3 <- {2}, row1 <- {3, 4}, row2 <- {5}
        groups = label_map(flatten(rtds), target, 1)
        assert {t: g.tolist() for t, g in groups.items()} == {0: [0, 1], 1: [3, 4], 2: [5], 3: [2]}
        # row0 takes 0 (0.4 < 0.6), row1 takes 4 (0.4 < 0.6), row2 takes 5, row3 takes 2
        assert origins(filter_ritds2(rtds, target, 1)) == {("a", "1", i) for i in (0, 2, 4, 5)}

    def test_taken_labeller_moves_to_the_next_nearest(self):
        training = release_from_rows("a", "1", [[0.0], [3.0]], [1, 0])
        target = release_from_rows("t", "1", [[0.1], [0.2]], [0, 1])
        # both training points label both targets; row 0 takes 0, row 1 falls back to 1
        assert origins(filter_ritds2(Repository((training,)), target, 2)) == {("a", "1", 0), ("a", "1", 1)}

    def test_target_with_all_labellers_taken_adds_nothing(self):
        training = release_from_rows("a", "1", [[0.0]], [1])
        target = release_from_rows("t", "1", [[0.1], [0.2], [0.3]], [0, 1, 0])
        assert len(filter_ritds2(Repository((training,)), target, 3)) == 1

    @fixture_runs(100)
    @given(st.integers(0, 2 ** 16), st.integers(1, 6))
    def test_matches_exhaustive_search(self, seed, k):
        rtds = mixed_pool(seed)
        target = integer_release("t", "1", 7, seed=seed + 2000)
        tds = filter_ritds2(rtds, target, k)
        assert origins(tds) == oracle_training_driven(rtds, target, k)
        assert tds.strategy is Strategy.RITDS2

    def test_empty_rtds(self):
        with pytest.raises(NoCandidatesError):
            filter_ritds2(Repository(()), integer_release("t", "1", 2, seed=0), k=3)


# --- composition ------------------------------------------------------------


class TestSimplify:
    @pytest.fixture
    def repo(self):
        return Repository(mixed_pool(21).releases + (integer_release("target", "1", 8, seed=5),
                                                     integer_release("target", "2", 6, seed=6)))

    def test_rtds_with_one_release_is_that_release(self, repo):
        target = repo.find("target", "1")
        pool = candidate_pool(repo, target)
        tds = simplify(pool, target, Strategy.RTDS, r=1)
        nearest = select_rtds(pool, target, 1).releases[0]
        assert origins(tds) == {(nearest.project, nearest.version, i) for i in range(len(nearest))}
        assert tds.source_releases == (nearest.key,)

    def test_none_is_the_whole_pool(self, repo):
        target = repo.find("target", "1")
        pool = candidate_pool(repo, target)
        assert len(simplify(pool, target, Strategy.NONE)) == pool.n_instances

    @pytest.mark.parametrize("strategy", [Strategy.RTDS, Strategy.RITDS1, Strategy.RITDS2])
    def test_r_is_required(self, repo, strategy):
        target = repo.find("target", "1")
        with pytest.raises(ParameterError):
            simplify(candidate_pool(repo, target), target, strategy)

    def test_rho_strategy_is_not_a_direct_strategy(self, repo):
        target = repo.find("target", "1")
        with pytest.raises(ParameterError):
            simplify(candidate_pool(repo, target), target, Strategy.RITDS_RHO, r=1)

    def test_target_project_never_leaks(self, repo):
        target = repo.find("target", "1")
        with pytest.raises(ParameterError):
            simplify(repo, target, Strategy.RTDS, r=1)

    @fixture_runs(200)
    @given(st.integers(0, 2 ** 16), st.integers(1, 3), st.integers(1, 12))
    def test_size_relations(self, seed, r, k):
        repo = Repository(mixed_pool(seed).releases + (integer_release("target", "1", 7, seed=seed + 1),))
        target = repo.find("target", "1")
        pool = candidate_pool(repo, target)
        sizes = [len(simplify(pool, target, Strategy.RTDS, r=q, k=k)) for q in (1, 2, 3)]
        assert sizes == sorted(sizes)
        rtds = simplify(pool, target, Strategy.RTDS, r=r, k=k)
        first = simplify(pool, target, Strategy.RITDS1, r=r, k=k)
        second = simplify(pool, target, Strategy.RITDS2, r=r, k=k)
        assert origins(first) <= origins(rtds)
        assert origins(second) <= origins(rtds)
        assert len(second) <= min(len(rtds), len(target))
        assert len(rtds) <= pool.n_instances
        for tds in (rtds, first, second):
            assert all(o[0] != "target" for o in tds.origins)

    @settings(max_examples=20)
    @given(st.integers(0, 2 ** 16), st.randoms(use_true_random=False))
    def test_pool_order_does_not_matter(self, seed, rnd):
        pool = mixed_pool(seed)
        shuffled = list(pool.releases)
        rnd.shuffle(shuffled)
        target = integer_release("t", "1", 6, seed=seed + 3)
        for strategy in (Strategy.ITDS, Strategy.RTDS, Strategy.RITDS1, Strategy.RITDS2):
            a = simplify(pool, target, strategy, r=2, k=3)
            b = simplify(Repository(tuple(shuffled)), target, strategy, r=2, k=3)
            assert a.origins == b.origins

    def test_provenance(self, repo):
        target = repo.find("target", "2")
        tds = simplify(candidate_pool(repo, target), target, Strategy.RITDS1, r=2, k=4)
        provenance = tds.provenance()
        assert provenance["strategy"] == "riTDS-1"
        assert (provenance["r"], provenance["k"], provenance["size"]) == (2, 4, len(tds))
        assert len(provenance["source_releases"]) == 2
        assert len(provenance["origins"]) == len(tds)
        assert tds.composition()["instances"].sum() == len(tds)


def test_promise_shaped_pool_sizes():
    repo = promise_shaped_repository()
    sizes = [len(flatten(candidate_pool(repo, target))) for target in repo]
    assert np.mean(sizes) == pytest.approx(11824, rel=0.02)


@pytest.mark.parametrize("text, strategy", [("ritds1", Strategy.RITDS1), ("riTDS-2", Strategy.RITDS2),
                                            ("rho", None), ("itds", Strategy.ITDS), ("riTDS-rho", Strategy.RITDS_RHO)])
def test_strategy_parse(text, strategy):
    if strategy is None:
        with pytest.raises(ParameterError):
            Strategy.parse(text)
    else:
        assert Strategy.parse(text) is strategy
