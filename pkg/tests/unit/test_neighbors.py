"""
Tests for simple, eligible, adaptive and prediction neighbor sets.
"""

import numpy as np
import pytest

from dnngp.covariance import CovarianceParams, check_natural_monotonicity, cov
from dnngp.errors import NeighborError, ReferenceTargetError
from dnngp.neighbors import (
    NeighborScheme,
    adaptive_neighbors,
    brute_force_neighbors,
    build_eligible_sets,
    build_neighbor_table,
    prediction_eligible,
    prediction_neighbors,
    reference_lag_grids,
    simple_neighbors,
    validate_budget
)
from dnngp.spacetime import SpaceTimePoint, enumerate_reference
from tests.conftest import grid_reference

def dominance_eligible(ref, i, m):
    """Exhaustive dominance-count eligibility for point i."""
    history = np.arange(i)
    h, u = ref.lags_to(i, history)
    eligible = []
    for k, p in enumerate(history):
        dominated = np.count_nonzero((h <= h[k]) & (u <= u[k]))
        later_ties = np.count_nonzero((history > p) & (h == h[k]) & (u == u[k]))
        if dominated - later_ties <= m:
            eligible.append(int(p))
    return eligible

@pytest.fixture
def line_ref():
    """Five unit-spaced sites on a line observed at five times."""
    return enumerate_reference(np.arange(1.0, 6.0)[:, None], np.arange(1.0, 6.0))

def test_simple_worked_example_by_default(line_ref):
    table = simple_neighbors(line_ref, 4)
    target = line_ref.index(2, 2)
    # (s2,t3), (s1,t3), (s2,t2), (s4,t2)
    assert target == 12
    assert sorted(table[target].tolist()) == [6, 8, 10, 11]
    assert table[target].tolist() == [
        line_ref.index(1, 2), line_ref.index(0, 2), line_ref.index(1, 1), line_ref.index(3, 1)
    ]

def test_simple_with_own_site_uses_zero_distance_first(line_ref):
    table = simple_neighbors(line_ref, 4, include_own_site=True)
    target = line_ref.index(2, 2)
    assert table[target].tolist() == [
        line_ref.index(1, 2), line_ref.index(0, 2), line_ref.index(2, 1), line_ref.index(1, 1)
    ]

def test_simple_first_point_is_empty(line_ref):
    assert simple_neighbors(line_ref, 4)[0].size == 0

def test_simple_interior_sets_have_m_points():
    ref = grid_reference(12, 3)
    table = simple_neighbors(ref, 9)
    for site in (40, 77, 130):
        target = ref.index(site, 2)
        neighbors = table[target]
        assert neighbors.size == 9
        assert np.count_nonzero(neighbors // ref.n_sites == 2) == 3
        assert np.count_nonzero(neighbors // ref.n_sites == 1) == 3
        assert np.count_nonzero(neighbors // ref.n_sites == 0) == 3

def test_simple_is_theta_free(ref4, monotone_theta, dataset1_theta):
    a = build_neighbor_table(ref4, NeighborScheme.SIMPLE, 9, params=monotone_theta)
    b = build_neighbor_table(ref4, NeighborScheme.SIMPLE, 9, params=dataset1_theta)
    assert a.same_sets(b)

def test_every_neighbor_is_in_history(ref4, monotone_theta):
    for scheme in NeighborScheme:
        table = build_neighbor_table(ref4, scheme, 9, params=monotone_theta)
        for i in range(ref4.size):
            assert all(ref4.in_history(int(j), i) for j in table[i])
            if scheme is not NeighborScheme.FULL:
                assert table[i].size <= 9

@pytest.mark.parametrize("m", [0, 5, 65])
def test_budget_validation(m):
    scheme = NeighborScheme.SIMPLE if m == 5 else NeighborScheme.ADAPTIVE
    with pytest.raises(NeighborError):
        validate_budget(m, scheme, 1000)

def test_simple_budget_must_be_below_reference_size():
    ref = grid_reference(2, 1)
    with pytest.raises(NeighborError):
        simple_neighbors(ref, 4)

def test_first_point_has_no_eligible_candidates(ref4):
    eligible = build_eligible_sets(ref4, 9)
    assert eligible[0].size == 0

@pytest.mark.parametrize("m", [1, 4, 9])
def test_eligible_sets_match_dominance_counts(m):
    grid = grid_reference(4, 4)
    scattered = enumerate_reference(np.random.default_rng(5).uniform(size=(7, 2)), [0.0, 0.3, 0.5, 1.0])
    for ref in (grid, scattered):
        eligible = build_eligible_sets(ref, m)
        for i in range(ref.size):
            assert eligible[i].tolist() == dominance_eligible(ref, i, m)

def test_eligible_sets_independent_of_threads():
    ref = grid_reference(12, 4)
    one = build_eligible_sets(ref, 9, threads=1)
    many = build_eligible_sets(ref, 9, threads=4)
    np.testing.assert_array_equal(one.indptr, many.indptr)
    np.testing.assert_array_equal(one.indices, many.indices)

def random_monotone_thetas(ref, count, seed):
    """Seeded covariance parameters that decrease in both lags over the grid."""
    rng = np.random.default_rng(seed)
    h_grid, u_grid = reference_lag_grids(ref)
    thetas = []
    while len(thetas) < count:
        theta = CovarianceParams(
            sigma2=float(rng.uniform(0.5, 3.0)),
            a=float(10.0 ** rng.uniform(-0.5, 3.0)),
            c=float(rng.uniform(0.05, 2.5)),
            kappa=float(rng.uniform(0.05, 1.0))
        )
        if check_natural_monotonicity(theta, h_grid, u_grid):
            thetas.append(theta)
    return thetas

@pytest.mark.parametrize("m", [9, 16, 25])
def test_eligible_sets_contain_most_correlated_history(m):
    ref = grid_reference(6, 6, extent=0.5)
    eligible = build_eligible_sets(ref, m)
    members = [set(eligible[i].tolist()) for i in range(ref.size)]
    for theta in random_monotone_thetas(ref, 50, seed=m):
        nearest = brute_force_neighbors(ref, theta, m)
        for i in range(ref.size):
            assert set(nearest[i].tolist()) <= members[i], f"point {i}, theta {theta}"

@pytest.mark.parametrize("m", [9, 16, 25])
def test_eligible_set_size_stays_linear_in_m(m):
    ref = grid_reference(10, 10)
    assert ref.size >= 10 * m
    assert build_eligible_sets(ref, m).mean_size <= 8 * m

def test_adaptive_small_eligible_set_is_taken_whole(ref4, monotone_theta):
    table = build_neighbor_table(ref4, NeighborScheme.ADAPTIVE, 9, params=monotone_theta)
    for i in range(ref4.size):
        eligible = table.eligible[i]
        assert set(table[i].tolist()) <= set(eligible.tolist())
        if eligible.size <= 9:
            assert sorted(table[i].tolist()) == eligible.tolist()

@pytest.mark.parametrize("theta", [
    CovarianceParams(sigma2=1.0, a=500.0, c=2.5, kappa=0.5),
    CovarianceParams(sigma2=1.0, a=2.0, c=1.0, kappa=0.9),
    CovarianceParams(sigma2=2.0, a=40.0, c=2.5, kappa=0.1),
])
def test_adaptive_equals_brute_force_history_scan(theta):
    # sites span [0, 0.5]^2 so c * h < 2 and theta is naturally monotone
    ref = grid_reference(6, 6, extent=0.5)
    h_grid, u_grid = reference_lag_grids(ref)
    assert check_natural_monotonicity(theta, h_grid, u_grid)
    m = 9
    table = build_neighbor_table(ref, NeighborScheme.ADAPTIVE, m, params=theta)
    expected = brute_force_neighbors(ref, theta, m)
    for i in range(ref.size):
        assert table[i].tolist() == expected[i].tolist()

def test_adaptive_sets_follow_theta():
    # fast temporal decay prefers same-time sites, fast spatial decay prefers the own site
    ref = grid_reference(12, 3)
    eligible = build_eligible_sets(ref, 9)
    fast_time = adaptive_neighbors(eligible, ref, CovarianceParams(sigma2=1.0, a=1000.0, c=1.0, kappa=1.0))
    fast_space = adaptive_neighbors(eligible, ref, CovarianceParams(sigma2=1.0, a=0.01, c=10.0, kappa=1.0))
    target = ref.index(78, 2)
    assert not np.array_equal(np.sort(fast_time[target]), np.sort(fast_space[target]))

def test_adaptive_rejects_mismatched_budget(ref4, monotone_theta):
    eligible = build_eligible_sets(ref4, 4)
    with pytest.raises(NeighborError):
        adaptive_neighbors(eligible, ref4, monotone_theta, m=9)

def test_reverse_lists(ref4, monotone_theta):
    table = build_neighbor_table(ref4, NeighborScheme.ADAPTIVE, 4, params=monotone_theta)
    reverse = table.reverse()
    for i in range(ref4.size):
        expected = [j for j in range(ref4.size) if i in table[j].tolist()]
        assert reverse[i].tolist() == expected

def test_debug_dump(tmp_path, ref4, monotone_theta):
    table = build_neighbor_table(ref4, NeighborScheme.ADAPTIVE, 4, params=monotone_theta)
    table.write_csv(tmp_path / "n.csv", eligible_path=tmp_path / "e.csv")
    frame = table.to_frame()
    assert list(frame.columns) == ["i", "rank", "j"]
    assert len(frame) == table.nnz
    assert (tmp_path / "e.csv").read_text().startswith("i,rank,j")

def test_prediction_simple_is_cartesian_product(ref4):
    point = SpaceTimePoint((0.5, 0.5), 0.5)
    neighbors = prediction_neighbors(point, ref4, NeighborScheme.SIMPLE, 4)
    assert neighbors.size == 4
    assert len(set((neighbors % ref4.n_sites).tolist())) == 2
    assert len(set((neighbors // ref4.n_sites).tolist())) == 2

def test_prediction_adaptive_with_large_budget_uses_everything(ref3, monotone_theta):
    point = SpaceTimePoint((0.2, 0.7), 0.4)
    neighbors = prediction_neighbors(point, ref3, NeighborScheme.ADAPTIVE, 64, params=monotone_theta)
    assert sorted(neighbors.tolist()) == list(range(ref3.size))

def test_prediction_adaptive_matches_brute_force(monotone_theta):
    ref = grid_reference(5, 5)
    rng = np.random.default_rng(11)
    m = 9
    for _ in range(10):
        point = SpaceTimePoint(tuple(rng.uniform(size=2)), rng.uniform())
        h = np.linalg.norm(ref.coords - np.asarray(point.s), axis=1)
        u = np.abs(ref.point_times - point.t)
        scores = cov(h, u, monotone_theta)
        expected = np.argsort(-scores, kind="stable")[:m]
        neighbors = prediction_neighbors(point, ref, NeighborScheme.ADAPTIVE, m, params=monotone_theta)
        assert sorted(neighbors.tolist()) == sorted(expected.tolist())
        assert set(neighbors.tolist()) <= set(prediction_eligible(point, ref, m).tolist())

def test_prediction_rejects_reference_targets(ref3, monotone_theta):
    with pytest.raises(ReferenceTargetError) as info:
        prediction_neighbors(ref3.point(5), ref3, NeighborScheme.ADAPTIVE, 4, params=monotone_theta)
    assert info.value.index == 5
