"""
Tests for the reference-set enumeration and history ordering.
"""

import numpy as np
import pytest

from dnngp.errors import ReferenceSetError
from dnngp.spacetime import SpaceTimePoint, canonical_lags, enumerate_reference

def test_two_by_two_enumeration_is_time_major():
    ref = enumerate_reference([[0.0], [1.0]], [0.0, 1.0])
    assert ref.index(0, 0) == 0
    assert ref.index(1, 0) == 1
    assert ref.index(0, 1) == 2
    assert ref.index(1, 1) == 3
    assert ref.point(2) == SpaceTimePoint((0.0,), 1.0)

def test_single_point_has_empty_history():
    ref = enumerate_reference([[0.5, 0.5]], [3.0])
    assert ref.size == 1
    assert ref.history(0).size == 0

def test_index_formula_for_three_sites_two_times():
    ref = enumerate_reference([[0.0], [1.0], [2.0]], [0.0, 1.0])
    # site 2 at time 2 in 1-based terms
    assert ref.index(1, 1) == 4

def test_in_history():
    ref = enumerate_reference([[0.0], [1.0], [2.0]], [0.0, 1.0])
    assert ref.in_history(0, 1)
    assert not ref.in_history(1, 1)
    assert ref.in_history(ref.index(2, 0), ref.index(0, 1))
    assert not ref.in_history(ref.index(0, 1), ref.index(2, 0))

def test_history_is_every_earlier_index(ref3):
    for j in range(ref3.size):
        expected = [i for i in range(ref3.size) if ref3.in_history(i, j)]
        assert ref3.history(j).tolist() == expected

def test_out_of_range_index_rejected(ref3):
    with pytest.raises(ReferenceSetError):
        ref3.in_history(0, ref3.size)
    with pytest.raises(ReferenceSetError):
        ref3.point(-1)

def test_duplicate_sites_rejected():
    with pytest.raises(ReferenceSetError, match="duplicate site"):
        enumerate_reference([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], [0.0])

def test_duplicate_and_unsorted_times_rejected():
    with pytest.raises(ReferenceSetError, match="duplicate time"):
        enumerate_reference([[0.0]], [0.0, 1.0, 1.0])
    with pytest.raises(ReferenceSetError, match="increasing"):
        enumerate_reference([[0.0]], [1.0, 0.0])

def test_enumeration_is_deterministic():
    sites = np.random.default_rng(3).uniform(size=(5, 2))
    a = enumerate_reference(sites, [0.0, 0.5])
    b = enumerate_reference(sites, [0.0, 0.5])
    np.testing.assert_array_equal(a.coords, b.coords)
    np.testing.assert_array_equal(a.site_distances, b.site_distances)

def test_coords_and_times_follow_enumeration(ref3):
    for i in (0, 4, 13, 26):
        point = ref3.point(i)
        np.testing.assert_array_equal(ref3.coords[i], point.s)
        assert ref3.point_times[i] == point.t

def test_locate_finds_grid_points_only(ref3):
    assert ref3.locate(ref3.point(11)) == 11
    assert ref3.locate(SpaceTimePoint((0.25, 0.25), 0.5)) is None
    with pytest.raises(ReferenceSetError):
        ref3.locate(SpaceTimePoint((0.5,), 0.5))

def test_canonical_lags_snap_near_ties():
    values = np.array([1.0, 1.0 + 1e-15, 2.0])
    snapped = canonical_lags(values)
    assert snapped[0] == snapped[1]
    assert snapped[2] == 2.0

def test_point_validation():
    with pytest.raises(ReferenceSetError):
        SpaceTimePoint((0.0, 0.0, 0.0, 0.0), 1.0)
    with pytest.raises(ReferenceSetError):
        SpaceTimePoint((np.nan,), 1.0)
