import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from care.dataset import Dataset
from care.detectors import (
    DetectorKind,
    FeatureBag,
    avgknn_score,
    lof_score,
    make_feature_bags,
    score_bags,
)
from care.errors import ParameterError
from care.neighbors import knn_query
from oracles import brute_knn, textbook_avgknn, textbook_lof


# -- neighbors ---------------------------------------------------------------


def test_hand_checked_geometry():
    nl = knn_query(np.array([[0.0, 0.0]]), np.array([[0.0, 0], [1, 0], [3, 0]]), 2, exclude=np.array([0]))
    np.testing.assert_array_equal(nl.indices, [[1, 2]])
    np.testing.assert_array_equal(nl.distances, [[1.0, 3.0]])


def test_identity_without_exclusion():
    ref = np.array([[0.0, 0.0], [5.0, 5.0]])
    nl = knn_query(ref[1:], ref, 1)
    assert nl.indices[0, 0] == 1 and nl.distances[0, 0] == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force(seed):
    X = np.random.default_rng(seed).normal(size=(50, 4))
    nl = knn_query(X, X, 5, exclude=np.arange(50))
    idx, dist = brute_knn(X, X, 5, exclude=np.arange(50))
    np.testing.assert_array_equal(nl.indices, idx)
    np.testing.assert_allclose(nl.distances, dist, rtol=0, atol=1e-12)


def test_ties_resolved_by_lower_index():
    ref = np.array([[1.0], [-1.0], [1.0], [-1.0], [2.0]])
    nl = knn_query(np.array([[0.0]]), ref, 3)
    np.testing.assert_array_equal(nl.indices, [[0, 1, 2]])


def test_k_too_large_is_an_error():
    X = np.zeros((3, 2))
    with pytest.raises(ParameterError):
        knn_query(X, X, 4)
    with pytest.raises(ParameterError):
        knn_query(X, X, 3, exclude=np.arange(3))


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(6, 25), st.integers(1, 3)),
           elements=st.integers(-5, 5).map(float)),
    st.integers(1, 5),
)
def test_property_sorted_and_brute_equivalent(X, k):
    # integer grid data forces many distance ties
    nl = knn_query(X, X, k, exclude=np.arange(len(X)))
    assert np.all(np.diff(nl.distances, axis=1) >= 0)
    assert not np.any(nl.indices == np.arange(len(X))[:, None])
    idx, dist = brute_knn(X, X, k, exclude=np.arange(len(X)))
    np.testing.assert_array_equal(nl.indices, idx)
    np.testing.assert_allclose(nl.distances, dist, atol=1e-12)


# -- feature bags ------------------------------------------------------------


def test_bag_sizes_for_d18():
    bags = make_feature_bags(18, 100, seed=5)
    assert len(bags) == 100
    assert all(9 <= bag.q <= 17 for bag in bags)
    assert all(list(bag.selected) == sorted(set(bag.selected)) for bag in bags)


def test_d2_bags_are_singletons():
    assert {bag.selected for bag in make_feature_bags(2, 30, seed=1)} <= {(0,), (1,)}


def test_bags_deterministic_and_d1_rejected():
    assert make_feature_bags(10, 20, 3) == make_feature_bags(10, 20, 3)
    with pytest.raises(ParameterError):
        make_feature_bags(1, 5, 0)


def test_bag_validation():
    with pytest.raises(ParameterError):
        FeatureBag((2, 1))


# -- avgKNN ------------------------------------------------------------------


def test_avgknn_line_example():
    D = np.array([[0.0], [1.0], [2.0], [10.0]])
    s = avgknn_score(D, k=2).values
    np.testing.assert_allclose(s, [1.5, 1.0, 1.5, 8.5])
    assert np.argmax(s) == 3


def test_avgknn_identical_points():
    np.testing.assert_array_equal(avgknn_score(np.ones((6, 3)), k=2).values, 0.0)


@pytest.mark.parametrize("c", [0.5, 3.0, 1e3])
def test_avgknn_homogeneous(c):
    X = np.random.default_rng(2).normal(size=(40, 3))
    np.testing.assert_allclose(avgknn_score(c * X, k=4).values, c * avgknn_score(X, k=4).values, rtol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_avgknn_matches_textbook(seed):
    X = np.random.default_rng(seed).normal(size=(30, 4))
    np.testing.assert_allclose(avgknn_score(X, k=3).values, textbook_avgknn(X, 3), rtol=0, atol=1e-9)


def test_explicit_reference_matrix():
    X = np.random.default_rng(8).normal(size=(20, 3))
    R = np.random.default_rng(9).normal(size=(15, 3))
    got = avgknn_score(X, R, k=3).values
    _, dist = brute_knn(X, R, 3)
    np.testing.assert_allclose(got, dist.mean(axis=1), atol=1e-12)


def test_index_reference_subset_excludes_self_only():
    X = np.random.default_rng(1).normal(size=(25, 2))
    S = np.arange(0, 25, 2)
    got = avgknn_score(X, S, k=3).values
    exclude = np.full(25, -1)
    exclude[S] = np.arange(len(S))
    _, dist = brute_knn(X, X[S], 3, exclude=exclude)
    np.testing.assert_allclose(got, dist.mean(axis=1), atol=1e-12)


# -- LOF ---------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_lof_matches_textbook(seed):
    X = np.random.default_rng(seed).normal(size=(30, 4))
    np.testing.assert_allclose(lof_score(X, k=3).values, textbook_lof(X, 3), rtol=0, atol=1e-9)


def test_lof_far_point_is_max():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(scale=0.3, size=(60, 2)), [[6.0, 6.0]]])
    assert np.argmax(lof_score(X, k=5).values) == 60


def test_lof_uniform_grid_is_one():
    # points whose neighbors' neighbors are all interior see uniform density
    X = np.array([[i, j] for i in range(-4, 5) for j in range(-4, 5)], dtype=float)
    vals = lof_score(X, k=4).values
    centre = np.flatnonzero((np.abs(X) <= 1).all(axis=1))
    np.testing.assert_allclose(vals[centre], 1.0, atol=1e-12)


def test_lof_duplicates_finite():
    X = np.vstack([np.zeros((5, 2)), [[1.0, 1.0], [2.0, 0.0], [5.0, 5.0]]])
    vals = lof_score(X, k=3).values
    assert np.all(np.isfinite(vals))


def test_lof_reference_too_small():
    with pytest.raises(ParameterError):
        lof_score(np.zeros((4, 2)) + np.arange(4)[:, None], k=4)


def test_dataset_input_and_bag_projection():
    X = np.random.default_rng(3).normal(size=(30, 5))
    bag = FeatureBag((0, 2, 4))
    a = lof_score(Dataset(X), k=3, bag=bag).values
    b = lof_score(X[:, [0, 2, 4]], k=3).values
    np.testing.assert_array_equal(a, b)


def test_score_bags_order_independent_of_threads():
    X = np.random.default_rng(4).normal(size=(80, 6))
    bags = make_feature_bags(6, 12, seed=2)
    one = score_bags(X, np.arange(80), 5, bags, DetectorKind.LOF, threads=1)
    four = score_bags(X, np.arange(80), 5, bags, DetectorKind.LOF, threads=4)
    for a, b in zip(one, four):
        assert a.bag == b.bag
        assert a.values.tobytes() == b.values.tobytes()
