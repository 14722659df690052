"""Randomised invariants: merge monoid, YOCO, compression nesting, binning."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from yoco import (
    CovarianceSpec,
    ObservationSet,
    bin_features,
    compress_between_cluster,
    compress_fweights,
    compress_suffstats,
    fit,
    merge_suffstats,
)


@st.composite
def observation_sets(draw, max_rows=40, clustered=True):
    n = draw(st.integers(0, max_rows))
    p = draw(st.integers(1, 3))
    X = draw(arrays(np.float64, (n, p), elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0])))
    Y = draw(arrays(np.float64, (n, 2), elements=st.floats(-100, 100, allow_subnormal=False)))
    clusters = draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)) if clustered else None
    return ObservationSet.from_arrays(X, Y, clusters=clusters)


def assert_same_table(a, b, rtol=1e-12):
    assert_array_equal(a.features, b.features)
    assert_array_equal(a.count, b.count)
    assert_allclose(a.y_sum, b.y_sum, rtol=rtol, atol=1e-9)
    assert_allclose(a.y_sq_sum, b.y_sq_sum, rtol=rtol, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(observation_sets(), st.data())
def test_merge_of_shards_equals_compression_of_union(obs, data):
    cut = data.draw(st.lists(st.booleans(), min_size=obs.n, max_size=obs.n))
    mask = np.array(cut, dtype=bool)
    for keyed in (False, True):
        a = compress_suffstats(obs.take(np.flatnonzero(mask)), keyed)
        b = compress_suffstats(obs.take(np.flatnonzero(~mask)), keyed)
        assert_same_table(merge_suffstats(a, b), compress_suffstats(obs, keyed))


@settings(max_examples=40, deadline=None)
@given(observation_sets(clustered=False), st.data())
def test_merge_is_associative_and_commutative(obs, data):
    labels = np.array(data.draw(st.lists(st.integers(0, 2), min_size=obs.n, max_size=obs.n)), dtype=int)
    a, b, c = (compress_suffstats(obs.take(np.flatnonzero(labels == k))) for k in range(3))
    assert_same_table(merge_suffstats(merge_suffstats(a, b), c), merge_suffstats(a, merge_suffstats(b, c)))
    assert_same_table(merge_suffstats(a, b), merge_suffstats(b, a))


@settings(max_examples=60, deadline=None)
@given(observation_sets())
def test_count_conservation_and_nesting(obs):
    plain = compress_suffstats(obs)
    keyed = compress_suffstats(obs, include_cluster_key=True)
    fw = compress_fweights(obs)
    assert plain.n == keyed.n == fw.n == obs.n
    if obs.n:
        assert keyed.G >= plain.G >= 1
        assert fw.G >= plain.G
        assert compress_between_cluster(obs).C == obs.C
    # dropping the cluster key from the keyed table re-deduplicates to the plain one
    regrouped = merge_suffstats(
        compress_suffstats(obs.take(np.arange(0))),
        type(keyed)(keyed.features, keyed.y_sum, keyed.y_sq_sum, keyed.count,
                    keyed.feature_names, keyed.outcome_names))
    assert_same_table(regrouped, plain, rtol=1e-10)


@settings(max_examples=60, deadline=None)
@given(observation_sets(clustered=False))
def test_adding_an_outcome_keeps_groups(obs):
    one = compress_suffstats(obs.select_outcomes(["y0"]))
    two = compress_suffstats(obs)
    assert one.G == two.G
    assert_array_equal(one.features, two.features)
    assert_array_equal(one.y_sum[:, 0], two.y_sum[:, 0])
    assert compress_fweights(obs).G >= compress_fweights(obs.select_outcomes(["y0"])).G


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 80), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
       st.integers(1, 12))
def test_bin_dummies_are_exclusive_indicators(x, k):
    obs = ObservationSet.from_arrays(x[:, None], np.zeros((len(x), 1)), ("v",))
    D = bin_features(obs, ["v"], k).features
    assert D.shape[1] <= k - 1
    assert set(np.unique(D)) <= {0.0, 1.0}
    assert np.all(D.sum(axis=1) <= 1)
    # bins are monotone in x: a larger value never lands in a lower bin
    bins = (D * np.arange(1, D.shape[1] + 1)).sum(axis=1)
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(bins[order]) >= 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_singleton_clusters_make_cluster_meat_equal_ehw(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 30))
    obs = ObservationSet.from_arrays(rng.normal(size=(n, 1)), rng.normal(size=(n, 1)),
                                     clusters=np.arange(n)).with_intercept()
    hc = fit(compress_suffstats(obs), CovarianceSpec.hc()).covariance
    cl = fit(compress_suffstats(obs, True), CovarianceSpec.cluster()).covariance
    assert_allclose(cl, hc, rtol=1e-10, atol=1e-14)
