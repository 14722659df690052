import numpy as np
import pytest
from numpy.testing import assert_array_equal

from yoco import ObservationSet, WeightKind, errors
from yoco.model import CovarianceSpec, ClusterStrategy, CovKind, encode_clusters, validate


def test_empty_observation_set_is_valid():
    obs = ObservationSet.from_arrays(np.zeros((0, 2)), np.zeros((0, 1)))
    validate(obs)
    assert (obs.n, obs.p, obs.o) == (0, 2, 1)


def test_row_count_mismatch():
    with pytest.raises(errors.DimensionMismatch):
        ObservationSet.from_arrays(np.zeros((3, 2)), np.zeros((4, 1)))


def test_fractional_frequency_weight_rejected():
    with pytest.raises(errors.NonIntegerFrequencyWeight):
        ObservationSet.from_arrays(np.ones((2, 1)), np.ones((2, 1)), weights=[1.0, 1.5],
                                   weight_kind="frequency")


@pytest.mark.parametrize("w", [[1.0, 0.0], [1.0, -2.0]])
def test_non_positive_weight_rejected(w):
    with pytest.raises(errors.NonPositiveWeight):
        ObservationSet.from_arrays(np.ones((2, 1)), np.ones((2, 1)), weights=w,
                                   weight_kind="analytic")


def test_missing_values_rejected():
    with pytest.raises(errors.MissingValue):
        ObservationSet.from_arrays([[1.0], [np.nan]], [[1.0], [2.0]])


def test_name_count_must_match_columns():
    with pytest.raises(errors.DimensionMismatch):
        ObservationSet.from_arrays(np.ones((2, 2)), np.ones((2, 1)), ("a",))


def test_arrays_are_read_only():
    obs = ObservationSet.from_arrays(np.ones((2, 1)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        obs.features[0, 0] = 5.0


def test_cluster_labels_are_dense_sorted_codes():
    codes, labels = encode_clusters(["b", "a", "b", 7])
    assert labels == ("7", "a", "b")
    assert_array_equal(codes, [2, 1, 2, 0])


def test_with_intercept_prepends_ones_once():
    obs = ObservationSet.from_arrays([[2.0], [3.0]], [[1.0], [1.0]], ("x",)).with_intercept()
    assert obs.feature_names == ("intercept", "x")
    assert_array_equal(obs.features[:, 0], 1.0)
    assert obs.with_intercept() is obs


def test_take_redensifies_clusters():
    obs = ObservationSet.from_arrays(np.ones((4, 1)), np.arange(4.0)[:, None],
                                     clusters=["a", "b", "c", "a"])
    sub = obs.take(np.array([0, 2, 3]))
    assert sub.cluster_labels == ("a", "c")
    assert_array_equal(sub.clusters, [0, 1, 0])


@pytest.mark.parametrize("text", ["freq", "fweight", "frequency"])
def test_weight_kind_aliases(text):
    assert WeightKind.parse(text) is WeightKind.FREQUENCY


def test_covariance_spec_parse_and_str():
    spec = CovarianceSpec.parse("cluster", "static-dynamic")
    assert spec.kind is CovKind.CLUSTER and spec.strategy is ClusterStrategy.STATIC_DYNAMIC
    assert str(spec) == "cluster:static-dynamic"
    assert str(CovarianceSpec.parse("hc")) == "hc"
    with pytest.raises(errors.ValidationError):
        CovarianceSpec.parse("hc3")
