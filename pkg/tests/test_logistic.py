import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from yoco import ObservationSet, compress_logistic, errors, fit_logistic
from yoco.logistic import gradient, hessian, loglik
from yoco.oracle import oracle_logistic, oracle_loglik


def binary_instance(rng, n=400, p=3):
    X = rng.integers(0, 3, size=(n, p)).astype(float)
    beta = rng.normal(scale=0.5, size=p)
    z = X @ beta - 0.3
    y = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(float)
    return ObservationSet.from_arrays(X, y[:, None]).with_intercept()


def test_compress_counts_successes():
    obs = ObservationSet.from_arrays([[1.0], [1.0], [1.0]], [[0.0], [1.0], [1.0]])
    s = compress_logistic(obs)
    assert_array_equal(s.successes, [2])
    assert_array_equal(s.count, [3])


def test_all_zero_outcomes():
    obs = ObservationSet.from_arrays([[1.0], [2.0], [1.0]], np.zeros((3, 1)))
    assert_array_equal(compress_logistic(obs).successes, 0)


def test_non_binary_rejected():
    with pytest.raises(errors.NonBinaryOutcome):
        compress_logistic(ObservationSet.from_arrays([[1.0], [1.0]], [[0.5], [1.0]]))


def test_loglik_at_zero():
    obs = ObservationSet.from_arrays(np.ones((10, 1)), (np.arange(10) % 2)[:, None].astype(float))
    assert loglik(compress_logistic(obs), np.zeros(1)) == pytest.approx(10 * np.log(0.5))


def test_loglik_matches_rows(rng):
    obs = binary_instance(rng)
    s = compress_logistic(obs)
    for _ in range(5):
        b = rng.normal(size=obs.p)
        assert abs(loglik(s, b) - oracle_loglik(obs, b)) <= 1e-10


def test_loglik_extreme_scores_stay_finite():
    obs = ObservationSet.from_arrays([[1.0], [1.0]], [[1.0], [0.0]])
    s = compress_logistic(obs)
    assert np.isfinite(loglik(s, np.array([800.0])))
    assert loglik(s, np.array([800.0])) == pytest.approx(-800.0)


def test_perfect_prediction_limit_increases_to_zero():
    obs = ObservationSet.from_arrays(np.ones((4, 1)), np.ones((4, 1)))
    s = compress_logistic(obs)
    vals = [loglik(s, np.array([b])) for b in (1.0, 5.0, 20.0, 40.0)]
    assert all(a < b for a, b in zip(vals, vals[1:])) and vals[-1] < 0


def test_intercept_only_closed_form():
    y = np.r_[np.ones(3), np.zeros(7)]
    obs = ObservationSet.from_arrays(np.ones((10, 1)), y[:, None], ("intercept",))
    r = fit_logistic(compress_logistic(obs))
    assert abs(r.beta[0, 0] - np.log(3 / 7)) <= 1e-12
    assert r.diagnostics.converged
    assert r.covariance[0, 0, 0] == pytest.approx(1 / (10 * 0.3 * 0.7))


def test_fit_matches_oracle(rng):
    obs = binary_instance(rng)
    r = fit_logistic(compress_logistic(obs))
    assert_allclose(r.beta[:, 0], oracle_logistic(obs), atol=1e-6)


def test_separated_data_does_not_converge():
    x = np.array([-2.0, -1.0, 1.0, 2.0])
    obs = ObservationSet.from_arrays(x[:, None], (x > 0)[:, None].astype(float)).with_intercept()
    with pytest.raises(errors.DidNotConverge):
        fit_logistic(compress_logistic(obs))


def test_gradient_matches_finite_differences(rng):
    s = compress_logistic(binary_instance(rng))
    b = rng.normal(scale=0.3, size=s.p)
    g = gradient(s, b)
    h = 1e-5
    for j in range(s.p):
        e = np.zeros(s.p)
        e[j] = h
        fd = (loglik(s, b + e) - loglik(s, b - e)) / (2 * h)
        assert abs(g[j] - fd) <= 1e-6 * max(abs(fd), 1.0)


def test_hessian_negative_semidefinite(rng):
    s = compress_logistic(binary_instance(rng))
    for _ in range(3):
        assert np.linalg.eigvalsh(hessian(s, rng.normal(size=s.p))).max() <= 1e-10


def test_replication_gives_identical_iterates(rng):
    obs = binary_instance(rng, n=100)
    rep = obs.take(np.tile(np.arange(obs.n), 3))
    a, b = fit_logistic(compress_logistic(obs)), fit_logistic(compress_logistic(rep))
    assert a.diagnostics.iterations == b.diagnostics.iterations
    assert_allclose(a.beta, b.beta, rtol=1e-10, atol=1e-12)
