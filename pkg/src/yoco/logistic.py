"""Logistic regression on grouped success counts.

For a binary outcome the per-group success count and group size are
sufficient, so the likelihood, its gradient and Hessian are all sums over
unique feature rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .compress import _canonical, group_rows, group_sum
from .estimate import factorize
from .model import Diagnostics, FitResult, ObservationSet, validate


@dataclass(frozen=True, eq=False)
class LogisticSuffStats:
    features: np.ndarray     # (G, p)
    successes: np.ndarray    # (G,)
    count: np.ndarray        # (G,)
    feature_names: tuple[str, ...]
    outcome_name: str

    @property
    def G(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    @property
    def n(self) -> int:
        return int(self.count.sum())


def compress_logistic(obs: ObservationSet) -> LogisticSuffStats:
    validate(obs)
    if obs.o != 1:
        raise errors.DimensionMismatch(f"logistic compression takes one outcome, got {obs.o}")
    if obs.weights is not None:
        raise errors.ValidationError("weighted logistic regression is not supported")
    y = obs.outcomes[:, 0]
    if not np.all((y == 0) | (y == 1)):
        raise errors.NonBinaryOutcome(f"outcome {obs.outcome_names[0]!r} must be 0/1")
    X = _canonical(obs.features)
    first, inv, G = group_rows(X)
    return LogisticSuffStats(X[first], group_sum(inv, y, G),
                             np.bincount(inv, minlength=G).astype(np.float64),
                             obs.feature_names, obs.outcome_names[0])


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loglik(stats: LogisticSuffStats, beta: np.ndarray) -> float:
    """Binomial log-likelihood; ``log s(z) = -log(1 + e^-z)`` evaluated stably."""
    z = stats.features @ np.asarray(beta, dtype=np.float64)
    log_s = -np.logaddexp(0.0, -z)
    log_1ms = -np.logaddexp(0.0, z)
    return float(np.sum(stats.successes * log_s + (stats.count - stats.successes) * log_1ms))


def gradient(stats: LogisticSuffStats, beta: np.ndarray) -> np.ndarray:
    s = sigmoid(stats.features @ beta)
    return stats.features.T @ (stats.successes - stats.count * s)


def hessian(stats: LogisticSuffStats, beta: np.ndarray) -> np.ndarray:
    s = sigmoid(stats.features @ beta)
    w = stats.count * s * (1.0 - s)
    return -(stats.features * w[:, None]).T @ stats.features


def fit_logistic(stats: LogisticSuffStats, tol: float = 1e-10, max_iter: int = 50) -> FitResult:
    """Newton-Raphson with step halving, starting from zero.

    Convergence requires the mean gradient (gradient over total count) to be
    below ``tol`` and the last Newton step to be small relative to the
    coefficients; with separated data the step never shrinks, so the fit
    ends in :class:`~yoco.errors.DidNotConverge`. The covariance is the
    inverse observed information.
    """
    p = stats.p
    n = max(stats.n, 1)
    beta = np.zeros(p)
    ll = loglik(stats, beta)
    for it in range(1, max_iter + 1):
        g = gradient(stats, beta)
        try:
            info = factorize(-hessian(stats, beta), stats.feature_names)
        except errors.RankDeficient:
            if it == 1:
                raise
            # information collapsed away from zero: fitted probabilities saturated
            raise errors.DidNotConverge(max_iter, "information matrix became singular (separated data?)")
        step = info.solve(g)
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            ll_new = loglik(stats, cand)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        small_step = np.max(np.abs(t * step), initial=0.0) <= 1e-6 * (1.0 + np.max(np.abs(beta), initial=0.0))
        if small_step and np.max(np.abs(gradient(stats, beta)), initial=0.0) / n < tol:
            break
    else:
        raise errors.DidNotConverge(max_iter, f"logistic fit did not converge within {max_iter} "
                                              "iterations (separated data?)")
    cov = factorize(-hessian(stats, beta), stats.feature_names).pi[None]
    diag = Diagnostics(n=stats.n, G=stats.G, C=None, covariance_spec="logistic",
                       converged=True, iterations=it)
    return FitResult(beta[:, None], cov, None, float(stats.n - p), stats.feature_names,
                     (stats.outcome_name,), diag)
