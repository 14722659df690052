"""Row-level reference estimators used as ground truth in tests and benchmarks.

Nothing here touches the compressed code paths: sums run over raw rows,
systems are solved by LU / least squares rather than Cholesky, and clusters
are visited one at a time. Slow by design; not part of the public API.
"""

from __future__ import annotations

import numpy as np
from scipy.special import log_expit

from . import errors
from .model import CovarianceSpec, CovKind, ObservationSet, WeightKind


def _row_weights(obs: ObservationSet) -> np.ndarray:
    return np.ones(obs.n) if obs.weights is None else np.asarray(obs.weights, dtype=np.float64)


def oracle_ols(obs: ObservationSet) -> tuple[np.ndarray, np.ndarray]:
    """(Weighted) least squares by the normal equations on raw rows.

    Returns ``(beta, residuals)`` with shapes ``(p, o)`` and ``(n, o)``.
    """
    M, y = obs.features, obs.outcomes
    w = _row_weights(obs)
    if obs.n < obs.p or np.linalg.matrix_rank(M) < obs.p:
        raise errors.RankDeficient(obs.feature_names)
    MtWM = M.T @ (M * w[:, None])
    MtWy = M.T @ (y * w[:, None])
    beta = np.linalg.solve(MtWM, MtWy)
    return beta, y - M @ beta


def oracle_sandwich(obs: ObservationSet, beta: np.ndarray, residuals: np.ndarray,
                    spec: CovarianceSpec) -> np.ndarray:
    """Covariance ``(o, p, p)`` evaluated literally on raw rows."""
    M = obs.features
    w = _row_weights(obs)
    bread = np.linalg.inv(M.T @ (M * w[:, None]))
    o, p = residuals.shape[1], obs.p
    out = np.empty((o, p, p))
    if spec.kind is CovKind.HOMOSKEDASTIC:
        if obs.weight_kind is WeightKind.FREQUENCY:
            df = w.sum() - p
        else:
            df = obs.n - p
        for k in range(o):
            out[k] = bread * (np.sum(w * residuals[:, k] ** 2) / df)
        return out
    if spec.kind is CovKind.HC:
        for k in range(o):
            u = w * residuals[:, k]
            meat = (M * (u * u)[:, None]).T @ M
            out[k] = bread @ meat @ bread
        return out
    if obs.clusters is None:
        raise errors.MissingClusters("cluster covariance requested without cluster labels")
    order = np.argsort(obs.clusters, kind="stable")
    cuts = np.flatnonzero(np.diff(obs.clusters[order])) + 1
    for k in range(o):
        meat = np.zeros((p, p))
        u = w * residuals[:, k]
        for rows in np.split(order, cuts):
            s = M[rows].T @ u[rows]
            meat += np.outer(s, s)
        out[k] = bread @ meat @ bread
    return out


def oracle_fit(obs: ObservationSet, spec: CovarianceSpec) -> tuple[np.ndarray, np.ndarray]:
    beta, resid = oracle_ols(obs)
    return beta, oracle_sandwich(obs, beta, resid, spec)


def oracle_loglik(obs: ObservationSet, beta: np.ndarray) -> float:
    z = obs.features @ np.asarray(beta, dtype=np.float64)
    y = obs.outcomes[:, 0]
    return float(np.sum(y * log_expit(z) + (1 - y) * log_expit(-z)))


def oracle_logistic(obs: ObservationSet, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Logistic MLE by iteratively reweighted least squares on raw rows."""
    M = obs.features
    y = obs.outcomes[:, 0]
    beta = np.zeros(obs.p)
    for _ in range(max_iter):
        z = M @ beta
        mu = np.exp(log_expit(z))
        v = mu * (1 - mu)
        if np.any(v <= 0):
            break
        working = z + (y - mu) / v
        sw = np.sqrt(v)
        new = np.linalg.lstsq(M * sw[:, None], working * sw, rcond=None)[0]
        if np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(new))):
            return new
        beta = new
    raise errors.DidNotConverge(max_iter)

