"""Least-squares coefficients and sandwich covariances from compressed data.

Every estimator here reads only compressed representations. The covariance
is assembled as ``V = Pi @ Xi @ Pi`` where the bread ``Pi`` is the inverse
Gram matrix and the meat ``Xi`` depends on the error structure. No
small-sample corrections are applied (HC0 / CR0 forms).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from . import errors
from .model import (
    ClusterStatsTable,
    ClusterStrategy,
    CovarianceSpec,
    CovKind,
    Diagnostics,
    FitResult,
    PanelStatsTable,
    SuffStatsTable,
    WeightKind,
)

Compressed = Union[SuffStatsTable, ClusterStatsTable, PanelStatsTable]

PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BreadMatrix:
    pi: np.ndarray
    gram: np.ndarray
    chol: np.ndarray
    feature_names: tuple[str, ...]
    min_pivot_ratio: float

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((self.chol, True), rhs)


@dataclass(frozen=True, eq=False)
class MeatMatrix:
    xi: np.ndarray          # (o, p, p)
    spec: CovarianceSpec

    def __post_init__(self) -> None:
        xi = np.asarray(self.xi, dtype=np.float64)
        object.__setattr__(self, "xi", 0.5 * (xi + np.swapaxes(xi, 1, 2)))


def _collinear_set(gram: np.ndarray, names: tuple[str, ...], tol: float) -> list[str]:
    # Greedy forward pass: the first column whose Schur complement against the
    # independent columns so far is below tolerance, plus the columns it loads on.
    kept: list[int] = []
    for j in range(gram.shape[0]):
        if kept:
            A = gram[np.ix_(kept, kept)]
            b = gram[kept, j]
            coef = np.linalg.lstsq(A, b, rcond=None)[0]
            pivot = gram[j, j] - b @ coef
        else:
            coef = np.zeros(0)
            pivot = gram[j, j]
        if pivot <= tol:
            scale = np.max(np.abs(coef)) if coef.size else 0.0
            partners = [names[kept[i]] for i in range(len(kept))
                        if scale > 0 and abs(coef[i]) > 1e-8 * scale]
            return partners + [names[j]]
        kept.append(j)
    return list(names)


def factorize(gram: np.ndarray, feature_names: tuple[str, ...]) -> BreadMatrix:
    """Cholesky-factor a Gram matrix and invert it, rejecting rank deficiency."""
    gram = 0.5 * (gram + gram.T)
    p = gram.shape[0]
    if p == 0:
        empty = np.zeros((0, 0))
        return BreadMatrix(empty, empty, empty, feature_names, 1.0)
    maxdiag = float(np.max(np.diag(gram)))
    tol = PIVOT_TOL * maxdiag
    try:
        L = scipy.linalg.cholesky(gram, lower=True)
    except np.linalg.LinAlgError:
        L = None
    if L is None or maxdiag <= 0 or np.any(np.diag(L) ** 2 <= tol):
        raise errors.RankDeficient(_collinear_set(gram, feature_names, tol))
    pi = scipy.linalg.cho_solve((L, True), np.eye(p))
    pi = 0.5 * (pi + pi.T)
    return BreadMatrix(pi, gram, L, feature_names, float(np.min(np.diag(L) ** 2) / maxdiag))


# -- normal equations per representation --------------------------------------

def _group_weights(stats: SuffStatsTable) -> np.ndarray:
    if stats.weighted is not None:
        return stats.weighted.w_sum
    return stats.count.astype(np.float64)


def _split_beta(pstats: PanelStatsTable, beta: np.ndarray):
    p1, p2 = pstats.p1, pstats.p2
    b1, b2 = beta[:p1], beta[p1:p1 + p2]
    B3 = np.zeros((p1, p2))
    if pstats.interactions:
        B3[list(pstats.interacted)] = beta[p1 + p2:].reshape(len(pstats.interacted), p2)
    return b1, b2, B3


def _panel_normal_equations(pstats: PanelStatsTable):
    """Summed cluster Gram blocks and cross-products from per-cluster blocks."""
    m1 = pstats.static_features
    nc = pstats.counts.astype(np.float64)
    cs = pstats.cluster_col_sums()
    G2 = pstats.cluster_grams()
    p1, p2 = pstats.p1, pstats.p2
    mi = pstats.interacted_features
    q = mi.shape[1]
    blocks = [[(m1 * nc[:, None]).T @ m1, m1.T @ cs], [None, G2.sum(axis=0)]]
    rhs = [m1.T @ pstats.y_sum, pstats.y_weighted.sum(axis=0)]
    if pstats.interactions:
        blocks[0].append(np.einsum("ci,cj,cb->ijb", m1, mi, cs).reshape(p1, q * p2))
        blocks[1].append(np.einsum("ci,cab->aib", mi, G2).reshape(p2, q * p2))
        blocks.append([None, None,
                       np.einsum("ci,cj,cab->iajb", mi, mi, G2).reshape(q * p2, q * p2)])
        rhs.append(np.einsum("ci,cbo->ibo", mi, pstats.y_weighted).reshape(q * p2, -1))
    return _assemble_symmetric(blocks), np.vstack(rhs)


def _balanced_dynamic_y(pstats: PanelStatsTable) -> np.ndarray:
    """Dynamic-block cross products with outcomes, ``(C, p2, o)``, from the reshaped outcomes."""
    return np.einsum("tb,tco->cbo", pstats.dynamic_block, pstats.y_matrix)


def _balanced_normal_equations(pstats: PanelStatsTable):
    """Kronecker-factored Gram and cross-products for a balanced panel."""
    if not pstats.balanced:
        raise errors.NotBalanced("panel is not balanced")
    m1 = pstats.static_features
    B = pstats.dynamic_block
    T, C = pstats.T, pstats.C
    p1, p2 = pstats.p1, pstats.p2
    colsum = B.sum(axis=0)
    BtB = B.T @ B
    m1tm1 = m1.T @ m1
    m1sum = m1.sum(axis=0)
    dyn_y = _balanced_dynamic_y(pstats)
    blocks = [[T * m1tm1, np.outer(m1sum, colsum)], [None, C * BtB]]
    rhs = [m1.T @ pstats.y_sum, dyn_y.sum(axis=0)]
    if pstats.interactions:
        mi = pstats.interacted_features
        q = mi.shape[1]
        blocks[0].append(np.kron(m1.T @ mi, colsum[None, :]))
        blocks[1].append(np.kron(mi.sum(axis=0)[None, :], BtB))
        blocks.append([None, None, np.kron(mi.T @ mi, BtB)])
        rhs.append(np.einsum("ci,cbo->ibo", mi, dyn_y).reshape(q * p2, -1))
    return _assemble_symmetric(blocks), np.vstack(rhs)


def _assemble_symmetric(blocks) -> np.ndarray:
    k = len(blocks)
    sizes = [blocks[i][i].shape[0] for i in range(k)]
    offs = np.r_[0, np.cumsum(sizes)]
    out = np.zeros((offs[-1], offs[-1]))
    for i in range(k):
        for j in range(i, k):
            blk = blocks[i][j]
            out[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = blk
            out[offs[j]:offs[j + 1], offs[i]:offs[i + 1]] = blk.T
    return out


def normal_equations(data: Compressed, *, kronecker: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(M'WM, M'Wy)`` computed from a compressed representation."""
    if isinstance(data, SuffStatsTable):
        w = _group_weights(data)
        M = data.features
        rhs = data.weighted.wy_sum if data.weighted is not None else data.y_sum
        return (M * w[:, None]).T @ M, M.T @ rhs
    if isinstance(data, ClusterStatsTable):
        p, o = data.p, data.o
        gram, rhs = np.zeros((p, p)), np.zeros((p, o))
        for g in data.groups:
            gram += g.n_clusters * (g.features.T @ g.features)
            rhs += g.features.T @ g.y_sum
        return gram, rhs
    if isinstance(data, PanelStatsTable):
        if kronecker:
            return _balanced_normal_equations(data)
        return _panel_normal_equations(data)
    raise TypeError(f"unsupported representation {type(data).__name__}")


def bread(data: Compressed, *, kronecker: bool = False) -> BreadMatrix:
    """Inverse Gram matrix of the (weighted) design, from compressed records."""
    gram, _ = normal_equations(data, kronecker=kronecker)
    return factorize(gram, tuple(data.feature_names))


def solve_wls(data: Compressed, br: BreadMatrix | None = None, *, kronecker: bool = False) -> np.ndarray:
    """Least-squares coefficients for every outcome, shape ``(p, o)``.

    One factorisation is shared by all outcomes.
    """
    gram, rhs = normal_equations(data, kronecker=kronecker)
    if br is None:
        br = factorize(gram, tuple(data.feature_names))
    return br.solve(rhs)


# -- residual sums ------------------------------------------------------------

def _fitted(stats: SuffStatsTable, beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 1:
        beta = beta[:, None]
    if beta.shape != (stats.p, stats.o):
        raise errors.DimensionMismatch(f"beta must have shape {(stats.p, stats.o)}, got {beta.shape}")
    return stats.features @ beta


def group_rss(stats: SuffStatsTable, beta: np.ndarray) -> np.ndarray:
    """Residual sum of squares per group and outcome, ``(G, o)``.

    Weighted tables give the weighted sums ``sum w e^2``.
    """
    yhat = _fitted(stats, beta)
    if stats.weighted is not None:
        w = stats.weighted
        rss = yhat ** 2 * w.w_sum[:, None] - 2 * yhat * w.wy_sum + w.wy_sq_sum
    else:
        rss = yhat ** 2 * stats.count[:, None] - 2 * yhat * stats.y_sum + stats.y_sq_sum
    return np.maximum(rss, 0.0)


def df_residual(stats: SuffStatsTable, p: int | None = None) -> float:
    """Residual degrees of freedom.

    Row count minus ``p``; for frequency weights the represented sample size
    is the weight total, so ``sum(w) - p``.
    """
    p = stats.p if p is None else p
    if stats.weight_kind is WeightKind.FREQUENCY:
        return float(stats.weighted.w_sum.sum()) - p
    return float(stats.n - p)


def rss_compressed(stats: SuffStatsTable, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total (weighted) residual sum of squares and dispersion per outcome."""
    rss = group_rss(stats, beta).sum(axis=0)
    df = df_residual(stats)
    if df <= 0:
        raise errors.NonPositiveDF(f"residual degrees of freedom {df} <= 0")
    return rss, rss / df


# -- meats ----------------------------------------------------------------------

def meat_homoskedastic(stats: SuffStatsTable, beta: np.ndarray) -> MeatMatrix:
    """``sigma2 * M'WM`` per outcome."""
    _, sigma2 = rss_compressed(stats, beta)
    gram, _ = normal_equations(stats)
    return MeatMatrix(sigma2[:, None, None] * gram[None], CovarianceSpec.homoskedastic())


def meat_ehw(stats: SuffStatsTable, beta: np.ndarray) -> MeatMatrix:
    """Heteroskedasticity-consistent meat from per-group residual sums of squares.

    Weighted tables use the ``w**2`` blocks so each row contributes
    ``w_i**2 e_i**2 m_i m_i'``.
    """
    yhat = _fitted(stats, beta)
    M = stats.features
    if stats.weighted is not None:
        w = stats.weighted
        e2 = yhat ** 2 * w.w2_sum[:, None] - 2 * yhat * w.w2y_sum + w.w2y_sq_sum
    else:
        e2 = yhat ** 2 * stats.count[:, None] - 2 * yhat * stats.y_sum + stats.y_sq_sum
    e2 = np.maximum(e2, 0.0)
    xi = np.einsum("gi,go,gj->oij", M, e2, M)
    return MeatMatrix(xi, CovarianceSpec.hc())


def meat_cluster_within(stats: SuffStatsTable, beta: np.ndarray) -> MeatMatrix:
    """Cluster-robust meat from a table keyed on (cluster, features).

    Per-cluster score vectors are accumulated in one pass over groups.
    """
    if stats.clusters is None:
        raise errors.MissingClusters("table was compressed without the cluster key")
    yhat = _fitted(stats, beta)
    if stats.weighted is not None:
        resid_sum = stats.weighted.wy_sum - stats.weighted.w_sum[:, None] * yhat
    else:
        resid_sum = stats.y_sum - stats.count[:, None] * yhat
    C, p = stats.C, stats.p
    xi = np.empty((stats.o, p, p))
    for k in range(stats.o):
        scores = stats.features * resid_sum[:, k:k + 1]
        S = np.empty((C, p))
        for j in range(p):
            S[:, j] = np.bincount(stats.clusters, weights=scores[:, j], minlength=C)
        xi[k] = S.T @ S
    return MeatMatrix(xi, CovarianceSpec.cluster(ClusterStrategy.WITHIN))


def meat_cluster_between(cstats: ClusterStatsTable, beta: np.ndarray) -> MeatMatrix:
    """Cluster-robust meat from groups of clusters sharing a feature block."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 1:
        beta = beta[:, None]
    if beta.shape != (cstats.p, cstats.o):
        raise errors.DimensionMismatch(f"beta must have shape {(cstats.p, cstats.o)}, got {beta.shape}")
    xi = np.zeros((cstats.o, cstats.p, cstats.p))
    for g in cstats.groups:
        M = g.features
        fitted = M @ beta                      # (T, o)
        for k in range(cstats.o):
            a, f = g.y_sum[:, k], fitted[:, k]
            af = np.outer(a, f)
            middle = g.y_outer_sum[k] - af - af.T + g.n_clusters * np.outer(f, f)
            xi[k] += M.T @ middle @ M
    return MeatMatrix(xi, CovarianceSpec.cluster(ClusterStrategy.BETWEEN))


def _kron_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of ``(C, m)`` and ``(C, k)`` arrays."""
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _panel_beta(pstats: PanelStatsTable, beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 1:
        beta = beta[:, None]
    if beta.shape != (pstats.p, pstats.o):
        raise errors.DimensionMismatch(f"beta must have shape {(pstats.p, pstats.o)}, got {beta.shape}")
    return beta


def panel_scores(pstats: PanelStatsTable, beta: np.ndarray) -> np.ndarray:
    """Per-cluster score vectors ``K2_c - K1_c beta`` from per-cluster blocks, ``(o, C, p)``."""
    beta = _panel_beta(pstats, beta)
    m1 = pstats.static_features
    nc = pstats.counts.astype(np.float64)
    cs = pstats.cluster_col_sums()
    G2 = pstats.cluster_grams()
    out = np.empty((pstats.o, pstats.C, pstats.p))
    for k in range(pstats.o):
        b1, b2, B3 = _split_beta(pstats, beta[:, k])
        a = m1 @ b1
        dyn_coef = b2[None, :] + m1 @ B3               # per-cluster effective dynamic slope
        fitted_total = nc * a + np.einsum("cb,cb->c", cs, dyn_coef)
        static = m1 * (pstats.y_sum[:, k] - fitted_total)[:, None]
        dyn_fit = cs * a[:, None] + np.einsum("cab,cb->ca", G2, dyn_coef)
        dynamic = pstats.y_weighted[:, :, k] - dyn_fit
        parts = [static, dynamic]
        if pstats.interactions:
            parts.append(_kron_rows(pstats.interacted_features, dynamic))
        out[k] = np.hstack(parts)
    return out


def balanced_panel_scores(pstats: PanelStatsTable, beta: np.ndarray) -> np.ndarray:
    """Per-cluster scores for a balanced panel using the shared dynamic block, ``(o, C, p)``."""
    if not pstats.balanced:
        raise errors.NotBalanced("panel is not balanced")
    beta = _panel_beta(pstats, beta)
    m1 = pstats.static_features
    B = pstats.dynamic_block
    colsum = B.sum(axis=0)
    BtB = B.T @ B
    out = np.empty((pstats.o, pstats.C, pstats.p))
    for k in range(pstats.o):
        b1, b2, B3 = _split_beta(pstats, beta[:, k])
        a = m1 @ b1                                              # (C,)
        fitted_total = pstats.T * a + colsum @ b2 + (m1 @ B3) @ colsum
        static = m1 * (pstats.y_sum[:, k] - fitted_total)[:, None]
        k2_dyn = B.T @ pstats.y_matrix[:, :, k]                  # (p2, C)
        k1b_dyn = np.outer(colsum, a) + (BtB @ b2)[:, None] + BtB @ B3.T @ m1.T
        dynamic = (k2_dyn - k1b_dyn).T
        parts = [static, dynamic]
        if pstats.interactions:
            parts.append(_kron_rows(pstats.interacted_features, dynamic))
        out[k] = np.hstack(parts)
    return out


def meat_cluster_static_dynamic(pstats: PanelStatsTable, beta: np.ndarray) -> MeatMatrix:
    """Cluster-robust meat from the static/dynamic split, via per-cluster blocks."""
    S = panel_scores(pstats, beta)
    return MeatMatrix(np.einsum("kci,kcj->kij", S, S),
                      CovarianceSpec.cluster(ClusterStrategy.STATIC_DYNAMIC))


def meat_balanced_panel(pstats: PanelStatsTable, beta: np.ndarray) -> MeatMatrix:
    """Cluster-robust meat for a balanced panel via Kronecker-factored blocks."""
    S = balanced_panel_scores(pstats, beta)
    return MeatMatrix(np.einsum("kci,kcj->kij", S, S),
                      CovarianceSpec.cluster(ClusterStrategy.BALANCED))


def sandwich(br: BreadMatrix, meat: MeatMatrix) -> np.ndarray:
    V = np.einsum("ij,ojk,kl->oil", br.pi, meat.xi, br.pi)
    return 0.5 * (V + np.swapaxes(V, 1, 2))


def group_means_covariance(stats: SuffStatsTable, beta: np.ndarray | None = None) -> np.ndarray:
    """Homoskedastic covariance that weighted regression on group means would report.

    Dispersion comes from between-group residuals only, with ``G - p``
    degrees of freedom. This is the lossy baseline; it generally differs from
    the covariance of the uncompressed regression.
    """
    br = bread(stats)
    if beta is None:
        beta = solve_wls(stats, br)
    means = stats.y_sum / stats.count[:, None]
    resid = means - stats.features @ beta
    df = stats.G - stats.p
    if df <= 0:
        raise errors.NonPositiveDF(f"G - p = {df} <= 0")
    s2 = (stats.count[:, None] * resid ** 2).sum(axis=0) / df
    return s2[:, None, None] * br.pi[None]


# -- orchestration --------------------------------------------------------------

def _check_spec(data: Compressed, spec: CovarianceSpec) -> None:
    if isinstance(data, SuffStatsTable):
        if spec.kind is CovKind.CLUSTER:
            if spec.strategy is not ClusterStrategy.WITHIN:
                raise errors.ValidationError(
                    f"strategy {spec.strategy.value!r} needs a cluster-group or panel table")
            if data.clusters is None:
                raise errors.MissingClusters("table was compressed without the cluster key")
        return
    if isinstance(data, ClusterStatsTable):
        if spec != CovarianceSpec.cluster(ClusterStrategy.BETWEEN):
            raise errors.ValidationError("cluster-group tables support only cluster:between")
        return
    if isinstance(data, PanelStatsTable):
        if spec.strategy not in (ClusterStrategy.STATIC_DYNAMIC, ClusterStrategy.BALANCED):
            raise errors.ValidationError("panel tables support only cluster:static-dynamic or cluster:balanced")
        if spec.strategy is ClusterStrategy.BALANCED and not data.balanced:
            raise errors.NotBalanced("panel is not balanced; use the static-dynamic strategy")
        return
    raise TypeError(f"unsupported representation {type(data).__name__}")


def fit(data: Compressed, spec: CovarianceSpec) -> FitResult:
    """Coefficients and covariance from a compressed representation."""
    _check_spec(data, spec)
    kron = isinstance(data, PanelStatsTable) and spec.strategy is ClusterStrategy.BALANCED
    gram, rhs = normal_equations(data, kronecker=kron)
    br = factorize(gram, tuple(data.feature_names))
    beta = br.solve(rhs)

    sigma2 = None
    lossy = False
    cov = None
    if isinstance(data, SuffStatsTable):
        df = df_residual(data)
        if spec.kind is CovKind.CLUSTER:
            meat = meat_cluster_within(data, beta)
        elif not data.has_y_sq_sum:
            lossy = True
            meat = None
        elif spec.kind is CovKind.HOMOSKEDASTIC:
            meat = meat_homoskedastic(data, beta)
            _, sigma2 = rss_compressed(data, beta)
        else:
            meat = meat_ehw(data, beta)
        G = data.G
        C = data.C if data.clusters is not None else None
    elif isinstance(data, ClusterStatsTable):
        df = float(data.n - data.p)
        meat = meat_cluster_between(data, beta)
        G, C = data.G, data.C
    else:
        df = float(data.n - data.p)
        meat = meat_balanced_panel(data, beta) if kron else meat_cluster_static_dynamic(data, beta)
        G, C = data.C, data.C
    if meat is not None:
        cov = sandwich(br, meat)
    diag = Diagnostics(n=data.n, G=G, C=C, covariance_spec=str(spec), covariance_lossy=lossy)
    return FitResult(beta, cov, sigma2, df, tuple(data.feature_names),
                     tuple(data.outcome_names), diag)
