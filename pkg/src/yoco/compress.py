"""Compression of observation-level data into grouped statistics.

All grouping is exact: two rows fall in the same group only if their
canonical feature encodings (and cluster code, when keyed) are identical.
``-0.0`` is canonicalised to ``0.0``; NaN never reaches this module because
validation rejects it.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import errors
from .model import (
    ClusterGroup,
    ClusterStatsTable,
    ObservationSet,
    PanelStatsTable,
    SuffStatsTable,
    WeightedSums,
    validate,
)


def _canonical(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) + 0.0


def group_rows(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Exact grouping of the rows of a 2-D key array.

    Returns ``(first, inverse, G)``: the index of the first source row of
    each group, the group index of every row, and the number of groups.
    Groups are numbered in lexicographic order of their key rows.
    """
    n = keys.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), 0
    if keys.shape[1] == 0:
        return np.zeros(1, dtype=np.intp), np.zeros(n, dtype=np.intp), 1
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    new = np.empty(n, dtype=bool)
    new[0] = True
    np.any(sk[1:] != sk[:-1], axis=1, out=new[1:])
    gid = np.cumsum(new) - 1
    inverse = np.empty(n, dtype=np.intp)
    inverse[order] = gid
    return order[new], inverse, int(gid[-1]) + 1


def group_sum(inverse: np.ndarray, values: np.ndarray, G: int) -> np.ndarray:
    """Sum rows of ``values`` (1-D or 2-D) into ``G`` groups, in row order."""
    if values.ndim == 1:
        return np.bincount(inverse, weights=values, minlength=G).astype(np.float64)
    out = np.empty((G, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(inverse, weights=values[:, j], minlength=G)
    return out


def _weighted_sums(inverse: np.ndarray, w: np.ndarray, Y: np.ndarray, G: int) -> WeightedSums:
    w2 = w * w
    wc, w2c = w[:, None], w2[:, None]
    Y2 = Y * Y
    return WeightedSums(
        w_sum=group_sum(inverse, w, G),
        wy_sum=group_sum(inverse, Y * wc, G),
        wy_sq_sum=group_sum(inverse, Y2 * wc, G),
        w2_sum=group_sum(inverse, w2, G),
        w2y_sum=group_sum(inverse, Y * w2c, G),
        w2y_sq_sum=group_sum(inverse, Y2 * w2c, G),
    )


def compress_suffstats(obs: ObservationSet, include_cluster_key: bool = False) -> SuffStatsTable:
    """Group rows by feature vector and keep sum, sum of squares and count per outcome.

    With ``include_cluster_key`` the cluster code becomes the leading part of
    the grouping key, so no compressed record mixes clusters. Weighted inputs
    additionally carry sums for both ``w`` and ``w**2``.
    """
    validate(obs)
    X = _canonical(obs.features)
    keys = X
    if include_cluster_key:
        if obs.clusters is None:
            raise errors.MissingClusters("cluster key requested but no cluster labels present")
        keys = np.column_stack([obs.clusters.astype(np.float64), X])
    first, inv, G = group_rows(keys)
    Y = obs.outcomes
    weighted = None
    if obs.weights is not None:
        weighted = _weighted_sums(inv, obs.weights, Y, G)
    return SuffStatsTable(
        X[first], group_sum(inv, Y, G), group_sum(inv, Y * Y, G),
        np.bincount(inv, minlength=G), obs.feature_names, obs.outcome_names,
        clusters=obs.clusters[first] if include_cluster_key else None,
        cluster_labels=obs.cluster_labels if include_cluster_key else (),
        weighted=weighted, weight_kind=obs.weight_kind,
    )


def _check_mergeable(a: SuffStatsTable, b: SuffStatsTable) -> None:
    if a.feature_names != b.feature_names:
        raise errors.SchemaMismatch(f"feature columns differ: {a.feature_names} vs {b.feature_names}")
    if a.outcome_names != b.outcome_names:
        raise errors.SchemaMismatch(f"outcomes differ: {a.outcome_names} vs {b.outcome_names}")
    if (a.weighted is None) != (b.weighted is None) or a.weight_kind != b.weight_kind:
        raise errors.SchemaMismatch("weighted-block presence or weight kind differs")
    if (a.clusters is None) != (b.clusters is None):
        raise errors.SchemaMismatch("cluster-key presence differs")
    if a.has_y_sq_sum != b.has_y_sq_sum or a.source != b.source:
        raise errors.SchemaMismatch(f"cannot merge {a.source!r} with {b.source!r} tables")


def merge_suffstats(a: SuffStatsTable, b: SuffStatsTable) -> SuffStatsTable:
    """Combine two compressed tables as if their source rows had been compressed together."""
    _check_mergeable(a, b)
    X = np.concatenate([a.features, b.features])
    keys = X
    clusters, labels = None, ()
    if a.clusters is not None:
        labels = tuple(sorted(set(a.cluster_labels) | set(b.cluster_labels)))
        pos = {lab: i for i, lab in enumerate(labels)}
        remap_a = np.array([pos[lab] for lab in a.cluster_labels], dtype=np.int64)
        remap_b = np.array([pos[lab] for lab in b.cluster_labels], dtype=np.int64)
        clusters = np.concatenate([
            remap_a[a.clusters] if a.G else np.zeros(0, np.int64),
            remap_b[b.clusters] if b.G else np.zeros(0, np.int64),
        ])
        keys = np.column_stack([clusters.astype(np.float64), X])
    first, inv, G = group_rows(keys)

    def combine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return group_sum(inv, np.concatenate([x, y]), G)

    weighted = None
    if a.weighted is not None:
        wa, wb = a.weighted, b.weighted
        weighted = WeightedSums(*(combine(getattr(wa, f), getattr(wb, f)) for f in (
            "w_sum", "wy_sum", "wy_sq_sum", "w2_sum", "w2y_sum", "w2y_sq_sum")))
    count = np.bincount(inv, weights=np.concatenate([a.count, b.count]).astype(np.float64),
                        minlength=G)
    return SuffStatsTable(
        X[first], combine(a.y_sum, b.y_sum),
        combine(a.y_sq_sum, b.y_sq_sum) if a.has_y_sq_sum else None,
        np.rint(count).astype(np.int64), a.feature_names, a.outcome_names,
        clusters=None if clusters is None else clusters[first], cluster_labels=labels,
        weighted=weighted, weight_kind=a.weight_kind, source=a.source,
    )


def compress_fweights(obs: ObservationSet) -> SuffStatsTable:
    """Collapse rows that are identical in features *and* outcomes.

    Feature rows may repeat across output groups; adding an outcome can only
    split groups further.
    """
    validate(obs)
    X = _canonical(obs.features)
    Y = _canonical(obs.outcomes)
    first, inv, G = group_rows(np.column_stack([X, Y]))
    weighted = None
    if obs.weights is not None:
        weighted = _weighted_sums(inv, obs.weights, Y, G)
    return SuffStatsTable(
        X[first], group_sum(inv, Y, G), group_sum(inv, Y * Y, G),
        np.bincount(inv, minlength=G), obs.feature_names, obs.outcome_names,
        weighted=weighted, weight_kind=obs.weight_kind, source="fweights",
    )


def compress_group_means(obs: ObservationSet) -> SuffStatsTable:
    """Feature-keyed compression that keeps only outcome sums and counts.

    Coefficients remain recoverable; covariances do not.
    """
    validate(obs)
    if obs.weights is not None:
        raise errors.ValidationError("the group-means baseline does not support weights")
    X = _canonical(obs.features)
    first, inv, G = group_rows(X)
    return SuffStatsTable(
        X[first], group_sum(inv, obs.outcomes, G), None, np.bincount(inv, minlength=G),
        obs.feature_names, obs.outcome_names, source="group_means",
    )


def _cluster_sorted(obs: ObservationSet, *, strict_order: bool) -> tuple[np.ndarray, np.ndarray]:
    """Row permutation ordering rows by cluster then ordering key, plus cluster starts."""
    if obs.clusters is None:
        raise errors.MissingClusters("cluster labels are required")
    if obs.weights is not None:
        raise errors.ValidationError("weights are not supported by cluster-group compression")
    codes = obs.clusters
    n = obs.n
    secondary = obs.order if obs.order is not None else np.arange(n, dtype=np.float64)
    if n and np.all(np.diff(codes) >= 0):
        same = np.diff(codes) == 0
        in_order = np.all(np.diff(secondary)[same] >= 0)
    else:
        in_order = n == 0
    perm = np.arange(n) if in_order else np.lexsort((secondary, codes))
    sc = codes[perm]
    starts = np.flatnonzero(np.r_[True, sc[1:] != sc[:-1]]) if n else np.zeros(0, np.intp)
    if strict_order and obs.order is not None and n > 1:
        so = obs.order[perm]
        same = sc[1:] == sc[:-1]
        if np.any(same & (so[1:] == so[:-1])):
            raise errors.RaggedCluster("ordering key has ties within a cluster; block order is ambiguous")
    return perm, starts


def compress_between_cluster(obs: ObservationSet) -> ClusterStatsTable:
    """Group whole clusters whose ordered feature blocks are identical.

    Each group keeps its feature block, the sum of member outcome vectors,
    the sum of their outer products, and the member count.
    """
    validate(obs)
    perm, starts = _cluster_sorted(obs, strict_order=True)
    X = _canonical(obs.features)[perm]
    Y = obs.outcomes[perm]
    bounds = np.r_[starts, obs.n]
    members: dict[bytes, list[int]] = {}
    for c in range(len(starts)):
        lo, hi = bounds[c], bounds[c + 1]
        key = int(hi - lo).to_bytes(8, "little") + X[lo:hi].astype("<f8").tobytes()
        members.setdefault(key, []).append(c)

    groups = []
    for cs in members.values():
        lo, hi = bounds[cs[0]], bounds[cs[0] + 1]
        block = X[lo:hi]
        Ys = np.stack([Y[bounds[c]:bounds[c + 1]] for c in cs])      # (n_g, T, o)
        groups.append(ClusterGroup(
            features=block.copy(),
            y_sum=Ys.sum(axis=0),
            y_outer_sum=np.einsum("cto,cso->ots", Ys, Ys),
            n_clusters=len(cs),
        ))
    groups.sort(key=lambda g: (g.features.shape[0], g.features.ravel().tolist()))
    return ClusterStatsTable(tuple(groups), obs.feature_names, obs.outcome_names, obs.n)


def compress_panel(
    obs: ObservationSet,
    static_cols: Sequence[str],
    dynamic_cols: Sequence[str],
    *,
    interactions: bool = False,
) -> PanelStatsTable:
    """Compress a clustered design split into static and dynamic feature columns.

    Static columns must be constant within every cluster. The balanced case
    (all clusters share one ordered dynamic block) stores that block once plus
    the outcomes reshaped to ``(T, C, o)``.
    """
    validate(obs)
    static_cols, dynamic_cols = tuple(static_cols), tuple(dynamic_cols)
    if set(static_cols) & set(dynamic_cols):
        raise errors.ValidationError("static and dynamic columns overlap")
    if set(static_cols) | set(dynamic_cols) != set(obs.feature_names) or \
            len(static_cols) + len(dynamic_cols) != obs.p:
        raise errors.ValidationError("static and dynamic columns must partition the feature columns")
    perm, starts = _cluster_sorted(obs, strict_order=False)
    sidx = [obs.feature_names.index(c) for c in static_cols]
    didx = [obs.feature_names.index(c) for c in dynamic_cols]
    n, C, o, p2 = obs.n, obs.C, obs.o, len(didx)
    identity = np.array_equal(perm, np.arange(n))
    X = _canonical(obs.features if identity else obs.features[perm])
    Y = obs.outcomes if identity else obs.outcomes[perm]
    codes = obs.clusters if identity else obs.clusters[perm]

    S = X[:, sidx]
    S_first = S[starts]
    bad = S != S_first[codes]
    if bad.any():
        raise errors.NonStaticColumn(static_cols[int(np.flatnonzero(bad.any(axis=0))[0])])
    D = X[:, didx]
    counts = np.bincount(codes, minlength=C)
    y_sum = group_sum(codes, Y, C)

    interacted = tuple(j for j in range(len(sidx))
                       if interactions and C > 0 and np.ptp(S_first[:, j]) > 0)
    T = int(counts[0]) if C else 0
    balanced = C > 0 and bool(np.all(counts == T))
    if balanced:
        Dc = D.reshape(C, T, p2)
        balanced = bool(np.all(Dc == Dc[:1]))
    if balanced:
        block = Dc[0].copy()
        y_matrix = np.ascontiguousarray(Y.reshape(C, T, o).transpose(1, 0, 2))
        return PanelStatsTable(
            static_cols, dynamic_cols, obs.outcome_names, obs.cluster_labels,
            S_first.copy(), y_sum, counts, block.sum(axis=0), _dyn_y_weighted(block, y_matrix),
            block.T @ block, interactions=interactions, balanced=True, T=T,
            dynamic_block=block, y_matrix=y_matrix, interacted=interacted,
        )
    outer = (D[:, :, None] * D[:, None, :]).reshape(n, p2 * p2)
    dy = (D[:, :, None] * Y[:, None, :]).reshape(n, p2 * o)
    return PanelStatsTable(
        static_cols, dynamic_cols, obs.outcome_names, obs.cluster_labels,
        S_first.copy(), y_sum, counts, group_sum(codes, D, C),
        group_sum(codes, dy, C).reshape(C, p2, o),
        group_sum(codes, outer, C).reshape(C, p2, p2), interactions=interactions,
        interacted=interacted,
    )


def _dyn_y_weighted(block: np.ndarray, y_matrix: np.ndarray) -> np.ndarray:
    """Per-cluster dynamic-weighted outcome sums from the shared block, ``(C, p2, o)``."""
    return np.einsum("tj,tco->cjo", block, y_matrix)


def add_interactions(obs: ObservationSet, static_cols: Sequence[str],
                     dynamic_cols: Sequence[str]) -> ObservationSet:
    """Append ``s:d`` product columns at row level, matching :func:`compress_panel`.

    Constant static columns are skipped, as in the compressed panel layout,
    so the expanded design can be fed to any other compression path.
    """
    validate(obs)
    for c in (*static_cols, *dynamic_cols):
        if c not in obs.feature_names:
            raise errors.MissingColumn(f"no feature column {c!r}")
    cols, names = [obs.features], list(obs.feature_names)
    for s in static_cols:
        x = obs.column(s)
        if x.size == 0 or np.ptp(x) == 0:
            continue
        for d in dynamic_cols:
            cols.append((x * obs.column(d))[:, None])
            names.append(f"{s}:{d}")
    return obs.with_features(np.hstack(cols), names)


def bin_features(obs: ObservationSet, columns: Sequence[str], k: int) -> ObservationSet:
    """Replace each listed column by dummies for its nearest-rank quantile bins.

    Edges are the ``j/k`` empirical quantiles (nearest rank), intervals are
    closed on the right so a value equal to an edge lands in the lower bin,
    and repeated edges collapse. The lowest bin is the reference level, so a
    column with ``B`` realised bins becomes ``B - 1`` dummy columns.
    """
    if k < 1:
        raise errors.ValidationError("k must be a positive integer")
    validate(obs)
    cols = list(obs.features.T)
    names = list(obs.feature_names)
    for col in columns:
        if col not in names:
            raise errors.MissingColumn(f"no feature column {col!r}")
        j = names.index(col)
        x = cols[j]
        edges = quantile_edges(x, k)
        bins = np.searchsorted(edges, x, side="left")
        dummies = [(bins == b).astype(np.float64) for b in range(1, len(edges) + 1)]
        cols[j:j + 1] = dummies
        names[j:j + 1] = [f"{col}_bin{b}" for b in range(1, len(edges) + 1)]
    X = np.column_stack(cols) if cols else np.zeros((obs.n, 0))
    return obs.with_features(X, names)


def quantile_edges(x: np.ndarray, k: int) -> np.ndarray:
    """Distinct interior bin edges: nearest-rank ``j/k`` quantiles below the maximum."""
    n = x.shape[0]
    if n == 0 or k == 1:
        return np.zeros(0)
    xs = np.sort(x)
    ranks = [-(-j * n // k) for j in range(1, k)]   # ceil(j n / k), 1-based
    edges = np.unique(xs[np.array(ranks) - 1])
    return edges[edges < xs[-1]]
