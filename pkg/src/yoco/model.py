"""Shared data types for raw and compressed datasets and fit results."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

from . import errors


class WeightKind(str, Enum):
    FREQUENCY = "frequency"
    ANALYTIC = "analytic"

    @classmethod
    def parse(cls, value: "str | WeightKind") -> "WeightKind":
        if isinstance(value, cls):
            return value
        aliases = {"freq": cls.FREQUENCY, "fweight": cls.FREQUENCY,
                   "aweight": cls.ANALYTIC}
        text = str(value).lower()
        if text in aliases:
            return aliases[text]
        try:
            return cls(text)
        except ValueError:
            raise errors.ValidationError(f"unknown weight kind {value!r}") from None


def _frozen(a: np.ndarray | None) -> np.ndarray | None:
    if a is not None:
        a.flags.writeable = False
    return a


def _as_2d(a: Any, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise errors.DimensionMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def encode_clusters(labels: Sequence[Any]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Map opaque cluster labels to dense codes ``0..C-1`` in sorted label order."""
    text = np.asarray([str(v) for v in labels], dtype=object)
    if text.size == 0:
        return np.zeros(0, dtype=np.int64), ()
    uniq, codes = np.unique(text.astype(str), return_inverse=True)
    return codes.astype(np.int64), tuple(str(u) for u in uniq)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Uncompressed rows.

    ``clusters`` holds dense integer codes into ``cluster_labels``. ``order``
    is an optional within-cluster ordering key (e.g. a time index) used by the
    between-cluster and panel compressors.
    """

    features: np.ndarray
    outcomes: np.ndarray
    feature_names: tuple[str, ...]
    outcome_names: tuple[str, ...]
    weights: np.ndarray | None = None
    weight_kind: WeightKind | None = None
    clusters: np.ndarray | None = None
    cluster_labels: tuple[str, ...] = ()
    order: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_arrays(
        cls,
        features: Any,
        outcomes: Any,
        feature_names: Iterable[str] | None = None,
        outcome_names: Iterable[str] | None = None,
        *,
        weights: Any = None,
        weight_kind: "WeightKind | str | None" = None,
        clusters: Sequence[Any] | None = None,
        order: Any = None,
        metadata: dict[str, Any] | None = None,
    ) -> "ObservationSet":
        """Build and validate an observation set from array-likes.

        Cluster labels may be any hashable values; they are stringified and
        mapped to dense codes.
        """
        X = _as_2d(features, "features")
        Y = _as_2d(outcomes, "outcomes")
        fnames = tuple(feature_names) if feature_names is not None else tuple(
            f"x{j}" for j in range(X.shape[1]))
        onames = tuple(outcome_names) if outcome_names is not None else tuple(
            f"y{j}" for j in range(Y.shape[1]))
        w = None if weights is None else np.array(weights, dtype=np.float64).ravel()
        kind = None
        if w is not None:
            kind = WeightKind.parse(weight_kind or WeightKind.ANALYTIC)
        codes, labels = (None, ())
        if clusters is not None:
            codes, labels = encode_clusters(clusters)
        ordr = None if order is None else np.array(order, dtype=np.float64).ravel()
        obs = cls(X, Y, fnames, onames, w, kind, codes, labels, ordr, dict(metadata or {}))
        validate(obs)
        return obs

    def __post_init__(self) -> None:
        for a in (self.features, self.outcomes, self.weights, self.clusters, self.order):
            _frozen(a)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    @property
    def o(self) -> int:
        return int(self.outcomes.shape[1])

    @property
    def C(self) -> int:
        return len(self.cluster_labels)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.feature_names.index(name)]
        except ValueError:
            raise errors.MissingColumn(f"no feature column {name!r}") from None

    def with_features(self, features: np.ndarray, names: Sequence[str]) -> "ObservationSet":
        return ObservationSet(
            np.array(features, dtype=np.float64), self.outcomes, tuple(names),
            self.outcome_names, self.weights, self.weight_kind, self.clusters,
            self.cluster_labels, self.order, dict(self.metadata))

    def with_intercept(self, name: str = "intercept") -> "ObservationSet":
        """Prepend a column of ones."""
        if name in self.feature_names:
            return self
        X = np.empty((self.n, self.p + 1))
        X[:, 0] = 1.0
        X[:, 1:] = self.features
        return self.with_features(X, (name,) + self.feature_names)

    def select_outcomes(self, names: Sequence[str]) -> "ObservationSet":
        idx = [self.outcome_names.index(nm) for nm in names]
        return ObservationSet(
            self.features, self.outcomes[:, idx], self.feature_names, tuple(names),
            self.weights, self.weight_kind, self.clusters, self.cluster_labels,
            self.order, dict(self.metadata))

    def take(self, rows: np.ndarray) -> "ObservationSet":
        """Row subset; cluster codes are re-densified."""
        rows = np.asarray(rows)
        codes, labels = self.clusters, self.cluster_labels
        if codes is not None:
            sub = codes[rows]
            used, dense = np.unique(sub, return_inverse=True)
            codes = dense.astype(np.int64)
            labels = tuple(self.cluster_labels[i] for i in used)
        return ObservationSet(
            self.features[rows], self.outcomes[rows], self.feature_names,
            self.outcome_names,
            None if self.weights is None else self.weights[rows], self.weight_kind,
            codes, labels, None if self.order is None else self.order[rows],
            dict(self.metadata))


def validate(obs: ObservationSet) -> None:
    """Raise if any ObservationSet invariant is violated."""
    X, Y = obs.features, obs.outcomes
    if X.ndim != 2 or Y.ndim != 2:
        raise errors.DimensionMismatch("features and outcomes must be 2-dimensional")
    n = X.shape[0]
    if Y.shape[0] != n:
        raise errors.DimensionMismatch(
            f"features have {n} rows but outcomes have {Y.shape[0]}")
    if len(obs.feature_names) != X.shape[1]:
        raise errors.DimensionMismatch("feature_names length does not match feature columns")
    if len(obs.outcome_names) != Y.shape[1]:
        raise errors.DimensionMismatch("outcome_names length does not match outcome columns")
    if len(set(obs.feature_names)) != len(obs.feature_names):
        raise errors.ValidationError("duplicate feature names")
    if len(set(obs.outcome_names)) != len(obs.outcome_names):
        raise errors.ValidationError("duplicate outcome names")
    if not np.isfinite(X).all() or not np.isfinite(Y).all():
        raise errors.MissingValue("features and outcomes must be finite (no NA)")
    if obs.weights is not None:
        w = obs.weights
        if w.shape != (n,):
            raise errors.DimensionMismatch(f"weights must have shape ({n},), got {w.shape}")
        if not np.isfinite(w).all():
            raise errors.MissingValue("weights must be finite")
        if (w <= 0).any():
            raise errors.NonPositiveWeight("all weights must be > 0")
        if obs.weight_kind is WeightKind.FREQUENCY and not np.array_equal(w, np.round(w)):
            raise errors.NonIntegerFrequencyWeight("frequency weights must be integers")
        if obs.weight_kind is None:
            raise errors.ValidationError("weights given without a weight kind")
    if obs.clusters is not None:
        c = obs.clusters
        if c.shape != (n,):
            raise errors.DimensionMismatch(f"clusters must have shape ({n},), got {c.shape}")
        if n and (c.min() < 0 or c.max() >= len(obs.cluster_labels)):
            raise errors.DimensionMismatch("cluster codes out of range of cluster_labels")
    if obs.order is not None:
        if obs.order.shape != (n,):
            raise errors.DimensionMismatch(f"order must have shape ({n},)")
        if not np.isfinite(obs.order).all():
            raise errors.MissingValue("order key must be finite")


@dataclass(frozen=True, eq=False)
class WeightedSums:
    """Per-group weighted statistics for weights ``w`` and ``w**2``."""

    w_sum: np.ndarray        # (G,)
    wy_sum: np.ndarray       # (G, o)
    wy_sq_sum: np.ndarray    # (G, o)
    w2_sum: np.ndarray       # (G,)
    w2y_sum: np.ndarray      # (G, o)
    w2y_sq_sum: np.ndarray   # (G, o)

    def __post_init__(self) -> None:
        for a in (self.w_sum, self.wy_sum, self.wy_sq_sum,
                  self.w2_sum, self.w2y_sum, self.w2y_sq_sum):
            _frozen(a)

    def take(self, rows: np.ndarray) -> "WeightedSums":
        return WeightedSums(*(np.asarray(a)[rows] for a in (
            self.w_sum, self.wy_sum, self.wy_sq_sum,
            self.w2_sum, self.w2y_sum, self.w2y_sq_sum)))


class SuffStatsTable:
    """Compressed records: unique feature rows with per-group sums.

    ``y_sq_sum`` is absent for tables built by the group-means compressor;
    reading it then raises :class:`~yoco.errors.UnavailableStatistic`.
    """

    def __init__(
        self,
        features: np.ndarray,
        y_sum: np.ndarray,
        y_sq_sum: np.ndarray | None,
        count: np.ndarray,
        feature_names: Sequence[str],
        outcome_names: Sequence[str],
        *,
        clusters: np.ndarray | None = None,
        cluster_labels: Sequence[str] = (),
        weighted: WeightedSums | None = None,
        weight_kind: WeightKind | None = None,
        source: str = "suffstats",
    ):
        self.features = _frozen(np.asarray(features, dtype=np.float64))
        self.y_sum = _frozen(np.asarray(y_sum, dtype=np.float64))
        self._y_sq_sum = _frozen(None if y_sq_sum is None else np.asarray(y_sq_sum, dtype=np.float64))
        self.count = _frozen(np.asarray(count, dtype=np.int64))
        self.feature_names = tuple(feature_names)
        self.outcome_names = tuple(outcome_names)
        self.clusters = _frozen(None if clusters is None else np.asarray(clusters, dtype=np.int64))
        self.cluster_labels = tuple(cluster_labels)
        self.weighted = weighted
        self.weight_kind = weight_kind
        self.source = source
        if (weighted is None) != (weight_kind is None):
            raise errors.SchemaMismatch("weighted blocks and weight kind must be given together")

    @property
    def y_sq_sum(self) -> np.ndarray:
        if self._y_sq_sum is None:
            raise errors.UnavailableStatistic(
                "sum of squared outcomes was not retained (group-means table)")
        return self._y_sq_sum

    @property
    def has_y_sq_sum(self) -> bool:
        return self._y_sq_sum is not None

    @property
    def G(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    @property
    def o(self) -> int:
        return int(self.y_sum.shape[1])

    @property
    def n(self) -> int:
        return int(self.count.sum())

    @property
    def C(self) -> int:
        return len(self.cluster_labels)

    def __repr__(self) -> str:
        extra = ", clustered" if self.clusters is not None else ""
        if self.weighted is not None:
            extra += f", weights={self.weight_kind.value}"
        return (f"SuffStatsTable(G={self.G}, p={self.p}, o={self.o}, n={self.n}"
                f"{extra}, source={self.source!r})")

    def stat_arrays(self) -> dict[str, np.ndarray]:
        """Every per-group statistic keyed by name (features excluded)."""
        out = {"y_sum": self.y_sum, "count": self.count}
        if self._y_sq_sum is not None:
            out["y_sq_sum"] = self._y_sq_sum
        if self.weighted is not None:
            w = self.weighted
            out.update(w_sum=w.w_sum, wy_sum=w.wy_sum, wy_sq_sum=w.wy_sq_sum,
                       w2_sum=w.w2_sum, w2y_sum=w.w2y_sum, w2y_sq_sum=w.w2y_sq_sum)
        return out


@dataclass(frozen=True, eq=False)
class ClusterGroup:
    """All clusters sharing one ordered feature block."""

    features: np.ndarray      # (T_g, p)
    y_sum: np.ndarray         # (T_g, o)
    y_outer_sum: np.ndarray   # (o, T_g, T_g)
    n_clusters: int

    def __post_init__(self) -> None:
        for a in (self.features, self.y_sum, self.y_outer_sum):
            _frozen(a)


@dataclass(frozen=True, eq=False)
class ClusterStatsTable:
    groups: tuple[ClusterGroup, ...]
    feature_names: tuple[str, ...]
    outcome_names: tuple[str, ...]
    n: int

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def C(self) -> int:
        return int(sum(g.n_clusters for g in self.groups))

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @property
    def o(self) -> int:
        return len(self.outcome_names)


@dataclass(frozen=True, eq=False)
class PanelStatsTable:
    """Static/dynamic split of a clustered design.

    Static features are constant within each cluster and stored once per
    cluster; dynamic features enter only through per-cluster column sums,
    outcome-weighted sums and Gram blocks. When every cluster shares the same
    ordered dynamic block the table is *balanced*: the block is stored once
    together with the outcomes reshaped to ``(T, C, o)``.

    With ``interactions`` set, the model also contains the product of every
    interacted static column (``interacted`` indexes them; constant columns
    such as the intercept are left out since their products duplicate the
    dynamic columns) with every dynamic column, ordered static-major
    (``s0:d0, s0:d1, ..., s1:d0, ...``).
    """

    static_names: tuple[str, ...]
    dynamic_names: tuple[str, ...]
    outcome_names: tuple[str, ...]
    cluster_labels: tuple[str, ...]
    static_features: np.ndarray            # (C, p1)
    y_sum: np.ndarray                      # (C, o)
    counts: np.ndarray                     # (C,)
    col_sums: np.ndarray                   # (C, p2), or (p2,) when balanced
    y_weighted: np.ndarray                 # (C, p2, o)
    gram_blocks: np.ndarray                # (C, p2, p2), or (p2, p2) when balanced
    interactions: bool = False
    balanced: bool = False
    T: int | None = None
    dynamic_block: np.ndarray | None = None  # (T, p2), balanced only
    y_matrix: np.ndarray | None = None       # (T, C, o), balanced only
    interacted: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for a in (self.static_features, self.y_sum, self.counts, self.col_sums,
                  self.y_weighted, self.gram_blocks, self.dynamic_block, self.y_matrix):
            _frozen(a)

    @property
    def C(self) -> int:
        return int(self.static_features.shape[0])

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def p1(self) -> int:
        return len(self.static_names)

    @property
    def p2(self) -> int:
        return len(self.dynamic_names)

    @property
    def o(self) -> int:
        return len(self.outcome_names)

    @property
    def interaction_names(self) -> tuple[str, ...]:
        if not self.interactions:
            return ()
        return tuple(f"{self.static_names[i]}:{d}" for i in self.interacted for d in self.dynamic_names)

    @property
    def interacted_features(self) -> np.ndarray:
        """Static columns entering the interaction block, ``(C, len(interacted))``."""
        return self.static_features[:, list(self.interacted)]

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.static_names + self.dynamic_names + self.interaction_names

    @property
    def p(self) -> int:
        return len(self.feature_names)

    def cluster_col_sums(self) -> np.ndarray:
        """Per-cluster column sums of the dynamic block, shape ``(C, p2)``."""
        if self.balanced:
            return np.broadcast_to(self.col_sums, (self.C, self.p2))
        return self.col_sums

    def cluster_grams(self) -> np.ndarray:
        """Per-cluster dynamic Gram blocks, shape ``(C, p2, p2)``."""
        if self.balanced:
            return np.broadcast_to(self.gram_blocks, (self.C, self.p2, self.p2))
        return self.gram_blocks

    @property
    def nbytes(self) -> int:
        arrays = (self.static_features, self.y_sum, self.counts, self.col_sums,
                  self.y_weighted, self.gram_blocks, self.dynamic_block, self.y_matrix)
        return int(sum(a.nbytes for a in arrays if a is not None))


class ClusterStrategy(str, Enum):
    WITHIN = "within"
    BETWEEN = "between"
    STATIC_DYNAMIC = "static-dynamic"
    BALANCED = "balanced"


class CovKind(str, Enum):
    HOMOSKEDASTIC = "ols"
    HC = "hc"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class CovarianceSpec:
    kind: CovKind
    strategy: ClusterStrategy | None = None

    def __post_init__(self) -> None:
        if (self.kind is CovKind.CLUSTER) != (self.strategy is not None):
            raise errors.ValidationError("a cluster strategy is required for, and only for, cluster covariances")

    @classmethod
    def homoskedastic(cls) -> "CovarianceSpec":
        return cls(CovKind.HOMOSKEDASTIC)

    @classmethod
    def hc(cls) -> "CovarianceSpec":
        return cls(CovKind.HC)

    @classmethod
    def cluster(cls, strategy: "ClusterStrategy | str" = ClusterStrategy.WITHIN) -> "CovarianceSpec":
        return cls(CovKind.CLUSTER, ClusterStrategy(strategy))

    @classmethod
    def parse(cls, kind: str, strategy: str | None = None) -> "CovarianceSpec":
        try:
            k = CovKind(kind)
            if k is CovKind.CLUSTER:
                return cls.cluster(strategy or ClusterStrategy.WITHIN)
        except ValueError as exc:
            if isinstance(exc, errors.ValidationError):
                raise
            raise errors.ValidationError(str(exc)) from None
        return cls(k)

    def __str__(self) -> str:
        if self.strategy is None:
            return self.kind.value
        return f"{self.kind.value}:{self.strategy.value}"


@dataclass(frozen=True)
class Diagnostics:
    n: int
    G: int
    C: int | None
    covariance_spec: str
    converged: bool | None = None
    iterations: int | None = None
    covariance_lossy: bool = False

    @property
    def compression_ratio(self) -> float:
        return self.n / self.G if self.G else float("nan")


@dataclass(frozen=True, eq=False)
class FitResult:
    """Coefficients ``(p, o)`` and one ``(p, p)`` covariance per outcome.

    ``covariance`` is None when the input representation cannot support the
    requested covariance losslessly (group-means tables).
    """

    beta: np.ndarray
    covariance: np.ndarray | None
    sigma2: np.ndarray | None
    df_residual: float
    feature_names: tuple[str, ...]
    outcome_names: tuple[str, ...]
    diagnostics: Diagnostics

    @property
    def std_errors(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        diag = np.diagonal(self.covariance, axis1=1, axis2=2).T
        return np.sqrt(np.clip(diag, 0.0, None))

    def coef(self, outcome: str | None = None) -> dict[str, float]:
        j = 0 if outcome is None else self.outcome_names.index(outcome)
        return {nm: float(v) for nm, v in zip(self.feature_names, self.beta[:, j])}
