"""CSV ingestion, compressed-table persistence and deterministic JSON output.

Suffstats files are plain CSV so compressed records can be inspected in any
tool. Layout: feature columns, then ``<outcome>__sum`` and
``<outcome>__sumsq`` per outcome, then ``__count``. Weighted tables add
``__w_sum``, ``<outcome>__w_sum``, ``<outcome>__w_sumsq``, ``__w2_sum``,
``<outcome>__w2_sum``, ``<outcome>__w2_sumsq`` and ``__weight_kind``;
cluster-keyed tables end with ``__cluster``. Floats are written with
``repr`` (shortest round-trip form), so reading a written table back is
bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import errors
from .model import (
    CovarianceSpec,
    ObservationSet,
    SuffStatsTable,
    WeightedSums,
    WeightKind,
    encode_clusters,
    validate,
)

RESERVED = "__"


@dataclass(frozen=True)
class JobConfig:
    """Column roles and options for one CLI job."""

    input: Path
    features: tuple[str, ...]
    outcomes: tuple[str, ...]
    weight_col: str | None = None
    weight_kind: WeightKind | None = None
    cluster_col: str | None = None
    order_col: str | None = None
    static_cols: tuple[str, ...] | None = None
    covariance: CovarianceSpec = field(default_factory=CovarianceSpec.homoskedastic)
    bins: tuple[tuple[str, int], ...] = ()
    output: Path | None = None
    intercept: bool = True
    interactions: bool = False

    def __post_init__(self) -> None:
        if self.weight_kind is not None:
            object.__setattr__(self, "weight_kind", WeightKind.parse(self.weight_kind))
        object.__setattr__(self, "input", Path(self.input))

    def check_columns(self, header: Sequence[str]) -> None:
        if set(self.features) & set(self.outcomes):
            raise errors.ValidationError("feature and outcome columns overlap")
        if len(set(self.features)) != len(self.features) or len(set(self.outcomes)) != len(self.outcomes):
            raise errors.ValidationError("duplicate column in --features or --outcomes")
        for role, col in (("weight", self.weight_col), ("cluster", self.cluster_col)):
            if col is not None and (col in self.features or col in self.outcomes):
                raise errors.ValidationError(f"{role} column {col!r} is also a feature or outcome")
        if self.static_cols is not None and not set(self.static_cols) <= set(self.features):
            raise errors.ValidationError("static columns must be a subset of the features")
        for col, _ in self.bins:
            if col not in self.features:
                raise errors.ValidationError(f"binned column {col!r} is not a feature")
        wanted = [*self.features, *self.outcomes,
                  *(c for c in (self.weight_col, self.cluster_col, self.order_col) if c)]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise errors.MissingColumn("missing columns: " + ", ".join(missing))


def _parse_float(token: str, line: int, column: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise errors.ParseError(line, column, f"not a number: {token!r}") from None
    if not math.isfinite(value):
        raise errors.ParseError(line, column, f"non-finite value: {token!r}")
    return value


def read_csv(path: str | Path, config: JobConfig) -> ObservationSet:
    """Read raw observations; numeric columns become float64, clusters stay strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise errors.ParseError(1, "", "empty file; expected a header row")
        config.check_columns(header)
        pos = {name: i for i, name in enumerate(header)}
        numeric = [*config.features, *config.outcomes,
                   *(c for c in (config.weight_col, config.order_col) if c)]
        idx = [pos[c] for c in numeric]
        cidx = pos[config.cluster_col] if config.cluster_col else None
        values: list[list[float]] = []
        labels: list[str] = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise errors.ParseError(line, "", f"expected {len(header)} fields, got {len(row)}")
            values.append([_parse_float(row[i], line, c) for i, c in zip(idx, numeric)])
            if cidx is not None:
                labels.append(row[cidx])

    data = np.array(values, dtype=np.float64).reshape(len(values), len(numeric))
    p, o = len(config.features), len(config.outcomes)
    X, Y = data[:, :p], data[:, p:p + o]
    rest = p + o
    w = order = None
    if config.weight_col:
        w = data[:, rest].copy()
        rest += 1
    if config.order_col:
        order = data[:, rest].copy()
    codes, clabels = (None, ())
    if config.cluster_col:
        codes, clabels = encode_clusters(labels)
    obs = ObservationSet(
        np.ascontiguousarray(X), np.ascontiguousarray(Y), config.features, config.outcomes,
        w, (config.weight_kind or WeightKind.ANALYTIC) if w is not None else None,
        codes, clabels, order)
    validate(obs)
    if config.intercept:
        obs = obs.with_intercept()
    return obs


def write_csv(obs: ObservationSet, path: str | Path, *, cluster_col: str = "cluster",
              weight_col: str = "weight", order_col: str | None = None) -> None:
    """Write raw observations; the order key is written only if it is not already a feature."""
    header = [*obs.feature_names, *obs.outcome_names]
    cols = [obs.features[:, j] for j in range(obs.p)] + [obs.outcomes[:, j] for j in range(obs.o)]
    if obs.weights is not None:
        header.append(weight_col)
        cols.append(obs.weights)
    if obs.order is not None and order_col and order_col not in header:
        header.append(order_col)
        cols.append(obs.order)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if obs.clusters is not None:
            writer.writerow([*header, cluster_col])
            labels = np.asarray(obs.cluster_labels, dtype=object)[obs.clusters]
        else:
            writer.writerow(header)
            labels = None
        text = [[repr(float(v)) for v in col] for col in cols]
        for i in range(obs.n):
            row = [t[i] for t in text]
            if labels is not None:
                row.append(labels[i])
            writer.writerow(row)


def _suffstats_header(table: SuffStatsTable) -> list[str]:
    head = list(table.feature_names)
    for nm in table.outcome_names:
        head += [f"{nm}__sum", f"{nm}__sumsq"]
    head.append("__count")
    if table.weighted is not None:
        head.append("__w_sum")
        head += [f"{nm}__w_{s}" for nm in table.outcome_names for s in ("sum", "sumsq")]
        head.append("__w2_sum")
        head += [f"{nm}__w2_{s}" for nm in table.outcome_names for s in ("sum", "sumsq")]
        head.append("__weight_kind")
    if table.clusters is not None:
        head.append("__cluster")
    return head


def write_suffstats(table: SuffStatsTable, path: str | Path) -> None:
    if table.source != "suffstats":
        raise errors.ValidationError(f"only sufficient-statistics tables can be written, not {table.source!r}")
    for nm in (*table.feature_names, *table.outcome_names):
        if RESERVED in nm:
            raise errors.ValidationError(f"column name {nm!r} contains reserved '__'")
    cols: list[list[str]] = [[repr(float(v)) for v in table.features[:, j]] for j in range(table.p)]
    for k in range(table.o):
        cols.append([repr(float(v)) for v in table.y_sum[:, k]])
        cols.append([repr(float(v)) for v in table.y_sq_sum[:, k]])
    cols.append([str(int(v)) for v in table.count])
    if table.weighted is not None:
        w = table.weighted
        for total, by_y, by_y2 in ((w.w_sum, w.wy_sum, w.wy_sq_sum),
                                   (w.w2_sum, w.w2y_sum, w.w2y_sq_sum)):
            cols.append([repr(float(v)) for v in total])
            for k in range(table.o):
                cols.append([repr(float(v)) for v in by_y[:, k]])
                cols.append([repr(float(v)) for v in by_y2[:, k]])
        cols.append([table.weight_kind.value] * table.G)
    if table.clusters is not None:
        cols.append([table.cluster_labels[c] for c in table.clusters])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_suffstats_header(table))
        writer.writerows(zip(*cols))


def read_suffstats(path: str | Path) -> SuffStatsTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if not header or "__count" not in header:
        raise errors.SchemaMismatch(f"{path}: not a suffstats file (no __count column)")
    first_stat = next((i for i, h in enumerate(header) if RESERVED in h), len(header))
    features = tuple(header[:first_stat])
    outcomes = tuple(h[:-len("__sum")] for h in header[first_stat:header.index("__count")]
                     if h.endswith("__sum") and not h.startswith(RESERVED))
    weighted = "__w_sum" in header
    clustered = "__cluster" in header
    kinds = {r[header.index("__weight_kind")] for r in rows} if weighted else set()
    probe = SuffStatsTable(
        np.zeros((0, len(features))), np.zeros((0, len(outcomes))), np.zeros((0, len(outcomes))),
        np.zeros(0), features, outcomes, clusters=np.zeros(0) if clustered else None,
        weighted=WeightedSums(*(np.zeros(0),) * 6) if weighted else None,
        weight_kind=WeightKind.ANALYTIC if weighted else None)
    if header != _suffstats_header(probe):
        raise errors.SchemaMismatch(f"{path}: unexpected column layout")
    if len(kinds) > 1:
        raise errors.SchemaMismatch(f"{path}: mixed weight kinds")
    col = {h: i for i, h in enumerate(header)}
    G = len(rows)

    def floats(name: str) -> np.ndarray:
        j = col[name]
        try:
            return np.array([float(r[j]) for r in rows], dtype=np.float64)
        except (ValueError, IndexError):
            raise errors.SchemaMismatch(f"{path}: bad value in column {name!r}") from None

    def per_outcome(suffix: str) -> np.ndarray:
        return np.column_stack([floats(f"{nm}{suffix}") for nm in outcomes]) if outcomes \
            else np.zeros((G, 0))

    X = np.column_stack([floats(f) for f in features]) if features else np.zeros((G, 0))
    wsums = None
    kind = None
    if weighted:
        kind = WeightKind.parse(kinds.pop()) if kinds else WeightKind.ANALYTIC
        wsums = WeightedSums(floats("__w_sum"), per_outcome("__w_sum"), per_outcome("__w_sumsq"),
                             floats("__w2_sum"), per_outcome("__w2_sum"), per_outcome("__w2_sumsq"))
    codes, labels = None, ()
    if clustered:
        codes, labels = encode_clusters([r[col["__cluster"]] for r in rows])
    try:
        count = np.array([int(r[col["__count"]]) for r in rows], dtype=np.int64)
    except ValueError:
        raise errors.SchemaMismatch(f"{path}: __count must hold integers") from None
    return SuffStatsTable(X.reshape(G, len(features)), per_outcome("__sum"), per_outcome("__sumsq"),
                          count, features, outcomes, clusters=codes, cluster_labels=labels,
                          weighted=wsums, weight_kind=kind)


def _json(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return {True: "true", False: "false", None: "null"}[value]
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        return "{" + ", ".join(f"{_json(str(k))}: {_json(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def dumps_json(obj: Any) -> str:
    """Deterministic JSON: insertion key order, floats at 17 significant digits."""
    return _json(obj)
