"""Command-line interface: ``compress``, ``fit``, ``summarize``, ``bench``, ``gen-panel``.

Exit codes: 0 on success, 2 on validation errors (bad flags, missing
columns, unparsable input), 3 on numerical errors (rank deficiency,
non-convergence).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import errors
from .bench import run_bench
from .compress import (
    add_interactions,
    bin_features,
    compress_between_cluster,
    compress_panel,
    compress_suffstats,
)
from .estimate import fit
from .io import JobConfig, dumps_json, read_csv, read_suffstats, write_csv, write_suffstats
from .logistic import compress_logistic, fit_logistic
from .model import ClusterStrategy, CovarianceSpec, CovKind, FitResult, ObservationSet, SuffStatsTable, WeightKind
from .synth import gen_panel


def _csv_list(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _bin_spec(text: str) -> tuple[str, int]:
    col, sep, k = text.rpartition(":")
    if not sep or not col:
        raise argparse.ArgumentTypeError(f"expected col:k, got {text!r}")
    try:
        kk = int(k)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bin count must be an integer, got {k!r}") from None
    if kk < 1:
        raise argparse.ArgumentTypeError("bin count must be >= 1")
    return col, kk


def _add_job_args(p: argparse.ArgumentParser, *, fitting: bool) -> None:
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--features", default="", help="comma-separated feature columns")
    p.add_argument("--outcomes", default="", help="comma-separated outcome columns")
    p.add_argument("--weights", help="weight column")
    p.add_argument("--weight-kind", choices=["freq", "analytic"], default="analytic")
    p.add_argument("--cluster-col")
    p.add_argument("--order-col", help="within-cluster ordering key (e.g. time)")
    p.add_argument("--bin", action="append", type=_bin_spec, default=[], metavar="COL:K")
    p.add_argument("--no-intercept", action="store_true")
    if fitting:
        p.add_argument("--cov", choices=[k.value for k in CovKind], default="ols")
        p.add_argument("--cluster-strategy", choices=[s.value for s in ClusterStrategy],
                       default="within")
        p.add_argument("--static-cols", help="static columns for panel strategies")
        p.add_argument("--interact", action="store_true",
                       help="add static x dynamic interactions (panel strategies)")
        p.add_argument("--precompressed", action="store_true",
                       help="input is a suffstats file written by `compress`")
        p.add_argument("--model", choices=["linear", "logistic"], default="linear")
        p.add_argument("--timing", action="store_true", help="report wall-clock timing_ms")


def _config(args: argparse.Namespace) -> JobConfig:
    spec = CovarianceSpec.homoskedastic()
    if getattr(args, "cov", None):
        spec = CovarianceSpec.parse(args.cov, args.cluster_strategy)
    static = _csv_list(getattr(args, "static_cols", None)) or None
    return JobConfig(
        input=args.input,
        features=_csv_list(args.features),
        outcomes=_csv_list(args.outcomes),
        weight_col=args.weights,
        weight_kind=WeightKind.parse(args.weight_kind) if args.weights else None,
        cluster_col=args.cluster_col,
        order_col=args.order_col,
        static_cols=static,
        covariance=spec,
        bins=tuple(args.bin),
        output=getattr(args, "output", None),
        intercept=not args.no_intercept,
        interactions=getattr(args, "interact", False),
    )


def _load(config: JobConfig) -> ObservationSet:
    if not config.outcomes:
        raise errors.ValidationError("--outcomes is required")
    obs = read_csv(config.input, config)
    for col, k in config.bins:
        obs = bin_features(obs, [col], k)
    return obs


def _compress_for(obs: ObservationSet, config: JobConfig):
    # Keying on the cluster column whenever one is given keeps `fit` on raw
    # data and `fit --precompressed` on a `compress` output bit-identical.
    spec = config.covariance
    keyed = obs.clusters is not None
    if spec.kind is not CovKind.CLUSTER:
        return compress_suffstats(obs, include_cluster_key=keyed)
    if not keyed:
        raise errors.MissingClusters("--cov cluster requires --cluster-col")
    static = dynamic = None
    if config.static_cols is not None:
        static = tuple(c for c in obs.feature_names
                       if c in config.static_cols or c == "intercept")
        dynamic = tuple(c for c in obs.feature_names if c not in static)
    elif spec.strategy in (ClusterStrategy.STATIC_DYNAMIC, ClusterStrategy.BALANCED):
        raise errors.ValidationError(f"--cluster-strategy {spec.strategy.value} requires --static-cols")
    elif config.interactions:
        raise errors.ValidationError("--interact requires --static-cols")
    if spec.strategy in (ClusterStrategy.STATIC_DYNAMIC, ClusterStrategy.BALANCED):
        return compress_panel(obs, static, dynamic, interactions=config.interactions)
    if config.interactions:
        obs = add_interactions(obs, static, dynamic)
    if spec.strategy is ClusterStrategy.WITHIN:
        return compress_suffstats(obs, include_cluster_key=True)
    return compress_between_cluster(obs)


def fit_document(res: FitResult, timing_ms: float | None = None) -> dict[str, Any]:
    names = res.feature_names
    se = res.std_errors
    doc: dict[str, Any] = {
        "coefficients": {o: dict(zip(names, res.beta[:, k].tolist()))
                         for k, o in enumerate(res.outcome_names)},
        "std_errors": None if se is None else {
            o: dict(zip(names, se[:, k].tolist())) for k, o in enumerate(res.outcome_names)},
        "covariance": None if res.covariance is None else {
            o: res.covariance[k].ravel().tolist() for k, o in enumerate(res.outcome_names)},
        "sigma2": None if res.sigma2 is None else dict(zip(res.outcome_names, res.sigma2.tolist())),
        "df_residual": res.df_residual,
        "n": res.diagnostics.n,
        "G": res.diagnostics.G,
        "C": res.diagnostics.C,
        "compression_ratio": res.diagnostics.compression_ratio,
        "covariance_spec": res.diagnostics.covariance_spec,
        "covariance_lossy": res.diagnostics.covariance_lossy,
    }
    if res.diagnostics.converged is not None:
        doc["converged"] = res.diagnostics.converged
        doc["iterations"] = res.diagnostics.iterations
    doc["timing_ms"] = timing_ms
    return doc


def cmd_fit(args: argparse.Namespace) -> dict[str, Any]:
    config = _config(args)
    t0 = time.perf_counter()
    if args.precompressed:
        if config.bins:
            raise errors.ValidationError("--bin cannot be applied to a precompressed table")
        if args.model != "linear":
            raise errors.ValidationError("--precompressed supports only the linear model")
        data = read_suffstats(config.input)
        spec = config.covariance
        if spec.kind is CovKind.CLUSTER and spec.strategy is not ClusterStrategy.WITHIN:
            raise errors.ValidationError("precompressed tables support only the within-cluster strategy")
        wanted = (("intercept",) if config.intercept else ()) + config.features
        if config.features and wanted != data.feature_names:
            raise errors.ValidationError(
                f"--features do not match the table's feature columns {data.feature_names}")
        if config.outcomes:
            missing = set(config.outcomes) - set(data.outcome_names)
            if missing:
                raise errors.MissingColumn("outcomes not in table: " + ", ".join(sorted(missing)))
            data = _select_table_outcomes(data, config.outcomes)
        res = fit(data, spec)
    else:
        obs = _load(config)
        if args.model == "logistic":
            if config.covariance.kind is not CovKind.HOMOSKEDASTIC:
                raise errors.ValidationError("the logistic model reports only its information-matrix covariance")
            res = fit_logistic(compress_logistic(obs))
        else:
            res = fit(_compress_for(obs, config), config.covariance)
    elapsed = (time.perf_counter() - t0) * 1e3 if args.timing else None
    return fit_document(res, elapsed)


def _select_table_outcomes(table: SuffStatsTable, names: Sequence[str]) -> SuffStatsTable:
    if tuple(names) == table.outcome_names:
        return table
    idx = [table.outcome_names.index(n) for n in names]
    w = table.weighted
    if w is not None:
        from .model import WeightedSums
        w = WeightedSums(w.w_sum, w.wy_sum[:, idx], w.wy_sq_sum[:, idx],
                         w.w2_sum, w.w2y_sum[:, idx], w.w2y_sq_sum[:, idx])
    return SuffStatsTable(table.features, table.y_sum[:, idx], table.y_sq_sum[:, idx], table.count,
                          table.feature_names, tuple(names), clusters=table.clusters,
                          cluster_labels=table.cluster_labels, weighted=w,
                          weight_kind=table.weight_kind)


def cmd_compress(args: argparse.Namespace) -> dict[str, Any]:
    config = _config(args)
    obs = _load(config)
    table = compress_suffstats(obs, include_cluster_key=obs.clusters is not None)
    write_suffstats(table, args.output)
    return {"output": str(args.output), "n": table.n, "G": table.G,
            "compression_ratio": table.n / table.G if table.G else None}


def summarize_table(table: SuffStatsTable) -> dict[str, Any]:
    """Weighted feature means and outcome moments from a compressed table."""
    n = table.n
    cnt = table.count.astype(np.float64)
    feats = {nm: float(cnt @ table.features[:, j] / n) if n else None
             for j, nm in enumerate(table.feature_names)}
    outs = {}
    for k, nm in enumerate(table.outcome_names):
        s, ss = table.y_sum[:, k].sum(), table.y_sq_sum[:, k].sum()
        outs[nm] = {"mean": s / n if n else None,
                    "variance": (ss - s * s / n) / (n - 1) if n > 1 else None}
    return {"n": n, "G": table.G, "compression_ratio": n / table.G if table.G else None,
            "feature_means": feats, "outcomes": outs}


def cmd_summarize(args: argparse.Namespace) -> dict[str, Any]:
    if args.precompressed:
        table = read_suffstats(args.input)
    else:
        table = compress_suffstats(_load(_config(args)))
    return summarize_table(table)


def cmd_bench(args: argparse.Namespace) -> dict[str, Any]:
    return run_bench(args.nu, args.t, reps=args.reps, cov=args.cov, p_static=args.p_static,
                     seed=args.seed, noise=args.noise)


def cmd_gen_panel(args: argparse.Namespace) -> dict[str, Any]:
    obs = gen_panel(args.nu, args.t, args.p_static, args.seed, args.noise)
    write_csv(obs, args.output, cluster_col="user")
    return {"output": str(args.output), **obs.metadata}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yoco", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a linear or logistic model; JSON on stdout")
    _add_job_args(p, fitting=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compress", help="write a sufficient-statistics table")
    _add_job_args(p, fitting=False)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("summarize", help="means and counts from raw or compressed data")
    _add_job_args(p, fitting=False)
    p.add_argument("--precompressed", action="store_true")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("bench", help="time compressed vs uncompressed estimation")
    p.add_argument("--nu", type=int, default=10_000)
    p.add_argument("--t", type=int, default=10)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--cov", choices=["ols", "hc", "cluster"], default="hc")
    p.add_argument("--p-static", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=["homoskedastic", "heteroskedastic"], default="homoskedastic")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-panel", help="write a seeded synthetic balanced panel CSV")
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--p-static", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", choices=["homoskedastic", "heteroskedastic"], default="homoskedastic")
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_gen_panel)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = args.func(args)
    except errors.NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (errors.ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(dumps_json(doc) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
