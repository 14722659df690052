"""Timing harness comparing compressed estimation with the row-level oracle."""

from __future__ import annotations

import statistics
import time
import tracemalloc
from typing import Any, Callable

import numpy as np

from .compress import compress_panel, compress_suffstats
from .estimate import factorize, meat_balanced_panel, meat_ehw, meat_homoskedastic, normal_equations, sandwich
from .estimate import fit as fit_compressed
from .model import ClusterStrategy, CovarianceSpec, CovKind
from .oracle import oracle_fit
from .synth import gen_panel


def _timed(fn: Callable[[], Any], reps: int) -> tuple[list[float], Any]:
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return times, out


def _summary(times: list[float]) -> dict[str, float]:
    out = {"median": statistics.median(times)}
    if len(times) > 1:
        out.update(min=min(times), max=max(times), stdev=statistics.stdev(times))
    return out


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.max(np.abs(b))) or 1.0
    return float(np.max(np.abs(a - b)) / scale)


def run_bench(nu: int, T: int, reps: int = 5, cov: str = "hc", p_static: int = 2,
              seed: int = 0, noise: str = "homoskedastic") -> dict[str, Any]:
    """Time compression, compressed fit, the bare estimator stage and the oracle.

    ``cov`` is ``ols``, ``hc`` or ``cluster``; the cluster case uses the
    balanced-panel path with static columns ``intercept, s*`` and dynamic
    column ``t``.
    """
    obs = gen_panel(nu, T, p_static, seed, noise).with_intercept()
    if cov == "cluster":
        spec = CovarianceSpec.cluster(ClusterStrategy.BALANCED)
        static = ("intercept",) + tuple(f"s{j + 1}" for j in range(p_static))

        def compress():
            return compress_panel(obs, static, ("t",))

        def estimator(data):
            gram, rhs = normal_equations(data, kronecker=True)
            br = factorize(gram, data.feature_names)
            beta = br.solve(rhs)
            return beta, sandwich(br, meat_balanced_panel(data, beta))
    else:
        spec = CovarianceSpec.parse(cov)

        def compress():
            return compress_suffstats(obs)

        def estimator(data):
            gram, rhs = normal_equations(data)
            br = factorize(gram, data.feature_names)
            beta = br.solve(rhs)
            meat = meat_homoskedastic(data, beta) if spec.kind is CovKind.HOMOSKEDASTIC \
                else meat_ehw(data, beta)
            return beta, sandwich(br, meat)

    t_compress, data = _timed(compress, reps)
    t_fit, res = _timed(lambda: fit_compressed(data, spec), reps)
    t_est, _ = _timed(lambda: estimator(data), reps)
    t_oracle, (ob, ov) = _timed(lambda: oracle_fit(obs, spec), reps)

    tracemalloc.start()
    fit_compressed(data, spec)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    compressed_bytes = data.nbytes if hasattr(data, "nbytes") else int(sum(
        a.nbytes for a in (data.features, *data.stat_arrays().values())))

    m_oracle = statistics.median(t_oracle)
    m_fit = statistics.median(t_fit)
    m_est = statistics.median(t_est)
    m_comp = statistics.median(t_compress)
    return {
        "n": obs.n, "G": res.diagnostics.G, "C": nu, "T": T, "p": obs.p,
        "covariance_spec": str(spec), "reps": reps,
        "compress_ms": _summary(t_compress),
        "fit_ms": _summary(t_fit),
        "estimator_ms": _summary(t_est),
        "oracle_ms": _summary(t_oracle),
        "speedup_fit": m_oracle / m_fit,
        "speedup_estimator": m_oracle / m_est,
        "speedup_with_compression": m_oracle / (m_comp + m_fit),
        "peak_fit_bytes": int(peak),
        "compressed_bytes": compressed_bytes,
        "max_rel_diff_beta": _rel(res.beta, ob),
        "max_rel_diff_cov": _rel(res.covariance, ov),
    }
