"""Seeded synthetic balanced panels for benchmarks and tests."""

from __future__ import annotations

import numpy as np

from .model import ObservationSet, validate

INTERCEPT = 1.0
TIME_EFFECT = 0.1
USER_EFFECT_SD = 1.0
NOISE_SD = 1.0


def static_coefficients(p_static: int) -> list[float]:
    return [0.5 + 0.25 * j for j in range(p_static)]


def gen_panel(n_u: int, T: int, p_static: int = 2, seed: int = 0,
              noise: str = "homoskedastic") -> ObservationSet:
    """Users observed at times ``1..T`` with binary static covariates.

    Outcome is ``1 + s @ beta_s + 0.1 t + u_user + eps``. With
    ``noise="heteroskedastic"`` the noise scale grows with ``t``. Rows are
    ordered user-major then by time; ``order`` holds ``t``. The generating
    coefficients are recorded in ``metadata``.
    """
    if n_u < 1 or T < 1:
        raise ValueError("n_u and T must be >= 1")
    if noise not in ("homoskedastic", "heteroskedastic"):
        raise ValueError(f"unknown noise model {noise!r}")
    rng = np.random.default_rng(seed)
    static = rng.integers(0, 2, size=(n_u, p_static)).astype(np.float64)
    user_effect = rng.normal(0.0, USER_EFFECT_SD, size=n_u)
    n = n_u * T
    t = np.tile(np.arange(1, T + 1, dtype=np.float64), n_u)
    eps = rng.normal(0.0, NOISE_SD, size=n)
    if noise == "heteroskedastic":
        eps *= 0.5 + t / T

    coefs = static_coefficients(p_static)
    X = np.empty((n, p_static + 1))
    X[:, :p_static] = np.repeat(static, T, axis=0)
    X[:, p_static] = t
    signal = INTERCEPT + static @ np.asarray(coefs) + user_effect
    y = np.repeat(signal, T) + TIME_EFFECT * t + eps

    width = len(str(n_u - 1))
    labels = tuple(f"u{i:0{width}d}" for i in range(n_u))
    names = tuple(f"s{j + 1}" for j in range(p_static)) + ("t",)
    meta = {
        "generator": "gen_panel", "n_u": n_u, "T": T, "seed": seed, "noise": noise,
        "coefficients": {"intercept": INTERCEPT,
                         **{f"s{j + 1}": c for j, c in enumerate(coefs)},
                         "t": TIME_EFFECT},
        "user_effect_sd": USER_EFFECT_SD, "noise_sd": NOISE_SD,
    }
    obs = ObservationSet(X, y[:, None], names, ("y",),
                         clusters=np.repeat(np.arange(n_u, dtype=np.int64), T),
                         cluster_labels=labels, order=t, metadata=meta)
    validate(obs)
    return obs
