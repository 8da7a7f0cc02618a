"""Simulators for the stationary signal and noise processes.

* Cox-Ingersoll-Ross diffusion, sampled exactly through its noncentral
  chi-square transition and started from the gamma invariant law.
* An m-dependent recycling process with an arbitrary marginal (Weibull by
  default).
* i.i.d. or m-dependent multiplicative noise, and the contamination
  ``Y = X * U``.

Every generator takes a ``seed`` which may be an int, a
:class:`numpy.random.SeedSequence` or a ``(master, key...)`` tuple; output is
a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError
from .mellin import ErrorDensity
from .series import ObservationSeries

__all__ = [
    "CirParams",
    "MDependentParams",
    "NoiseSpec",
    "make_rng",
    "simulate_cir",
    "gamma_invariant_params",
    "simulate_m_dependent",
    "simulate_noise",
    "contaminate",
    "gamma_pdf",
    "weibull_pdf",
    "autocorrelation",
]

SeedLike = Union[int, np.random.SeedSequence, Tuple[int, ...]]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, tuple):
        master, *key = seed
        return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key)))
    if isinstance(seed, (int, np.integer)) and seed >= 0:
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    raise ConfigurationError(f"unsupported seed {seed!r}")


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return [int(seed.entropy), *[int(k) for k in seed.spawn_key]]
    if isinstance(seed, tuple):
        return [int(s) for s in seed]
    if isinstance(seed, np.random.Generator):
        return None
    return int(seed)


def _check_n(n: int):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"series length must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class CirParams:
    """``dX = (theta1 - theta2 X) dt + theta3 sqrt(X) dW`` sampled every ``delta``."""

    theta1: float = 1.0
    theta2: float = 0.5
    theta3: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3", "delta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if not 2.0 * self.theta1 > self.theta3**2:
            raise ConfigurationError(
                f"Feller condition 2*theta1 > theta3**2 violated "
                f"({2 * self.theta1:g} <= {self.theta3**2:g})"
            )


def gamma_invariant_params(params: CirParams) -> Tuple[float, float]:
    """Shape and rate ``(2 theta1 / theta3**2, 2 theta2 / theta3**2)``."""
    s2 = params.theta3**2
    return 2.0 * params.theta1 / s2, 2.0 * params.theta2 / s2


def simulate_cir(params: CirParams, n: int, seed: SeedLike, method: str = "exact",
                 euler_substeps: int = 100) -> ObservationSeries:
    """Stationary CIR path of length ``n``.

    ``method="exact"`` draws ``X_{t+delta} = c * chi2'(d, X_t e^{-theta2 delta} / c)``
    with ``c = theta3**2 (1 - e^{-theta2 delta}) / (4 theta2)`` and
    ``d = 4 theta1 / theta3**2``; the noncentral chi-square is sampled as a
    Poisson mixture of central ones. ``method="euler"`` is a reflected Euler
    scheme with ``euler_substeps`` per step, kept for cross-checks only.
    """
    n = _check_n(n)
    rng = make_rng(seed)
    shape, rate = gamma_invariant_params(params)
    out = np.empty(n)
    x = rng.gamma(shape, 1.0 / rate)
    out[0] = x
    if method == "exact":
        decay = math.exp(-params.theta2 * params.delta)
        c = params.theta3**2 * (1.0 - decay) / (4.0 * params.theta2)
        half_df = 2.0 * params.theta1 / params.theta3**2
        for t in range(1, n):
            k = rng.poisson(0.5 * x * decay / c)
            x = 2.0 * c * rng.gamma(half_df + k)
            out[t] = x
    elif method == "euler":
        h = params.delta / euler_substeps
        sq = math.sqrt(h)
        noise = rng.standard_normal((n - 1, euler_substeps))
        for t in range(1, n):
            for z in noise[t - 1]:
                x = abs(x + (params.theta1 - params.theta2 * x) * h + params.theta3 * math.sqrt(x) * sq * z)
            out[t] = x
    else:
        raise ConfigurationError(f"unknown CIR method {method!r}")
    # Guard against a zero from gamma underflow; the law puts no mass there.
    out = np.maximum(out, np.finfo(float).tiny)
    meta = {"generator": "cir", "seed": _seed_repr(seed), "params": {**asdict(params), "method": method}}
    return ObservationSeries(out, delta=params.delta, meta=meta)


@dataclass(frozen=True)
class MDependentParams:
    """Recycling process parameters.

    ``scheme="innovation"`` (default) recycles the fresh draws of the last
    ``m_dep`` steps, which makes the series exactly ``m_dep``-dependent.
    ``scheme="value"`` recycles previously emitted values; copies of copies
    then carry dependence past lag ``m_dep``.
    """

    m_dep: int = 30
    shape: float = 2.0
    scale: float = 5.0
    recycle_prob: float = 0.5
    scheme: str = "innovation"

    def __post_init__(self):
        if isinstance(self.m_dep, bool) or int(self.m_dep) != self.m_dep or self.m_dep < 1:
            raise ConfigurationError(f"m_dep must be a positive integer, got {self.m_dep!r}")
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigurationError("Weibull shape and scale must be positive")
        if not 0.0 <= self.recycle_prob <= 1.0:
            raise ConfigurationError("recycle_prob must lie in [0, 1]")
        if self.scheme not in ("innovation", "value"):
            raise ConfigurationError(f"unknown recycling scheme {self.scheme!r}")


def _recycle(draw: Callable[[np.random.Generator, int], np.ndarray], m: int, prob: float,
             scheme: str, n: int, rng: np.random.Generator) -> np.ndarray:
    # The first m fresh draws play the role of the pre-sample window.
    fresh = draw(rng, n + m)
    keep = rng.random(n) < prob
    lag = rng.integers(1, m + 1, size=n)
    idx = np.arange(m, n + m)
    if scheme == "innovation":
        src = np.where(keep, idx - lag, idx)
    else:
        src = np.arange(n + m)
        for t in range(n):
            if keep[t]:
                src[m + t] = src[m + t - lag[t]]
        src = src[m:]
    return fresh[src]


def simulate_m_dependent(params: MDependentParams, n: int, seed: SeedLike) -> ObservationSeries:
    """Recycling process with Weibull(shape, scale) marginal.

    Each point is, with probability ``recycle_prob``, a uniformly chosen
    member of the previous ``m_dep`` slots, and otherwise a fresh draw.
    """
    n = _check_n(n)
    rng = make_rng(seed)

    def draw(r, size):
        return params.scale * r.weibull(params.shape, size)

    values = _recycle(draw, int(params.m_dep), params.recycle_prob, params.scheme, n, rng)
    meta = {"generator": "m_dependent", "seed": _seed_repr(seed), "params": asdict(params)}
    return ObservationSeries(values, meta=meta)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise marginal plus dependence: ``"iid"`` or m-dependent recycling."""

    family: ErrorDensity
    dependence: str = "iid"
    m_dep: int = 30
    recycle_prob: float = 0.5

    def __post_init__(self):
        if self.dependence not in ("iid", "m_dependent"):
            raise ConfigurationError(f"unknown noise dependence {self.dependence!r}")
        if self.dependence == "m_dependent" and not (int(self.m_dep) == self.m_dep and self.m_dep >= 1):
            raise ConfigurationError("m_dep must be a positive integer")


def _draw_noise(g: ErrorDensity):
    def draw(rng, size):
        if g.family == "uniform":
            a, b = g.params
            # 1 - U lies in (0, 1], keeping U(0, b) draws strictly positive.
            return a + (b - a) * (1.0 - rng.random(size))
        return g.sample(rng, size)

    return draw


def simulate_noise(spec: NoiseSpec, n: int, seed: SeedLike) -> ObservationSeries:
    n = _check_n(n)
    rng = make_rng(seed)
    draw = _draw_noise(spec.family)
    if spec.dependence == "iid":
        values = draw(rng, n)
    else:
        values = _recycle(draw, int(spec.m_dep), spec.recycle_prob, "innovation", n, rng)
    meta = {
        "generator": "noise",
        "seed": _seed_repr(seed),
        "params": {"family": spec.family.name, "dependence": spec.dependence},
    }
    return ObservationSeries(values, meta=meta)


def contaminate(X: ObservationSeries, U: ObservationSeries) -> ObservationSeries:
    """Elementwise product ``Y_j = X_j U_j``."""
    if len(X) != len(U):
        raise DomainError(f"length mismatch: {len(X)} signal values, {len(U)} noise values")
    meta = {"generator": "contaminated", "params": {"signal": X.meta, "noise": U.meta}}
    return ObservationSeries(X.values * U.values, delta=X.delta, meta=meta)


def gamma_pdf(x, shape: float, rate: float):
    return stats.gamma.pdf(x, shape, scale=1.0 / rate)


def weibull_pdf(x, shape: float, scale: float):
    return stats.weibull_min.pdf(x, shape, scale=scale)


def autocorrelation(values, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags ``0..max_lag`` (biased normalisation)."""
    v = np.asarray(values, dtype=float)
    v = v - v.mean()
    denom = float(v @ v)
    return np.array([float(v[: len(v) - k] @ v[k:]) / denom for k in range(max_lag + 1)])
