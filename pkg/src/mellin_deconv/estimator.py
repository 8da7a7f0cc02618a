"""Mellin-deconvolution density estimator for ``Y = X * U``.

For a bandwidth ``b`` the estimate is

    f_hat(x) = (1/2pi) int x**(-1 - i p) K_ft(p b) / g_mt(p) psi_hat(p) dp,

with ``psi_hat(p) = mean_j Y_j**(i p)`` the empirical Mellin transform. The
same quantity can be written as a kernel sum in log-space,

    f_hat(x) = 1/(n x) sum_j (1/b) W_b((log x - log Y_j) / b),
    W_b(u)   = (1/2pi) int exp(-i p u) K_ft(p) / g_mt(p / b) dp,

which is implemented separately and used as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import ConfigurationError, DomainError, SingularDivisorError
from .kernel import Kernel, kernel_ft
from .mellin import ErrorDensity, mellin_error
from .series import ObservationSeries

__all__ = [
    "EstimatorConfig",
    "DensityEstimate",
    "VarianceBounds",
    "QuadratureParams",
    "empirical_mellin",
    "default_bandwidth",
    "estimate_density",
    "weight_function",
    "estimate_density_via_weights",
    "log_kde",
    "ft_l2_moment",
    "finite_variance_factor",
    "variance_bounds",
    "confidence_interval",
]

# |g_mt(p)| at or below this is treated as a zero of the divisor.
SINGULAR_TOL = 1e-13
MAX_STEP = 0.05
# Cap on complex matrix entries built at once when forming psi_hat.
_CHUNK = 2_000_000


@dataclass(frozen=True)
class EstimatorConfig:
    """Bandwidth and quadrature settings.

    ``quad_p_max`` is the truncation of the p-integral in units of
    ``1/bandwidth``; ``quad_step=None`` selects the step from the data.
    ``holder_A`` and ``holder_r`` describe the assumed smoothness class and
    are reporting metadata only.
    """

    bandwidth: float
    smoothness_s: float = 2.0
    quad_p_max: float = 10.0
    quad_step: Optional[float] = None
    clamp_nonnegative: bool = False
    holder_A: Optional[float] = None
    holder_r: Optional[float] = None

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.smoothness_s > 0:
            raise ConfigurationError("smoothness s must be positive")
        if self.quad_step is not None and not self.quad_step > 0:
            raise ConfigurationError("quad_step must be positive")
        if not self.quad_p_max >= 8.0:
            raise ConfigurationError(
                "quad_p_max * bandwidth must be at least 8 (quad_p_max is in units of 1/bandwidth)"
            )

    @property
    def p_max(self) -> float:
        return self.quad_p_max / self.bandwidth


@dataclass(frozen=True)
class DensityEstimate:
    x_grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    n: int
    imag_residual: float
    raw_values: Optional[np.ndarray] = None
    p_max: float = 0.0
    quad_step: float = 0.0

    def __post_init__(self):
        if len(self.x_grid) != len(self.values):
            raise DomainError("x_grid and values differ in length")


@dataclass(frozen=True)
class VarianceBounds:
    sigma1_sq: np.ndarray
    sigma2_sq: np.ndarray

    @property
    def sigma_lower(self):
        return self.sigma1_sq

    @property
    def sigma_upper(self):
        return self.sigma2_sq


@dataclass(frozen=True)
class QuadratureParams:
    """Trapezoid grid for :func:`weight_function` in the scaled variable."""

    p_max: float = 12.0
    step: float = 0.01


def _as_series(Y) -> ObservationSeries:
    return Y if isinstance(Y, ObservationSeries) else ObservationSeries(np.asarray(Y, dtype=float))


def _x_array(x_grid) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if x.size == 0:
        raise DomainError("x grid is empty")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("evaluation points must be finite and strictly positive")
    return x


def empirical_mellin(Y, p):
    """``(1/n) sum_j exp(i p log Y_j)`` for scalar or array ``p``."""
    Y = _as_series(Y)
    if Y.n == 0:
        raise DomainError("empirical Mellin transform of an empty series")
    p_arr = np.atleast_1d(np.asarray(p, dtype=float))
    logs = Y.log_values
    out = np.empty(p_arr.shape, dtype=complex)
    rows = max(1, _CHUNK // max(1, len(logs)))
    for start in range(0, len(p_arr), rows):
        block = p_arr[start:start + rows]
        out[start:start + rows] = np.exp(1j * np.outer(block, logs)).mean(axis=1)
    if np.ndim(p) == 0:
        return complex(out[0])
    return out


def default_bandwidth(n: int, kappa: float, s: float = 2.0) -> float:
    """``n ** (-1 / (1 + 2 kappa + 2 s))``."""
    if n < 2:
        raise DomainError(f"bandwidth rule needs n >= 2, got {n}")
    if not (kappa > 0 and s > 0):
        raise DomainError("kappa and s must be positive")
    return float(n ** (-1.0 / (1.0 + 2.0 * kappa + 2.0 * s)))


def _auto_step(x: np.ndarray, logs: np.ndarray) -> float:
    spread = max(abs(np.log(x).max() - logs.min()), abs(logs.max() - np.log(x).min()))
    if spread == 0.0:
        return MAX_STEP
    return min(MAX_STEP, math.pi / (4.0 * spread))


def _symmetric_grid(p_max: float, step: float):
    k = int(math.ceil(p_max / step))
    half = step * np.arange(k + 1)
    return np.concatenate([-half[:0:-1], half])


def _checked_reciprocal(g: ErrorDensity, p: np.ndarray) -> np.ndarray:
    gm = mellin_error(g, p)
    mod = np.abs(gm)
    if np.any(mod <= SINGULAR_TOL):
        i = int(np.argmin(mod))
        raise SingularDivisorError(p[i], mod[i])
    return 1.0 / gm


def _trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


def estimate_density(
    Y, g: ErrorDensity, K: Kernel, cfg: EstimatorConfig, x_grid: Sequence[float]
) -> DensityEstimate:
    """Evaluate the deconvolution estimator on ``x_grid``.

    The empirical Mellin transform is computed once on the p-grid
    (``O(n * grid)``) and reused for every ``x``.
    """
    Y = _as_series(Y)
    x = _x_array(x_grid)
    b = cfg.bandwidth
    step = cfg.quad_step if cfg.quad_step is not None else _auto_step(x, Y.log_values)
    p = _symmetric_grid(cfg.p_max, step)
    half = p[p >= 0]
    psi_half = empirical_mellin(Y, half)
    psi = np.concatenate([np.conj(psi_half[:0:-1]), psi_half])
    integrand = kernel_ft(K, p * b) * _checked_reciprocal(g, p) * psi
    weighted = integrand * _trapezoid_weights(len(p), step)
    phase = np.exp(-1j * np.outer(np.log(x), p))
    total = (phase * weighted).sum(axis=1) / (2.0 * math.pi * x)
    return _finish(total, x, b, Y.n, cfg, cfg.p_max, step)


def _finish(total, x, b, n, cfg, p_max, step) -> DensityEstimate:
    raw = total.real.copy()
    imag = float(np.max(np.abs(total.imag)))
    values = raw
    if cfg.clamp_nonnegative:
        values = np.maximum(raw, 0.0)
    return DensityEstimate(
        x_grid=x,
        values=values,
        bandwidth=b,
        n=n,
        imag_residual=imag,
        raw_values=raw if cfg.clamp_nonnegative else None,
        p_max=float(p_max),
        quad_step=float(step),
    )


def _weight_values(g, K, b, u, quad: QuadratureParams):
    u = np.asarray(u, dtype=float)
    p = _symmetric_grid(quad.p_max, quad.step)
    integrand = kernel_ft(K, p) * _checked_reciprocal(g, p / b)
    weighted = integrand * _trapezoid_weights(len(p), quad.step)
    flat = u.ravel()
    out = np.empty(flat.shape, dtype=complex)
    rows = max(1, _CHUNK // len(p))
    for start in range(0, len(flat), rows):
        block = flat[start:start + rows]
        out[start:start + rows] = (np.exp(-1j * np.outer(block, p)) * weighted).sum(axis=1)
    return (out / (2.0 * math.pi)).reshape(u.shape)


def weight_function(
    g: ErrorDensity,
    K: Kernel,
    b: float,
    u,
    quad: Optional[QuadratureParams] = None,
    full_output: bool = False,
):
    """``W_b(u) = (1/2pi) int exp(-i p u) K_ft(p) / g_mt(p/b) dp``.

    The real part is returned; with ``full_output`` also the largest
    discarded imaginary part.
    """
    if not b > 0:
        raise DomainError("bandwidth must be positive")
    if quad is None:
        umax = float(np.max(np.abs(u))) if np.size(u) else 0.0
        quad = QuadratureParams(step=min(0.01, math.pi / (4.0 * umax)) if umax > 0 else 0.01)
    vals = _weight_values(g, K, b, u, quad)
    real = vals.real if np.ndim(vals) else float(vals.real)
    if full_output:
        return real, float(np.max(np.abs(vals.imag)))
    return real


def estimate_density_via_weights(
    Y,
    g: ErrorDensity,
    K: Kernel,
    cfg: EstimatorConfig,
    x_grid: Sequence[float],
    quad: Optional[QuadratureParams] = None,
) -> DensityEstimate:
    """Same estimator as :func:`estimate_density`, summed through ``W_b``."""
    Y = _as_series(Y)
    x = _x_array(x_grid)
    b = cfg.bandwidth
    u = (np.log(x)[:, None] - Y.log_values[None, :]) / b
    if quad is None:
        umax = float(np.max(np.abs(u)))
        step = min(0.01, math.pi / (4.0 * umax)) if umax > 0 else 0.01
        quad = QuadratureParams(p_max=cfg.quad_p_max, step=step)
    w = _weight_values(g, K, b, u, quad)
    total = w.sum(axis=1) / (Y.n * b * x)
    return _finish(total, x, b, Y.n, cfg, quad.p_max / b, quad.step * b)


def log_kde(Y, x_grid, bandwidth: float, kernel: Optional[Kernel] = None) -> np.ndarray:
    """Plain kernel density estimate of ``f_Y`` built in log-space.

    ``(1/(n x)) sum_j (1/b) K((log x - log Y_j) / b)`` with a standard
    normal ``K`` unless another kernel is given.
    """
    Y = _as_series(Y)
    x = _x_array(x_grid)
    u = (np.log(x)[:, None] - Y.log_values[None, :]) / bandwidth
    if kernel is None:
        ku = stats.norm.pdf(u)
    else:
        from .kernel import kernel_eval

        ku = kernel_eval(kernel, u)
    return ku.sum(axis=1) / (Y.n * bandwidth * x)


def ft_l2_moment(K: Kernel, kappa: float, p_max: float = 60.0, n_nodes: int = 120_001) -> float:
    """``int |p|**(2 kappa) |K_ft(p)|**2 dp`` (``kappa >= 0``)."""
    if kappa < 0:
        raise DomainError("kappa must be nonnegative")
    p = np.linspace(-p_max, p_max, n_nodes)
    return float(integrate.trapezoid(np.abs(p) ** (2 * kappa) * kernel_ft(K, p) ** 2, p))


def finite_variance_factor(g: ErrorDensity, K: Kernel, b: float, kappa: Optional[float] = None,
                           p_max: float = 60.0, n_nodes: int = 120_001) -> float:
    """``int |b**kappa K_ft(p) / g_mt(p/b)|**2 dp`` at a fixed bandwidth."""
    kappa = g.kappa if kappa is None else kappa
    p = np.linspace(-p_max, p_max, n_nodes)
    vals = b**kappa * kernel_ft(K, p) / mellin_error(g, p / b)
    return float(integrate.trapezoid(np.abs(vals) ** 2, p))


def variance_bounds(
    g: ErrorDensity,
    K: Kernel,
    f_Y_at_x,
    x,
    C1: float,
    C2: float,
    kappa: Optional[float] = None,
) -> VarianceBounds:
    """Computable envelopes of the asymptotic variance of ``f_hat(x)``.

    ``sigma1_sq = f_Y(x) / (2 pi x C2**2) * I`` and
    ``sigma2_sq = f_Y(x) / (2 pi x C1**2) * I`` with
    ``I = int |p|**(2 kappa) |K_ft(p)|**2 dp``. These bound the limit of
    ``n b**(1 + 2 kappa) var f_hat(x)`` from below and above.
    """
    if not (C1 > 0 and C2 >= C1):
        raise DomainError(f"need 0 < C1 <= C2, got C1={C1}, C2={C2}")
    fy = np.asarray(f_Y_at_x, dtype=float)
    xs = np.asarray(x, dtype=float)
    if np.any(fy < 0):
        raise DomainError("f_Y(x) must be nonnegative")
    if np.any(xs <= 0):
        raise DomainError("x must be positive")
    kappa = g.kappa if kappa is None else kappa
    scale = fy / (2.0 * math.pi * xs) * ft_l2_moment(K, kappa)
    return VarianceBounds(sigma1_sq=scale / C2**2, sigma2_sq=scale / C1**2)


def confidence_interval(est: DensityEstimate, vb: VarianceBounds, level: float, kappa: float):
    """Conservative normal interval using the upper variance envelope.

    Returns ``(lower, upper)`` arrays aligned with ``est.x_grid``.
    """
    if not (0.5 < level < 1.0):
        raise DomainError("confidence level must lie in (0.5, 1)")
    z = stats.norm.ppf(0.5 * (1.0 + level))
    scale = math.sqrt(est.n) * est.bandwidth ** (0.5 + kappa)
    half = z * np.sqrt(np.asarray(vb.sigma_upper, dtype=float)) / scale
    return est.values - half, est.values + half
