"""Bias-reducing Gaussian-mixture kernels of order m.

``K(x) = sum_{j=1}^{m+1} C(m+1, j) (-1)**(j+1) (1/j) w(x/j)`` with ``w`` the
standard normal density, whose Fourier transform
``K_ft(p) = int exp(i p x) K(x) dx`` is the matching mixture of Gaussians
``sum_j C(m+1, j) (-1)**(j+1) exp(-j**2 p**2 / 2)``. The alternating binomial
weights cancel the moments of order 1..m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, DomainError, VerificationError

__all__ = [
    "Kernel",
    "MomentReport",
    "make_kernel",
    "kernel_eval",
    "kernel_ft",
    "verify_moments",
    "verify_ft_integrability",
    "numeric_ft",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
MAX_ORDER = 10


@dataclass(frozen=True)
class Kernel:
    order_m: int
    weights: Tuple[float, ...]
    ft_weights: Tuple[float, ...]

    @property
    def scales(self) -> np.ndarray:
        return np.arange(1, self.order_m + 2, dtype=float)

    def __call__(self, x):
        return kernel_eval(self, x)

    def ft(self, p):
        return kernel_ft(self, p)


def make_kernel(m: int) -> Kernel:
    """Order-``m`` kernel with closed-form binomial weights (1 <= m <= 10)."""
    if isinstance(m, bool) or int(m) != m or not (1 <= m <= MAX_ORDER):
        raise ConfigurationError(f"kernel order must be an integer in [1, {MAX_ORDER}], got {m!r}")
    m = int(m)
    ft_weights = tuple(float(math.comb(m + 1, j) * (-1) ** (j + 1)) for j in range(1, m + 2))
    weights = tuple(c / j for j, c in enumerate(ft_weights, start=1))
    return Kernel(m, weights, ft_weights)


def kernel_eval(K: Kernel, x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.zeros(ax.shape)
    for j, wt in zip(K.scales, K.weights):
        u = ax / j
        out = out + wt * np.exp(-0.5 * u * u)
    out = out * _INV_SQRT_2PI
    return float(out) if out.ndim == 0 else out


def kernel_ft(K: Kernel, p):
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape)
    for j, wt in zip(K.scales, K.ft_weights):
        out = out + wt * np.exp(-0.5 * (j * p) ** 2)
    return float(out) if out.ndim == 0 else out


def numeric_ft(K: Kernel, p, half_width: float = 40.0, n_nodes: int = 100_001):
    """Fourier transform of :func:`kernel_eval` by trapezoid on ``[-40, 40]``."""
    x = np.linspace(-half_width, half_width, n_nodes)
    kx = kernel_eval(K, x)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    # K is even, so only the cosine part survives.
    vals = np.array([integrate.trapezoid(np.cos(pk * x) * kx, x) for pk in p])
    return vals


@dataclass(frozen=True)
class MomentReport:
    order_m: int
    moments: Tuple[float, ...]
    residuals: Tuple[float, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.residuals) <= self.tol


def kernel_moments(K: Kernel, k_max: int, half_width: float = 40.0, n_nodes: int = 100_001):
    x = np.linspace(-half_width, half_width, n_nodes)
    kx = kernel_eval(K, x)
    return np.array([integrate.trapezoid(x**k * kx, x) for k in range(k_max + 1)])


def verify_moments(K: Kernel, tol: float = 1e-8, raise_on_fail: bool = True) -> MomentReport:
    """Check ``int K = 1`` and ``int x**k K = 0`` for ``k = 1..m``.

    The tails of the Gaussian mixture are below 1e-300 outside ``[-40, 40]``
    so a fine trapezoid there is exact to rounding.
    """
    if tol < 1e-10:
        raise DomainError("moment tolerance must be at least 1e-10")
    moments = kernel_moments(K, K.order_m)
    target = np.zeros_like(moments)
    target[0] = 1.0
    residuals = np.abs(moments - target)
    report = MomentReport(K.order_m, tuple(moments), tuple(residuals), tol)
    if raise_on_fail and not report.passed:
        bad = int(np.argmax(residuals > tol))
        raise VerificationError(
            f"kernel of order {K.order_m}: moment {bad} = {moments[bad]:.3e} "
            f"misses its target by {residuals[bad]:.3e} > {tol:g}"
        )
    return report


def verify_ft_integrability(K: Kernel, kappa: float, p_max: float = 60.0, n_nodes: int = 120_001):
    """``(int |p|**kappa |K_ft|, int |p|**(2 kappa) |K_ft|**2)`` on ``|p| <= p_max``."""
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    p = np.linspace(-p_max, p_max, n_nodes)
    kf = np.abs(kernel_ft(K, p))
    ap = np.abs(p)
    i1 = integrate.trapezoid(ap**kappa * kf, p)
    i2 = integrate.trapezoid(ap ** (2 * kappa) * kf**2, p)
    return float(i1), float(i2)
