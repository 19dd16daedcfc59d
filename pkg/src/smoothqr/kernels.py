"""Kernel densities, integrated kernels, and smoothed check losses.

All functions are pure and vectorized over ``u``; scalars in, numpy scalars out.
Kernel names are lowercase strings: "uniform", "gaussian", "logistic",
"epanechnikov", "triangular".  The Gaussian-based order-4 and order-6 kernels
used by the one-step refinement are addressed by their half-order r (order = 2r)
or by the names "gaussian4" / "gaussian6".
"""

import numpy as np
from scipy.special import erf, expit, ndtr

KERNELS = ("uniform", "gaussian", "logistic", "epanechnikov", "triangular")

# half-order r for the named higher-order Gaussian kernels (order = 2r)
HIGHER_ORDER_KERNELS = {"gaussian4": 2, "gaussian6": 3}

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def _validate_kernel(kind):
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")


def _validate_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level tau must lie in (0, 1), got {tau}")


def _validate_bandwidth(h):
    if not h > 0.0:
        raise ValueError(f"bandwidth h must be positive, got {h}")


def check_loss(tau, u):
    """Quantile (pinball) loss u * (tau - 1{u < 0})."""
    _validate_tau(tau)
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def kernel_density(kind, u):
    """Kernel density K(u); symmetric, non-negative, integrates to one."""
    _validate_kernel(kind)
    u = np.asarray(u, dtype=float)
    if kind == "uniform":
        return np.where(np.abs(u) <= 1.0, 0.5, 0.0)
    if kind == "gaussian":
        return np.exp(-0.5 * u * u) / _SQRT_2PI
    if kind == "logistic":
        # e^{-u}/(1+e^{-u})^2 written via expit to avoid overflow for large |u|
        s = expit(u)
        return s * (1.0 - s)
    if kind == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    # triangular
    return np.maximum(0.0, 1.0 - np.abs(u))


def kernel_cdf(kind, u):
    """Integrated kernel K̄(u) = ∫_{-inf}^u K; exact antiderivative per kind."""
    _validate_kernel(kind)
    u = np.asarray(u, dtype=float)
    if kind == "uniform":
        return np.clip(0.5 * (u + 1.0), 0.0, 1.0)
    if kind == "gaussian":
        return ndtr(u)
    if kind == "logistic":
        return expit(u)
    if kind == "epanechnikov":
        inner = 0.5 + 0.75 * u - 0.25 * u ** 3
        return np.where(u < -1.0, 0.0, np.where(u > 1.0, 1.0, inner))
    # triangular: (1+u)^2/2 on [-1,0], 1-(1-u)^2/2 on [0,1], clamped outside
    neg = 0.5 * (1.0 + u) ** 2
    pos = 1.0 - 0.5 * (1.0 - u) ** 2
    inner = np.where(u <= 0.0, neg, pos)
    return np.where(u < -1.0, 0.0, np.where(u > 1.0, 1.0, inner))


def _core_uniform(z):
    az = np.abs(z)
    return np.where(az <= 1.0, 0.5 * z * z + 0.5, az)


def _core_gaussian(z):
    # sqrt(2/pi) e^{-z^2/2} + z(1 - 2 Phi(-z)); 1 - 2 Phi(-z) = erf(z/sqrt 2)
    return _SQRT_2_OVER_PI * np.exp(-0.5 * z * z) + z * erf(z / np.sqrt(2.0))


def _core_logistic(z):
    # z + 2 log(1 + e^{-z}) rearranged to |z| + 2 log1p(e^{-|z|}); no overflow
    az = np.abs(z)
    return az + 2.0 * np.log1p(np.exp(-az))


def _core_epanechnikov(z):
    az = np.abs(z)
    return np.where(az <= 1.0, 0.75 * z * z - 0.125 * z ** 4 + 0.375, az)


def _core_triangular(z):
    az = np.abs(z)
    return np.where(az <= 1.0, z * z - az ** 3 / 3.0 + 1.0 / 3.0, az)


_CORE_LOSS = {
    "uniform": _core_uniform,
    "gaussian": _core_gaussian,
    "logistic": _core_logistic,
    "epanechnikov": _core_epanechnikov,
    "triangular": _core_triangular,
}


def smoothed_check_loss(kind, tau, h, u):
    """Check loss convolved with the scaled kernel: (h/2) l(u/h) + (tau - 1/2) u.

    Convex in u for every kernel; coincides with the plain check loss for
    |u| > h when the kernel is supported on [-1, 1].
    """
    _validate_kernel(kind)
    _validate_tau(tau)
    _validate_bandwidth(h)
    u = np.asarray(u, dtype=float)
    return 0.5 * h * _CORE_LOSS[kind](u / h) + (tau - 0.5) * u


def smoothed_check_derivative(kind, tau, h, u):
    """Derivative of the smoothed check loss: tau - K̄(-u/h)."""
    _validate_tau(tau)
    _validate_bandwidth(h)
    u = np.asarray(u, dtype=float)
    return tau - kernel_cdf(kind, -u / h)


def _validate_half_order(r):
    if r not in (1, 2, 3):
        raise ValueError(f"higher-order kernel half-order r must be 1, 2 or 3, got {r}")


def _poly_p(r, u):
    if r == 1:
        return np.ones_like(u)
    if r == 2:
        return 0.5 * (3.0 - u * u)
    return (u ** 4 - 10.0 * u * u + 15.0) / 8.0


def _poly_big_p(r, u):
    if r == 1:
        return np.zeros_like(u)
    if r == 2:
        return 0.5 * u
    return (-(u ** 3) + 7.0 * u) / 8.0


def higher_order_density(r, u):
    """Gaussian-based kernel of order 2r: p_r(u) * phi(u).

    Signed for r >= 2 (orders 4 and 6 have negative parts); r = 1 is the
    plain Gaussian density.
    """
    _validate_half_order(r)
    u = np.asarray(u, dtype=float)
    return _poly_p(r, u) * np.exp(-0.5 * u * u) / _SQRT_2PI


def higher_order_cdf(r, u):
    """Antiderivative of the order-2r Gaussian kernel: Phi(u) + P_r(u) * phi(u).

    Not clamped to [0, 1]: for r >= 2 the integral legitimately overshoots
    because the kernel has negative parts.
    """
    _validate_half_order(r)
    u = np.asarray(u, dtype=float)
    phi = np.exp(-0.5 * u * u) / _SQRT_2PI
    return ndtr(u) + _poly_big_p(r, u) * phi


def resolve_kernel(name):
    """Map a kernel name to ("second_order", kind) or ("higher_order", r)."""
    if name in KERNELS:
        return "second_order", name
    if name in HIGHER_ORDER_KERNELS:
        return "higher_order", HIGHER_ORDER_KERNELS[name]
    known = KERNELS + tuple(HIGHER_ORDER_KERNELS)
    raise ValueError(f"unknown kernel {name!r}; expected one of {known}")
