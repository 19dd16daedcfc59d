"""Independent brute-force references used by the test suite.

Nothing here shares code paths with the estimators it checks: the quadrature
oracle integrates its own inline kernel densities, and the exact small-scale
quantile regression enumerates interpolating candidate bases directly.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import OracleBudgetError


@dataclass(frozen=True)
class OracleBudget:
    """Caps for the brute-force oracles."""

    max_subsets: int = 2_000_000
    quadrature_tol: float = 1e-9

    def __post_init__(self):
        if self.max_subsets <= 0 or self.quadrature_tol <= 0:
            raise ValueError("oracle budget entries must be positive")


DEFAULT_BUDGET = OracleBudget()


def check_objective(data, beta, tau):
    """Mean check loss (1/n) sum rho_tau(y_i - <x_i, beta>)."""
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    return float(np.mean(r * (tau - (r < 0))))


def exact_qr_small(data, tau, budget=DEFAULT_BUDGET):
    """Exact quantile regression by enumerating p-point interpolating bases.

    Some minimizer of the check loss interpolates p sample points, so
    enumerating all C(n, p) bases and scoring each candidate is exact.
    Singular bases are skipped; ties are broken by the lexicographically
    smallest coefficient vector, making the result deterministic even when
    the minimizer set is a flat interval.  Intended for n <~ 60, p <= 3.
    """
    n, p = data.n, data.p
    total = math.comb(n, p)
    if total > budget.max_subsets:
        raise OracleBudgetError(
            f"C({n},{p}) = {total} bases exceeds budget {budget.max_subsets}"
        )
    best_beta = None
    best_loss = np.inf
    for idx in itertools.combinations(range(n), p):
        Xs = data.X[list(idx)]
        ys = data.y[list(idx)]
        try:
            cand = np.linalg.solve(Xs, ys)
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(cand).all():
            continue
        loss = check_objective(data, cand, tau)
        tol = 1e-12 * (1.0 + abs(best_loss) if np.isfinite(best_loss) else 1.0)
        if loss < best_loss - tol:
            best_beta, best_loss = cand, loss
        elif loss <= best_loss + tol and best_beta is not None:
            if tuple(cand) < tuple(best_beta):
                best_beta = cand
    if best_beta is None:
        raise OracleBudgetError("all candidate bases were singular")
    return best_beta


# Inline kernel densities, deliberately independent of smoothqr.kernels.
_ORACLE_DENSITIES = {
    "uniform": lambda t: 0.5 if abs(t) <= 1.0 else 0.0,
    "gaussian": lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi),
    "logistic": lambda t: 1.0 / (math.exp(t / 2.0) + math.exp(-t / 2.0)) ** 2,
    "epanechnikov": lambda t: 0.75 * (1.0 - t * t) if abs(t) <= 1.0 else 0.0,
    "triangular": lambda t: max(0.0, 1.0 - abs(t)),
}

_COMPACT = {"uniform", "epanechnikov", "triangular"}


def convolution_loss_quadrature(kind, tau, h, u, tol=None, budget=DEFAULT_BUDGET):
    """Adaptive quadrature of ∫ rho_tau(v) K_h(v - u) dv.

    Integrates over the kernel's effective support: [u-h, u+h] for compact
    kernels, [u-40h, u+40h] for the unbounded ones.  The check-loss kink at
    v = 0 is passed to the integrator as a breakpoint.
    """
    if kind not in _ORACLE_DENSITIES:
        raise ValueError(f"unknown kernel {kind!r}")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if not h > 0.0:
        raise ValueError("h must be positive")
    tol = budget.quadrature_tol if tol is None else tol
    density = _ORACLE_DENSITIES[kind]
    half_width = h if kind in _COMPACT else 40.0 * h

    def integrand(v):
        return v * (tau - (v < 0)) * density((v - u) / h) / h

    lo, hi = u - half_width, u + half_width
    points = [0.0] if lo < 0.0 < hi else None
    value, err = quad(integrand, lo, hi, points=points, epsabs=tol, epsrel=0.0, limit=400)
    if err > 10.0 * tol * (1.0 + abs(value)):
        raise OracleBudgetError(
            f"quadrature error estimate {err:.2e} exceeds tolerance {tol:.2e}"
        )
    return value


def finite_diff_gradient(f, beta, eps=1e-6):
    """Central-difference gradient of a scalar field over coefficient space."""
    if not eps > 0:
        raise ValueError("step eps must be positive")
    beta = np.asarray(beta, dtype=float)
    grad = np.empty_like(beta)
    for j in range(beta.size):
        step = np.zeros_like(beta)
        step[j] = eps
        hi, lo = f(beta + step), f(beta - step)
        grad[j] = (hi - lo) / (2.0 * eps)
    if not np.isfinite(grad).all():
        raise ValueError("non-finite function evaluation in finite differences")
    return grad


def finite_diff_jacobian(g, beta, eps=1e-6):
    """Central-difference Jacobian of a vector field; column j varies beta_j."""
    if not eps > 0:
        raise ValueError("step eps must be positive")
    beta = np.asarray(beta, dtype=float)
    cols = []
    for j in range(beta.size):
        step = np.zeros_like(beta)
        step[j] = eps
        cols.append((np.asarray(g(beta + step)) - np.asarray(g(beta - step))) / (2.0 * eps))
    jac = np.column_stack(cols)
    if not np.isfinite(jac).all():
        raise ValueError("non-finite function evaluation in finite differences")
    return jac
