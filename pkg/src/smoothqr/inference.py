"""Rademacher multiplier bootstrap and confidence-interval constructions.

Each bootstrap replicate refits the smoothed objective with per-observation
weights w_i = 1 + e_i in {0, 2}, initialized at the point estimate.  Replicate
RNG streams derive from (seed, b), so a fixed seed yields bitwise-identical
draws under any thread count or execution order.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import kernels as _k
from .errors import (
    NumericalDivergenceError,
    SingularHessianError,
    UnreliableInferenceError,
)
from .model import destandardize_coefficients, standardize
from .solver import _bb_minimize, fit_conquer

MAX_FAILED_FRACTION = 0.05
MIN_USABLE_DRAWS = 20


@dataclass
class BootstrapResult:
    """Bootstrap coefficient draws (usable replicates only, original scale)."""

    draws: np.ndarray
    base: np.ndarray
    B: int
    seed: int
    failed: int = 0

    @property
    def reliable(self):
        return self.failed <= MAX_FAILED_FRACTION * self.B

    def __post_init__(self):
        if self.draws.shape[0] != self.B - self.failed:
            raise ValueError(
                f"draws has {self.draws.shape[0]} rows, expected B - failed = "
                f"{self.B - self.failed}"
            )


@dataclass
class ConfidenceIntervals:
    """Per-coordinate interval bounds for one construction method."""

    method: str
    level: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")

    @property
    def width(self):
        return self.upper - self.lower

    def to_dict(self, estimate, names=None):
        p = len(self.lower)
        names = names if names is not None else [f"x{j}" for j in range(p)]
        return {
            "method": self.method,
            "level": float(self.level),
            "coords": [
                {
                    "index": j,
                    "name": names[j],
                    "estimate": float(estimate[j]),
                    "lower": float(self.lower[j]),
                    "upper": float(self.upper[j]),
                }
                for j in range(p)
            ],
        }


def _rademacher_weights(rng, n):
    return 1.0 + (2.0 * rng.integers(0, 2, size=n) - 1.0)


def bootstrap_fit(data, cfg, B, seed, threads=1, weight_fn=None):
    """Fit once, then refit under B multiplier-weight draws.

    Replicates are initialized at the point estimate and solved in the
    standardized space set up once for the whole run.  Non-converged or
    diverging replicates are dropped and counted in ``failed``.

    ``weight_fn(rng, n)`` is a testing hook replacing the Rademacher
    multiplier sampler.
    """
    if B < 2:
        raise ValueError(f"need at least 2 bootstrap replicates, got B={B}")
    base = fit_conquer(data, cfg)
    h = base.h_used
    sample_weights = _rademacher_weights if weight_fn is None else weight_fn

    if cfg.standardize and data.p > 1:
        work, transform = standardize(data)
        beta0 = transform.standardize_coefficients(base.beta)
    else:
        work, transform = data, None
        beta0 = base.beta
    y, X = work.y, work.X
    n = data.n

    def run_replicate(b):
        rng = np.random.default_rng([seed, b])
        w = sample_weights(rng, n)
        wfac = w / n

        def grad_fn(beta):
            r = y - X @ beta
            s = _k.kernel_cdf(cfg.kernel, -r / h) - cfg.tau
            return X.T @ (s * wfac)

        try:
            beta, _, _, converged, _ = _bb_minimize(grad_fn, beta0, cfg.tol, cfg.max_iter)
        except NumericalDivergenceError:
            return None
        if not converged:
            return None
        if transform is not None:
            beta = destandardize_coefficients(beta, transform)
        return beta

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_replicate, range(1, B + 1)))
    else:
        results = [run_replicate(b) for b in range(1, B + 1)]

    rows = [r for r in results if r is not None]
    failed = B - len(rows)
    draws = np.array(rows) if rows else np.empty((0, data.p))
    return BootstrapResult(draws=draws, base=base.beta, B=B, seed=seed, failed=failed)


def _usable_draws(res, min_draws):
    m = res.draws.shape[0]
    if m < min_draws:
        raise UnreliableInferenceError(
            f"only {m} usable bootstrap draws (need >= {min_draws}); "
            f"{res.failed} of {res.B} replicates failed"
        )
    return res.draws


def _empirical_quantile(sorted_col, q):
    # ceil(q m)-th order statistic: the left-continuous inf-based inverse.
    m = sorted_col.shape[0]
    k = min(max(int(math.ceil(q * m)), 1), m)
    return sorted_col[k - 1]


def percentile_ci(res, alpha, min_draws=MIN_USABLE_DRAWS):
    """Coordinatewise [c(alpha/2), c(1-alpha/2)] from the bootstrap draws."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    draws = np.sort(_usable_draws(res, min_draws), axis=0)
    lower = np.array([_empirical_quantile(draws[:, j], alpha / 2) for j in range(draws.shape[1])])
    upper = np.array([_empirical_quantile(draws[:, j], 1 - alpha / 2) for j in range(draws.shape[1])])
    return ConfidenceIntervals("percentile", 1 - alpha, lower, upper)


def pivotal_ci(res, alpha, min_draws=MIN_USABLE_DRAWS):
    """Reflection of the percentile quantiles about the point estimate."""
    per = percentile_ci(res, alpha, min_draws=min_draws)
    lower = 2.0 * res.base - per.upper
    upper = 2.0 * res.base - per.lower
    return ConfidenceIntervals("pivotal", 1 - alpha, lower, upper)


def mb_norm_ci(res, alpha, min_draws=MIN_USABLE_DRAWS):
    """Estimate +/- z_{1-alpha/2} times the bootstrap-draw standard deviation."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    draws = _usable_draws(res, min_draws)
    sd = draws.std(axis=0, ddof=1)
    half = ndtri(1 - alpha / 2) * sd
    return ConfidenceIntervals("normal-bootstrap", 1 - alpha, res.base - half, res.base + half)


def sandwich_covariance(data, beta, tau, kernel, h, paper_v_scaling=False):
    """Plug-in sandwich covariance of the smoothed estimator and its SEs.

    Returns (cov, se) with cov = n^{-1} D^{-1} V D^{-1}, where D is the
    smoothed Hessian at the fit and V = (1/n) sum {K̄(-e_i/h) - tau}^2 x x^T.
    ``paper_v_scaling`` switches V to a 1/(n h) factor for comparison; the
    1/n form matches the tau(1-tau)-scaled estimand.
    """
    _k._validate_tau(tau)
    _k._validate_bandwidth(h)
    beta = np.asarray(beta, dtype=float)
    eps = data.y - data.X @ beta
    dens = _k.kernel_density(kernel, eps / h) / (data.n * h)
    Xd = data.X * np.sqrt(dens)[:, None]
    D = Xd.T @ Xd
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularHessianError(
            f"plug-in Hessian is numerically singular (cond ~ {cond:.2e}); "
            "try a larger bandwidth h"
        )
    score = _k.kernel_cdf(kernel, -eps / h) - tau
    vfac = data.n * h if paper_v_scaling else data.n
    Xv = data.X * (np.abs(score) / np.sqrt(vfac))[:, None]
    V = Xv.T @ Xv
    Dinv = np.linalg.inv(D)
    cov = Dinv @ V @ Dinv / data.n
    se = np.sqrt(np.diag(cov))
    return cov, se


def normal_ci(data, beta, tau, kernel, h, alpha):
    """Estimate +/- z_{1-alpha/2} times the plug-in sandwich standard error."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    _, se = sandwich_covariance(data, beta, tau, kernel, h)
    beta = np.asarray(beta, dtype=float)
    half = ndtri(1 - alpha / 2) * se
    return ConfidenceIntervals("normal", 1 - alpha, beta - half, beta + half)
