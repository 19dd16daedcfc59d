"""Smoothed quantile-loss evaluation and the BB gradient-descent solvers.

The main entry point is ``fit_conquer``: gradient descent with Barzilai-Borwein
stepsizes on the convolution-smoothed quantile objective, warm-started at a
Huber estimate whose robustification width is refreshed from the residual MAD
each iteration.  ``fit_horowitz`` minimizes the non-convex indicator-smoothed
objective by plain gradient descent with backtracking and is provided as a
baseline.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels as _k
from .errors import DimensionMismatchError, NumericalDivergenceError
from .model import destandardize_coefficients, standardize

MAX_BB_STEP = 100.0


def default_bandwidth(n, p):
    """Default smoothing bandwidth ((p + log n) / n)^{2/5}."""
    if not n > p >= 1:
        raise ValueError(f"need n > p >= 1, got n={n}, p={p}")
    return ((p + np.log(n)) / n) ** 0.4


def mad(values):
    """Median absolute deviation from the median (no consistency factor)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("mad of empty vector")
    return float(np.median(np.abs(values - np.median(values))))


@dataclass
class FitConfig:
    """Solver inputs; ``h="auto"`` resolves to the default bandwidth."""

    tau: float
    kernel: str = "gaussian"
    h: object = "auto"
    tol: float = 1e-4
    max_iter: int = 5000
    standardize: bool = True

    def validate(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        _k._validate_kernel(self.kernel)
        if self.h != "auto" and not float(self.h) > 0.0:
            raise ValueError(f"bandwidth must be positive or 'auto', got {self.h}")
        if not self.tol > 0.0:
            raise ValueError("gradient tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def resolve_bandwidth(self, n, p):
        self.validate()
        if self.h == "auto":
            return default_bandwidth(n, p)
        return float(self.h)


@dataclass
class FitResult:
    """Solver output; coefficients are always on the original data scale."""

    beta: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    h_used: float
    loss: float
    method: str = "conquer"
    convex: bool = True
    fallback_steps: int = 0

    def to_dict(self, names=None):
        out = {
            "beta": [float(b) for b in self.beta],
            "iterations": int(self.iterations),
            "grad_norm": float(self.grad_norm),
            "converged": bool(self.converged),
            "h": float(self.h_used),
            "loss": float(self.loss),
            "method": self.method,
            "convex": bool(self.convex),
        }
        if names is not None:
            out["names"] = list(names)
        return out


def _weights_vector(weights, n):
    if weights is None:
        return None
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n,):
        raise DimensionMismatchError(f"weights have shape {weights.shape}, expected ({n},)")
    if not np.isfinite(weights).all() or np.any(weights < 0):
        raise ValueError("weights must be finite and non-negative")
    return weights


def smoothed_loss(data, beta, tau, kernel, h, weights=None):
    """Mean smoothed check loss (1/n) sum w_i l_h(y_i - <x_i, beta>)."""
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    vals = _k.smoothed_check_loss(kernel, tau, h, r)
    w = _weights_vector(weights, data.n)
    if w is not None:
        vals = vals * w
    return float(np.mean(vals))


def smoothed_gradient(data, beta, tau, kernel, h, weights=None):
    """(1/n) sum w_i {K̄(-r_i/h) - tau} x_i."""
    _k._validate_tau(tau)
    _k._validate_bandwidth(h)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise DimensionMismatchError(f"beta has shape {beta.shape}, expected ({data.p},)")
    r = data.y - data.X @ beta
    s = _k.kernel_cdf(kernel, -r / h) - tau
    w = _weights_vector(weights, data.n)
    if w is not None:
        s = s * w
    return data.X.T @ s / data.n


def smoothed_hessian(data, beta, tau, kernel, h, weights=None):
    """(1/(n h)) sum w_i K(r_i/h) x_i x_i^T; exactly symmetric PSD."""
    _k._validate_tau(tau)
    _k._validate_bandwidth(h)
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    d = _k.kernel_density(kernel, r / h) / (data.n * h)
    w = _weights_vector(weights, data.n)
    if w is not None:
        d = d * w
    Xw = data.X * np.sqrt(d)[:, None]
    return Xw.T @ Xw


def _check_finite(vec, iteration):
    if not np.isfinite(vec).all():
        raise NumericalDivergenceError(iteration)


def _bb_minimize(grad_fn, beta0, tol, max_iter, extra_ok=None):
    """Gradient descent with BB stepsizes.

    First update is a plain gradient step; afterwards the stepsize is
    min(<d,d>/<d,g>, <d,g>/<g,g>, MAX_BB_STEP) from the secant differences,
    falling back to 1 (and counting the event) whenever <d,g> <= 0, which
    covers both least-squares ratios being non-positive at once.  Stops when
    the gradient norm reaches ``tol`` and the optional ``extra_ok`` predicate
    accepts the iterate.
    """
    beta_prev = np.array(beta0, dtype=float)
    g_prev = grad_fn(beta_prev)
    _check_finite(g_prev, 0)
    gnorm = float(np.linalg.norm(g_prev))
    if gnorm <= tol and (extra_ok is None or extra_ok(beta_prev)):
        return beta_prev, 0, gnorm, True, 0
    beta = beta_prev - g_prev
    iterations = 1
    fallbacks = 0
    while True:
        g = grad_fn(beta)
        _check_finite(g, iterations)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol and (extra_ok is None or extra_ok(beta)):
            return beta, iterations, gnorm, True, fallbacks
        if iterations >= max_iter:
            return beta, iterations, gnorm, False, fallbacks
        d = beta - beta_prev
        gd = g - g_prev
        dg = float(d @ gd)
        dd = float(d @ d)
        gg = float(gd @ gd)
        if dg > 0.0 and dd > 0.0 and gg > 0.0:
            eta = min(dd / dg, dg / gg, MAX_BB_STEP)
        else:
            eta = 1.0
            fallbacks += 1
        beta_prev, g_prev = beta, g
        beta = beta - eta * g
        iterations += 1


def huber_warm_start(data, tol=1e-4, max_iter=5000):
    """Huber regression by BB gradient descent, used to initialize the fit.

    Starts at zero; the robustification width is gamma = 1.35 * MAD of the
    current residuals, refreshed every iteration and floored at
    1e-8 * (1 + median|y|) so degenerate residuals keep the clipped-identity
    score well defined.  Expects a standardized design.
    """
    y, X = data.y, data.X
    n = data.n
    gamma_floor = 1e-8 * (1.0 + float(np.median(np.abs(y))))

    def grad(resid, gamma):
        return -(X.T @ np.clip(resid, -gamma, gamma)) / n

    beta = np.zeros(data.p)
    r = y.copy()
    gamma = max(1.35 * mad(r), gamma_floor)
    g = grad(r, gamma)
    if float(np.linalg.norm(g)) <= tol:
        return beta
    beta_prev, r_prev = beta, r
    beta = beta - g
    iterations = 1
    while True:
        r = y - X @ beta
        gamma = max(1.35 * mad(r), gamma_floor)
        g = grad(r, gamma)
        _check_finite(g, iterations)
        if float(np.linalg.norm(g)) <= tol or iterations >= max_iter:
            return beta
        g_old = grad(r_prev, gamma)
        d = beta - beta_prev
        gd = g - g_old
        dg = float(d @ gd)
        dd = float(d @ d)
        gg = float(gd @ gd)
        if dg > 0.0 and dd > 0.0 and gg > 0.0:
            eta = min(dd / dg, dg / gg, MAX_BB_STEP)
        else:
            eta = 1.0
        beta_prev, r_prev = beta, r
        beta = beta - eta * g
        iterations += 1


def _standardized_view(data, required):
    """Standardize if possible; with required=False a degenerate design
    falls back to the raw data (the warm start then runs unstandardized)."""
    if data.p == 1:
        return data, None
    try:
        return standardize(data)
    except Exception:
        if required:
            raise
        return data, None


def fit_conquer(data, cfg, init=None, weights=None):
    """Minimize the smoothed quantile objective by BB gradient descent.

    Optimization runs on the standardized design when ``cfg.standardize``
    (the returned coefficients are always back on the original scale), and a
    converged fit satisfies the first-order condition on the data as given:
    ``grad_norm`` is the gradient norm of the original-scale objective.
    Hitting ``max_iter`` reports ``converged=False`` rather than raising.

    Parameters
    ----------
    data : Dataset
    cfg : FitConfig
    init : array, optional
        Original-scale starting point; defaults to the Huber warm start
        computed on the standardized design.
    weights : array, optional
        Non-negative per-observation weights (used by the multiplier
        bootstrap); the objective stays (1/n) sum w_i l_h(r_i).
    """
    h = cfg.resolve_bandwidth(data.n, data.p)
    w = _weights_vector(weights, data.n)

    sdata, transform = _standardized_view(data, required=cfg.standardize)
    if cfg.standardize and transform is not None:
        work = sdata
    else:
        work = data

    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (data.p,):
            raise DimensionMismatchError(f"init has shape {init.shape}, expected ({data.p},)")
        beta0 = transform.standardize_coefficients(init) if work is sdata else init
    else:
        warm = huber_warm_start(sdata, tol=cfg.tol, max_iter=cfg.max_iter)
        beta0 = warm if work is sdata else (
            destandardize_coefficients(warm, transform) if transform is not None else warm
        )

    y, X = work.y, work.X
    n = data.n
    wfac = None if w is None else w / n

    def grad_fn(beta):
        r = y - X @ beta
        s = _k.kernel_cdf(cfg.kernel, -r / h) - cfg.tau
        if wfac is None:
            return X.T @ s / n
        return X.T @ (s * wfac)

    if work is sdata and transform is not None:
        X_orig = data.X

        def extra_ok(beta):
            r = y - X @ beta
            s = _k.kernel_cdf(cfg.kernel, -r / h) - cfg.tau
            if wfac is None:
                g = X_orig.T @ s / n
            else:
                g = X_orig.T @ (s * wfac)
            return float(np.linalg.norm(g)) <= cfg.tol
    else:
        extra_ok = None

    beta_w, iterations, gnorm, converged, fallbacks = _bb_minimize(
        grad_fn, beta0, cfg.tol, cfg.max_iter, extra_ok=extra_ok
    )

    if work is sdata and transform is not None:
        beta = destandardize_coefficients(beta_w, transform)
    else:
        beta = beta_w
    grad_norm = float(np.linalg.norm(smoothed_gradient(data, beta, cfg.tau, cfg.kernel, h, weights=w)))
    converged = converged and grad_norm <= cfg.tol
    loss = smoothed_loss(data, beta, cfg.tau, cfg.kernel, h, weights=w)
    return FitResult(
        beta=beta,
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        h_used=h,
        loss=loss,
        fallback_steps=fallbacks,
    )


def horowitz_loss(data, beta, tau, h, weights=None):
    """Indicator-smoothed quantile objective (1/n) sum u {tau - K̄(-u/h)}; Gaussian kernel."""
    _k._validate_tau(tau)
    _k._validate_bandwidth(h)
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    vals = r * (tau - _k.kernel_cdf("gaussian", -r / h))
    w = _weights_vector(weights, data.n)
    if w is not None:
        vals = vals * w
    return float(np.mean(vals))


def horowitz_gradient(data, beta, tau, h):
    """Gradient of the indicator-smoothed objective (non-convex baseline)."""
    r = data.y - data.X @ np.asarray(beta, dtype=float)
    s = _k.kernel_cdf("gaussian", -r / h) - tau + (r / h) * _k.kernel_density("gaussian", r / h)
    return data.X.T @ s / data.n


# Backtracking line-search parameters for the non-convex baseline.
_BACKTRACK_SLOPE = 0.3
_BACKTRACK_SHRINK = 0.8


def fit_horowitz(data, cfg, seed=0):
    """Gradient descent with backtracking on the non-convex smoothed objective.

    Starts from a seeded random point and stops at a stationary point
    (gradient norm <= cfg.tol); the result is flagged ``convex=False``
    because only stationarity, not global optimality, is guaranteed.
    """
    if cfg.kernel != "gaussian":
        raise ValueError("the Horowitz baseline is implemented for the Gaussian kernel only")
    h = cfg.resolve_bandwidth(data.n, data.p)
    sdata, transform = _standardized_view(data, required=cfg.standardize)
    work = sdata if (cfg.standardize and transform is not None) else data
    y, X = work.y, work.X

    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(data.p)

    def loss_at(b):
        r = y - X @ b
        return float(np.mean(r * (cfg.tau - _k.kernel_cdf("gaussian", -r / h))))

    def grad_at(b):
        r = y - X @ b
        s = _k.kernel_cdf("gaussian", -r / h) - cfg.tau + (r / h) * _k.kernel_density("gaussian", r / h)
        return X.T @ s / data.n

    loss = loss_at(beta)
    converged = False
    iterations = 0
    while iterations < cfg.max_iter:
        g = grad_at(beta)
        _check_finite(g, iterations)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.tol:
            converged = True
            break
        step = 1.0
        target = loss - _BACKTRACK_SLOPE * step * gnorm ** 2
        while loss_at(beta - step * g) > target and step > 1e-14:
            step *= _BACKTRACK_SHRINK
            target = loss - _BACKTRACK_SLOPE * step * gnorm ** 2
        beta = beta - step * g
        loss = loss_at(beta)
        iterations += 1

    if work is sdata and transform is not None:
        beta = destandardize_coefficients(beta, transform)
    grad_norm = float(np.linalg.norm(horowitz_gradient(data, beta, cfg.tau, h)))
    return FitResult(
        beta=beta,
        iterations=iterations,
        grad_norm=grad_norm,
        converged=converged,
        h_used=h,
        loss=horowitz_loss(data, beta, cfg.tau, h),
        method="horowitz",
        convex=False,
    )
