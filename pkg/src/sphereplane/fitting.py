"""
sphereplane.fitting

Weighted nonlinear least squares by damped Gauss-Newton (Levenberg-Marquardt
with multiplicative damping), plus the closed-form weighted constant fit and
reduced-chi-square model comparison.

A model is a vectorised callable ``model(x, theta) -> y``. An optional
``jac(x, theta) -> (N, P)`` array replaces the forward-difference Jacobian.
Parameters can be frozen with a boolean ``fixed_mask``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, NonFiniteModelError

Model = Callable[[np.ndarray, np.ndarray], np.ndarray]
Jacobian = Callable[[np.ndarray, np.ndarray], np.ndarray]

# residual norm (relative to the data norm) treated as an exact fit
_EXACT_FIT_RTOL = 1e-10
# condition number of the scaled normal matrix above which it counts as singular
_MAX_CONDITION = 1e14


@dataclass(frozen=True)
class DataSeries:
    """Abscissae ``x``, measurements ``y`` and 1-sigma errors ``sigma``.

    ``sigma`` may be ``None`` for data without uncertainties; such a series can
    only be fitted with :func:`unweighted_fit`.
    """

    x: np.ndarray
    y: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.size < 1:
            raise ValueError("a data series needs at least one point")
        if x.shape != y.shape:
            raise ValueError("x and y must have the same length")
        if not np.all(np.isfinite(x)):
            raise ValueError("x values must be finite")
        if not np.all(np.isfinite(y)):
            raise ValueError("y values must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.sigma is not None:
            s = np.array(self.sigma, dtype=float).reshape(-1)
            if s.shape != x.shape:
                raise ValueError("sigma must have the same length as x")
            if not np.all(np.isfinite(s) & (s > 0.0)):
                raise ValueError("all sigma must be finite and > 0")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "DataSeries":
        """Build from ``(x, y)`` or ``(x, y, sigma)`` tuples."""
        rows = [tuple(p) for p in points]
        if not rows:
            raise ValueError("a data series needs at least one point")
        x = [r[0] for r in rows]
        y = [r[1] for r in rows]
        sigma = [r[2] for r in rows] if all(len(r) > 2 for r in rows) else None
        return cls(x, y, sigma)

    def __len__(self) -> int:
        return self.x.size

    @property
    def weighted(self) -> bool:
        return self.sigma is not None

    @property
    def points(self) -> list:
        if self.sigma is None:
            return list(zip(self.x.tolist(), self.y.tolist()))
        return list(zip(self.x.tolist(), self.y.tolist(), self.sigma.tolist()))


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    rel_tol: float = 1e-10
    lambda_init: float = 1e-3
    lambda_factor: float = 10.0
    lambda_max: float = 1e16
    fd_rel_step: float = 1e-7
    fd_abs_step: float = 1e-12


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    std_errors: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    chi2_red: float
    converged: bool
    iterations: int
    names: tuple = ()
    free: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    message: str = ""
    chi2_trace: tuple = ()
    residual_scaled: bool = False

    def index(self, name: str) -> int:
        return self.names.index(name)

    def value(self, name: str) -> float:
        return float(self.params[self.index(name)])

    def error(self, name: str) -> float:
        return float(self.std_errors[self.index(name)])

    @property
    def survival_probability(self) -> float:
        """P(chi2 >= observed) for ``dof`` degrees of freedom."""
        if self.residual_scaled:
            return float("nan")
        return float(stats.chi2.sf(self.chi2, self.dof))

    def to_dict(self) -> dict:
        names = self.names or tuple(f"p{i}" for i in range(self.params.size))
        return {
            "parameters": {
                n: {
                    "value": float(v),
                    "std_error": float(e),
                    "fixed": not bool(f),
                }
                for n, v, e, f in zip(names, self.params, self.std_errors, self.free)
            },
            "covariance": [[float(c) for c in row] for row in self.covariance],
            "chi2": float(self.chi2),
            "dof": int(self.dof),
            "chi2_red": float(self.chi2_red),
            "residual_scaled": bool(self.residual_scaled),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "message": self.message,
        }


@dataclass(frozen=True)
class ModelComparison:
    delta_chi2: float
    chi2_red_ratio: float
    preferred: str


def _evaluate(model: Model, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    f = np.asarray(model(x, theta), dtype=float)
    if f.shape != x.shape:
        f = np.broadcast_to(f, x.shape).astype(float)
    return f


def _check_finite(f: np.ndarray, x: np.ndarray, theta: np.ndarray) -> None:
    bad = ~np.isfinite(f)
    if np.any(bad):
        raise NonFiniteModelError(float(x[np.argmax(bad)]), theta)


def _forward_jacobian(model, x, theta, f0, free, opts: FitOptions) -> np.ndarray:
    jac = np.zeros((x.size, theta.size))
    for i in np.flatnonzero(free):
        step = max(opts.fd_rel_step * abs(theta[i]), opts.fd_abs_step)
        shifted = theta.copy()
        shifted[i] += step
        # recompute the step actually represented in floating point
        step = shifted[i] - theta[i]
        jac[:, i] = (_evaluate(model, x, shifted) - f0) / step
    return jac


def _trial(model, x, y, w, theta):
    """chi2 at ``theta`` or ``None`` when the model is undefined there."""
    try:
        f = _evaluate(model, x, theta)
    except (DomainError, FloatingPointError, ZeroDivisionError):
        return None, None, None
    if not np.all(np.isfinite(f)):
        return None, None, None
    r = (y - f) * w
    return float(r @ r), r, f


def _least_squares(
    data: DataSeries,
    model: Model,
    init,
    fixed_mask,
    options: Optional[FitOptions],
    jac: Optional[Jacobian],
    bounds,
    names,
    weights: np.ndarray,
) -> tuple:
    opts = options or FitOptions()
    x, y, w = data.x, data.y, weights
    theta = np.array(init, dtype=float).reshape(-1)
    n_par = theta.size
    fixed = np.zeros(n_par, dtype=bool) if fixed_mask is None else np.array(fixed_mask, dtype=bool)
    if fixed.shape != theta.shape:
        raise ValueError("fixed_mask must match the parameter vector")
    free = ~fixed
    n_free = int(free.sum())
    if n_free < 1:
        raise ValueError("at least one parameter must be free")
    dof = x.size - n_free
    if dof < 1:
        raise ValueError(f"{x.size} points cannot constrain {n_free} free parameters (dof={dof})")
    if bounds is not None:
        lower = np.broadcast_to(np.asarray(bounds[0], dtype=float), theta.shape)
        upper = np.broadcast_to(np.asarray(bounds[1], dtype=float), theta.shape)
        if np.any(theta < lower) or np.any(theta > upper):
            raise ValueError("initial parameters lie outside the bounds")
    else:
        lower = upper = None
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(n_par))
    if len(names) != n_par:
        raise ValueError("names must match the parameter vector")

    f = _evaluate(model, x, theta)
    _check_finite(f, x, theta)
    r = (y - f) * w
    chi2 = float(r @ r)
    data_norm2 = float((y * w) @ (y * w))
    trace = [chi2]
    lam = opts.lambda_init
    converged = False
    message = "maximum iterations reached"
    iterations = 0

    def jacobian_at(th, f_th):
        if jac is not None:
            j = np.array(jac(x, th), dtype=float)
        else:
            j = _forward_jacobian(model, x, th, f_th, free, opts)
        if not np.all(np.isfinite(j[:, free])):
            raise NonFiniteModelError(float(x[np.argmax(~np.isfinite(j[:, free]).any(axis=1))]), th)
        return j[:, free] * w[:, None]

    while iterations < opts.max_iter:
        if chi2 == 0.0:
            converged, message = True, "exact fit"
            break
        J = jacobian_at(theta, f)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        if np.any(diag <= 0.0):
            dead = [names[i] for i, d in zip(np.flatnonzero(free), diag) if d <= 0.0]
            message = f"model is insensitive to parameters {dead}"
            break
        scale = 1.0 / np.sqrt(diag)
        As = A * np.outer(scale, scale)
        gs = g * scale
        iterations += 1
        accepted = False
        while lam <= opts.lambda_max:
            try:
                ds = np.linalg.solve(As + lam * np.eye(n_free), gs)
            except np.linalg.LinAlgError:
                lam *= opts.lambda_factor
                continue
            step = ds * scale
            trial = theta.copy()
            trial[free] += step
            if lower is not None:
                trial = np.clip(trial, lower, upper)
            chi2_t, r_t, f_t = _trial(model, x, y, w, trial)
            if chi2_t is not None and chi2_t <= chi2:
                accepted = True
                break
            lam *= opts.lambda_factor
        if not accepted:
            if chi2 <= (_EXACT_FIT_RTOL**2) * data_norm2:
                converged, message = True, "exact fit to rounding"
            else:
                message = "damping saturated without reducing chi2"
            break
        actual = trial[free] - theta[free]
        decrease = (chi2 - chi2_t) / chi2
        step_norm = float(np.linalg.norm(actual / scale))
        theta_norm = float(np.linalg.norm(theta[free] / scale))
        theta, r, chi2, f = trial, r_t, chi2_t, f_t
        trace.append(chi2)
        lam = max(lam / opts.lambda_factor, 1e-15)
        if decrease < opts.rel_tol:
            converged, message = True, "relative chi2 decrease below tolerance"
            break
        if step_norm < opts.rel_tol * theta_norm:
            converged, message = True, "step below tolerance"
            break

    # re-evaluate exactly at the solution for the covariance
    f = _evaluate(model, x, theta)
    _check_finite(f, x, theta)
    J = jacobian_at(theta, f)
    A = J.T @ J
    cov = np.full((n_par, n_par), np.nan)
    diag = np.diag(A)
    if np.all(diag > 0.0):
        scale = 1.0 / np.sqrt(diag)
        As = A * np.outer(scale, scale)
        cond = np.linalg.cond(As)
        if np.isfinite(cond) and cond < _MAX_CONDITION:
            inv = np.linalg.inv(As) * np.outer(scale, scale)
            inv = 0.5 * (inv + inv.T)
            cov = np.zeros((n_par, n_par))
            cov[np.ix_(free, free)] = inv
        else:
            converged = False
            message = f"singular normal matrix (condition number {cond:.3g}); " + message
    else:
        converged = False
        if "insensitive" not in message:
            message = "singular normal matrix (zero column); " + message
    return theta, cov, chi2, dof, converged, iterations, names, free, message, tuple(trace)


def _std_errors(cov: np.ndarray) -> np.ndarray:
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else np.full(cov.shape[0], np.nan)


def weighted_nls_fit(
    data: DataSeries,
    model: Model,
    init,
    fixed_mask=None,
    options: Optional[FitOptions] = None,
    *,
    jac: Optional[Jacobian] = None,
    bounds=None,
    names=None,
) -> FitResult:
    """Minimise ``sum(((y - model(x, theta)) / sigma)**2)``.

    Non-convergence (including a singular normal matrix, in which case the
    covariance is all NaN) is reported through ``converged`` and ``message``
    rather than raised.

    Raises
    ------
    ValueError
        If ``data`` has no uncertainties, or there are fewer points than free
        parameters plus one.
    NonFiniteModelError
        If the model is non-finite at the initial or final parameters.
    """
    if data.sigma is None:
        raise ValueError("weighted fit requires sigma; use unweighted_fit")
    theta, cov, chi2, dof, conv, it, names, free, msg, trace = _least_squares(
        data, model, init, fixed_mask, options, jac, bounds, names, 1.0 / data.sigma
    )
    return FitResult(
        params=theta,
        std_errors=_std_errors(cov),
        covariance=cov,
        chi2=chi2,
        dof=dof,
        chi2_red=chi2 / dof,
        converged=conv,
        iterations=it,
        names=names,
        free=free,
        message=msg,
        chi2_trace=trace,
    )


def unweighted_fit(
    data: DataSeries,
    model: Model,
    init,
    fixed_mask=None,
    options: Optional[FitOptions] = None,
    *,
    jac: Optional[Jacobian] = None,
    bounds=None,
    names=None,
) -> FitResult:
    """Ordinary least squares; any ``sigma`` on ``data`` is ignored.

    ``chi2`` holds the residual sum of squares, the covariance is scaled by
    ``RSS/dof`` and ``chi2_red`` is 1 by construction (``residual_scaled``).
    """
    theta, cov, rss, dof, conv, it, names, free, msg, trace = _least_squares(
        data, model, init, fixed_mask, options, jac, bounds, names, np.ones_like(data.x)
    )
    cov = cov * (rss / dof)
    return FitResult(
        params=theta,
        std_errors=_std_errors(cov),
        covariance=cov,
        chi2=rss,
        dof=dof,
        chi2_red=1.0,
        converged=conv,
        iterations=it,
        names=names,
        free=free,
        message=msg,
        chi2_trace=trace,
        residual_scaled=True,
    )


def constant_fit(data: DataSeries) -> FitResult:
    """Inverse-variance weighted mean, in closed form."""
    if data.sigma is None:
        raise ValueError("constant_fit requires sigma")
    n = len(data)
    if n < 2:
        raise ValueError(f"constant fit needs at least 2 points for dof >= 1, got {n}")
    wt = 1.0 / data.sigma**2
    wsum = float(np.sum(wt))
    # clamp away rounding outside [min, max] so identical values give chi2 = 0 exactly
    mean = float(np.clip(np.sum(data.y * wt) / wsum, data.y.min(), data.y.max()))
    chi2 = float(np.sum(((data.y - mean) / data.sigma) ** 2))
    var = 1.0 / wsum
    return FitResult(
        params=np.array([mean]),
        std_errors=np.array([math.sqrt(var)]),
        covariance=np.array([[var]]),
        chi2=chi2,
        dof=n - 1,
        chi2_red=chi2 / (n - 1),
        converged=True,
        iterations=0,
        names=("mean",),
        free=np.array([True]),
        message="closed form",
        chi2_trace=(chi2,),
    )


def compare_models(
    fit_a: FitResult,
    fit_b: FitResult,
    labels: tuple = ("a", "b"),
    tie_tolerance: float = 0.01,
) -> ModelComparison:
    """Compare two fits of the same data by reduced chi2.

    The ratio is ``chi2_red_a / chi2_red_b``; ratios within ``tie_tolerance``
    of one are reported as ``"inconclusive"``.
    """
    delta = fit_a.chi2 - fit_b.chi2
    if fit_b.chi2_red == 0.0:
        ratio = 1.0 if fit_a.chi2_red == 0.0 else math.inf
    else:
        ratio = fit_a.chi2_red / fit_b.chi2_red
    if abs(ratio - 1.0) <= tie_tolerance:
        preferred = "inconclusive"
    elif ratio < 1.0:
        preferred = labels[0]
    else:
        preferred = labels[1]
    return ModelComparison(delta_chi2=float(delta), chi2_red_ratio=float(ratio), preferred=preferred)
