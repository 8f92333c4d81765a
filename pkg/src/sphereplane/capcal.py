"""
sphereplane.capcal

Capacitance-calibration workflows. Capacitance is recorded against the PZT
drive voltage and mapped to the gap with

    d = beta * (v0_pzt - v_pzt)

where beta is an independently calibrated actuation coefficient (held fixed)
and v0_pzt, the contact voltage, is fitted together with the model
coefficients. Three models are available:

    ideal     A1 + A2 d + A3 ln(R/d)                       (A1, A2, A3, v0_pzt)
    modified  s * C_geom(d) + A1 + A2 d                    (A1, A2, s, v0_pzt)
    powerlaw  A1 + A2 d + A3 d**p                          (A1, A2, A3, p, v0_pzt)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .fitting import DataSeries, FitOptions, FitResult, unweighted_fit, weighted_nls_fit
from .models import (
    Geometry,
    IdealGeometry,
    ModifiedGeometry,
    local_scaling_exponent,
    modified_geometric_capacitance,
    modified_geometric_derivative,
    theoretical_A3,
)

IDEAL_NAMES = ("A1", "A2", "A3", "v0_pzt")
MODIFIED_NAMES = ("A1", "A2", "s", "v0_pzt")
POWERLAW_NAMES = ("A1", "A2", "A3", "p", "v0_pzt")
DEFAULT_POWERLAW_EXPONENT = 0.3
DEFAULT_APPROX_RANGE = (20e-9, 1e-6)


@dataclass(frozen=True)
class PztMap:
    """``beta`` in m/V, ``v0_pzt`` in V; ``beta_sigma`` is the 1-sigma error of beta."""

    beta: float
    v0_pzt: float
    beta_sigma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not math.isfinite(self.v0_pzt):
            raise ValueError("v0_pzt must be finite")
        if not (math.isfinite(self.beta_sigma) and self.beta_sigma >= 0.0):
            raise ValueError("beta_sigma must be >= 0")


@dataclass(frozen=True)
class CapacitanceSeries:
    """PZT voltages (V), capacitances (F) and optional 1-sigma errors (F)."""

    v_pzt: np.ndarray
    capacitance: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        data = DataSeries(self.v_pzt, self.capacitance, self.sigma)
        object.__setattr__(self, "v_pzt", data.x)
        object.__setattr__(self, "capacitance", data.y)
        object.__setattr__(self, "sigma", data.sigma)

    def __len__(self) -> int:
        return self.v_pzt.size

    @property
    def weighted(self) -> bool:
        return self.sigma is not None

    def as_data(self) -> DataSeries:
        return DataSeries(self.v_pzt, self.capacitance, self.sigma)

    def shifted(self, dv: float) -> "CapacitanceSeries":
        return CapacitanceSeries(self.v_pzt + dv, self.capacitance, self.sigma)


@dataclass(frozen=True)
class PowerLawParams:
    A1: float
    A2: float
    A3: float
    p: float = DEFAULT_POWERLAW_EXPONENT


def distance_map(v_pzt, pzt: PztMap):
    """``beta * (v0_pzt - v_pzt)``; raises :class:`DomainError` unless every gap is positive."""
    v = np.asarray(v_pzt, dtype=float)
    d = pzt.beta * (pzt.v0_pzt - v)
    bad = ~(d > 0.0)
    if np.any(bad):
        worst = float(v[bad].flat[0]) if v.ndim else float(v)
        raise DomainError(
            f"PZT voltage {worst!r} V is not below v0_pzt={pzt.v0_pzt!r} V (gap must be > 0)"
        )
    return float(d) if d.ndim == 0 else d


def _gap(v: np.ndarray, beta: float, v0: float) -> np.ndarray:
    d = beta * (v0 - v)
    if not np.all(d > 0.0):
        raise DomainError(f"v0_pzt={v0!r} V gives a non-positive gap")
    return d


# Model builders return (model, jacobian) closures over fixed geometry and beta.


def ideal_model(geom: IdealGeometry, beta: float) -> Callable:
    def model(v, th):
        d = _gap(v, beta, th[3])
        return th[0] + th[1] * d + th[2] * np.log(geom.R / d)

    return model


def ideal_jacobian(geom: IdealGeometry, beta: float) -> Callable:
    def jac(v, th):
        d = _gap(v, beta, th[3])
        return np.column_stack(
            [np.ones_like(d), d, np.log(geom.R / d), beta * (th[1] - th[2] / d)]
        )

    return jac


def modified_model(geom: ModifiedGeometry, beta: float) -> Callable:
    def model(v, th):
        d = _gap(v, beta, th[3])
        return th[2] * modified_geometric_capacitance(d, geom) + th[0] + th[1] * d

    return model


def modified_jacobian(geom: ModifiedGeometry, beta: float) -> Callable:
    def jac(v, th):
        d = _gap(v, beta, th[3])
        dc = modified_geometric_derivative(d, geom)
        return np.column_stack(
            [
                np.ones_like(d),
                d,
                modified_geometric_capacitance(d, geom),
                beta * (th[2] * dc + th[1]),
            ]
        )

    return jac


def powerlaw_model(beta: float) -> Callable:
    def model(v, th):
        d = _gap(v, beta, th[4])
        return th[0] + th[1] * d + th[2] * d ** th[3]

    return model


def powerlaw_jacobian(beta: float) -> Callable:
    def jac(v, th):
        d = _gap(v, beta, th[4])
        dp = d ** th[3]
        return np.column_stack(
            [
                np.ones_like(d),
                d,
                dp,
                th[2] * dp * np.log(d),
                beta * (th[1] + th[2] * th[3] * dp / d),
            ]
        )

    return jac


def default_v0_init(series: CapacitanceSeries, offset: float = 2.0) -> float:
    return float(np.max(series.v_pzt)) + offset


def _check_init(series: CapacitanceSeries, pzt: PztMap, n_free: int) -> None:
    if not pzt.v0_pzt > float(np.max(series.v_pzt)):
        raise DomainError(
            f"initial v0_pzt={pzt.v0_pzt!r} V must exceed the largest PZT voltage "
            f"{float(np.max(series.v_pzt))!r} V"
        )
    if len(series) < max(5, n_free + 1):
        raise ValueError(f"need at least {max(5, n_free + 1)} points, got {len(series)}")


def _run(series, model, jac, init, fixed, names, options):
    data = series.as_data()
    fitter = weighted_nls_fit if series.weighted else unweighted_fit
    return fitter(data, model, init, fixed, options, jac=jac, names=names)


def fit_ideal(
    series: CapacitanceSeries,
    geom: IdealGeometry,
    map_init: PztMap,
    constrain_A2: bool = True,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Fit ``A1 + A2 d + A3 ln(R/d)`` with v0_pzt free and beta fixed.

    Series without sigma are fitted unweighted. With ``constrain_A2`` the
    linear coefficient is frozen at zero.
    """
    fixed = [False, constrain_A2, False, False]
    _check_init(series, map_init, 4 - sum(fixed))
    a3 = theoretical_A3(geom)
    d = distance_map(series.v_pzt, map_init)
    init = [float(np.mean(series.capacitance - a3 * np.log(geom.R / d))), 0.0, a3, map_init.v0_pzt]
    return _run(
        series,
        ideal_model(geom, map_init.beta),
        ideal_jacobian(geom, map_init.beta),
        init,
        fixed,
        IDEAL_NAMES,
        options,
    )


def fit_modified(
    series: CapacitanceSeries,
    geom: ModifiedGeometry,
    map_init: PztMap,
    constrain_A2: bool = True,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Fit ``s * C_geom(d) + A1 + A2 d`` with the geometry lengths held fixed.

    ``|1 - |s||`` measures how far the expected distance-dependence
    coefficient is from what the data want (see :func:`coefficient_discrepancy`).
    A1 and s start from the linear least-squares solution at the initial
    v0_pzt, so data recorded with either sign convention are handled.
    """
    fixed = [False, constrain_A2, False, False]
    _check_init(series, map_init, 4 - sum(fixed))
    d = distance_map(series.v_pzt, map_init)
    basis = np.column_stack([np.ones_like(d), modified_geometric_capacitance(d, geom)])
    a1, s = np.linalg.lstsq(basis, series.capacitance, rcond=None)[0]
    init = [float(a1), 0.0, float(s), map_init.v0_pzt]
    return _run(
        series,
        modified_model(geom, map_init.beta),
        modified_jacobian(geom, map_init.beta),
        init,
        fixed,
        MODIFIED_NAMES,
        options,
    )


def fit_powerlaw(
    series: CapacitanceSeries,
    map_init: PztMap,
    p_fixed: Optional[float] = None,
    constrain_A2: bool = True,
    p_init: float = DEFAULT_POWERLAW_EXPONENT,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Fit ``A1 + A2 d + A3 d**p``; ``p`` is frozen when ``p_fixed`` is given.

    ``A3`` carries units of F/m**p. Internally the power term is written as
    ``B (d/d_ref)**p`` with ``d_ref`` the geometric-mean initial gap, which
    removes most of the A3-p correlation; the result is transformed back.
    """
    p0 = p_init if p_fixed is None else float(p_fixed)
    if not math.isfinite(p0):
        raise ValueError("exponent must be finite")
    fixed = [False, constrain_A2, False, p_fixed is not None, False]
    _check_init(series, map_init, 5 - sum(fixed))
    d = distance_map(series.v_pzt, map_init)
    d_ref = float(np.exp(np.mean(np.log(d))))
    beta = map_init.beta

    def model(v, th):
        x = _gap(v, beta, th[4])
        return th[0] + th[1] * x + th[2] * (x / d_ref) ** th[3]

    def jac(v, th):
        x = _gap(v, beta, th[4])
        u = (x / d_ref) ** th[3]
        return np.column_stack(
            [np.ones_like(x), x, u, th[2] * u * np.log(x / d_ref), beta * (th[1] + th[2] * th[3] * u / x)]
        )

    basis = np.column_stack([np.ones_like(d), (d / d_ref) ** p0])
    a1, b = np.linalg.lstsq(basis, series.capacitance, rcond=None)[0]
    init = [float(a1), 0.0, float(b), p0, map_init.v0_pzt]
    fit = _run(series, model, jac, init, fixed, POWERLAW_NAMES, options)
    return _unscale_powerlaw(fit, d_ref)


def _unscale_powerlaw(fit: FitResult, d_ref: float) -> FitResult:
    b, p = fit.params[2], fit.params[3]
    k = d_ref ** (-p)
    params = fit.params.copy()
    params[2] = b * k
    t = np.eye(params.size)
    t[2, 2] = k
    t[2, 3] = -b * k * math.log(d_ref)
    cov = t @ fit.covariance @ t.T
    return replace(
        fit,
        params=params,
        covariance=cov,
        std_errors=np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else fit.std_errors,
    )


def model_curve(kind: str, fit: FitResult, v_pzt, beta: float, geom: Optional[Geometry] = None):
    """Evaluate the fitted model ``kind`` at PZT voltages ``v_pzt``."""
    v = np.asarray(v_pzt, dtype=float)
    if kind == "ideal":
        return ideal_model(geom, beta)(v, fit.params)
    if kind == "modified":
        return modified_model(geom, beta)(v, fit.params)
    if kind == "powerlaw":
        return powerlaw_model(beta)(v, fit.params)
    raise ValueError(f"unknown model {kind!r}")


def residual_table(kind: str, fit: FitResult, series: CapacitanceSeries, beta: float, geom=None) -> dict:
    """Columns for plotting: voltage, gap, data, fit, raw and sigma-normalised residuals."""
    fitted = model_curve(kind, fit, series.v_pzt, beta, geom)
    resid = series.capacitance - fitted
    norm = resid / series.sigma if series.sigma is not None else np.full(resid.shape, np.nan)
    v0 = fit.value("v0_pzt")
    return {
        "v_pzt": series.v_pzt,
        "distance": beta * (v0 - series.v_pzt),
        "capacitance": series.capacitance,
        "fitted": fitted,
        "residual": resid,
        "normalized_residual": norm,
    }


def coefficient_discrepancy(kind: str, fit: FitResult, geom: Optional[IdealGeometry] = None) -> float:
    """Fractional departure of the fitted distance coefficient from expectation.

    ideal: ``|A3 / (-2 pi eps0 R) - 1|``; modified: ``|1 - |s||`` (the sign of
    the measured capacitance relative to the geometric term is a convention
    of the bridge and is not scored).
    """
    if kind == "ideal":
        return abs(fit.value("A3") / theoretical_A3(geom) - 1.0)
    if kind == "modified":
        return abs(1.0 - abs(fit.value("s")))
    raise ValueError(f"no expected coefficient for model {kind!r}")


def propagate_beta_uncertainty(
    fitter: Callable[[PztMap], FitResult],
    pzt: PztMap,
    base: Optional[FitResult] = None,
) -> FitResult:
    """Add the contribution of the beta uncertainty to a fit's covariance.

    ``fitter(pzt)`` refits the same data for a given map. The sensitivity of
    every parameter to beta is taken from a central difference of refits at
    ``beta +/- beta_sigma`` and added as ``beta_sigma**2 * g g^T``.
    """
    base = base if base is not None else fitter(pzt)
    if pzt.beta_sigma == 0.0:
        return base
    up = fitter(replace(pzt, beta=pzt.beta + pzt.beta_sigma))
    down = fitter(replace(pzt, beta=pzt.beta - pzt.beta_sigma))
    grad_times_sigma = 0.5 * (up.params - down.params)
    cov = base.covariance + np.outer(grad_times_sigma, grad_times_sigma)
    converged = base.converged and up.converged and down.converged
    message = base.message if converged else "beta-shifted refit did not converge; " + base.message
    return replace(
        base,
        covariance=cov,
        std_errors=np.sqrt(np.clip(np.diag(cov), 0.0, None)),
        converged=converged,
        message=message,
    )


class ExponentRow(NamedTuple):
    distance: float
    exponent_c2: float
    exponent_kel: float


def exponent_report(geom: Geometry, d_range=DEFAULT_APPROX_RANGE, n_points: int = 25, method: str = "analytic") -> list:
    """Local scaling exponents of C'' and k_el on a log-spaced distance grid."""
    d_min, d_max = (float(v) for v in d_range)
    if not 0.0 < d_min < d_max:
        raise ValueError("distance range must satisfy 0 < d_min < d_max")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    rows = []
    for d in np.geomspace(d_min, d_max, n_points):
        e_c2 = local_scaling_exponent(geom, d, "capacitance_second_derivative", method)
        e_kel = local_scaling_exponent(geom, d, "curvature_coefficient", method)
        rows.append(ExponentRow(float(d), e_c2, e_kel))
    return rows
