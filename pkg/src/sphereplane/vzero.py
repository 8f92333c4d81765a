"""
sphereplane.vzero

Statistics of the contact potential V0 measured at many sphere-plane
distances: a weighted test of constancy, the error-bar inflation needed to make
that hypothesis acceptable, and constant / linear / sinusoidal trend fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .fitting import DataSeries, FitOptions, FitResult, constant_fit, weighted_nls_fit


@dataclass(frozen=True)
class VZeroSeries:
    """Distances (m), minimising potentials (V) and their 1-sigma errors (V)."""

    distance: np.ndarray
    v0: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.sigma is None:
            raise ValueError("a V0 series requires sigma")
        data = DataSeries(self.distance, self.v0, self.sigma)
        if len(data) < 2:
            raise ValueError("a V0 series needs at least 2 points")
        object.__setattr__(self, "distance", data.x)
        object.__setattr__(self, "v0", data.y)
        object.__setattr__(self, "sigma", data.sigma)

    def __len__(self) -> int:
        return self.distance.size

    def as_data(self) -> DataSeries:
        return DataSeries(self.distance, self.v0, self.sigma)


@dataclass(frozen=True)
class ConstancyReport:
    weighted_mean: float
    mean_std_error: float
    unweighted_mean: float
    chi2: float
    dof: int
    chi2_red: float
    survival_probability: float
    sample_std: float
    mean_sigma: float
    inflation_factor: float
    inflated_mean_sigma: float
    rel_err_before: float
    rel_err_after: float
    degenerate_inflation: bool

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else (int(v) if k == "dof" else float(v)))
                for k, v in self.__dict__.items()}


def _relative(sig: float, mean: float) -> float:
    return 100.0 * sig / abs(mean) if mean != 0.0 else math.nan


def constancy_test(series: VZeroSeries) -> ConstancyReport:
    """Weighted constant fit of V0 and the derived scatter / inflation figures.

    ``sample_std`` uses the N-1 denominator about the unweighted mean. The
    inflation factor is ``sqrt(chi2_red)``; when every V0 is identical it is 0
    and ``degenerate_inflation`` is set.
    """
    fit = constant_fit(series.as_data())
    mean = float(fit.params[0])
    factor = math.sqrt(fit.chi2_red)
    mean_sigma = float(np.mean(series.sigma))
    inflated = factor * mean_sigma
    return ConstancyReport(
        weighted_mean=mean,
        mean_std_error=float(fit.std_errors[0]),
        unweighted_mean=float(np.mean(series.v0)),
        chi2=fit.chi2,
        dof=fit.dof,
        chi2_red=fit.chi2_red,
        survival_probability=fit.survival_probability,
        sample_std=float(np.std(series.v0, ddof=1)),
        mean_sigma=mean_sigma,
        inflation_factor=factor,
        inflated_mean_sigma=inflated,
        rel_err_before=_relative(mean_sigma, mean),
        rel_err_after=_relative(inflated, mean),
        degenerate_inflation=factor == 0.0,
    )


def relative_errors(report: ConstancyReport) -> tuple:
    """Average error bar relative to ``|weighted_mean|`` before and after inflation, in percent."""
    if report.weighted_mean == 0.0:
        raise DomainError("relative errors are undefined for a zero mean")
    m = abs(report.weighted_mean)
    return 100.0 * report.mean_sigma / m, 100.0 * report.inflated_mean_sigma / m


class ScatterComparison(NamedTuple):
    sample_std: float
    mean_sigma: float
    ratio: float


def scatter_comparison(series: VZeroSeries) -> ScatterComparison:
    """Observed scatter of V0 against the average quoted error bar."""
    s = float(np.std(series.v0, ddof=1))
    m = float(np.mean(series.sigma))
    return ScatterComparison(s, m, s / m)


def inflate_errors(series: VZeroSeries, factor: float) -> VZeroSeries:
    if not (math.isfinite(factor) and factor > 0.0):
        raise DomainError(f"inflation factor must be > 0, got {factor!r}")
    return VZeroSeries(series.distance, series.v0, series.sigma * factor)


class TrendFits(NamedTuple):
    constant: FitResult
    linear: FitResult
    sinusoid: Optional[FitResult]
    delta_chi2_linear: float
    delta_chi2_sinusoid: float


def _linear(x, th):
    return th[0] + th[1] * x


def _sinusoid(x, th):
    return th[0] + th[1] * np.sin(2.0 * math.pi * x / th[2] + th[3])


def wavelength_bounds(distance: np.ndarray) -> tuple:
    """Allowed sinusoid wavelengths: twice the median spacing to twice the span."""
    d = np.sort(np.asarray(distance, dtype=float))
    span = float(d[-1] - d[0])
    steps = np.diff(d)
    steps = steps[steps > 0.0]
    if span <= 0.0 or steps.size == 0:
        raise ValueError("distances must span a non-zero range")
    return 2.0 * float(np.median(steps)), 2.0 * span


def periodogram(series: VZeroSeries, n_wavelengths: int = 200) -> tuple:
    """Weighted least-squares periodogram on a log grid of allowed wavelengths.

    Returns ``(wavelengths, chi2_reduction, amplitude, phase)`` where each entry
    refers to the best ``c + A sin(2 pi d / wavelength + phase)`` at that
    wavelength.
    """
    lo, hi = wavelength_bounds(series.distance)
    lams = np.geomspace(lo, hi, n_wavelengths)
    w = 1.0 / series.sigma
    yw = series.v0 * w
    chi2_const = constant_fit(series.as_data()).chi2
    gains, amps, phases = [], [], []
    for lam in lams:
        arg = 2.0 * math.pi * series.distance / lam
        basis = np.column_stack([np.ones_like(arg), np.sin(arg), np.cos(arg)]) * w[:, None]
        coef, *_ = np.linalg.lstsq(basis, yw, rcond=None)
        resid = yw - basis @ coef
        gains.append(chi2_const - float(resid @ resid))
        # a sin x + b cos x = A sin(x + phi)
        amps.append(math.hypot(coef[1], coef[2]))
        phases.append(math.atan2(coef[2], coef[1]))
    return lams, np.array(gains), np.array(amps), np.array(phases)


def trend_fits(series: VZeroSeries, options: Optional[FitOptions] = None) -> TrendFits:
    """Constant, linear ``a + b d`` and sinusoidal fits of V0 against distance.

    The sinusoid (parameters ``c, A, wavelength, phase``) is seeded from the
    strongest periodogram peak and needs at least 6 points; below that, or if
    its fit fails to converge, it is still returned (or ``None``) rather than
    raising. Delta-chi2 values are ``chi2(constant) - chi2(alternative)``.
    """
    data = series.as_data()
    const = constant_fit(data)
    mean = float(const.params[0])
    lin = weighted_nls_fit(data, _linear, [mean, 0.0], options=options, names=("a", "b"))
    sin_fit = None
    d_sin = math.nan
    if len(series) >= 6:
        lo, hi = wavelength_bounds(series.distance)
        lams, gains, amps, phases = periodogram(series)
        k = int(np.argmax(gains))
        amp = amps[k] if amps[k] > 0.0 else float(np.mean(series.sigma))
        init = [mean, amp, lams[k], phases[k]]
        bounds = ([-np.inf, -np.inf, lo, -np.inf], [np.inf, np.inf, hi, np.inf])
        sin_fit = weighted_nls_fit(
            data, _sinusoid, init, options=options, bounds=bounds, names=("c", "A", "wavelength", "phase")
        )
        d_sin = const.chi2 - sin_fit.chi2
    return TrendFits(const, lin, sin_fit, const.chi2 - lin.chi2, d_sin)
