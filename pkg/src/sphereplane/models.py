"""
sphereplane.models

Closed-form sphere-plane capacitance models and the electrostatic curvature
coefficient derived from them.

  ideal:     C(d) = A1 + A2 d + A3 ln(R/d),        A3_theory = -2 pi eps0 R
  modified:  C(d) = 2 pi eps0 [ R_CD ln(R_CD/d)
                                + (R_AB - R_CD) ln((R_AB - R_CD)/(d + h))
                                - (R_AB - R) ln((R_AB - R)/(d + h + H)) ] + A1 + A2 d
  k_el(d)  = C''(d) / (8 pi^2 m_eff)

All quantities are SI. Functions accept scalars or arrays of distances and
return a float for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class PhysicalConstants:
    epsilon0: float = 8.8541878128e-12  # F/m, CODATA 2018

    def __post_init__(self):
        if not self.epsilon0 > 0.0:
            raise ValueError("epsilon0 must be > 0")


CONSTANTS = PhysicalConstants()
EPSILON0 = CONSTANTS.epsilon0
TWO_PI_EPS0 = 2.0 * math.pi * EPSILON0


@dataclass(frozen=True)
class IdealGeometry:
    """Sphere with a single radius of curvature ``R`` (m)."""

    R: float

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0.0):
            raise ValueError(f"sphere radius R must be > 0, got {self.R!r}")


@dataclass(frozen=True)
class ModifiedGeometry:
    """Two-curvature sphere: outer radius ``R_AB``, near-contact radius ``R_CD``,
    step height ``H`` and offset ``h`` on top of the nominal radius ``R``.

    Equalities ``R_AB == R`` and ``R_AB == R_CD`` are accepted; they switch off
    the corresponding terms and reduce the model to the single-sphere form.
    """

    R: float
    R_AB: float
    R_CD: float
    H: float
    h: float

    def __post_init__(self):
        for name in ("R", "R_AB", "R_CD", "H", "h"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.R_AB < self.R:
            raise ValueError("R_AB must be >= R")
        if self.R_AB < self.R_CD:
            raise ValueError("R_AB must be >= R_CD")

    @classmethod
    def nominal(cls) -> "ModifiedGeometry":
        """Parameters proposed to reproduce the anomalous k_el scaling."""
        return cls(R=30.9e-3, R_AB=49.4e-3, R_CD=30e-6, H=250e-9, h=8e-9)


@dataclass(frozen=True)
class AffineNuisance:
    """Offset ``A1`` (F) and slope ``A2`` (F/m) added to every capacitance model."""

    A1: float = 0.0
    A2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.A1) and math.isfinite(self.A2)):
            raise ValueError("A1 and A2 must be finite")


@dataclass(frozen=True)
class EffectiveMass:
    m_eff: float

    def __post_init__(self):
        if not (math.isfinite(self.m_eff) and self.m_eff > 0.0):
            raise ValueError(f"m_eff must be > 0, got {self.m_eff!r}")


Geometry = Union[IdealGeometry, ModifiedGeometry]


def _distances(d: ArrayLike) -> np.ndarray:
    arr = np.asarray(d, dtype=float)
    bad = ~(arr > 0.0)
    if np.any(bad):
        first = arr[bad].flat[0] if arr.ndim else float(arr)
        raise DomainError(f"distance must be > 0, got {first!r}")
    return arr


def _out(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


def _xlog(a: float, x: np.ndarray) -> np.ndarray:
    # a*ln(a/x) with 0*ln(0/x) = 0
    if a == 0.0:
        return np.zeros_like(x)
    return a * np.log(a / x)


def theoretical_A3(geom: IdealGeometry) -> float:
    """Expected log coefficient of the ideal model, ``-2 pi eps0 R``."""
    return -TWO_PI_EPS0 * geom.R


def ideal_capacitance(d: ArrayLike, geom: IdealGeometry, nuis: AffineNuisance, A3: float):
    """``A1 + A2 d + A3 ln(R/d)``."""
    x = _distances(d)
    return _out(nuis.A1 + nuis.A2 * x + A3 * np.log(geom.R / x))


def modified_geometric_capacitance(d: ArrayLike, geom: ModifiedGeometry):
    """The bracketed two-curvature expression times ``2 pi eps0`` (no affine part)."""
    x = _distances(d)
    bracket = (
        _xlog(geom.R_CD, x)
        + _xlog(geom.R_AB - geom.R_CD, x + geom.h)
        - _xlog(geom.R_AB - geom.R, x + geom.h + geom.H)
    )
    return _out(TWO_PI_EPS0 * bracket)


def modified_capacitance(d: ArrayLike, geom: ModifiedGeometry, nuis: AffineNuisance):
    x = _distances(d)
    return _out(modified_geometric_capacitance(x, geom) + nuis.A1 + nuis.A2 * x)


def modified_geometric_derivative(d: ArrayLike, geom: ModifiedGeometry):
    """First distance derivative of :func:`modified_geometric_capacitance`."""
    x = _distances(d)
    val = -(
        geom.R_CD / x
        + (geom.R_AB - geom.R_CD) / (x + geom.h)
        - (geom.R_AB - geom.R) / (x + geom.h + geom.H)
    )
    return _out(TWO_PI_EPS0 * val)


def capacitance_second_derivative(d: ArrayLike, model: Geometry):
    """C''(d) of the geometric term.

    For the ideal sphere this is ``2 pi eps0 R / d**2``, i.e. the magnitude of
    the log coefficient is used so that the curvature is positive.
    """
    x = _distances(d)
    if isinstance(model, IdealGeometry):
        return _out(TWO_PI_EPS0 * model.R / x**2)
    if isinstance(model, ModifiedGeometry):
        val = (
            model.R_CD / x**2
            + (model.R_AB - model.R_CD) / (x + model.h) ** 2
            - (model.R_AB - model.R) / (x + model.h + model.H) ** 2
        )
        return _out(TWO_PI_EPS0 * val)
    raise TypeError(f"unsupported geometry {type(model).__name__}")


def capacitance_third_derivative(d: ArrayLike, model: Geometry):
    x = _distances(d)
    if isinstance(model, IdealGeometry):
        return _out(-2.0 * TWO_PI_EPS0 * model.R / x**3)
    if isinstance(model, ModifiedGeometry):
        val = (
            model.R_CD / x**3
            + (model.R_AB - model.R_CD) / (x + model.h) ** 3
            - (model.R_AB - model.R) / (x + model.h + model.H) ** 3
        )
        return _out(-2.0 * TWO_PI_EPS0 * val)
    raise TypeError(f"unsupported geometry {type(model).__name__}")


def _mass(m) -> float:
    if isinstance(m, EffectiveMass):
        return m.m_eff
    return EffectiveMass(float(m)).m_eff


def curvature_coefficient(d: ArrayLike, model: Geometry, m):
    """Electrostatic curvature coefficient ``C''/(8 pi^2 m_eff)``.

    ``m`` is an :class:`EffectiveMass` or a positive float in kilograms.
    """
    c2 = capacitance_second_derivative(d, model)
    return c2 / (8.0 * math.pi**2 * _mass(m))


QUANTITIES = ("capacitance_second_derivative", "curvature_coefficient")


def local_scaling_exponent(
    model: Geometry,
    d: float,
    quantity: str = "capacitance_second_derivative",
    method: str = "analytic",
    rel_step: float = 1e-3,
) -> float:
    """Logarithmic slope ``d f'(d) / f(d)`` of C'' or k_el at distance ``d``.

    k_el differs from C'' by a distance-independent factor, so both quantities
    share one exponent; ``quantity`` is validated but does not change the value.

    Parameters
    ----------
    method : {"analytic", "finite_difference"}
        ``"finite_difference"`` uses a centred difference of ``ln f`` against
        ``ln d`` at relative step ``rel_step``.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    x = float(_distances(float(d)))
    f = capacitance_second_derivative(x, model)
    if not f > 0.0:
        raise DomainError(f"C''({x!r}) = {f!r} is not positive; exponent undefined")
    if method == "analytic":
        if isinstance(model, IdealGeometry):
            return -2.0
        return x * capacitance_third_derivative(x, model) / f
    if method == "finite_difference":
        up, down = x * (1.0 + rel_step), x * (1.0 - rel_step)
        f_up = capacitance_second_derivative(up, model)
        f_down = capacitance_second_derivative(down, model)
        if not (f_up > 0.0 and f_down > 0.0):
            raise DomainError(f"C'' is not positive around d={x!r}")
        return (math.log(f_up) - math.log(f_down)) / (math.log1p(rel_step) - math.log1p(-rel_step))
    raise ValueError(f"unknown method {method!r}")
