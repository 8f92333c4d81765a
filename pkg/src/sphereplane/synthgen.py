"""
sphereplane.synthgen

Seeded synthetic calibration data.

Random numbers come from an embedded SplitMix64 generator so that a given seed
produces the same stream on every platform:

    state  <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z      <- state
    z      <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9  (mod 2**64)
    z      <- (z XOR (z >> 27)) * 0x94D049BB133111EB  (mod 2**64)
    output    z XOR (z >> 31)

A uniform double in [0, 1) is ``(output >> 11) * 2**-53``. Normal variates use
the Marsaglia polar method: draw ``u`` then ``v`` uniform on (-1, 1) as
``2*U - 1``, reject the pair when ``s = u*u + v*v`` is >= 1 or == 0, otherwise
return ``u*m`` now and ``v*m`` on the next call, with ``m = sqrt(-2 ln(s)/s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .capcal import CapacitanceSeries, PztMap, distance_map, ideal_model, modified_model, powerlaw_model
from .errors import DomainError
from .models import IdealGeometry, ModifiedGeometry
from .vzero import VZeroSeries

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """64-bit-state generator with a cached second polar-method normal."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64
        self._spare: Optional[float] = None

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def normal(self) -> float:
        if self._spare is not None:
            value, self._spare = self._spare, None
            return value
        while True:
            u = 2.0 * self.uniform() - 1.0
            v = 2.0 * self.uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        m = math.sqrt(-2.0 * math.log(s) / s)
        self._spare = v * m
        return u * m

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise with absolute ``sigma`` or, if ``relative``, ``sigma * |signal|``."""

    sigma: float = 0.0
    relative: bool = False
    seed: int = 0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError("noise sigma must be >= 0")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")


CAPACITANCE_MODELS = ("ideal", "modified", "powerlaw")


def gen_capacitance(
    model: str,
    params: dict,
    pzt: PztMap,
    v_grid: Sequence[float],
    noise: NoiseSpec,
    geom=None,
) -> CapacitanceSeries:
    """Sample a capacitance-versus-PZT-voltage run.

    ``params`` holds the fit parameters of the chosen model, with keys
    ``A1, A2, A3`` (ideal), ``A1, A2, s`` (modified) or ``A1, A2, A3, p``
    (powerlaw); missing ``A2`` defaults to 0. ``pzt.v0_pzt`` is the true contact
    voltage. With zero noise the series carries no sigma column.
    """
    v = np.array(v_grid, dtype=float)
    for vi in v:
        try:
            distance_map(float(vi), pzt)
        except DomainError as exc:
            raise DomainError(f"grid voltage {vi!r} V: {exc}") from None
    a2 = params.get("A2", 0.0)
    if model == "ideal":
        geom = geom or IdealGeometry(30.9e-3)
        theta = [params["A1"], a2, params["A3"], pzt.v0_pzt]
        fn = ideal_model(geom, pzt.beta)
    elif model == "modified":
        geom = geom or ModifiedGeometry.nominal()
        theta = [params["A1"], a2, params.get("s", 1.0), pzt.v0_pzt]
        fn = modified_model(geom, pzt.beta)
    elif model == "powerlaw":
        theta = [params["A1"], a2, params["A3"], params["p"], pzt.v0_pzt]
        fn = powerlaw_model(pzt.beta)
    else:
        raise ValueError(f"unknown model {model!r}; expected one of {CAPACITANCE_MODELS}")
    clean = fn(v, np.array(theta, dtype=float))
    if noise.sigma == 0.0:
        return CapacitanceSeries(v, clean, None)
    sigma = noise.sigma * np.abs(clean) if noise.relative else np.full(v.size, noise.sigma)
    if np.any(sigma <= 0.0):
        raise ValueError("relative noise gives sigma = 0 where the signal vanishes")
    rng = SplitMix64(noise.seed)
    return CapacitanceSeries(v, clean + sigma * rng.normals(v.size), sigma)


VZERO_PROFILES = ("constant", "linear", "sinusoid")


def vzero_profile(profile: str, params: dict, d: np.ndarray) -> np.ndarray:
    """Noise-free contact potential: ``c``, ``c + b*d`` or ``c + A sin(2 pi d / wavelength + phase)``."""
    d = np.asarray(d, dtype=float)
    c = params["c"]
    if profile == "constant":
        return np.full(d.shape, float(c))
    if profile == "linear":
        return c + params.get("b", 0.0) * d
    if profile == "sinusoid":
        return c + params["A"] * np.sin(2.0 * math.pi * d / params["wavelength"] + params.get("phase", 0.0))
    raise ValueError(f"unknown profile {profile!r}; expected one of {VZERO_PROFILES}")


def gen_vzero(
    profile: str,
    params: dict,
    d_grid: Sequence[float],
    quoted_sigma: float,
    true_scatter: float,
    seed: int,
) -> VZeroSeries:
    """V0 series whose actual scatter ``true_scatter`` may differ from the quoted error bars."""
    if not quoted_sigma > 0.0:
        raise ValueError("quoted_sigma must be > 0")
    if not true_scatter >= 0.0:
        raise ValueError("true_scatter must be >= 0")
    d = np.array(d_grid, dtype=float)
    v0 = vzero_profile(profile, params, d)
    if true_scatter > 0.0:
        v0 = v0 + true_scatter * SplitMix64(seed).normals(d.size)
    return VZeroSeries(d, v0, np.full(d.size, float(quoted_sigma)))


# Capacitance run modelled on the ideal-geometry calibration fit: values in SI.
CALIB_IDEAL = {"A1": 193.9e-12, "A2": 0.0, "A3": -1.757e-12}
CALIB_PZT = PztMap(beta=87e-9, v0_pzt=69.31)
CALIB_D_RANGE = (20e-9, 3e-6)


def calib_voltage_grid(n: int = 500, pzt: PztMap = CALIB_PZT, d_range=CALIB_D_RANGE) -> np.ndarray:
    """Evenly spaced PZT voltages covering ``d_range`` for the given map."""
    v_lo = pzt.v0_pzt - d_range[1] / pzt.beta
    v_hi = pzt.v0_pzt - d_range[0] / pzt.beta
    return np.linspace(v_lo, v_hi, n)
