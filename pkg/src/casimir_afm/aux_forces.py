"""Closed-form auxiliary forces and electrolyte helpers.

Sign convention as everywhere in the package: positive = repulsive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .constants import CONST
from .errors import DomainError, InvalidInputError

ETHANOL_STATIC_DIELECTRIC = 24.3
ETHANOL_VISCOSITY = 1.17e-3


@dataclass(frozen=True)
class FluidProps:
    viscosity: float = ETHANOL_VISCOSITY
    static_dielectric: float = ETHANOL_STATIC_DIELECTRIC
    temperature: float = 294.15

    def __post_init__(self):
        if min(self.viscosity, self.static_dielectric, self.temperature) <= 0:
            raise InvalidInputError("fluid properties must be positive")


@dataclass(frozen=True)
class ElectrolyteSpec:
    """Salt concentration in mol/m^3 (numerically equal to mM) and ion valence."""

    concentration: float
    charge_number: int = 1

    def __post_init__(self):
        if self.concentration < 0 or self.charge_number < 1:
            raise InvalidInputError("concentration must be >= 0 and charge number >= 1")

    @classmethod
    def from_millimolar(cls, mM: float, z: int = 1) -> "ElectrolyteSpec":
        return cls(float(mM), z)


@dataclass(frozen=True, eq=False)
class ConductivitySeries:
    molarity: np.ndarray
    conductivity: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.molarity, dtype=float).ravel()
        s = np.asarray(self.conductivity, dtype=float).ravel()
        if c.size != s.size:
            raise InvalidInputError("molarity and conductivity differ in length")
        if np.any(c <= 0) or np.any(s <= 0):
            raise DomainError("molarity and conductivity must be positive for a log-log fit")
        if np.any(np.diff(c) <= 0):
            raise InvalidInputError("molarity must be strictly increasing")
        object.__setattr__(self, "molarity", c)
        object.__setattr__(self, "conductivity", s)

    @classmethod
    def from_file(cls, path) -> "ConductivitySeries":
        data = np.loadtxt(path, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise InvalidInputError(f"{path}: expected two columns molarity_M conductivity_norm")
        return cls(data[:, 0], data[:, 1])


def hydro_force(d, v, eta, R):
    """Reynolds drag on a sphere near a plate, -6 pi eta v R^2 / d (valid for R >> d).

    ``v`` is negative on approach, giving a repulsive (positive) force.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("separation must be positive")
    if np.any(d > R / 20):
        warnings.warn("hydro_force used with d > R/20; the R >> d limit is marginal", stacklevel=2)
    out = -6.0 * np.pi * eta * np.asarray(v, dtype=float) * R * R / d
    return float(out) if out.ndim == 0 else out


def electrostatic_force(d, V0, R, eps_static, debye_length):
    """Screened sphere-plate electrostatic force -(pi R eps eps0 V0^2 / d) exp(-d / lambda_D)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("separation must be positive")
    if not debye_length > 0:
        raise DomainError("Debye length must be positive")
    screen = 1.0 if np.isinf(debye_length) else np.exp(-d / debye_length)
    out = -np.pi * R * eps_static * CONST.eps0 * V0**2 / d * screen
    return float(out) if out.ndim == 0 else out


def debye_length(spec: ElectrolyteSpec, fluid: FluidProps) -> float:
    """Debye length (m) of a symmetric z:z electrolyte; ``inf`` for pure solvent."""
    if spec.concentration == 0:
        return np.inf
    num = fluid.static_dielectric * CONST.eps0 * CONST.k_B * fluid.temperature
    den = 2.0 * CONST.N_A * CONST.e**2 * spec.charge_number**2 * spec.concentration
    return float(np.sqrt(num / den))


def fit_conductivity_loglog(series: ConductivitySeries):
    """Straight-line fit of log10(conductivity) against log10(molarity).

    Returns (slope, intercept, residual_rms); a slope near 1 means the
    conductivity is still proportional to concentration.
    """
    if series.molarity.size < 3:
        raise InvalidInputError("need at least 3 points")
    x = np.log10(series.molarity)
    y = np.log10(series.conductivity)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))
