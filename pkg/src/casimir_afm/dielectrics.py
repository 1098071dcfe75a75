"""Dielectric permittivities evaluated on the imaginary frequency axis.

All frequencies passed to the evaluation functions are angular frequencies
in rad/s.  Optical tables and Drude parameters are usually quoted in eV;
``DrudeParams.from_ev`` and ``OpticalDataTable`` take care of that at the
boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .constants import CONST, EV_TO_RAD_S
from .errors import DivergenceError, InvalidInputError

DEFAULT_CROSSOVER_EV = 0.125


def _as_xi(xi, allow_zero=False):
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise InvalidInputError("imaginary frequency must be finite")
    if allow_zero:
        if np.any(xi < 0):
            raise InvalidInputError("imaginary frequency must be >= 0")
    elif np.any(xi <= 0):
        if np.any(xi < 0):
            raise InvalidInputError("imaginary frequency must be >= 0")
        raise DivergenceError("permittivity diverges at xi = 0 for this model")
    return xi


def _unwrap(value):
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OpticalDataTable:
    """Tabulated absorptive part Im[eps] against photon energy (eV)."""

    energy_ev: np.ndarray
    im_eps: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.energy_ev, dtype=float).ravel()
        y = np.asarray(self.im_eps, dtype=float).ravel()
        if x.size == 0:
            raise InvalidInputError("optical table is empty")
        if x.size < 2 or x.size != y.size:
            raise InvalidInputError("optical table needs at least 2 (energy, im_eps) rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("optical table contains non-finite values")
        if np.any(x <= 0):
            raise InvalidInputError("photon energies must be positive")
        if np.any(np.diff(x) <= 0):
            raise InvalidInputError("photon energies must be strictly increasing")
        if np.any(y < 0):
            raise InvalidInputError("Im[eps] must be non-negative")
        object.__setattr__(self, "energy_ev", x)
        object.__setattr__(self, "im_eps", y)

    @classmethod
    def from_file(cls, path) -> "OpticalDataTable":
        """Read a two-column ``energy_eV im_eps`` text file (``#`` comments)."""
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # empty file: reported below
                data = np.loadtxt(Path(path), comments="#", ndmin=2)
        except ValueError as exc:
            raise InvalidInputError(f"cannot parse optical table {path}: {exc}") from exc
        if data.size == 0:
            raise InvalidInputError(f"optical table {path} is empty")
        if data.shape[1] != 2:
            raise InvalidInputError(f"optical table {path} must have exactly two columns")
        return cls(data[:, 0], data[:, 1])

    @classmethod
    def builtin(cls, name: str) -> "OpticalDataTable":
        """Packaged table by name (currently ``gold``)."""
        path = Path(__file__).parent / "data" / f"{name}_im_eps.txt"
        if not path.exists():
            raise InvalidInputError(f"no packaged optical table named {name!r}")
        return cls.from_file(path)


@dataclass(frozen=True)
class DrudeParams:
    """Drude plasma frequency and relaxation rate, stored in rad/s."""

    plasma_freq: float
    gamma: float

    def __post_init__(self):
        if not (self.plasma_freq > 0 and self.gamma > 0):
            raise InvalidInputError("Drude parameters must be positive")

    @classmethod
    def from_ev(cls, plasma_freq_ev: float, gamma_ev: float) -> "DrudeParams":
        return cls(plasma_freq_ev * EV_TO_RAD_S, gamma_ev * EV_TO_RAD_S)

    @property
    def plasma_freq_ev(self) -> float:
        return self.plasma_freq / EV_TO_RAD_S

    @property
    def gamma_ev(self) -> float:
        return self.gamma / EV_TO_RAD_S


@dataclass(frozen=True)
class OscillatorModel:
    """Two-oscillator (IR + UV) description of a fluid; frequencies in rad/s."""

    c_ir: float
    c_uv: float
    omega_ir: float
    omega_uv: float

    def __post_init__(self):
        if min(self.c_ir, self.c_uv, self.omega_ir, self.omega_uv) <= 0:
            raise InvalidInputError("oscillator strengths and frequencies must be positive")


ETHANOL_OSCILLATORS = OscillatorModel(c_ir=23.84, c_uv=0.852, omega_ir=6.60e14, omega_uv=1.14e16)
GOLD_DRUDE = DrudeParams.from_ev(7.50, 0.061)

# Na+ and I- masses in atomic mass units.
NAI_MASSES_AMU = (22.98977, 126.90447)


@dataclass(frozen=True)
class IonCorrection:
    """Plasma-like contribution of dissolved ions, one frequency per species."""

    plasma_freqs: tuple = ()

    def __post_init__(self):
        freqs = tuple(float(w) for w in np.atleast_1d(self.plasma_freqs))
        if any(not np.isfinite(w) or w < 0 for w in freqs):
            raise InvalidInputError("ion plasma frequencies must be finite and >= 0")
        object.__setattr__(self, "plasma_freqs", freqs)

    @property
    def omega_sq(self) -> float:
        return float(sum(w * w for w in self.plasma_freqs))

    @classmethod
    def from_salt(cls, concentration_molar: float, masses_amu=NAI_MASSES_AMU, charges=(1, 1)):
        """Ionic plasma frequencies w^2 = n z^2 e^2 / (eps0 m) for a dissolved salt.

        A free-carrier approximation: it ignores solvation and the medium's own
        permittivity, which is adequate only as a small first-order term.
        """
        if concentration_molar < 0:
            raise InvalidInputError("salt concentration must be >= 0")
        n = concentration_molar * 1e3 * CONST.N_A
        freqs = [
            np.sqrt(n * (z * CONST.e) ** 2 / (CONST.eps0 * m * CONST.amu))
            for m, z in zip(masses_amu, charges)
        ]
        return cls(tuple(freqs))


# ---------------------------------------------------------------------------
# elementary evaluations
# ---------------------------------------------------------------------------


def eps_drude(xi, p: DrudeParams):
    """Drude permittivity at imaginary frequency, 1 + wp^2 / (xi (xi + gamma))."""
    xi = _as_xi(xi)
    return _unwrap(1.0 + p.plasma_freq**2 / (xi * (xi + p.gamma)))


def eps_oscillator(xi, m: OscillatorModel):
    xi = _as_xi(xi, allow_zero=True)
    out = 1.0 + m.c_ir / (1.0 + (xi / m.omega_ir) ** 2) + m.c_uv / (1.0 + (xi / m.omega_uv) ** 2)
    return _unwrap(out)


def eps_with_ions(xi, base: "DielectricModel", ion: IonCorrection):
    """Base permittivity plus the ionic plasma term sum(w_ion^2) / xi^2."""
    xi = _as_xi(xi)
    return _unwrap(np.asarray(base(xi)) + ion.omega_sq / xi**2)


def _t_minus_atan(t):
    """t - arctan(t), accurate for small t."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-2
    ts = np.where(small, t, 0.0)
    t2 = ts * ts
    series = ts * t2 * (1 / 3 - t2 * (1 / 5 - t2 * (1 / 7 - t2 / 9)))
    return np.where(small, series, t - np.arctan(np.where(small, 1.0, t)))


@dataclass(frozen=True)
class _KKSegments:
    """Piecewise-linear Im[eps] on [x0, xN] plus the Drude part below x0."""

    x: np.ndarray
    y: np.ndarray
    tail: DrudeParams
    crossover_ev: float


def _build_segments(table: OpticalDataTable, tail: DrudeParams, crossover_ev: float) -> _KKSegments:
    x, y = table.energy_ev, table.im_eps
    if not crossover_ev > 0:
        raise InvalidInputError("crossover energy must be positive")
    if crossover_ev >= x[-1]:
        raise InvalidInputError("crossover energy must lie below the table maximum")
    wp, g = tail.plasma_freq_ev, tail.gamma_ev
    if crossover_ev < x[0]:
        y_c = wp**2 * g / (crossover_ev * (crossover_ev**2 + g**2))
        xs = np.concatenate([[crossover_ev], x])
        ys = np.concatenate([[y_c], y])
    else:
        keep = x > crossover_ev
        xs = np.concatenate([[crossover_ev], x[keep]])
        ys = np.concatenate([[np.interp(crossover_ev, x, y)], y[keep]])
    return _KKSegments(xs, ys, tail, crossover_ev)


def _drude_part(s, wp, g, xc):
    """Integral of x Im[eps_Drude](x) / (x^2 + s^2) over [0, xc] (energies in eV)."""

    def atan_over(a):
        return np.arctan(xc / a) / a

    close = np.abs(s - g) < 1e-4 * g
    s_safe = np.where(close, g * 2.0, s)
    regular = (atan_over(g) - atan_over(s_safe)) / (s_safe**2 - g**2)
    # s -> gamma limit: -d/d(a^2) of atan(xc/a)/a
    a = 0.5 * (s + g)
    deriv = -(-np.arctan(xc / a) / a**2 - xc / (a * (a**2 + xc**2))) / (2 * a)
    return wp**2 * g * np.where(close, deriv, regular)


def _kk_integral(seg: _KKSegments, s):
    """1 + (2/pi) * integral for an array of imaginary energies ``s`` (eV)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))[:, None]
    x1, x2 = seg.x[:-1][None, :], seg.x[1:][None, :]
    y1, y2 = seg.y[:-1][None, :], seg.y[1:][None, :]
    dx = x2 - x1
    b = (y2 - y1) / dx
    a = y1 - b * x1
    log_part = 0.5 * np.log1p((x2**2 - x1**2) / (x1**2 + s**2))
    t = s * dx / (s**2 + x1 * x2)
    lin_part = dx * x1 * x2 / (s**2 + x1 * x2) + s * _t_minus_atan(t)
    segments = np.sum(a * log_part + b * lin_part, axis=1)

    s1 = s[:, 0]
    xn, yn = seg.x[-1], seg.y[-1]
    tt = s1 / xn
    small = tt < 1e-4
    tt_safe = np.where(small, 1.0, tt)
    h = np.where(small, 1 / 3 - tt**2 / 5, _t_minus_atan(tt_safe) / tt_safe**3)
    tail = yn * h

    drude = _drude_part(s1, seg.tail.plasma_freq_ev, seg.tail.gamma_ev, seg.crossover_ev)
    return 1.0 + (2.0 / np.pi) * (drude + segments + tail)


def eps_kramers_kronig(table: OpticalDataTable, tail: DrudeParams, crossover: float, xi):
    """Permittivity at imaginary frequency ``xi`` (rad/s) from tabulated Im[eps].

    Below ``crossover`` (eV) Im[eps] is the Drude model ``tail``; above it the
    table is interpolated linearly, and beyond the last row it decays as x^-3.
    Each linear segment is integrated in closed form, so the result carries
    no quadrature error beyond the interpolation of the data itself.
    """
    xi = _as_xi(xi)
    seg = _build_segments(table, tail, crossover)
    return _unwrap(_kk_integral(seg, xi / EV_TO_RAD_S).reshape(xi.shape))


# ---------------------------------------------------------------------------
# model variants
# ---------------------------------------------------------------------------


class DielectricModel:
    """Common interface: ``model(xi)`` evaluates eps(i xi) for xi in rad/s.

    ``static_value`` is the xi -> 0 limit used by the zero-frequency Matsubara
    term; metals return ``inf``.
    """

    is_metal = False

    def __call__(self, xi):
        raise NotImplementedError

    @property
    def static_value(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(DielectricModel):
    value: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 1.0):
            raise InvalidInputError("constant permittivity must be finite and >= 1")

    def __call__(self, xi):
        xi = _as_xi(xi, allow_zero=True)
        return _unwrap(np.full(xi.shape, float(self.value)))

    @property
    def static_value(self):
        return float(self.value)


@dataclass(frozen=True)
class Drude(DielectricModel):
    params: DrudeParams
    is_metal = True

    def __call__(self, xi):
        return eps_drude(xi, self.params)

    @property
    def static_value(self):
        return np.inf


@dataclass(frozen=True, eq=False)
class TabulatedWithDrudeTail(DielectricModel):
    table: OpticalDataTable
    tail: DrudeParams
    crossover_ev: float = DEFAULT_CROSSOVER_EV
    is_metal = True

    def __post_init__(self):
        # validates the crossover against the table range
        _build_segments(self.table, self.tail, self.crossover_ev)

    @cached_property
    def _segments(self):
        return _build_segments(self.table, self.tail, self.crossover_ev)

    def __call__(self, xi):
        xi = _as_xi(xi)
        return _unwrap(_kk_integral(self._segments, xi / EV_TO_RAD_S).reshape(xi.shape))

    @property
    def static_value(self):
        return np.inf


@dataclass(frozen=True)
class Oscillator(DielectricModel):
    model: OscillatorModel = field(default=ETHANOL_OSCILLATORS)

    def __call__(self, xi):
        return eps_oscillator(xi, self.model)

    @property
    def static_value(self):
        return self.model.c_ir + self.model.c_uv + 1.0


@dataclass(frozen=True)
class WithIons(DielectricModel):
    """Base model plus an ionic plasma term at non-zero frequency.

    The static limit is the base model's: at xi = 0 the ions act through
    Debye screening of the zero-frequency term instead.
    """

    base: DielectricModel
    ions: IonCorrection

    def __call__(self, xi):
        return eps_with_ions(xi, self.base, self.ions)

    @property
    def is_metal(self):
        return self.base.is_metal

    @property
    def static_value(self):
        return self.base.static_value


# ---------------------------------------------------------------------------
# Matsubara frequencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatsubaraGrid:
    temperature: float
    frequencies: np.ndarray

    @property
    def xi1(self) -> float:
        return matsubara_spacing(self.temperature)


def matsubara_spacing(T: float) -> float:
    """First Matsubara frequency 2 pi k_B T / hbar (rad/s)."""
    if not T > 0:
        raise InvalidInputError("temperature must be positive")
    return 2.0 * np.pi * CONST.k_B * T / CONST.hbar


def matsubara_grid(T: float, m_max: int) -> MatsubaraGrid:
    if int(m_max) < 1:
        raise InvalidInputError("m_max must be >= 1")
    xi1 = matsubara_spacing(T)
    return MatsubaraGrid(float(T), xi1 * np.arange(int(m_max) + 1, dtype=float))


def gold_ethanol_gold(temperature=294.15, sphere_radius=19.9e-6):
    """Packaged gold table with Drude tail on both sides of ethanol."""
    from .lifshitz import LayerSystem

    gold = TabulatedWithDrudeTail(OpticalDataTable.builtin("gold"), GOLD_DRUDE)
    return LayerSystem(gold, gold, Oscillator(), temperature=temperature, sphere_radius=sphere_radius)
