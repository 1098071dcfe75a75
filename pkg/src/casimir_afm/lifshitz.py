"""Sphere-plate Casimir-Lifshitz force at finite temperature.

The force is the proximity (Derjaguin) form

    F(d) = k_B T R sum'_m  int_0^inf k [ln(1 - rTE_1 rTE_2 e^{-2 k3 d})
                                        + ln(1 - rTM_1 rTM_2 e^{-2 k3 d})] dk

summed over Matsubara frequencies xi_m = m 2 pi k_B T / hbar with half
weight on m = 0.  Negative values are attractive.

The k integral is done in u = 2 k3 d, where k dk = u du / (4 d^2) and the
integrand carries e^{-u}; u is integrated over [u_min, u_min + 60].
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import CONST
from .dielectrics import DielectricModel, matsubara_spacing
from .errors import ConvergenceError, DomainError, InvalidInputError
from .quadrature import integrate_batch

U_SPAN = 60.0
QUAD_RTOL = 1e-9
TAIL_RTOL = 1e-8
_BREAKS = (0.0, 0.25, 1.0, 3.0, 8.0, 18.0, 35.0)
_MAX_MATSUBARA = 2_000_000


@dataclass(frozen=True, eq=False)
class LayerSystem:
    """Sphere (1) and plate (2) across a medium (3)."""

    eps_sphere: DielectricModel
    eps_plate: DielectricModel
    eps_medium: DielectricModel
    temperature: float = 294.15
    sphere_radius: float = 19.9e-6

    def __post_init__(self):
        if not self.sphere_radius > 0:
            raise InvalidInputError("sphere radius must be positive")
        if not self.temperature > 0:
            raise InvalidInputError("temperature must be positive")
        if self.eps_medium.is_metal:
            raise InvalidInputError("the intervening medium cannot be a metal")

    def summary(self) -> dict:
        return {
            "sphere": type(self.eps_sphere).__name__,
            "plate": type(self.eps_plate).__name__,
            "medium": type(self.eps_medium).__name__,
            "temperature_K": self.temperature,
            "sphere_radius_um": self.sphere_radius * 1e6,
        }


@dataclass(frozen=True)
class SaltScreening:
    """Inverse Debye length kappa (1/m) of the electrolyte."""

    inverse_debye: float = 0.0

    def __post_init__(self):
        if not (self.inverse_debye >= 0 and np.isfinite(self.inverse_debye)):
            raise InvalidInputError("inverse Debye length must be finite and >= 0")

    @classmethod
    def from_debye_length(cls, debye_length: float) -> "SaltScreening":
        if debye_length == np.inf:
            return cls(0.0)
        if not debye_length > 0:
            raise InvalidInputError("Debye length must be positive")
        return cls(1.0 / debye_length)


@dataclass(frozen=True, eq=False)
class RoughnessDistribution:
    """Area fractions ``fractions[i]`` displaced by ``displacements[i]`` (m).

    Positive displacement points toward the opposing surface.
    """

    fractions: np.ndarray
    displacements: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.fractions, dtype=float).ravel()
        dl = np.asarray(self.displacements, dtype=float).ravel()
        if s.size == 0 or s.size != dl.size:
            raise InvalidInputError("roughness distribution needs matching, non-empty bins")
        if np.any(s < 0) or not np.all(np.isfinite(dl)):
            raise InvalidInputError("roughness fractions must be >= 0 and displacements finite")
        if abs(s.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"roughness fractions sum to {s.sum():.12g}, not 1")
        object.__setattr__(self, "fractions", s)
        object.__setattr__(self, "displacements", dl)

    @classmethod
    def from_histogram(cls, displacements, counts) -> "RoughnessDistribution":
        counts = np.asarray(counts, dtype=float)
        if np.any(counts < 0) or counts.sum() <= 0:
            raise InvalidInputError("histogram counts must be >= 0 with a positive total")
        return cls(counts / counts.sum(), displacements)

    @classmethod
    def smooth(cls) -> "RoughnessDistribution":
        return cls(np.array([1.0]), np.array([0.0]))


@dataclass(frozen=True, eq=False)
class ForceCurve:
    """Force (N) against separation (m), separations strictly increasing."""

    distances: np.ndarray
    forces: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float).ravel()
        f = np.asarray(self.forces, dtype=float).ravel()
        if d.size != f.size:
            raise InvalidInputError("distances and forces differ in length")
        if np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise InvalidInputError("separations must be positive and strictly increasing")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "forces", f)


# ---------------------------------------------------------------------------
# reflection amplitudes
# ---------------------------------------------------------------------------


def _axial(k, xi, eps):
    # hypot avoids underflow of the squares for tiny (k, xi)
    with np.errstate(invalid="ignore"):
        return np.hypot(k, np.sqrt(eps) * (xi / CONST.c))


def _check_k_xi(k, xi):
    k = np.asarray(k, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(k < 0) or np.any(xi < 0):
        raise InvalidInputError("k and xi must be >= 0")
    if np.any((k == 0) & (xi == 0)):
        raise InvalidInputError("reflection amplitude is indeterminate at k = xi = 0")
    return k, xi


def fresnel_te(k, xi, eps_i, eps_3):
    """TE amplitude (k_i - k_3)/(k_i + k_3); ``eps_i = inf`` is an ideal metal."""
    k, xi = _check_k_xi(k, xi)
    eps_i = np.asarray(eps_i, dtype=float)
    k3 = _axial(k, xi, eps_3)
    ideal = np.isinf(eps_i)
    ki = _axial(k, xi, np.where(ideal, 1.0, eps_i))
    r = (ki - k3) / (ki + k3)
    r = np.where(ideal, np.where(xi > 0, 1.0, 0.0), r)
    return float(r) if r.ndim == 0 else r


def fresnel_tm(k, xi, eps_i, eps_3):
    """TM amplitude (k_i eps_3 - k_3 eps_i)/(k_i eps_3 + k_3 eps_i); ideal metal -> -1."""
    k, xi = _check_k_xi(k, xi)
    eps_i = np.asarray(eps_i, dtype=float)
    k3 = _axial(k, xi, eps_3)
    ideal = np.isinf(eps_i)
    e = np.where(ideal, 1.0, eps_i)
    ki = _axial(k, xi, e)
    r = (ki * eps_3 - k3 * e) / (ki * eps_3 + k3 * e)
    r = np.where(ideal, -1.0, r)
    return float(r) if r.ndim == 0 else r


def _static_tm(eps_i, eps_3):
    """TM amplitude at xi = 0 (k_i = k_3); metals (eps = inf) give -1."""
    if np.isinf(eps_i):
        return -1.0
    return (eps_3 - eps_i) / (eps_3 + eps_i)


# ---------------------------------------------------------------------------
# Matsubara terms
# ---------------------------------------------------------------------------


def _check_d(d):
    if not (np.isfinite(d) and d > 0):
        raise DomainError(f"separation must be positive, got {d!r}")


def _zero_term_integral(sys: LayerSystem, d: float) -> float:
    """Integral over u of the m = 0 term (TM only; TE vanishes at xi = 0)."""
    e3 = sys.eps_medium.static_value
    rr = _static_tm(sys.eps_sphere.static_value, e3) * _static_tm(sys.eps_plate.static_value, e3)
    if rr == 0.0:
        return 0.0

    def f(owner, u):
        return u * np.log1p(-rr * np.exp(-u))

    return float(
        integrate_batch(f, np.zeros(1), np.full(1, U_SPAN), _BREAKS, rtol=QUAD_RTOL)[0]
    )


def _nonzero_term_integrals(sys: LayerSystem, d: float, m: np.ndarray) -> np.ndarray:
    """u-integrals of the TE + TM logarithms for Matsubara indices ``m >= 1``."""
    xi = m * matsubara_spacing(sys.temperature)
    e1 = np.asarray(sys.eps_sphere(xi), dtype=float)
    e2 = np.asarray(sys.eps_plate(xi), dtype=float)
    e3 = np.asarray(sys.eps_medium(xi), dtype=float)
    w = (2.0 * d * xi / CONST.c) ** 2
    u_min = np.sqrt(e3 * w)
    if np.all(e1 == e3) and np.all(e2 == e3):
        return np.zeros(m.size)

    def f(owner, u):
        a1 = ((e1 - e3) * w)[owner][:, None]
        a2 = ((e2 - e3) * w)[owner][:, None]
        E1, E2, E3 = e1[owner][:, None], e2[owner][:, None], e3[owner][:, None]
        u2 = u * u
        K1 = np.sqrt(np.maximum(u2 + a1, 0.0))
        K2 = np.sqrt(np.maximum(u2 + a2, 0.0))
        te = ((K1 - u) / (K1 + u)) * ((K2 - u) / (K2 + u))
        tm = ((K1 * E3 - u * E1) / (K1 * E3 + u * E1)) * ((K2 * E3 - u * E2) / (K2 * E3 + u * E2))
        decay = np.exp(-u)
        return u * (np.log1p(-te * decay) + np.log1p(-tm * decay))

    return integrate_batch(f, u_min, u_min + U_SPAN, _BREAKS, rtol=QUAD_RTOL)


def _prefactor(sys: LayerSystem, d: float) -> float:
    return CONST.k_B * sys.temperature * sys.sphere_radius / (4.0 * d * d)


def _matsubara_terms(sys: LayerSystem, d: float, m_max="auto"):
    """Return (half-weighted m=0 term, array of m>=1 terms), both in newtons."""
    _check_d(d)
    pref = _prefactor(sys, d)
    t0 = 0.5 * pref * _zero_term_integral(sys, d)

    if m_max != "auto":
        m_max = int(m_max)
        if m_max < 0:
            raise InvalidInputError("m_max must be >= 0 or 'auto'")
        m = np.arange(1, m_max + 1, dtype=float)
        return t0, pref * _nonzero_term_integrals(sys, d, m)

    xi1 = matsubara_spacing(sys.temperature)
    n = max(8, math.ceil(10.0 * CONST.c / (2.0 * d * xi1)))
    terms = pref * _nonzero_term_integrals(sys, d, np.arange(1, n + 1, dtype=float))
    while True:
        total = t0 + terms.sum()
        last, prev = terms[-1], terms[-2]
        if last == 0.0:
            break
        ratio = last / prev if prev != 0.0 else np.inf
        if 0.0 <= ratio < 1.0:
            tail = abs(last) * ratio / (1.0 - ratio)
            if tail < TAIL_RTOL * abs(total):
                break
        if terms.size >= _MAX_MATSUBARA:
            raise ConvergenceError(
                "Matsubara sum did not converge",
                diagnostics={"terms": int(terms.size), "last_term": float(last), "partial_sum": float(total)},
            )
        more = np.arange(terms.size + 1, 2 * terms.size + 1, dtype=float)
        terms = np.concatenate([terms, pref * _nonzero_term_integrals(sys, d, more)])
    return t0, terms


def _sum_terms(t0, terms):
    # fixed order: m = 0 first, then ascending m
    return float(t0 + math.fsum(terms))


def force_sphere_plate(sys: LayerSystem, d: float, m_max="auto") -> float:
    """Casimir-Lifshitz sphere-plate force (N) at separation ``d`` (m)."""
    t0, terms = _matsubara_terms(sys, float(d), m_max)
    return _sum_terms(t0, terms)


def zero_frequency_term(sys: LayerSystem, d: float) -> float:
    """The half-weighted m = 0 term of the unscreened force (N)."""
    _check_d(d)
    return 0.5 * _prefactor(sys, d) * _zero_term_integral(sys, d)


def zero_freq_screened(sys: LayerSystem, d: float, s: SaltScreening) -> float:
    """Zero-frequency term with the static field screened by the electrolyte.

    Replaces the m = 0 term by (k_B T R / 2) int k ln[1 - D1 D2 e^{-2 d q}] dk
    with q = sqrt(k^2 + kappa^2) and D_i = (eps_i k - eps_3 q)/(eps_i k + eps_3 q).
    The substitution u = 2 d q turns k dk into u du / (4 d^2).
    """
    d = float(d)
    _check_d(d)
    e1 = sys.eps_sphere.static_value
    e2 = sys.eps_plate.static_value
    e3 = sys.eps_medium.static_value
    u0 = 2.0 * d * s.inverse_debye

    def ratio(e, K, u):
        if np.isinf(e):
            return np.ones_like(u)
        return (e * K - e3 * u) / (e * K + e3 * u)

    def f(owner, u):
        K = np.sqrt(np.maximum(u * u - u0 * u0, 0.0))
        rr = ratio(e1, K, u) * ratio(e2, K, u)
        return u * np.log1p(-rr * np.exp(-u))

    if e1 == e3 and e2 == e3:
        return 0.0
    integral = integrate_batch(f, np.full(1, u0), np.full(1, u0 + U_SPAN), _BREAKS, rtol=QUAD_RTOL)[0]
    return float(0.5 * _prefactor(sys, d) * integral)


def force_with_salt(sys: LayerSystem, d: float, s: SaltScreening, m_max="auto") -> float:
    """Total force with the m = 0 term replaced by its screened form."""
    t0, terms = _matsubara_terms(sys, float(d), m_max)
    if s.inverse_debye == 0.0:
        return _sum_terms(t0, terms)
    return _sum_terms(zero_freq_screened(sys, d, s), terms)


# ---------------------------------------------------------------------------
# curves, roughness, scaling
# ---------------------------------------------------------------------------


def geometric_distances(d_min=20e-9, d_max=100e-9, n=81) -> np.ndarray:
    return np.geomspace(d_min, d_max, n)


def force_curve(sys: LayerSystem, distances=None, salt: SaltScreening | None = None,
                m_max="auto", threads: int = 1) -> ForceCurve:
    """Evaluate the force on a grid of separations (default: 20-100 nm, 81 points)."""
    d = geometric_distances() if distances is None else np.asarray(distances, dtype=float)

    def one(x):
        if salt is None:
            return force_sphere_plate(sys, x, m_max)
        return force_with_salt(sys, x, salt, m_max)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            forces = list(pool.map(one, d))
    else:
        forces = [one(x) for x in d]
    meta = dict(sys.summary())
    meta["inverse_debye_per_m"] = 0.0 if salt is None else salt.inverse_debye
    meta["m_max"] = str(m_max)
    return ForceCurve(d, np.array(forces), meta)


def roughness_correct(base_force, rough_sp: RoughnessDistribution, rough_pl: RoughnessDistribution, d):
    """Area-weighted average sum_ij s_i s_j F(d - (delta_i + delta_j)).

    ``base_force`` maps separations (array, m) to forces (N).  Works for
    scalar or array ``d``.
    """
    d_arr = np.atleast_1d(np.asarray(d, dtype=float))
    shift = rough_sp.displacements[:, None] + rough_pl.displacements[None, :]
    weight = rough_sp.fractions[:, None] * rough_pl.fractions[None, :]
    shifted = d_arr[:, None, None] - shift[None, :, :]
    if np.any(shifted <= 0):
        k, i, j = np.argwhere(shifted <= 0)[0]
        raise DomainError(
            f"shifted separation {shifted[k, i, j]:.3e} m <= 0 at d = {d_arr[k]:.3e} m for "
            f"sphere bin {i} (delta = {rough_sp.displacements[i]:.3e} m) and "
            f"plate bin {j} (delta = {rough_pl.displacements[j]:.3e} m)"
        )
    values = np.asarray(base_force(shifted.ravel()), dtype=float).reshape(shifted.shape)
    out = np.sum(weight[None, :, :] * values, axis=(1, 2))
    return float(out[0]) if np.ndim(d) == 0 else out


def interpolated_force(curve: ForceCurve):
    """Log-log cubic interpolant of an attractive or repulsive ForceCurve."""
    from scipy.interpolate import CubicSpline

    f = curve.forces
    if not (np.all(f < 0) or np.all(f > 0)):
        raise InvalidInputError("interpolation needs a force curve of one sign")
    sign = np.sign(f[0])
    spline = CubicSpline(np.log(curve.distances), np.log(np.abs(f)))
    lo, hi = curve.distances[0], curve.distances[-1]

    def F(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < lo * (1 - 1e-12)) or np.any(x > hi * (1 + 1e-12)):
            raise DomainError(f"separation outside tabulated range [{lo:.3e}, {hi:.3e}] m")
        return sign * np.exp(spline(np.log(x)))

    return F


def power_law_exponent(curve: ForceCurve, d_min: float, d_max: float) -> float:
    """Least-squares slope of ln|F| against ln d over [d_min, d_max]."""
    sel = (curve.distances >= d_min) & (curve.distances <= d_max)
    d, f = curve.distances[sel], curve.forces[sel]
    if d.size < 5:
        raise InvalidInputError("need at least 5 points in the fit range")
    if not (np.all(f < 0) or np.all(f > 0)):
        raise InvalidInputError("force changes sign (or vanishes) within the fit range")
    slope, _ = np.polyfit(np.log(d), np.log(np.abs(f)), 1)
    return float(slope)
