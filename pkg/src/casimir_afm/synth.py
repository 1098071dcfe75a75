"""Synthetic deflection traces: the forward model of the measurement.

The cantilever base follows the piezo, p(t) = p_start + v t.  The tip sits at
x = p + d_cant, where the deflection d_cant balances the total force,

    k d_cant = F0(x + d0) + F_hydro(x + d0, v_tip) + A p + B,

and the detector reads V_det = k d_cant / C plus white noise.  With velocity
feedback on, v_tip is the actual tip velocity (backward difference between
samples), so the drag reduces the approach speed near contact; with it off,
v_tip is the piezo velocity.  Once x reaches 0 (surfaces touching at
separation d0) the tip is pinned and the trace continues along the contact
line V_det = -k p / C.

Units: nm, pN, V, nN/V; viscosity and radius in SI.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .aux_forces import electrostatic_force
from .constants import NM, PN
from .errors import InvalidInputError
from .lifshitz import ForceCurve, interpolated_force
from .pipeline import DeflectionTrace


@dataclass(frozen=True, eq=False)
class ForceModel:
    """Velocity-independent force F0(d) as a sum of optional parts.

    ``casimir`` is a tabulated ForceCurve (interpolated log-log, extended as a
    power law outside its range); ``electrostatic`` holds V0 (V),
    eps_static, debye_length (m) and R (m) for the screened double-layer
    term.  With neither, F0 = 0.
    """

    casimir: ForceCurve | None = None
    electrostatic: dict | None = None

    def __call__(self, d_nm):
        d_nm = np.asarray(d_nm, dtype=float)
        out = np.zeros_like(d_nm)
        if self.casimir is not None:
            out = out + self._casimir_pN(d_nm)
        if self.electrostatic is not None:
            e = self.electrostatic
            out = out + electrostatic_force(d_nm * NM, e["V0"], e["R"], e["eps_static"], e["debye_length"]) / PN
        return out

    def _casimir_pN(self, d_nm):
        c = self.casimir
        d_m = d_nm * NM
        lo, hi = c.distances[0], c.distances[-1]
        inner = interpolated_force(c)
        out = np.empty_like(d_m)
        mid = (d_m >= lo) & (d_m <= hi)
        out[mid] = inner(d_m[mid])
        # power-law continuation from the end segments
        for mask, i, j in ((d_m < lo, 0, 1), (d_m > hi, -2, -1)):
            if np.any(mask):
                d1, d2 = c.distances[i], c.distances[j]
                f1, f2 = c.forces[i], c.forces[j]
                n = math.log(abs(f2 / f1)) / math.log(d2 / d1)
                ref_d, ref_f = (d1, f1) if i == 0 else (d2, f2)
                out[mask] = ref_f * (d_m[mask] / ref_d) ** n
        return out / PN


@dataclass(frozen=True, eq=False)
class SynthParams:
    force_model: ForceModel = field(default_factory=ForceModel)
    eta: float = 1.17e-3  # Pa s
    R: float = 19.9e-6  # m
    force_constant: float = 14.5  # nN/V
    spring_constant: float = 0.03  # N/m
    d0: float = 12.0  # nm
    A: float = 0.0  # pN/nm
    B: float = 0.0  # pN
    velocity: float = -3150.0  # nm/s
    noise_sigma: float = 110.0  # pN
    drift_offset: float = 0.0  # nm
    sample_spacing: float = 0.5  # nm
    range: tuple = (0.0, 2600.0)  # nm of piezo travel before contact
    contact_length: float = 100.0  # nm of piezo travel in contact
    seed: int = 0
    velocity_feedback: bool = True

    def __post_init__(self):
        if min(self.force_constant, self.spring_constant, self.R, self.eta) <= 0:
            raise InvalidInputError("C, k, R and eta must be positive")
        if not 0 < self.sample_spacing <= 0.5:
            raise InvalidInputError("sample spacing must be in (0, 0.5] nm")
        if self.velocity >= 0:
            raise InvalidInputError("approach velocity must be negative")
        if self.range[1] <= self.range[0] or self.range[0] + self.d0 <= 0:
            raise InvalidInputError("piezo range must be increasing and stay at positive separation")

    def describe(self) -> dict:
        """Plain-data summary of the injected parameters (for ground-truth sidecars)."""
        out = {k: v for k, v in asdict(self).items() if k != "force_model"}
        out["range"] = list(self.range)
        fm = self.force_model
        out["force_model"] = {
            "casimir": fm.casimir is not None,
            "electrostatic": dict(fm.electrostatic) if fm.electrostatic else None,
        }
        return out


class _Table:
    """Uniform lookup table of F0 and dF0/dd for the scalar integrator."""

    def __init__(self, model: ForceModel, d_min, d_max, step=0.01):
        self.d_min = d_min
        self.step = step
        self.d = d_min + step * np.arange(int((d_max - d_min) / step) + 2)
        self.f = model(self.d).tolist()
        self.n = len(self.f)

    def __call__(self, d):
        t = (d - self.d_min) / self.step
        i = int(t)
        if i < 0:
            i = 0
        elif i > self.n - 2:
            i = self.n - 2
        f0, f1 = self.f[i], self.f[i + 1]
        slope = (f1 - f0) / self.step
        return f0 + slope * (t - i) * self.step, slope


def _integrate(p_start, spacing, params: SynthParams, table: _Table, dt, max_samples):
    """Walk the piezo down from ``p_start`` until the tip touches (x <= 0).

    Returns (piezo, tip, snapped); ``snapped`` is True when the per-sample
    solve lost its root before touching (jump to contact).
    """
    k = params.spring_constant * 1000.0  # pN/nm
    beta = 6.0 * math.pi * params.eta * params.R**2 * 1e12  # F_hydro = -beta v / d, pN with nm, nm/s
    d0, A, B, v = params.d0, params.A, params.B, params.velocity
    feedback = params.velocity_feedback
    ps, xs = [], []
    xp = None
    for i in range(max_samples):
        pi = p_start - spacing * i
        bg = A * pi + B
        xi = pi if xp is None else xp - spacing
        ok = False
        for _ in range(60):
            d = xi + d0
            if d <= 0:
                break
            f0, df0 = table(d)
            if feedback and xp is not None:
                vt = (xi - xp) / dt
                g = k * (xi - pi) - f0 + beta * vt / d - bg
                dg = k - df0 + beta / (dt * d) - beta * vt / (d * d)
            else:
                g = k * (xi - pi) - f0 + beta * v / d - bg
                dg = k - df0 - beta * v / (d * d)
            if dg <= 0:
                break
            step = g / dg
            # keep Newton from jumping through the surface
            if xi - step <= -d0:
                step = 0.5 * (xi + d0)
            xi -= step
            if abs(step) < 1e-3:
                ok = True
                break
        if not ok or xi <= 0:
            return np.array(ps), np.array(xs), not ok
        ps.append(pi)
        xs.append(xi)
        xp = xi
    raise InvalidInputError("tip never reached the surface; extend the piezo range")


def synth_trace(p: SynthParams, rng: np.random.Generator | None = None) -> DeflectionTrace:
    """Generate one approach trace; ground truth goes into ``trace.meta['truth']``.

    The piezo runs from ``range[1]`` towards ``range[0]`` and, if the tip has
    not touched by then (large drag bending the cantilever back), further
    until it does; ``contact_length`` nm of contact line follow.  If the
    per-sample solve loses its root before touching (force gradient exceeding
    the spring constant), the free part ends there and the jump is flagged in
    ``meta['snap_in_nm']``.
    """
    if rng is None:
        rng = np.random.default_rng(p.seed)
    lo, hi = p.range
    h = p.sample_spacing
    dt = h / abs(p.velocity)
    k = p.spring_constant * 1000.0
    table = _Table(p.force_model, max(0.2, 0.05 * p.d0), hi + p.d0 + 50.0 + 5 * abs(p.B) / k)
    max_free = int(round((hi - lo) / h)) + int(round((hi - lo + p.d0) / h)) + 1
    p_free, x_free, snapped = _integrate(hi, h, p, table, dt, max_free)
    n_contact = int(round(p.contact_length / h))
    n_free = p_free.size
    piezo = hi - h * np.arange(n_free + n_contact)
    x = np.zeros(piezo.size)
    x[:n_free] = x_free
    force = k * (x - piezo)  # pN, bending force read by the detector
    signal = force / (p.force_constant * 1000.0)
    if p.noise_sigma > 0:
        signal = signal + rng.normal(0.0, p.noise_sigma / (p.force_constant * 1000.0), size=signal.size)

    snap_nm = None
    if snapped:
        snap_nm = float(piezo[n_free])
        warnings.warn(f"snap to contact at piezo {snap_nm:.1f} nm; free trace truncated there", stacklevel=2)
    truth = {
        "tip_nm": x,
        "force_pN": force,
        "in_contact": np.arange(piezo.size) >= n_free,
        "piezo_true_nm": piezo.copy(),
    }
    meta = {
        "truth": truth,
        "drift_nm": p.drift_offset,
        "snap_in_nm": snap_nm,
        "params": p.describe(),
    }
    return DeflectionTrace(
        piezo=piezo + p.drift_offset,
        signal=signal,
        velocity=p.velocity,
        sample_rate=abs(p.velocity) / h,
        label=f"synthetic v={p.velocity:g} nm/s seed={p.seed}",
        meta=meta,
    )


def synth_ensemble(p: SynthParams, n_runs: int, drift_distribution=(0.0, 0.0)) -> list:
    """Independent seeded runs, each with its own horizontal drift offset (nm)."""
    if n_runs < 1:
        raise InvalidInputError("n_runs must be >= 1")
    mean, sigma = drift_distribution
    seeds = np.random.SeedSequence(p.seed).spawn(n_runs)
    out = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        drift = mean + (sigma * rng.standard_normal() if sigma > 0 else 0.0)
        run = replace(p, drift_offset=float(drift))
        trace = synth_trace(run, rng)
        trace.meta["run"] = i
        out.append(trace)
    return out


def synth_velocity_runs(p: SynthParams, velocities, n_runs: int, drift_distribution=(0.0, 0.0)) -> list:
    """``n_runs`` runs, each a dict {velocity: trace} over the given piezo velocities.

    Every trace gets its own drift draw and noise stream.
    """
    mean, sigma = drift_distribution
    seeds = np.random.SeedSequence(p.seed).spawn(n_runs)
    runs = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        run = {}
        for v in velocities:
            drift = mean + (sigma * rng.standard_normal() if sigma > 0 else 0.0)
            t = synth_trace(replace(p, velocity=float(v), drift_offset=float(drift)), rng)
            t.meta["run"] = i
            run[float(v)] = t
        runs.append(run)
    return runs
