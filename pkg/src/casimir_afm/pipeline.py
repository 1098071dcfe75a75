"""From raw deflection traces to calibrated force-vs-separation curves.

Units inside this module follow the instrument: piezo displacement and
separations in nm, detector signal in V, forces in pN, force constant in
nN/V.  Physical inputs (viscosity, radius, velocity) to the calibration are
SI.

Typical flow for one run acquired at v1, 2 v1 and v2::

    a1, a2, a3 = (compensate_bending(align_contact_zero(t)) for t in traces)
    hydro = combine_hydro(a3, a1)          # pure drag at v2 - v1
    static = combine_static(a1, a2)        # F0 + A d + B
    fit = fit_hydro_calibration(average_series([hydro, ...]), eta, R, v)
    force, bg = subtract_linear_background(to_force(static, fit))
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import savgol_filter

from .errors import AnalysisError, FitError, InvalidInputError

GRID_STEP_NM = 0.5
ENSEMBLE_STEP_NM = 1.0
DEFAULT_FIT_RANGE_NM = (100.0, 1500.0)
DEFAULT_FAR_RANGE_NM = (1000.0, 2500.0)
BENDING_SMOOTH_NM = 16.0
BENDING_SMOOTH_ORDER = 5


@dataclass(frozen=True, eq=False)
class DeflectionTrace:
    """One approach: piezo displacement (nm) and detector signal (V) in time order."""

    piezo: np.ndarray
    signal: np.ndarray
    velocity: float
    sample_rate: float
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.piezo, dtype=float).ravel()
        v = np.asarray(self.signal, dtype=float).ravel()
        if p.size != v.size:
            raise InvalidInputError("piezo and signal arrays differ in length")
        if p.size < 100:
            raise InvalidInputError(f"trace has {p.size} samples; at least 100 required")
        dp = np.diff(p)
        if not (np.all(dp > 0) or np.all(dp < 0)):
            raise InvalidInputError("piezo displacement must be strictly monotone")
        density = (p.size - 1) / abs(p[-1] - p[0])
        if density < 2.0 - 1e-9:
            raise InvalidInputError(f"sampling density {density:.3g}/nm below 2 samples per nm")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("detector signal contains non-finite values")
        object.__setattr__(self, "piezo", p)
        object.__setattr__(self, "signal", v)


@dataclass(frozen=True, eq=False)
class AlignedTrace(DeflectionTrace):
    """Trace whose piezo axis is zeroed at the unbent-contact point.

    ``sensitivity`` is the deflection sensitivity S (nm/V); ``tip`` holds
    d_piezo + d_cantilever once bending has been compensated.
    """

    sensitivity: float = float("nan")
    shift: float = 0.0
    contact_start: int = -1
    noise_rms: float = 0.0
    contact_zero_applied: bool = True
    tip: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Series:
    """A signal on a distance axis (nm)."""

    x: np.ndarray
    y: np.ndarray
    velocity: float = float("nan")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.size != y.size:
            raise InvalidInputError("x and y differ in length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class CalibrationFit:
    force_constant: float  # nN/V
    contact_offset: float  # nm
    fit_range: tuple
    residual_rms: float  # pN
    uncertainties: tuple  # (sigma_C nN/V, sigma_d0 nm)
    residuals: Series | None = None
    n_points: int = 0

    def __post_init__(self):
        if not self.force_constant > 0:
            raise FitError("fitted force constant is not positive", {"C": self.force_constant})


@dataclass(frozen=True)
class BackgroundFit:
    slope: float  # pN/nm
    offset: float  # pN


# ---------------------------------------------------------------------------
# contact alignment
# ---------------------------------------------------------------------------


def _line_fit(x, y):
    """Slope, intercept and slope standard error of a straight-line fit."""
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - y.mean())) / sxx
    intercept = y.mean() - slope * xm
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    se = np.sqrt(np.sum(resid**2) / dof / sxx)
    return slope, intercept, se


def _far_field_rms(p, v):
    n = max(int(0.2 * p.size), 10)
    slope, intercept, _ = _line_fit(p[:n], v[:n])
    return float(np.sqrt(np.mean((v[:n] - slope * p[:n] - intercept) ** 2)))


def align_contact_zero(trace: DeflectionTrace, terminal_fraction=0.2, min_window=40,
                       slope_tolerance=0.05, noise_band=3.0) -> AlignedTrace:
    """Shift the piezo axis so the contact line crosses V_det = 0 at zero.

    Contact is the terminal run of samples on which the signal is linear in
    piezo displacement with the steepest slope of the trace.  Terminal
    windows of growing length are fitted; the steepest reliably-estimated
    slope sets the reference and the longest window within
    ``slope_tolerance`` of it is taken as the contact line.  The line is
    then refitted on the samples lying within ``noise_band`` times the
    far-field RMS.  The deflection sensitivity is 1/|slope|.
    """
    p, v = trace.piezo, trace.signal
    if isinstance(trace, AlignedTrace):
        base = {f.name: getattr(trace, f.name) for f in dataclasses.fields(DeflectionTrace)}
        prior_shift = trace.shift
    else:
        base = {f.name: getattr(trace, f.name) for f in dataclasses.fields(trace)}
        prior_shift = 0.0
    n = p.size
    n_term = max(int(terminal_fraction * n), min_window + 2)
    lengths = np.unique(np.geomspace(min_window, n_term, 48).astype(int))
    fits = []
    for L in lengths:
        s, b, se = _line_fit(p[n - L:], v[n - L:])
        fits.append((L, s, b, se))
    reliable = [f for f in fits if f[3] < 0.02 * abs(f[1])]
    if not reliable:
        raise AnalysisError(
            "no contact region found: no terminal window gives a well-determined slope",
            diagnostics={"windows": [(int(L), float(s), float(se)) for L, s, _, se in fits[:10]]},
        )
    steepest = max(abs(f[1]) for f in reliable)
    inside = [f for f in fits if abs(f[1]) >= (1 - slope_tolerance) * steepest and f[3] < 0.02 * abs(f[1])]
    L_best = max(f[0] for f in inside)
    noise = _far_field_rms(p, v)

    # Refine: start from the innermost window (certainly in contact) and grow
    # backwards while samples stay within the noise band of the line; a run
    # of three consecutive out-of-band samples ends the contact region.
    floor = max(n - L_best, n - n_term)
    region = np.arange(n - min_window, n)
    s, b, _ = _line_fit(p[region], v[region])
    band = noise_band * max(noise, 1e-9 * np.max(np.abs(v)))
    for _ in range(8):
        out = np.abs(v - (s * p + b)) > band
        start = n - 1
        misses = 0
        while start > floor and misses < 3:
            start -= 1
            misses = misses + 1 if out[start] else 0
        start += misses
        new_region = np.arange(min(start, n - min_window), n)
        s, b, _ = _line_fit(p[new_region], v[new_region])
        if np.array_equal(new_region, region):
            break
        region = new_region

    if s == 0 or region.size < 3:
        raise AnalysisError("contact line is degenerate", diagnostics={"slope": float(s)})
    # the steepest slope must belong to the terminal (contact) segment
    far_slope = _line_fit(p[: n // 5], v[: n // 5])[0]
    if abs(far_slope) >= abs(s):
        raise AnalysisError(
            "no contact region found: terminal slope is not the steepest",
            diagnostics={"terminal_slope": float(s), "far_slope": float(far_slope)},
        )
    zero = -b / s
    base["piezo"] = p - zero
    return AlignedTrace(
        **base,
        sensitivity=float(1.0 / abs(s)),
        shift=float(prior_shift + zero),
        contact_start=int(region[0]),
        noise_rms=noise,
    )


def _smooth(y, window, order):
    if y.size <= order + 2:
        return y.copy()
    w = min(window, y.size if y.size % 2 else y.size - 1)
    if w <= order + 1:
        return y.copy()
    return savgol_filter(y, w, order, mode="interp")


def compensate_bending(trace: AlignedTrace, smooth_nm=BENDING_SMOOTH_NM,
                       order=BENDING_SMOOTH_ORDER) -> AlignedTrace:
    """Add the cantilever deflection S * V_det to the piezo axis.

    The deflection is taken from a Savitzky-Golay smoothed signal (window
    ``smooth_nm`` of piezo travel, free and contact parts smoothed
    separately): with the raw signal, detector noise would move each sample
    along the distance axis in step with its own value, which biases any
    later interpolation.  ``smooth_nm=0`` uses the raw signal.
    """
    if not np.isfinite(trace.sensitivity):
        raise InvalidInputError("deflection sensitivity unknown; align the trace first")
    v = trace.signal
    if smooth_nm > 0:
        spacing = abs(trace.piezo[-1] - trace.piezo[0]) / (trace.piezo.size - 1)
        window = 2 * int(round(0.5 * smooth_nm / spacing)) + 1
        cut = trace.contact_start if trace.contact_start > 0 else v.size
        v = np.concatenate([_smooth(v[:cut], window, order), _smooth(v[cut:], window, order)])
    return dataclasses.replace(trace, tip=trace.piezo + trace.sensitivity * v)


# ---------------------------------------------------------------------------
# velocity combinations
# ---------------------------------------------------------------------------


def _free_part(trace: AlignedTrace):
    if trace.tip is None:
        trace = compensate_bending(trace)
    stop = trace.contact_start if trace.contact_start > 0 else trace.piezo.size
    x = trace.tip[:stop]
    y = trace.signal[:stop]
    keep = trace.piezo[:stop] > 0
    x, y = x[keep], y[keep]
    order = np.argsort(x, kind="stable")
    return x[order], y[order]


def common_grid(*axes, step=GRID_STEP_NM):
    lo = max(a.min() for a in axes)
    hi = min(a.max() for a in axes)
    start = np.ceil(lo / step) * step
    stop = np.floor(hi / step) * step
    if stop <= start:
        raise AnalysisError("traces do not overlap on a common grid", diagnostics={"lo": lo, "hi": hi})
    return start + step * np.arange(int(round((stop - start) / step)) + 1)


def resample(trace: AlignedTrace, grid):
    x, y = _free_part(trace)
    return np.interp(grid, x, y)


def combine_hydro(trace_v2: AlignedTrace, trace_v1: AlignedTrace, step=GRID_STEP_NM) -> Series:
    """Signal difference V(v2) - V(v1) on a common grid: pure drag at v2 - v1."""
    x2, _ = _free_part(trace_v2)
    x1, _ = _free_part(trace_v1)
    grid = common_grid(x2, x1, step=step)
    diff = resample(trace_v2, grid) - resample(trace_v1, grid)
    return Series(grid, diff, velocity=trace_v2.velocity - trace_v1.velocity, meta={"kind": "hydro"})


def combine_static(trace_v1: AlignedTrace, trace_2v1: AlignedTrace, step=GRID_STEP_NM) -> Series:
    """2 V(v1) - V(2 v1): the velocity-independent signal plus linear background."""
    ratio = trace_2v1.velocity / trace_v1.velocity
    if abs(ratio - 2.0) > 0.02:
        raise InvalidInputError(f"second trace velocity must be twice the first (ratio {ratio:.4f})")
    x1, _ = _free_part(trace_v1)
    x2, _ = _free_part(trace_2v1)
    grid = common_grid(x1, x2, step=step)
    out = 2.0 * resample(trace_v1, grid) - resample(trace_2v1, grid)
    return Series(grid, out, velocity=0.0, meta={"kind": "static"})


def average_series(series: list) -> Series:
    """Pointwise mean of series that share the same lattice (intersection of ranges)."""
    if not series:
        raise AnalysisError("no series to average")
    step = GRID_STEP_NM
    lo = max(s.x.min() for s in series)
    hi = min(s.x.max() for s in series)
    if hi < lo:
        raise AnalysisError("series do not overlap")
    rows = []
    for s in series:
        i0 = int(round((lo - s.x[0]) / step))
        i1 = int(round((hi - s.x[0]) / step)) + 1
        if abs(s.x[i0] - lo) > 1e-6 or not np.allclose(s.x[i0:i1] - s.x[i0], np.arange(i1 - i0) * step, atol=1e-6):
            raise AnalysisError("series are not on a common lattice")
        rows.append(s.y[i0:i1])
    x = lo + step * np.arange(len(rows[0]))
    return Series(x, np.mean(rows, axis=0), velocity=series[0].velocity, meta={"n_runs": len(series)})


# ---------------------------------------------------------------------------
# hydrodynamic calibration
# ---------------------------------------------------------------------------


def _drag_pN_nm(eta, R, v):
    """6 pi eta |v| R^2 expressed in pN * nm (so F = this / d_nm)."""
    return 6.0 * np.pi * eta * (-v) * R * R * 1e12 * 1e9


def fit_hydro_calibration(hydro_signal: Series, eta: float, R: float, v: float,
                          fit_range=DEFAULT_FIT_RANGE_NM, max_nfev=2000) -> CalibrationFit:
    """Fit V(x) * C = -6 pi eta v R^2 / (x + d0) for C (nN/V) and d0 (nm).

    ``v`` is the effective velocity v2 - v1 in m/s (negative on approach);
    ``x`` is the bending-compensated piezo axis of ``hydro_signal``.
    Least squares in signal units (Levenberg-Marquardt); parameter
    uncertainties from the Jacobian at the optimum.
    """
    lo, hi = fit_range
    x_all, y_all = hydro_signal.x, hydro_signal.y
    if lo >= hi or lo < x_all.min() - GRID_STEP_NM or hi > x_all.max() + GRID_STEP_NM:
        raise InvalidInputError(
            f"fit range {fit_range} nm outside data [{x_all.min():.1f}, {x_all.max():.1f}] nm"
        )
    sel = (x_all >= lo) & (x_all <= hi)
    x, y = x_all[sel], y_all[sel]
    if x.size < 10:
        raise InvalidInputError("too few samples in the fit range")
    a = _drag_pN_nm(eta, R, v) / 1000.0  # nN * nm

    far = x >= np.median(x)
    c0 = float(np.median((a / x[far]) / y[far])) if np.all(y[far] != 0) else 1.0
    if not np.isfinite(c0) or c0 <= 0:
        c0 = float(np.sum(a / x) / np.sum(np.abs(y)))
    steps = []

    def resid(params):
        c, d0 = params
        steps.append((float(c), float(d0)))
        return y - a / (c * (x + d0))

    sol = least_squares(resid, x0=[c0, 0.0], method="lm", x_scale=[c0, 10.0], max_nfev=max_nfev,
                        xtol=1e-12, ftol=1e-12)
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"calibration fit did not converge: {sol.message}",
                       diagnostics={"steps": steps[-20:], "nfev": sol.nfev})
    c, d0 = sol.x
    if c <= 0 or d0 <= -min(x):
        raise FitError("calibration fit converged to unphysical parameters",
                       diagnostics={"C": float(c), "d0": float(d0), "steps": steps[-20:]})
    r = sol.fun
    dof = max(x.size - 2, 1)
    s2 = np.sum(r**2) / dof
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * s2
        unc = tuple(float(u) for u in np.sqrt(np.diag(cov)))
    except np.linalg.LinAlgError:
        unc = (float("nan"), float("nan"))
    rms_pN = float(np.sqrt(np.mean(r**2)) * c * 1000.0)
    return CalibrationFit(
        force_constant=float(c),
        contact_offset=float(d0),
        fit_range=(float(lo), float(hi)),
        residual_rms=rms_pN,
        uncertainties=unc,
        residuals=Series(x, r * c * 1000.0, meta={"unit": "pN"}),
        n_points=int(x.size),
    )


def fit_range_study(hydro_signal: Series, eta, R, v, ranges=((50.0, 1000.0), (100.0, 1500.0), (150.0, 1500.0))):
    """Calibration repeated over several fit ranges (nm); returns a list of fits."""
    return [fit_hydro_calibration(hydro_signal, eta, R, v, fit_range=r) for r in ranges]


# ---------------------------------------------------------------------------
# forces, background, ensembles
# ---------------------------------------------------------------------------


def to_force(static_signal: Series, fit: CalibrationFit) -> Series:
    """Convert a signal series to force (pN) against separation d = x + d0 (nm)."""
    return Series(static_signal.x + fit.contact_offset, static_signal.y * fit.force_constant * 1000.0,
                  velocity=static_signal.velocity, meta={**static_signal.meta, "unit": "pN"})


def subtract_linear_background(static_signal: Series, far_range=DEFAULT_FAR_RANGE_NM):
    """Fit A d + B over ``far_range`` (nm) where F0 ~ 0 and remove it everywhere."""
    lo, hi = far_range
    x, y = static_signal.x, static_signal.y
    if lo >= hi or hi > x.max() + GRID_STEP_NM or lo < x.min() - GRID_STEP_NM:
        raise InvalidInputError(f"far range {far_range} nm lies outside the data")
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 50:
        raise InvalidInputError("far range holds fewer than 50 samples")
    A, B = np.polyfit(x[sel], y[sel], 1)
    out = Series(x, y - (A * x + B), velocity=static_signal.velocity, meta=dict(static_signal.meta))
    return out, BackgroundFit(float(A), float(B))


@dataclass(frozen=True, eq=False)
class RunEnsemble:
    """Runs on a shared 1 nm distance grid: ``values[run, j]`` at ``distances[j]``."""

    distances: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        d = np.asarray(self.distances, dtype=float)
        if vals.shape[1] != d.size:
            raise InvalidInputError("values do not match the distance grid")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "distances", d)

    @classmethod
    def from_series(cls, runs: list, step=ENSEMBLE_STEP_NM, d_range=None) -> "RunEnsemble":
        """Put runs on a shared ``step`` grid.

        Each run contributes, per bin of width ``step``, its single sample
        nearest the bin centre, so the spread across runs is the per-sample
        scatter.  Bins present in every run are kept; the reported distance
        of a bin is the mean position of the chosen samples.
        """
        if not runs:
            raise AnalysisError("no runs to collect")
        picked = []
        for s in runs:
            keys = np.round(s.x / step).astype(np.int64)
            off = np.abs(s.x - keys * step)
            order = np.lexsort((off, keys))
            first = np.ones(order.size, dtype=bool)
            first[1:] = keys[order][1:] != keys[order][:-1]
            sel = order[first]
            picked.append(dict(zip(keys[sel].tolist(), zip(s.x[sel].tolist(), s.y[sel].tolist()))))
        common = set(picked[0])
        for b in picked[1:]:
            common &= set(b)
        keys = sorted(common)
        if d_range is not None:
            keys = [k for k in keys if d_range[0] <= k * step <= d_range[1]]
        if not keys:
            raise AnalysisError("runs share no distances on the ensemble grid")
        xs = np.array([[b[k][0] for k in keys] for b in picked])
        values = np.array([[b[k][1] for k in keys] for b in picked])
        return cls(np.sort(xs, axis=0).mean(axis=0), values)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    distances: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int
    samples: np.ndarray  # (n_runs, n_distances)

    def histogram(self, d, bins=10):
        """Counts and bin edges of the run values at the grid distance nearest ``d``."""
        j = int(np.argmin(np.abs(self.distances - d)))
        return np.histogram(self.samples[:, j], bins=bins)

    def values_at(self, d):
        j = int(np.argmin(np.abs(self.distances - d)))
        return self.samples[:, j]

    def pooled_residuals(self, d, half_width=5.0):
        """Run values minus the ensemble mean, pooled over |distance - d| <= half_width."""
        sel = np.abs(self.distances - d) <= half_width
        if not np.any(sel):
            raise AnalysisError(f"no ensemble grid points within {half_width} nm of {d} nm")
        return (self.samples[:, sel] - self.mean[sel]).ravel()


def average_ensemble(ens: RunEnsemble) -> EnsembleStats:
    """Pointwise mean and sample standard deviation across runs."""
    n = ens.values.shape[0]
    if n < 2:
        raise InvalidInputError("ensemble statistics need at least 2 runs")
    if ens.distances.size == 0:
        raise AnalysisError("empty distance grid")
    # sort rows so the reduction order does not depend on run order
    vals = np.sort(ens.values, axis=0)
    mean = np.sum(vals, axis=0) / n
    std = np.sqrt(np.sum((vals - mean) ** 2, axis=0) / (n - 1))
    return EnsembleStats(ens.distances, mean, std, n, ens.values)


# ---------------------------------------------------------------------------
# whole-data-set analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunResult:
    hydro: Series  # V(v2) - V(v1), signal units
    static: Series  # 2 V(v1) - V(2 v1), signal units


@dataclass(frozen=True, eq=False)
class Extraction:
    calibration: CalibrationFit
    range_study: list
    hydro_mean: Series
    forces: list  # per-run background-free force Series (pN vs nm)
    backgrounds: list
    stats: EnsembleStats


def process_run(t_v1: DeflectionTrace, t_2v1: DeflectionTrace, t_v2: DeflectionTrace) -> RunResult:
    """Align, bending-compensate and combine one velocity triplet."""
    a1, a2, a3 = (compensate_bending(align_contact_zero(t)) for t in (t_v1, t_2v1, t_v2))
    return RunResult(combine_hydro(a3, a1), combine_static(a1, a2))


def extract_forces(runs: list, eta: float, R: float, fit_range=DEFAULT_FIT_RANGE_NM,
                   far_range=DEFAULT_FAR_RANGE_NM, d_range=(20.0, 100.0),
                   study_ranges=((50.0, 1000.0), (100.0, 1500.0), (150.0, 1500.0))) -> Extraction:
    """Calibrate on the run-averaged drag signal and convert every run to force.

    ``runs`` is a list of RunResult; the effective calibration velocity is
    taken from the hydro series (nm/s).
    """
    if not runs:
        raise AnalysisError("no runs to analyse")
    hydro = average_series([r.hydro for r in runs])
    v_eff = hydro.velocity * 1e-9
    fit = fit_hydro_calibration(hydro, eta, R, v_eff, fit_range=fit_range)
    study = []
    for rng in study_ranges:
        try:
            study.append(fit_hydro_calibration(hydro, eta, R, v_eff, fit_range=rng))
        except (FitError, InvalidInputError) as exc:
            study.append(exc)
    forces, bgs = [], []
    for r in runs:
        f, bg = subtract_linear_background(to_force(r.static, fit), far_range=far_range)
        forces.append(f)
        bgs.append(bg)
    stats = average_ensemble(RunEnsemble.from_series(forces, d_range=d_range))
    return Extraction(fit, study, hydro, forces, bgs, stats)
