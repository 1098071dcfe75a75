"""Command-line front end: ``casimir-afm <command>``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 data or analysis error.  Output tables use nm, pN and V.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np
from scipy import stats as sps

from . import config as cfg
from . import io
from .aux_forces import ConductivitySeries, fit_conductivity_loglog
from .dielectrics import matsubara_spacing
from .errors import AnalysisError, ConfigError, InvalidInputError, NumericalError
from .lifshitz import (
    LayerSystem,
    SaltScreening,
    force_curve,
    geometric_distances,
    interpolated_force,
    roughness_correct,
)
from .pipeline import (
    RunEnsemble,
    RunResult,
    align_contact_zero,
    average_ensemble,
    average_series,
    combine_hydro,
    combine_static,
    compensate_bending,
    extract_forces,
    fit_hydro_calibration,
    subtract_linear_background,
    to_force,
)
from .synth import ForceModel, SynthParams, synth_velocity_runs

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ANALYSIS = 2, 3, 4


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            if exc.diagnostics:
                click.echo(f"diagnostics: {exc.diagnostics}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (AnalysisError, InvalidInputError) as exc:
            click.echo(f"analysis error: {exc}", err=True)
            diag = getattr(exc, "diagnostics", None)
            if diag:
                click.echo(f"diagnostics: {diag}", err=True)
            sys.exit(EXIT_ANALYSIS)

    return wrapper


class Ctx:
    def __init__(self, config_path, seed, out, threads):
        self.job, self.base_dir = cfg.load_job(config_path)
        self.seed = self.job.seed if seed is None else seed
        self.out = Path(out)
        self.threads = max(1, threads)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML job configuration.")
@click.option("--seed", type=int, default=None, help="Random seed (overrides the config).")
@click.option("--out", type=click.Path(file_okay=False), default=".", help="Output directory.")
@click.option("--threads", type=int, default=1, help="Worker threads for force grids.")
@click.pass_context
def main(ctx, config_path, seed, out, threads):
    """Casimir-Lifshitz forces in fluids and AFM force-curve analysis."""
    try:
        ctx.obj = Ctx(config_path, seed, out, threads)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _layer_system(c: Ctx) -> LayerSystem:
    s = c.job.system
    try:
        return LayerSystem(
            cfg.build_material(s.sphere, c.base_dir),
            cfg.build_material(s.plate, c.base_dir),
            cfg.build_material(s.medium, c.base_dir),
            temperature=s.temperature,
            sphere_radius=s.sphere_radius_um * 1e-6,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# eps
# ---------------------------------------------------------------------------


@main.command()
@click.argument("material")
@click.option("--matsubara", type=int, default=None, help="Tabulate at xi_m for m = 0..N.")
@click.option("--xi-min", type=float, default=1e13, help="Lower end of a log grid (rad/s).")
@click.option("--xi-max", type=float, default=1e17, help="Upper end of a log grid (rad/s).")
@click.option("--n", "n_points", type=int, default=41, help="Points of the log grid.")
@click.pass_obj
@_guard
def eps(c: Ctx, material, matsubara, xi_min, xi_max, n_points):
    """Tabulate eps(i xi) of MATERIAL (file path or builtin:<name>)."""
    model = cfg.build_material(material, Path.cwd())
    if matsubara is not None:
        if matsubara < 0:
            raise ConfigError("--matsubara must be >= 0")
        xi = matsubara_spacing(c.job.system.temperature) * np.arange(matsubara + 1)
    else:
        if not (0 < xi_min < xi_max) or n_points < 2:
            raise ConfigError("need 0 < xi-min < xi-max and n >= 2")
        xi = np.geomspace(xi_min, xi_max, n_points)
    values = np.empty(xi.size)
    zero = xi == 0
    values[zero] = model.static_value
    if np.any(~zero):
        values[~zero] = model(xi[~zero])
    path = io.write_table(c.out / "eps.txt", {"xi_rad_s": xi, "eps": values},
                          {"material": material, "model": type(model).__name__})
    click.echo(f"wrote {path}")


# ---------------------------------------------------------------------------
# force
# ---------------------------------------------------------------------------


@main.command()
@click.pass_obj
@_guard
def force(c: Ctx):
    """Casimir-Lifshitz force curve with optional salt and roughness variants."""
    f = c.job.force
    system = _layer_system(c)
    if not 0 < f.d_min_nm < f.d_max_nm:
        raise ConfigError("force: need 0 < d_min_nm < d_max_nm")
    d = geometric_distances(f.d_min_nm * 1e-9, f.d_max_nm * 1e-9, f.n_points)
    base = force_curve(system, d, m_max=f.m_max, threads=c.threads)
    extra = {}
    for lam in f.debye_lengths_nm:
        salt = SaltScreening.from_debye_length(lam * 1e-9)
        extra[f"F_pN_debye_{lam:g}nm"] = force_curve(system, d, salt=salt, m_max=f.m_max,
                                                    threads=c.threads).forces
    if f.roughness is not None:
        sp = io.read_roughness(cfg._resolve_path(f.roughness.sphere, c.base_dir))
        pl = io.read_roughness(cfg._resolve_path(f.roughness.plate, c.base_dir))
        lo = d[0] - sp.displacements.max() - pl.displacements.max()
        hi = d[-1] - sp.displacements.min() - pl.displacements.min()
        if lo <= 0:
            raise AnalysisError(f"roughness displacements reach contact at d = {d[0] * 1e9:.2f} nm")
        dense = force_curve(system, np.geomspace(lo, hi, 4 * f.n_points), m_max=f.m_max, threads=c.threads)
        extra["F_pN_rough"] = roughness_correct(interpolated_force(dense), sp, pl, d)
    path = io.write_curve(c.out / "force.txt", base, extra)
    click.echo(f"wrote {path}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _velocities(s) -> tuple[float, float, float]:
    return (s.v1_nm_s, 2.0 * s.v1_nm_s, s.v2_nm_s)


def synth_params_from_config(c: Ctx) -> SynthParams:
    s = c.job.simulate
    casimir = None
    if s.casimir:
        system = _layer_system(c)
        d = np.geomspace(s.casimir_d_min_nm * 1e-9, s.casimir_d_max_nm * 1e-9, s.casimir_points)
        casimir = force_curve(system, d, threads=c.threads)
    es = None
    if s.electrostatic is not None:
        es = {"V0": s.electrostatic.V0, "R": c.job.system.sphere_radius_um * 1e-6,
              "eps_static": s.electrostatic.static_dielectric,
              "debye_length": s.electrostatic.debye_length_nm * 1e-9}
    try:
        return SynthParams(
            force_model=ForceModel(casimir=casimir, electrostatic=es),
            eta=s.eta, R=c.job.system.sphere_radius_um * 1e-6, force_constant=s.force_constant,
            spring_constant=s.spring_constant, d0=s.d0, A=s.A, B=s.B, velocity=s.v1_nm_s,
            noise_sigma=s.noise_sigma, sample_spacing=s.sample_spacing, range=tuple(s.range_nm),
            contact_length=s.contact_length, seed=c.seed, velocity_feedback=s.velocity_feedback,
        )
    except InvalidInputError as exc:
        raise ConfigError(f"simulate: {exc}") from exc


def trace_name(run: int, velocity: float) -> str:
    return f"run_{run:03d}_v{abs(velocity):g}.csv"


@main.command()
@click.pass_obj
@_guard
def simulate(c: Ctx):
    """Synthetic velocity-triplet traces plus a ground-truth sidecar."""
    s = c.job.simulate
    if s.n_runs < 1:
        raise ConfigError("simulate: n_runs must be >= 1")
    p = synth_params_from_config(c)
    runs = synth_velocity_runs(p, _velocities(s), s.n_runs, (s.drift_mean, s.drift_sigma))
    truth_runs = []
    for i, run in enumerate(runs):
        for v, trace in run.items():
            io.write_trace(c.out / trace_name(i, v), trace)
            truth_runs.append({"run": i, "velocity_nm_s": v, "file": trace_name(i, v),
                               "drift_nm": trace.meta["drift_nm"], "snap_in_nm": trace.meta["snap_in_nm"]})
    d = np.linspace(5.0, 200.0, 391)
    io.write_table(c.out / "truth_force.txt", {"d_nm": d, "F_pN": p.force_model(d)},
                   {"kind": "injected velocity-independent force"})
    io.write_json(c.out / "truth.json", {"params": p.describe(), "seed": c.seed, "traces": truth_runs})
    click.echo(f"wrote {len(truth_runs)} traces to {c.out}")


# ---------------------------------------------------------------------------
# calibrate / extract
# ---------------------------------------------------------------------------


def _group_traces(files, need_static: bool):
    """Split trace files into matched (v1, 2 v1, v2) lists by header velocity."""
    traces = [io.read_trace(f) for f in sorted(files, key=str)]
    if not traces:
        raise AnalysisError("no trace files given")
    speeds = sorted({round(abs(t.velocity), 6) for t in traces})
    v1, v2 = speeds[0], speeds[-1]
    groups = {sp: [t for t in traces if round(abs(t.velocity), 6) == sp] for sp in speeds}
    if len(speeds) < 2:
        raise AnalysisError("need traces at two or more piezo velocities", {"speeds": speeds})
    double = [sp for sp in speeds if abs(sp / v1 - 2.0) <= 0.02]
    if need_static and (not double or len(speeds) != 3):
        raise AnalysisError("extraction needs exactly the velocities v1, 2 v1 and v2", {"speeds": speeds})
    n = len(groups[v1])
    sets = [groups[v1], groups[double[0]] if double else None, groups[v2]]
    for g in sets:
        if g is not None and len(g) != n:
            raise AnalysisError("unequal number of traces per velocity", {"counts": {k: len(v) for k, v in groups.items()}})
    return sets


def _hydro_series(t_v1, t_v2):
    a1 = compensate_bending(align_contact_zero(t_v1))
    a3 = compensate_bending(align_contact_zero(t_v2))
    return combine_hydro(a3, a1)


@main.command()
@click.argument("traces", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@_guard
def calibrate(c: Ctx, traces):
    """Hydrodynamic calibration from traces at two (or three) velocities."""
    k = c.job.calibrate
    g1, _, g2 = _group_traces(traces, need_static=False)
    hydro = average_series([_hydro_series(a, b) for a, b in zip(g1, g2)])
    v = hydro.velocity * 1e-9
    R = c.job.system.sphere_radius_um * 1e-6
    fit = fit_hydro_calibration(hydro, k.eta, R, v, fit_range=tuple(k.fit_range_nm))
    study = []
    for rng in k.study_ranges_nm:
        try:
            study.append(fit_hydro_calibration(hydro, k.eta, R, v, fit_range=tuple(rng)))
        except (NumericalError, InvalidInputError) as exc:
            study.append(exc)
    path = io.write_calibration(c.out / "calibration.yaml", fit, study,
                                {"n_runs": len(g1), "eta_Pa_s": k.eta, "effective_velocity_nm_s": hydro.velocity})
    io.write_table(c.out / "hydro_signal.txt", {"x_nm": hydro.x, "V_det_V": hydro.y}, {"n_runs": len(g1)})
    click.echo(f"C = {fit.force_constant:.4f} +- {fit.uncertainties[0]:.4f} nN/V, "
               f"d0 = {fit.contact_offset:.3f} +- {fit.uncertainties[1]:.3f} nm")
    click.echo(f"wrote {path}")


@main.command()
@click.argument("traces", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--calibration", "calib_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Calibration report to use instead of fitting these traces.")
@click.pass_obj
@_guard
def extract(c: Ctx, traces, calib_path):
    """Force-vs-separation curves, ensemble statistics and histograms."""
    k, e = c.job.calibrate, c.job.extract
    g1, g2v, g3 = _group_traces(traces, need_static=True)
    runs = []
    for t1, t2, t3 in zip(g1, g2v, g3):
        a1, a2, a3 = (compensate_bending(align_contact_zero(t)) for t in (t1, t2, t3))
        runs.append(RunResult(combine_hydro(a3, a1), combine_static(a1, a2)))
    R = c.job.system.sphere_radius_um * 1e-6
    ex = extract_forces(runs, k.eta, R, fit_range=tuple(k.fit_range_nm), far_range=tuple(e.far_range_nm),
                        d_range=tuple(e.d_range_nm), study_ranges=tuple(tuple(r) for r in k.study_ranges_nm))
    fit = ex.calibration
    if calib_path is not None:
        fit = io.read_calibration(calib_path)
        forces = [subtract_linear_background(to_force(r.static, fit), tuple(e.far_range_nm))[0] for r in runs]
        st = average_ensemble(RunEnsemble.from_series(forces, d_range=tuple(e.d_range_nm)))
    else:
        io.write_calibration(c.out / "calibration.yaml", fit, ex.range_study, {"n_runs": len(runs)})
        st = ex.stats
    io.write_table(c.out / "force_ensemble.txt",
                   {"d_nm": st.distances, "F_mean_pN": st.mean, "F_std_pN": st.std},
                   {"n_runs": st.n_runs, "force_constant_nN_per_V": fit.force_constant,
                    "contact_offset_nm": fit.contact_offset})
    cols = {"d_nm": st.distances}
    cols.update({f"run_{i:03d}": st.samples[i] for i in range(st.n_runs)})
    io.write_table(c.out / "force_runs.txt", cols, {"n_runs": st.n_runs})
    for d in e.histogram_at_nm:
        counts, edges = st.histogram(d, bins=e.histogram_bins)
        pooled = st.pooled_residuals(d)
        io.write_table(c.out / f"histogram_{d:g}nm.txt",
                       {"bin_lo_pN": edges[:-1], "bin_hi_pN": edges[1:], "count": counts},
                       {"d_nm": float(st.distances[np.argmin(np.abs(st.distances - d))]),
                        "pooled_skew": float(sps.skew(pooled)),
                        "pooled_excess_kurtosis": float(sps.kurtosis(pooled)),
                        "pooled_n": pooled.size})
    click.echo(f"C = {fit.force_constant:.4f} nN/V, d0 = {fit.contact_offset:.3f} nm, runs = {st.n_runs}")
    click.echo(f"wrote results to {c.out}")


# ---------------------------------------------------------------------------
# conductivity
# ---------------------------------------------------------------------------


@main.command("conductivity-fit")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@_guard
def conductivity_fit(c: Ctx, data):
    """Log-log straight-line fit of normalised conductivity against molarity."""
    series = ConductivitySeries.from_file(data)
    slope, intercept, rms = fit_conductivity_loglog(series)
    path = io.write_table(c.out / "conductivity_fit.txt",
                          {"molarity_M": series.molarity, "conductivity_norm": series.conductivity,
                           "fit": 10 ** (intercept + slope * np.log10(series.molarity))},
                          {"slope": slope, "intercept": intercept, "residual_rms_log10": rms})
    click.echo(f"slope = {slope:.4f}, intercept = {intercept:.4f}, rms = {rms:.4f}")
    click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    main()
