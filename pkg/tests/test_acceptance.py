"""Acceptance criteria 1-10, each timed and reported as one PASS/FAIL line.

Scenario choices for the synthetic criteria:

* noise_sigma = 110/sqrt(5) pN per trace, so a velocity combination of a
  triplet (2 V(v1) - V(2 v1), variance 4 + 1) carries 110 pN per sample;
* spring_constant = 2 N/m for the Casimir and calibration scenarios, where
  the contact line of a soft lever cannot be located to the needed accuracy
  with this noise (see the alignment tests);
* drift offsets drawn with sigma 2 nm, fixed seed 0.
"""

import math
import time

import numpy as np
import pytest
import scipy.constants as CONST

import oracles
from casimir_afm.aux_forces import ElectrolyteSpec, FluidProps, debye_length, electrostatic_force
from casimir_afm.dielectrics import Constant, gold_ethanol_gold
from casimir_afm.lifshitz import (
    LayerSystem,
    SaltScreening,
    force_curve,
    force_sphere_plate,
    force_with_salt,
    geometric_distances,
    power_law_exponent,
    zero_freq_screened,
    zero_frequency_term,
)
from casimir_afm.pipeline import (
    RunResult,
    align_contact_zero,
    average_series,
    combine_hydro,
    combine_static,
    compensate_bending,
    extract_forces,
    fit_hydro_calibration,
    fit_range_study,
)
from casimir_afm.synth import ForceModel, SynthParams, synth_velocity_runs

ETA, R = 1.17e-3, 19.9e-6
V1, V2 = -450.0, -3600.0
SIGMA_TRACE = 110.0 / math.sqrt(5.0)
DRIFT = (0.0, 2.0)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def _report(record, n, ok, limit, seconds, detail):
    fast = seconds < limit
    record(n, ok and fast, f"{detail}; {seconds:.2f} s (limit {limit:g} s)")
    assert fast, f"runtime {seconds:.1f} s over {limit} s"
    assert ok, detail


def _aligned(trace):
    return compensate_bending(align_contact_zero(trace))


@pytest.fixture(scope="module")
def casimir_model():
    """Injected F0: gold/ethanol/gold over 4 nm - 3 um; returns the model and its build time."""
    with Timer() as t:
        curve = force_curve(gold_ethanol_gold(), np.geomspace(4e-9, 3e-6, 60), threads=8)
    return ForceModel(casimir=curve), t.seconds


def test_acceptance_01_ideal_metal_limit(record_acceptance):
    with Timer() as t:
        s = LayerSystem(Constant(1e8), Constant(1e8), Constant(1.0), temperature=1.0, sphere_radius=R)
        d = 100e-9
        f = force_sphere_plate(s, d)
    ideal = -math.pi**3 * CONST.hbar * CONST.c * R / (360 * d**3)
    rel = abs(f / ideal - 1)
    _report(record_acceptance, 1, rel <= 0.02, 10, t.seconds,
            f"F = {f * 1e12:.2f} pN vs ideal {ideal * 1e12:.2f} pN, rel dev {rel:.2e} (tol 2e-2)")


def test_acceptance_02_brute_force_equivalence(record_acceptance):
    system = gold_ethanol_gold()
    worst, parts = 0.0, []
    with Timer() as t:
        for d in (25e-9, 50e-9, 100e-9):
            ours = force_sphere_plate(system, d)
            ref = oracles.lifshitz_brute_force(d)
            rel = abs(ours / ref - 1)
            worst = max(worst, rel)
            parts.append(f"{d * 1e9:.0f} nm {rel:.1e}")
    _report(record_acceptance, 2, worst <= 5e-3, 60, t.seconds,
            f"rel dev vs dense-grid oracle: {', '.join(parts)} (tol 5e-3)")


def test_acceptance_03_retardation_scaling(record_acceptance):
    with Timer() as t:
        curve = force_curve(gold_ethanol_gold(), geometric_distances(), threads=4)
        slope = power_law_exponent(curve, 40e-9, 100e-9)
    _report(record_acceptance, 3, -3.3 <= slope <= -2.7, 60, t.seconds,
            f"log-log slope 40-100 nm = {slope:.3f} (accept [-3.3, -2.7])")


def test_acceptance_04_screening_consistency(record_acceptance):
    system = gold_ethanol_gold()
    with Timer() as t:
        rel = max(abs(zero_freq_screened(system, d, SaltScreening(0.0)) / zero_frequency_term(system, d) - 1)
                  for d in (20e-9, 25e-9, 30e-9, 60e-9, 100e-9))
        salt = SaltScreening.from_debye_length(1e-9)
        shifts = [(force_with_salt(system, d, salt) - force_sphere_plate(system, d)) * 1e12
                  for d in (25e-9, 27.5e-9, 30e-9)]
    ok = rel <= 1e-12 and all(5.0 <= s <= 30.0 for s in shifts)
    _report(record_acceptance, 4, ok, 60, t.seconds,
            f"kappa=0 rel dev {rel:.1e} (tol 1e-12); 1 nm screening change "
            f"{', '.join(f'{s:.1f}' for s in shifts)} pN at 25/27.5/30 nm (accept 5-30)")


def test_acceptance_05_debye_lengths(record_acceptance):
    fluid = FluidProps()
    with Timer() as t:
        lam_lo = debye_length(ElectrolyteSpec.from_millimolar(0.3), fluid)
        lam_hi = debye_length(ElectrolyteSpec.from_millimolar(30.0), fluid)
    ok = abs(lam_lo / 10e-9 - 1) <= 0.1 and abs(lam_hi / 1e-9 - 1) <= 0.1
    _report(record_acceptance, 5, ok, 1, t.seconds,
            f"0.3 mM -> {lam_lo * 1e9:.2f} nm, 30 mM -> {lam_hi * 1e9:.3f} nm (targets 10, 1 +-10%)")


def test_acceptance_06_electrostatic_window(record_acceptance):
    with Timer() as t:
        lo = abs(electrostatic_force(30e-9, 0.008, R, FluidProps().static_dielectric, 20e-9)) * 1e12
        hi = abs(electrostatic_force(30e-9, 0.008, R, FluidProps().static_dielectric, 100e-9)) * 1e12
    ok = abs(lo / 6 - 1) <= 0.15 and abs(hi / 21 - 1) <= 0.15
    _report(record_acceptance, 6, ok, 1, t.seconds,
            f"|F(30 nm)| = {lo:.2f} pN (lambda 20 nm), {hi:.2f} pN (lambda 100 nm); targets 6, 21 +-15%")


def test_acceptance_07_calibration_round_trip(record_acceptance):
    with Timer() as t:
        p = SynthParams(spring_constant=2.0, noise_sigma=SIGMA_TRACE, seed=0)
        runs = synth_velocity_runs(p, [V1, V2], 51, DRIFT)
        hydro = average_series([combine_hydro(_aligned(r[V2]), _aligned(r[V1])) for r in runs])
        fit = fit_hydro_calibration(hydro, ETA, R, (V2 - V1) * 1e-9)
    dc, dd = fit.force_constant - 14.5, fit.contact_offset - 12.0
    ok = abs(dc) <= 0.1 and abs(dd) <= 1.0
    _report(record_acceptance, 7, ok, 60, t.seconds,
            f"C = {fit.force_constant:.3f} +- {fit.uncertainties[0]:.3f} nN/V (err {dc:+.3f}, tol 0.1), "
            f"d0 = {fit.contact_offset:.2f} +- {fit.uncertainties[1]:.2f} nm (err {dd:+.2f}, tol 1)")


def test_acceptance_08_combination_identities(record_acceptance, casimir_model):
    model, build = casimir_model
    A, B = -0.01, -50.0
    with Timer() as t:
        # drag linear in the piezo velocity: no tip-velocity feedback, no noise
        p = SynthParams(force_model=model, spring_constant=2.0, noise_sigma=0.0, A=A, B=B,
                        velocity_feedback=False)
        run = synth_velocity_runs(p, [V1, 2 * V1, V2], 1)[0]
        a1, a2, a3 = (_aligned(run[v]) for v in (V1, 2 * V1, V2))
        hydro = combine_hydro(a3, a1)
        static = combine_static(a1, a2)
    C = p.force_constant * 1000.0
    sel = hydro.x >= 8.0
    drag = 6 * math.pi * ETA * (-(V2 - V1) * 1e-9) * R * R * 1e21 / (hydro.x[sel] + p.d0)
    err_h = np.max(np.abs(hydro.y[sel] * C / drag - 1))
    sel = static.x >= 8.0
    x = static.x[sel]
    expect = model(x + p.d0) + A * x + B
    err_s = np.max(np.abs(static.y[sel] * C / expect - 1))
    ok = err_h <= 1e-3 and err_s <= 1e-3
    _report(record_acceptance, 8, ok, 30, t.seconds + build,
            f"max rel dev for x >= 8 nm: hydro {err_h:.1e}, static {err_s:.1e} (tol 1e-3)")


def test_acceptance_09_fit_range_pattern(record_acceptance):
    with Timer() as t:
        # soft lever and velocity feedback: the tip slows down near contact
        p = SynthParams(spring_constant=0.05, noise_sigma=0.0, seed=0)
        runs = synth_velocity_runs(p, [V1, V2], 51, DRIFT)
        hydro = average_series([combine_hydro(_aligned(r[V2]), _aligned(r[V1])) for r in runs])
        near, ref, far = fit_range_study(hydro, ETA, R, (V2 - V1) * 1e-9)
    shift_c = (near.force_constant - ref.force_constant) / ref.force_constant
    shift_d = near.contact_offset - ref.contact_offset
    dc_wide = far.force_constant - ref.force_constant
    dd_wide = far.contact_offset - ref.contact_offset
    # near-contact range: C lower by ~2 %, d0 larger by ~3.5 nm; the wide ranges agree
    ok = (-0.03 <= shift_c <= -0.01 and 2.0 <= shift_d <= 5.0
          and abs(dc_wide) <= 0.1 and abs(dd_wide) <= 2.0)
    _report(record_acceptance, 9, ok, 120, t.seconds,
            f"0.05-1.00 um vs 0.10-1.50 um: dC {100 * shift_c:+.2f}% (accept -3..-1%), "
            f"dd0 {shift_d:+.2f} nm (accept 2..5); 0.15-1.50 vs 0.10-1.50: "
            f"dC {dc_wide:+.3f} (tol 0.1), dd0 {dd_wide:+.2f} nm (tol 2)")


def test_acceptance_10_end_to_end(record_acceptance, casimir_model):
    model, build = casimir_model
    with Timer() as t:
        p = SynthParams(force_model=model, spring_constant=2.0, noise_sigma=SIGMA_TRACE,
                        A=-0.01, B=-50.0, seed=0)
        triplets = synth_velocity_runs(p, [V1, 2 * V1, V2], 51, DRIFT)
        runs = []
        for r in triplets:
            a1, a2, a3 = (_aligned(r[v]) for v in (V1, 2 * V1, V2))
            runs.append(RunResult(combine_hydro(a3, a1), combine_static(a1, a2)))
        ex = extract_forces(runs, ETA, R)
    st = ex.stats
    truth = model(st.distances)
    z = np.abs(st.mean - truth) / st.std
    inside = z <= 1.0
    band = (st.distances >= 30) & (st.distances <= 80)
    std = st.std[band]
    in_band = np.mean((std >= 90) & (std <= 130))
    # sampling error of a 51-run std is ~10 %, so judge the band by its median
    # and by the share of grid points inside it
    ok_std = 90 <= np.median(std) <= 130 and in_band >= 0.8
    ok = bool(np.all(inside)) and ok_std
    worst = int(np.argmax(z))
    fit = ex.calibration
    _report(record_acceptance, 10, ok, 300, t.seconds + build,
            f"mean within 1 sigma at {inside.sum()}/{inside.size} points 20-100 nm "
            f"(worst {z[worst]:.2f} sigma at {st.distances[worst]:.1f} nm); "
            f"std 30-80 nm median {np.median(std):.1f} pN, {100 * in_band:.0f}% in 90-130 "
            f"(accept median in band, >= 80% in band); C = {fit.force_constant:.3f}, d0 = {fit.contact_offset:.2f}")
