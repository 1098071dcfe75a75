import warnings
from dataclasses import replace

import numpy as np
import pytest

from casimir_afm.errors import InvalidInputError
from casimir_afm.pipeline import align_contact_zero, combine_hydro, compensate_bending, fit_hydro_calibration
from casimir_afm.synth import ForceModel, SynthParams, synth_ensemble, synth_trace, synth_velocity_runs

ETA, R = 1.17e-3, 19.9e-6


def _free(trace):
    free = ~trace.meta["truth"]["in_contact"]
    return trace.meta["truth"]["piezo_true_nm"][free], trace.signal[free], free


def test_zero_force_noiseless_trace_is_the_background_line():
    p = SynthParams(eta=1e-30, A=0.03, B=-40.0, noise_sigma=0.0, velocity_feedback=False)
    t = synth_trace(p)
    piezo, v, _ = _free(t)
    np.testing.assert_allclose(v, (p.A * piezo + p.B) / (p.force_constant * 1000.0), rtol=1e-9, atol=1e-15)


def test_stiff_cantilever_reads_total_force_directly(wide_curve):
    fm = ForceModel(casimir=wide_curve)
    p = SynthParams(force_model=fm, spring_constant=1e5, noise_sigma=0.0, A=-0.01, B=-50.0,
                    velocity_feedback=False)
    t = synth_trace(p)
    piezo, v, _ = _free(t)
    d = piezo + p.d0
    beta = 6 * np.pi * ETA * R**2 * 1e12
    total = fm(d) - beta * p.velocity / d + p.A * piezo + p.B
    # the generator tabulates F0 on a 0.01 nm grid; that sets the agreement
    np.testing.assert_allclose(v * p.force_constant * 1000.0, total, rtol=1e-4, atol=1e-6)


def test_noiseless_hydro_round_trip_four_figures():
    p = SynthParams(spring_constant=2.0, noise_sigma=0.0, velocity_feedback=False)
    run = synth_velocity_runs(p, [-450.0, -3600.0], 1)[0]
    a1, a2 = (compensate_bending(align_contact_zero(run[v])) for v in (-450.0, -3600.0))
    fit = fit_hydro_calibration(combine_hydro(a2, a1), ETA, R, -3150e-9)
    assert fit.force_constant == pytest.approx(14.5, abs=5e-4)
    assert fit.contact_offset == pytest.approx(12.0, abs=5e-3)


def test_noisy_hydro_round_trip():
    p = SynthParams(spring_constant=2.0, noise_sigma=110 / np.sqrt(5))
    runs = synth_velocity_runs(p, [-450.0, -3600.0], 20, (0.0, 2.0))
    from casimir_afm.pipeline import average_series

    hs = []
    for r in runs:
        a1, a2 = (compensate_bending(align_contact_zero(r[v])) for v in (-450.0, -3600.0))
        hs.append(combine_hydro(a2, a1))
    fit = fit_hydro_calibration(average_series(hs), ETA, R, -3150e-9)
    # 20 runs: a third fewer than the full data set, so allow 3 quoted sigmas
    assert abs(fit.force_constant - 14.5) < 3 * fit.uncertainties[0] + 0.05
    assert abs(fit.contact_offset - 12.0) < 3 * fit.uncertainties[1] + 0.5


def test_seeded_generation_bit_reproducible():
    p = SynthParams(seed=11, drift_offset=1.3)
    a, b = synth_trace(p), synth_trace(p)
    assert np.array_equal(a.piezo, b.piezo) and np.array_equal(a.signal, b.signal)
    c = synth_trace(replace(p, seed=12))
    assert not np.array_equal(a.signal, c.signal)


def test_ensembles_identical_without_drift_and_noise():
    runs = synth_ensemble(SynthParams(noise_sigma=0.0), 4, (0.0, 0.0))
    for t in runs[1:]:
        assert np.array_equal(t.signal, runs[0].signal) and np.array_equal(t.piezo, runs[0].piezo)


# Alignment tests use k = 0.3 N/m: with the 0.03 N/m default, 110 pN of
# detector noise is 3.7 nm of apparent deflection per sample and the contact
# point cannot be located to 0.5 nm (see the decisions ledger).
ALIGN = dict(spring_constant=0.3, noise_sigma=110.0)


def test_ensemble_drift_collapses_after_alignment():
    runs = synth_ensemble(SynthParams(seed=5, **ALIGN), 51, (0.0, 2.0))
    drifts = np.array([t.meta["drift_nm"] for t in runs])
    assert drifts.std() > 1.0
    residual = np.array([align_contact_zero(t).shift - t.meta["drift_nm"] for t in runs])
    assert np.all(np.abs(residual - residual.mean()) <= 0.5)
    assert np.all(np.abs(residual) <= 0.5)


def test_two_run_three_nm_offset_scenario():
    runs = synth_ensemble(SynthParams(seed=2, **ALIGN), 2, (3.0, 0.0))
    assert runs[0].meta["drift_nm"] == runs[1].meta["drift_nm"] == 3.0
    a, b = (align_contact_zero(t) for t in runs)
    assert abs(a.shift - 3.0) <= 0.5 and abs(b.shift - 3.0) <= 0.5


def test_velocity_reduced_near_contact_with_feedback():
    p = SynthParams(noise_sigma=0.0, velocity=-3600.0)
    t = synth_trace(p)
    tip = t.meta["truth"]["tip_nm"][~t.meta["truth"]["in_contact"]]
    dt = p.sample_spacing / abs(p.velocity)
    v_tip = np.diff(tip) / dt
    far = v_tip[:200].mean()
    near = v_tip[-20:].mean()
    assert far == pytest.approx(p.velocity, rel=0.01)
    assert abs(near) < 0.9 * abs(far)
    # without feedback the drag never changes the tip speed
    t0 = synth_trace(replace(p, velocity_feedback=False))
    tip0 = t0.meta["truth"]["tip_nm"][~t0.meta["truth"]["in_contact"]]
    assert np.all(np.abs(np.diff(tip0)[-20:]) > 0)


def test_snap_to_contact_is_flagged(wide_curve):
    # without drag feedback nothing damps the jump of a soft cantilever
    p = SynthParams(force_model=ForceModel(casimir=wide_curve), spring_constant=0.03, noise_sigma=0.0,
                    velocity_feedback=False)
    with pytest.warns(UserWarning, match="snap"):
        t = synth_trace(p)
    assert t.meta["snap_in_nm"] is not None
    assert t.meta["truth"]["in_contact"].sum() == round(p.contact_length / p.sample_spacing)


def test_stiff_cantilever_with_casimir_does_not_snap(wide_curve):
    p = SynthParams(force_model=ForceModel(casimir=wide_curve), spring_constant=2.0, noise_sigma=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        t = synth_trace(p)
    assert t.meta["snap_in_nm"] is None


def test_electrostatic_force_model():
    fm = ForceModel(electrostatic={"V0": 0.008, "R": R, "eps_static": 24.3, "debye_length": 100e-9})
    assert fm(30.0) == pytest.approx(-21.26, rel=0.01)
    assert ForceModel()(np.array([1.0, 10.0])).tolist() == [0.0, 0.0]


def test_force_model_extends_curve_as_power_law(wide_curve):
    fm = ForceModel(casimir=wide_curve)
    d = wide_curve.distances * 1e9
    np.testing.assert_allclose(fm(d), wide_curve.forces * 1e12, rtol=1e-10)
    lo = fm(np.array([2.0, 3.0]))
    assert np.all(lo < 0) and abs(lo[0]) > abs(lo[1])


@pytest.mark.parametrize("kw", [dict(velocity=100.0), dict(sample_spacing=0.6), dict(force_constant=0.0),
                                dict(range=(100.0, 50.0)), dict(spring_constant=-1.0)])
def test_invalid_parameters(kw):
    with pytest.raises(InvalidInputError):
        SynthParams(**kw)


def test_ensemble_needs_a_run():
    with pytest.raises(InvalidInputError):
        synth_ensemble(SynthParams(), 0)


def test_ground_truth_sidecar_contents():
    t = synth_trace(SynthParams(drift_offset=2.5))
    truth = t.meta["truth"]
    np.testing.assert_allclose(t.piezo - truth["piezo_true_nm"], 2.5)
    assert t.meta["params"]["d0"] == 12.0
    assert t.sample_rate == pytest.approx(3150.0 / 0.5)
