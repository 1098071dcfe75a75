import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casimir_afm.aux_forces import (
    ConductivitySeries,
    ElectrolyteSpec,
    FluidProps,
    debye_length,
    electrostatic_force,
    fit_conductivity_loglog,
    hydro_force,
)
from casimir_afm.errors import DomainError, InvalidInputError

ETA, R = 1.17e-3, 19.9e-6
EPS_ETHANOL = 24.3


# --- hydrodynamic drag -------------------------------------------------------


def test_hydro_zero_velocity():
    assert hydro_force(100e-9, 0.0, ETA, R) == 0.0


def test_hydro_reference_value():
    f = hydro_force(100e-9, -3.150e-6, ETA, R)
    assert f > 0
    assert f == pytest.approx(275e-12, rel=0.01)


def test_hydro_inverse_distance():
    assert hydro_force(50e-9, -1e-6, ETA, R) == 2 * hydro_force(100e-9, -1e-6, ETA, R)


def test_hydro_domain_error():
    with pytest.raises(DomainError):
        hydro_force(0.0, -1e-6, ETA, R)


def test_hydro_warns_beyond_r_over_20():
    with pytest.warns(UserWarning):
        hydro_force(1.5e-6, -1e-6, ETA, R)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hydro_force(0.9e-6, -1e-6, ETA, R)


@settings(max_examples=100, deadline=None)
@given(d=st.floats(1e-9, 900e-9), v=st.floats(-1e-4, 1e-4), a=st.floats(-10, 10))
def test_hydro_linear_and_odd_in_velocity(d, v, a):
    f = hydro_force(d, v, ETA, R)
    assert hydro_force(d, a * v, ETA, R) == pytest.approx(a * f, rel=1e-12, abs=1e-300)
    assert hydro_force(d, -v, ETA, R) == -f


# --- electrostatics ---------------------------------------------------------------


def test_electrostatic_zero_potential():
    assert electrostatic_force(30e-9, 0.0, R, EPS_ETHANOL, 20e-9) == 0.0


def test_electrostatic_unscreened_limit():
    from casimir_afm.constants import CONST

    expected = -np.pi * R * EPS_ETHANOL * CONST.eps0 * 0.008**2 / 30e-9
    assert electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, np.inf) == pytest.approx(expected, rel=1e-14)
    assert electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, 1e6) == pytest.approx(expected, rel=1e-12)


def test_electrostatic_window_endpoints():
    lo = abs(electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, 20e-9))
    hi = abs(electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, 100e-9))
    assert lo == pytest.approx(6e-12, rel=0.15)
    assert hi == pytest.approx(21e-12, rel=0.15)


def test_electrostatic_domain_errors():
    with pytest.raises(DomainError):
        electrostatic_force(0.0, 0.008, R, EPS_ETHANOL, 20e-9)
    with pytest.raises(DomainError):
        electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, 0.0)


def test_electrostatic_monotone():
    d = np.linspace(5e-9, 200e-9, 100)
    f = np.abs(electrostatic_force(d, 0.008, R, EPS_ETHANOL, 20e-9))
    assert np.all(np.diff(f) < 0)
    lam = np.linspace(5e-9, 200e-9, 50)
    g = np.array([abs(electrostatic_force(30e-9, 0.008, R, EPS_ETHANOL, x)) for x in lam])
    assert np.all(np.diff(g) > 0)
    assert np.all(electrostatic_force(d, 0.008, R, EPS_ETHANOL, 20e-9) <= 0)


# --- Debye length -------------------------------------------------------------------


def test_debye_lengths_of_quoted_concentrations():
    fluid = FluidProps(static_dielectric=EPS_ETHANOL, temperature=294.0)
    assert debye_length(ElectrolyteSpec.from_millimolar(0.3), fluid) == pytest.approx(10e-9, rel=0.10)
    assert debye_length(ElectrolyteSpec.from_millimolar(30.0), fluid) == pytest.approx(1e-9, rel=0.10)


def test_debye_length_square_root_scaling():
    fluid = FluidProps()
    a = debye_length(ElectrolyteSpec(0.5), fluid)
    b = debye_length(ElectrolyteSpec(50.0), fluid)
    assert a / b == pytest.approx(10.0, rel=1e-14)


def test_debye_length_pure_solvent_is_infinite():
    assert debye_length(ElectrolyteSpec(0.0), FluidProps()) == np.inf


def test_debye_length_monotone_in_concentration_and_valence():
    fluid = FluidProps()
    c = np.geomspace(1e-3, 1e3, 30)
    lam = [debye_length(ElectrolyteSpec(x), fluid) for x in c]
    assert np.all(np.diff(lam) < 0)
    assert debye_length(ElectrolyteSpec(1.0, 2), fluid) < debye_length(ElectrolyteSpec(1.0, 1), fluid)


def test_electrolyte_validation():
    with pytest.raises(InvalidInputError):
        ElectrolyteSpec(-1.0)
    with pytest.raises(InvalidInputError):
        ElectrolyteSpec(1.0, 0)
    with pytest.raises(InvalidInputError):
        FluidProps(viscosity=0.0)


# --- conductivity ----------------------------------------------------------------------


def test_conductivity_exact_linear():
    c = np.geomspace(1e-4, 1e-1, 8)
    slope, _, rms = fit_conductivity_loglog(ConductivitySeries(c, 3.0 * c))
    assert slope == pytest.approx(1.0, abs=1e-9)
    assert rms < 1e-12


def test_conductivity_sublinear():
    c = np.geomspace(1e-4, 1e-1, 8)
    slope, intercept, _ = fit_conductivity_loglog(ConductivitySeries(c, 2.0 * c**0.9))
    assert slope == pytest.approx(0.9, abs=1e-9)
    assert intercept == pytest.approx(np.log10(2.0), abs=1e-9)


def test_conductivity_noisy():
    rng = np.random.default_rng(7)
    c = np.geomspace(3e-4, 3e-2, 12)
    sigma = c * (1 + 0.02 * rng.standard_normal(c.size))
    slope, _, _ = fit_conductivity_loglog(ConductivitySeries(c, sigma))
    assert 0.95 <= slope <= 1.05


def test_conductivity_domain_errors(tmp_path):
    with pytest.raises(DomainError):
        ConductivitySeries(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(InvalidInputError):
        fit_conductivity_loglog(ConductivitySeries(np.array([1.0, 2.0]), np.array([1.0, 2.0])))
    p = tmp_path / "c.txt"
    p.write_text("# molarity_M conductivity_norm\n0.001 1\n0.01 9.5\n0.1 90\n")
    assert ConductivitySeries.from_file(p).molarity.size == 3
