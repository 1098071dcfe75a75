"""Job and material configuration: schema, loading and object construction.

Configuration files are YAML.  Every section is validated before anything
runs and unknown keys are rejected.  Material documents look like::

    variant: tabulated            # constant | drude | tabulated | oscillator | with_ions
    table: builtin:gold           # or a path to an ``energy_eV im_eps`` file
    tail: {plasma_freq_ev: 7.50, gamma_ev: 0.061}
    crossover_ev: 0.125

Wherever a material is expected, a config may give the document inline, a
path to a material file, or ``builtin:<name>`` for the packaged files
(gold, ethanol, vacuum, ethanol_nai_30mM).
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import dielectrics as de
from .errors import ConfigError, InvalidInputError

DATA_DIR = Path(__file__).parent / "data"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------


class ConstantMaterial(_Strict):
    variant: Literal["constant"]
    value: float = 1.0


class DrudeMaterial(_Strict):
    variant: Literal["drude"]
    plasma_freq_ev: float = 7.50
    gamma_ev: float = 0.061


class DrudeTail(_Strict):
    plasma_freq_ev: float = 7.50
    gamma_ev: float = 0.061


class TabulatedMaterial(_Strict):
    variant: Literal["tabulated"]
    table: str = "builtin:gold"
    tail: DrudeTail = DrudeTail()
    crossover_ev: float = de.DEFAULT_CROSSOVER_EV


class OscillatorMaterial(_Strict):
    variant: Literal["oscillator"]
    c_ir: float = de.ETHANOL_OSCILLATORS.c_ir
    c_uv: float = de.ETHANOL_OSCILLATORS.c_uv
    omega_ir: float = de.ETHANOL_OSCILLATORS.omega_ir
    omega_uv: float = de.ETHANOL_OSCILLATORS.omega_uv


class WithIonsMaterial(_Strict):
    variant: Literal["with_ions"]
    base: "MaterialRef"
    salt_molar: Optional[float] = None
    ion_masses_amu: tuple[float, ...] = de.NAI_MASSES_AMU
    plasma_freqs_rad_s: Optional[tuple[float, ...]] = None


MaterialSpec = Annotated[
    Union[ConstantMaterial, DrudeMaterial, TabulatedMaterial, OscillatorMaterial, WithIonsMaterial],
    Field(discriminator="variant"),
]
MaterialRef = Union[str, MaterialSpec]
WithIonsMaterial.model_rebuild()


def _resolve_path(name: str, base_dir: Path | None) -> Path:
    if name.startswith("builtin:"):
        return DATA_DIR / f"{name.split(':', 1)[1]}.yaml"
    p = Path(name)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


class _MaterialDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")
    material: MaterialSpec


def load_material_spec(ref, base_dir: Path | None = None):
    """Resolve a material reference (inline dict, path, or builtin name) to a spec."""
    if isinstance(ref, BaseModel):
        return ref
    if isinstance(ref, str):
        path = _resolve_path(ref, base_dir)
        doc = load_yaml(path)
        return load_material_spec(doc, path.parent)
    try:
        return _MaterialDoc(material=ref).material
    except ValidationError as exc:
        raise ConfigError(f"invalid material document: {exc}") from exc


def build_material(ref, base_dir: Path | None = None) -> de.DielectricModel:
    """Construct the dielectric model described by ``ref``."""
    spec = load_material_spec(ref, base_dir)
    try:
        if isinstance(spec, ConstantMaterial):
            return de.Constant(spec.value)
        if isinstance(spec, DrudeMaterial):
            return de.Drude(de.DrudeParams.from_ev(spec.plasma_freq_ev, spec.gamma_ev))
        if isinstance(spec, TabulatedMaterial):
            if spec.table.startswith("builtin:"):
                table = de.OpticalDataTable.builtin(spec.table.split(":", 1)[1])
            else:
                table = de.OpticalDataTable.from_file(_resolve_path(spec.table, base_dir))
            tail = de.DrudeParams.from_ev(spec.tail.plasma_freq_ev, spec.tail.gamma_ev)
            return de.TabulatedWithDrudeTail(table, tail, spec.crossover_ev)
        if isinstance(spec, OscillatorMaterial):
            return de.Oscillator(de.OscillatorModel(spec.c_ir, spec.c_uv, spec.omega_ir, spec.omega_uv))
        if isinstance(spec, WithIonsMaterial):
            base = build_material(spec.base, base_dir)
            if (spec.salt_molar is None) == (spec.plasma_freqs_rad_s is None):
                raise ConfigError("with_ions needs exactly one of salt_molar or plasma_freqs_rad_s")
            if spec.salt_molar is not None:
                ions = de.IonCorrection.from_salt(spec.salt_molar, spec.ion_masses_amu,
                                                  (1,) * len(spec.ion_masses_amu))
            else:
                ions = de.IonCorrection(spec.plasma_freqs_rad_s)
            return de.WithIons(base, ions)
    except InvalidInputError as exc:
        raise ConfigError(f"material parameters rejected: {exc}") from exc
    raise ConfigError(f"unknown material variant {spec!r}")


# ---------------------------------------------------------------------------
# job sections
# ---------------------------------------------------------------------------


class SystemSection(_Strict):
    sphere: MaterialRef = "builtin:gold"
    plate: MaterialRef = "builtin:gold"
    medium: MaterialRef = "builtin:ethanol"
    temperature: float = 294.15
    sphere_radius_um: float = 19.9


class RoughnessSection(_Strict):
    sphere: str
    plate: str


class ForceSection(_Strict):
    d_min_nm: float = 20.0
    d_max_nm: float = 100.0
    n_points: int = 81
    m_max: Union[Literal["auto"], int] = "auto"
    debye_lengths_nm: tuple[float, ...] = ()
    roughness: Optional[RoughnessSection] = None

    @field_validator("n_points")
    @classmethod
    def _enough_points(cls, v):
        if v < 2:
            raise ValueError("n_points must be >= 2")
        return v


class ElectrostaticSection(_Strict):
    V0: float = 0.008
    debye_length_nm: float = 10.0
    static_dielectric: float = 24.3


class SimulateSection(_Strict):
    n_runs: int = 51
    v1_nm_s: float = -450.0
    v2_nm_s: float = -3600.0
    casimir: bool = True
    casimir_d_min_nm: float = 4.0
    casimir_d_max_nm: float = 3000.0
    casimir_points: int = 60
    electrostatic: Optional[ElectrostaticSection] = None
    eta: float = 1.17e-3
    force_constant: float = 14.5
    spring_constant: float = 0.03
    d0: float = 12.0
    A: float = 0.0
    B: float = 0.0
    noise_sigma: float = 110.0
    drift_mean: float = 0.0
    drift_sigma: float = 0.0
    sample_spacing: float = 0.5
    range_nm: tuple[float, float] = (0.0, 2600.0)
    contact_length: float = 100.0
    velocity_feedback: bool = True


class CalibrateSection(_Strict):
    eta: float = 1.17e-3
    fit_range_nm: tuple[float, float] = (100.0, 1500.0)
    study_ranges_nm: tuple[tuple[float, float], ...] = ((50.0, 1000.0), (100.0, 1500.0), (150.0, 1500.0))


class ExtractSection(_Strict):
    far_range_nm: tuple[float, float] = (1000.0, 2500.0)
    d_range_nm: tuple[float, float] = (20.0, 100.0)
    histogram_at_nm: tuple[float, ...] = (25.0, 50.0, 75.0)
    histogram_bins: int = 10


class JobConfig(_Strict):
    system: SystemSection = SystemSection()
    force: ForceSection = ForceSection()
    simulate: SimulateSection = SimulateSection()
    calibrate: CalibrateSection = CalibrateSection()
    extract: ExtractSection = ExtractSection()
    seed: int = 0


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def load_job(path=None) -> tuple[JobConfig, Path]:
    """Validated JobConfig and the directory relative paths are resolved against."""
    if path is None:
        return JobConfig(), Path.cwd()
    doc = load_yaml(path)
    try:
        return JobConfig(**doc), Path(path).resolve().parent
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
