"""Physical constants (CODATA 2018 via scipy) and unit conversions.

Everything inside the package is SI; nm / pN / eV only appear at file and
CLI boundaries.
"""

from dataclasses import dataclass

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    k_B: float = _sc.k
    hbar: float = _sc.hbar
    c: float = _sc.c
    eps0: float = _sc.epsilon_0
    e: float = _sc.e
    N_A: float = _sc.N_A
    amu: float = _sc.atomic_mass


CONST = PhysicalConstants()

#: 1 eV expressed as an angular frequency (rad/s), ~1.519e15.
EV_TO_RAD_S = CONST.e / CONST.hbar

NM = 1e-9
PN = 1e-12
UM = 1e-6
