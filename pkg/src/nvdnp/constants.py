"""Physical constants (SI units, angular frequencies in rad/s)."""

from dataclasses import dataclass, field
import math

MU0_OVER_4PI = 1e-7  # T m / A
HBAR = 1.054571817e-34  # J s


@dataclass(frozen=True)
class PhysicalConstants:
    gamma_c: float = 6.73e7  # 13C gyromagnetic ratio, rad s^-1 T^-1
    gamma_e: float = 1.761e11  # electron, rad s^-1 T^-1
    lattice_constant: float = 3.567e-10  # diamond, m
    abundance_default: float = 0.011
    dipolar_prefactor: float = field(init=False)  # rad s^-1 m^3

    def __post_init__(self):
        d = MU0_OVER_4PI * HBAR * self.gamma_e * self.gamma_c
        object.__setattr__(self, "dipolar_prefactor", d)

    @property
    def nuclear_dipolar_prefactor(self):
        """13C-13C point-dipole prefactor, rad s^-1 m^3."""
        return MU0_OVER_4PI * HBAR * self.gamma_c**2

    def larmor(self, b_field):
        """Nuclear Larmor frequency ``gamma_c * B`` in rad/s."""
        return self.gamma_c * b_field


CONSTANTS = PhysicalConstants()

GAMMA_C = CONSTANTS.gamma_c
GAMMA_E = CONSTANTS.gamma_e
DIPOLAR_D = CONSTANTS.dipolar_prefactor
LATTICE_CONSTANT = CONSTANTS.lattice_constant
TWO_PI = 2.0 * math.pi

GAUSS = 1e-4  # tesla per gauss
