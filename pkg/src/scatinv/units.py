"""Unit system and physical constants.

Everything in the package runs in (Angstrom, meV, amu).  The single derived
constant that matters is C = hbar^2/(2m), carried in meV*A^2.  Wave numbers
are A^-1, with E = C k^2.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

# hbar^2 / (2 * 1 amu) in meV * Angstrom^2, from CODATA 2018/2022 values
# (hbar = 1.054571817e-34 J s, amu = 1.66053906892e-27 kg, eV exact).
HBAR2_OVER_2AMU = 2.0900796373282344


@dataclass(frozen=True)
class PhysicalSystem:
    """Reduced two-body system: mass in amu, C = hbar^2/(2m) in meV*A^2."""

    reduced_mass: float
    c_const: float

    def __post_init__(self):
        if self.reduced_mass <= 0:
            raise ConfigError("reduced_mass must be positive")
        if self.c_const <= 0:
            raise ConfigError("C must be positive")
        expected = HBAR2_OVER_2AMU / self.reduced_mass
        if abs(self.c_const - expected) > 1e-12 * expected:
            raise ConfigError(
                f"C = {self.c_const} inconsistent with reduced mass "
                f"{self.reduced_mass} amu (expected {expected})"
            )

    @classmethod
    def from_mass(cls, reduced_mass_amu: float) -> "PhysicalSystem":
        return cls(reduced_mass_amu, HBAR2_OVER_2AMU / reduced_mass_amu)

    def wavenumber(self, energy_mev: float) -> float:
        """k = sqrt(E/C) for E >= 0."""
        if energy_mev < 0:
            raise ConfigError("wavenumber defined for E >= 0")
        return (energy_mev / self.c_const) ** 0.5

    def energy(self, k: float) -> float:
        """E = C k^2."""
        return self.c_const * k * k
