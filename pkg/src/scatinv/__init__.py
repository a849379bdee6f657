"""Quantum scattering and inverse-spectral toolkit for piecewise Morse
reference potentials.

Pipeline: exactly solvable reference potential -> analytic full-range phase
shift with Levinson verification -> Jost modulus and spectral density ->
Krein-equation solution for a bound-state-free auxiliary potential ->
isospectral bound-state surgery and Bargmann modifications.
"""

__version__ = "0.1.0"

from .units import HBAR2_OVER_2AMU, PhysicalSystem
from .potential import (
    ComponentSpec,
    MorseComponent,
    PiecewisePotential,
    TabulatedPotential,
    eval_potential,
    frame,
    pseudo_morse_depth,
    smooth_join,
)
from .config import load_ledger, load_potential_config

__all__ = [
    "HBAR2_OVER_2AMU",
    "PhysicalSystem",
    "ComponentSpec",
    "MorseComponent",
    "PiecewisePotential",
    "TabulatedPotential",
    "eval_potential",
    "frame",
    "pseudo_morse_depth",
    "smooth_join",
    "load_ledger",
    "load_potential_config",
]
