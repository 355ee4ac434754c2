"""Kramers escape rates under thermal plus zero-point fluctuations.

The analytic rate uses the zero-point mean energy
``D(T) = (hbar*omega_a/2) * coth(hbar*omega_a / 2 k_B T)`` in place of
``k_B T``.  Two numerical engines (Langevin first-passage Monte Carlo and a
phase-space Fokker-Planck solver) cross-check it, and :mod:`kramers_zpf.fit`
recovers well parameters from measured rate tables.
"""

from .units import CONSTANTS, Constants, ReducedUnits, to_physical, to_reduced
from .potential import (
    MetastabilityError,
    Potential,
    WellFeatures,
    analyze,
    evaluate,
    make_cubic,
    make_quartic,
)
from .bath import Bath, diffusion_energy, radiation_gamma, spectral_density
from .kramers import (
    EscapeRateEstimate,
    RateInputs,
    alpha_root,
    barrier_flux,
    boundary_layer_f,
    rate_full,
    rate_paper_fit,
    well_population,
)

__all__ = [
    "CONSTANTS",
    "Constants",
    "ReducedUnits",
    "to_reduced",
    "to_physical",
    "MetastabilityError",
    "Potential",
    "WellFeatures",
    "analyze",
    "evaluate",
    "make_cubic",
    "make_quartic",
    "Bath",
    "diffusion_energy",
    "radiation_gamma",
    "spectral_density",
    "EscapeRateEstimate",
    "RateInputs",
    "alpha_root",
    "barrier_flux",
    "boundary_layer_f",
    "rate_full",
    "rate_paper_fit",
    "well_population",
]

__version__ = "0.1.0"
