"""Physical constants and reduced-unit conversion.

API boundaries use eV, seconds, Kelvin and meters.  Simulation kernels run in
reduced units where the three scales below are 1.
"""

from __future__ import annotations

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class Constants:
    k_B: float = 8.617333262e-5  # eV/K
    hbar: float = 6.582119569e-16  # eV s
    fine_structure: float = 7.2973525693e-3  # e^2/(hbar c)
    c: float = 299792458.0  # m/s
    electron_rest_energy: float = 0.51099895000e6  # eV


CONSTANTS = Constants()


@dataclass(frozen=True)
class ReducedUnits:
    """Scales mapping reduced simulation units to physical units.

    Parameters
    ----------
    energy_scale : float
        eV per reduced energy unit.
    time_scale : float
        Seconds per reduced time unit.
    length_scale : float
        Meters per reduced length unit.
    """

    energy_scale: float = 1.0
    time_scale: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        for name in ("energy_scale", "time_scale", "length_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")
        m = self.mass_scale
        if not (math.isfinite(m) and m > 0):
            raise ValueError(f"derived mass scale is not finite and positive: {m!r}")

    @property
    def mass_scale(self) -> float:
        """eV s^2 / m^2 per reduced mass unit."""
        return self.energy_scale * self.time_scale**2 / self.length_scale**2

    @classmethod
    def natural(cls, hbar_omega_a: float, length_scale: float = 1.0) -> "ReducedUnits":
        """Units with energy ``hbar*omega_a`` and time ``1/omega_a``."""
        omega_a = hbar_omega_a / CONSTANTS.hbar
        return cls(energy_scale=hbar_omega_a, time_scale=1.0 / omega_a, length_scale=length_scale)

    def scale(self, dimension: str) -> float:
        """Physical size of one reduced unit of ``dimension``."""
        e, t, l = self.energy_scale, self.time_scale, self.length_scale
        scales = {
            "energy": e,
            "time": t,
            "length": l,
            "position": l,
            "frequency": 1.0 / t,
            "rate": 1.0 / t,
            "mass": self.mass_scale,
            "momentum": e * t / l,
        }
        try:
            return scales[dimension]
        except KeyError:
            raise ValueError(
                f"unknown dimension tag {dimension!r}; expected one of {sorted(scales)}"
            ) from None


DIMENSIONS = ("energy", "time", "length", "frequency", "rate", "mass", "momentum", "position")


def to_reduced(value: float, dimension: str, units: ReducedUnits) -> float:
    """Convert a physical quantity to reduced units."""
    return value / units.scale(dimension)


def to_physical(value: float, dimension: str, units: ReducedUnits) -> float:
    """Inverse of :func:`to_reduced`."""
    return value * units.scale(dimension)
