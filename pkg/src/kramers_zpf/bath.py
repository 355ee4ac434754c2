"""Thermal plus zero-point radiation bath.

``D(T)`` is the mean oscillator energy in the combined field and replaces
``k_B T`` wherever the classical theory uses it.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np

from .units import CONSTANTS

GAMMA_SMALLNESS_LIMIT = 1e-2


def coth(a):
    """Hyperbolic cotangent for ``a > 0``, stable at both ends."""
    a = np.asarray(a, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = np.where(
            a > 20.0,
            1.0 + 2.0 * np.exp(-2.0 * a),
            np.where(a < 1e-6, 1.0 / a + a / 3.0, 1.0 / np.tanh(a)),
        )
    return float(out) if out.ndim == 0 else out


def coth_log_slope(a):
    """``coth(a) - a csch(a)**2``, i.e. ``d(a coth a)/da``; used by the fit Jacobian."""
    a = np.asarray(a, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        big = 1.0 + 2.0 * np.exp(-2.0 * a) - 4.0 * a * np.exp(-2.0 * a)
        small = 2.0 * a / 3.0 - 4.0 * a**3 / 45.0
        mid = 1.0 / np.tanh(a) - a / np.sinh(a) ** 2
        out = np.where(a > 20.0, big, np.where(a < 1e-3, small, mid))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Bath:
    """Radiation environment seen by the particle.

    ``temperature`` in K, ``hbar_omega_a`` in eV, ``gamma`` in reduced
    frequency units.  ``zero_point=False`` gives the classical bath with
    ``D = k_B T`` (the Arrhenius baseline).
    """

    temperature: float
    hbar_omega_a: float
    gamma: float = 0.0
    zero_point: bool = True

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if not self.hbar_omega_a > 0:
            raise ValueError("hbar_omega_a must be positive")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")

    @classmethod
    def with_diffusion(cls, d: float, gamma: float = 0.0) -> "Bath":
        """Zero-temperature zero-point bath whose ``D`` equals ``d`` eV."""
        return cls(temperature=0.0, hbar_omega_a=2.0 * d, gamma=gamma, zero_point=True)

    @property
    def diffusion(self) -> float:
        return diffusion_energy(self)

    def to_dict(self) -> dict:
        return {
            "temperature_K": self.temperature,
            "hbar_omega_a_eV": self.hbar_omega_a,
            "gamma_reduced": self.gamma,
            "zero_point": self.zero_point,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Bath":
        return cls(
            temperature=float(data["temperature_K"]),
            hbar_omega_a=float(data["hbar_omega_a_eV"]),
            gamma=float(data.get("gamma_reduced", 0.0)),
            zero_point=bool(data.get("zero_point", True)),
        )


def spectral_density(omega, temperature: float):
    """Energy density per unit volume and angular frequency, SI-free.

    Returns ``(omega^2 / pi^2 c^3) [hbar w/2 + hbar w / (exp(hbar w/k_B T) - 1)]``
    with ``hbar`` in eV s and ``c`` in m/s, i.e. eV s / m^3.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be positive")
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    hw = CONSTANTS.hbar * omega
    if temperature == 0:
        planck = np.zeros_like(hw)
    else:
        planck = hw / np.expm1(hw / (CONSTANTS.k_B * temperature))
    out = omega**2 / (math.pi**2 * CONSTANTS.c**3) * (0.5 * hw + planck)
    return float(out) if out.ndim == 0 else out


def diffusion_energy(bath: Bath) -> float:
    """``D(T)`` in eV."""
    if not bath.zero_point:
        return CONSTANTS.k_B * bath.temperature
    half = 0.5 * bath.hbar_omega_a
    kt = CONSTANTS.k_B * bath.temperature
    if kt == 0:
        return half
    return half * coth(half / kt)


def radiation_gamma(
    charge_squared_over_hbar_c: float, hbar_omega_a: float, rest_energy: float
) -> float:
    """Radiation-reaction damping relative to the well frequency, ``gamma/omega_a``.

    ``gamma = 2 e^2 omega_a^2 / 3 m c^3`` gives
    ``gamma/omega_a = (2/3) (e^2/hbar c) (hbar omega_a / m c^2)``.
    """
    if not (charge_squared_over_hbar_c > 0 and hbar_omega_a > 0 and rest_energy > 0):
        raise ValueError("all inputs must be positive")
    ratio = (2.0 / 3.0) * charge_squared_over_hbar_c * hbar_omega_a / rest_energy
    if ratio > GAMMA_SMALLNESS_LIMIT:
        warnings.warn(
            f"gamma/omega_a = {ratio:.3g} is not small; the damping approximation is doubtful",
            RuntimeWarning,
            stacklevel=2,
        )
    return ratio
