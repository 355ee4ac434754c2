"""Closed-form flux-over-population escape rate.

The barrier-region distribution is the Boltzmann-like factor with ``D``
multiplied by a boundary-layer function ``F(y)``, ``y = p - alpha m (x - x_b)``;
the well population is the harmonic Gaussian.  Their ratio gives::

    kappa = (omega_a / 2 pi omega_b) (sqrt(gamma^2/4 + omega_b^2) - gamma/2) exp(-dU/D)
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

from scipy import integrate, special

from .bath import Bath, diffusion_energy
from .potential import WellFeatures
from .units import CONSTANTS, ReducedUnits, to_reduced

LOW_BARRIER_RATIO = 3.0

METHODS = ("analytic-full", "analytic-low-friction", "arrhenius", "monte-carlo", "fokker-planck")


class ZeroFrictionError(ValueError):
    """The boundary layer needs ``gamma > 0``."""


@dataclass(frozen=True)
class RateInputs:
    """Everything the analytic rate needs, in one consistent unit system.

    ``diffusion`` is ``D`` in the same energy units as ``features.delta_u``.
    """

    features: WellFeatures
    diffusion: float
    gamma: float = 0.0
    mass: float = 1.0

    def __post_init__(self):
        if not self.diffusion >= 0:
            raise ValueError("diffusion must be >= 0")
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def from_bath(
        cls,
        features: WellFeatures,
        bath: Bath,
        mass: float = 1.0,
        units: ReducedUnits | None = None,
    ) -> "RateInputs":
        """Take ``gamma`` from the bath and convert ``D(T)`` (eV) to reduced energy."""
        units = units or ReducedUnits()
        d = to_reduced(diffusion_energy(bath), "energy", units)
        return cls(features=features, diffusion=d, gamma=bath.gamma, mass=mass)

    @property
    def barrier_ratio(self) -> float:
        if self.diffusion == 0:
            return math.inf
        return self.features.delta_u / self.diffusion


@dataclass
class EscapeRateEstimate:
    kappa: float
    method: str
    uncertainty: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    units: str = "reduced"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.kappa >= 0 and self.uncertainty >= 0):
            raise ValueError("kappa and uncertainty must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "kappa": self.kappa,
            "uncertainty": self.uncertainty,
            "units": self.units,
            "diagnostics": dict(self.diagnostics),
            "warnings": list(self.warnings),
        }


def alpha_root(gamma: float, omega_b: float) -> float:
    """Positive root of ``alpha (alpha - gamma) = omega_b**2``."""
    if not omega_b > 0:
        raise ValueError("omega_b must be positive")
    if not gamma >= 0:
        raise ValueError("gamma must be >= 0")
    return 0.5 * gamma + math.hypot(0.5 * gamma, omega_b)


def _layer_width2(inputs: RateInputs) -> float:
    """``(alpha - gamma) / (m gamma D)``, the inverse variance of ``F'``."""
    if inputs.gamma <= 0:
        raise ZeroFrictionError("boundary layer undefined at zero friction")
    if inputs.diffusion <= 0:
        raise ValueError("boundary layer needs D > 0")
    a = alpha_root(inputs.gamma, inputs.features.omega_b)
    return (a - inputs.gamma) / (inputs.mass * inputs.gamma * inputs.diffusion)


def boundary_layer_f(y, inputs: RateInputs):
    """Normalized Gaussian integral from ``-inf`` to ``y``; 1 in the well, 0 past the barrier."""
    return special.ndtr(y * math.sqrt(_layer_width2(inputs)))


def barrier_flux(inputs: RateInputs, normalization: float = 1.0) -> float:
    """Probability current through the barrier top, ``C sqrt((alpha-gamma)/alpha) D e^{-dU/D}``.

    Energies are measured from the well bottom.
    """
    _layer_width2(inputs)
    g, d = inputs.gamma, inputs.diffusion
    a = alpha_root(g, inputs.features.omega_b)
    return normalization * math.sqrt((a - g) / a) * d * math.exp(-inputs.features.delta_u / d)


def barrier_flux_quadrature(inputs: RateInputs, normalization: float = 1.0) -> float:
    """The same current by nested adaptive quadrature of ``int dp (p/m) Q(x_b, p)``.

    Independent check on :func:`barrier_flux`.  The outer ``|p|`` range is cut
    at ``12 sqrt(m D)``.
    """
    k = _layer_width2(inputs)
    m, d = inputs.mass, inputs.diffusion
    pmax = 12.0 * math.sqrt(m * d)

    def inner(p):
        val, _ = integrate.quad(lambda y: math.exp(-0.5 * k * y * y), -math.inf, p, epsabs=0, epsrel=1e-12)
        return val

    def outer(p):
        return (p / m) * math.exp(-p * p / (2.0 * m * d)) * inner(p)

    s, _ = integrate.quad(outer, -pmax, pmax, epsabs=0, epsrel=1e-11, limit=200, points=[0.0])
    prefactor = math.sqrt(k / (2.0 * math.pi))
    return normalization * prefactor * math.exp(-inputs.features.delta_u / d) * s


def well_population(inputs: RateInputs, normalization: float = 1.0) -> float:
    """``C 2 pi D / omega_a``: the harmonic Gaussian integrated over phase space."""
    return normalization * 2.0 * math.pi * inputs.diffusion / inputs.features.omega_a


def well_population_quadrature(inputs: RateInputs, normalization: float = 1.0) -> float:
    """2D quadrature of ``C exp(-(p^2/2m + m w^2 xi^2/2)/D)``; oracle for :func:`well_population`."""
    m, d, w = inputs.mass, inputs.diffusion, inputs.features.omega_a
    pmax = 12.0 * math.sqrt(m * d)
    xmax = 12.0 * math.sqrt(d / m) / w
    val, _ = integrate.dblquad(
        lambda p, xi: math.exp(-(p * p / (2 * m) + 0.5 * m * w * w * xi * xi) / d),
        -xmax,
        xmax,
        -pmax,
        pmax,
        epsabs=0,
        epsrel=1e-12,
    )
    return normalization * val


def _barrier_warnings(ratio: float) -> list[str]:
    if ratio < LOW_BARRIER_RATIO:
        msg = f"barrier ratio dU/D = {ratio:.3g} < {LOW_BARRIER_RATIO}; the rate formula assumes a high barrier"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return [msg]
    return []


def rate_full(inputs: RateInputs) -> EscapeRateEstimate:
    """Escape rate with friction, in reduced inverse time.

    ``gamma = 0`` is routed to the low-friction limit ``(omega_a/2 pi) e^{-dU/D}``.
    A classical bath at ``T = 0`` (``D = 0``) gives exactly zero.
    """
    f = inputs.features
    if f.delta_u <= 0:
        raise ValueError("delta_u must be positive")
    if inputs.diffusion == 0:
        return EscapeRateEstimate(
            kappa=0.0,
            method="arrhenius",
            diagnostics={"D": 0.0, "barrier_ratio": math.inf, "prefactor": f.omega_a / (2 * math.pi)},
        )
    g = inputs.gamma
    a = alpha_root(g, f.omega_b)
    # sqrt(g^2/4 + wb^2) - g/2 written without cancellation at large gamma
    transmission = f.omega_b / (math.hypot(0.5 * g, f.omega_b) + 0.5 * g)
    prefactor = f.omega_a / (2.0 * math.pi) * transmission
    ratio = inputs.barrier_ratio
    kappa = prefactor * math.exp(-ratio)
    return EscapeRateEstimate(
        kappa=kappa,
        method="analytic-full" if g > 0 else "analytic-low-friction",
        diagnostics={
            "alpha": a,
            "D": inputs.diffusion,
            "prefactor": prefactor,
            "barrier_ratio": ratio,
            "omega_b_over_omega_a": f.frequency_ratio,
        },
        warnings=_barrier_warnings(ratio),
    )


def rate_paper_fit(
    temperature: float, hbar_omega_a: float, delta_u: float, zero_point: bool = True
) -> EscapeRateEstimate:
    """Weak-damping rate in s^-1: ``(omega_a/2 pi) exp(-dU / D(T))``, ``omega_a = hbar_omega_a/hbar``.

    With ``zero_point=False`` ``D`` is ``k_B T`` (Arrhenius), which vanishes at ``T = 0``.
    """
    if not (hbar_omega_a > 0 and delta_u > 0):
        raise ValueError("hbar_omega_a and delta_u must be positive")
    bath = Bath(temperature=temperature, hbar_omega_a=hbar_omega_a, zero_point=zero_point)
    d = diffusion_energy(bath)
    omega_a = hbar_omega_a / CONSTANTS.hbar
    prefactor = omega_a / (2.0 * math.pi)
    ratio = delta_u / d if d > 0 else math.inf
    kappa = prefactor * math.exp(-ratio)
    return EscapeRateEstimate(
        kappa=kappa,
        method="analytic-low-friction" if zero_point else "arrhenius",
        diagnostics={"D_eV": d, "omega_a_per_s": omega_a, "prefactor_per_s": prefactor, "barrier_ratio": ratio},
        units="1/s",
    )
