"""Polynomial metastable potentials and their well/barrier features."""

from __future__ import annotations

from dataclasses import dataclass
import json
import math
from typing import Sequence

import numpy as np

SCAN_SAMPLES = 10_000
POSITION_TOL = 1e-12


class MetastabilityError(ValueError):
    """The potential has no usable minimum/maximum pair in the interval."""


@dataclass(frozen=True)
class Potential:
    """Polynomial ``U(x) = sum_k coefficients[k] x**k`` in reduced units."""

    coefficients: tuple[float, ...]
    mass: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) - 1 < 3:
            raise ValueError("a metastable potential needs degree >= 3")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("coefficients must be finite")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError("mass must be positive")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def derivative_coefficients(self) -> tuple[float, ...]:
        return tuple(k * c for k, c in enumerate(self.coefficients) if k > 0)

    def __call__(self, x):
        return evaluate(self, x)[0]

    def gradient(self, x):
        return evaluate(self, x)[1]

    def curvature(self, x):
        c = self.coefficients
        out = np.zeros_like(np.asarray(x, dtype=float))
        for k in range(len(c) - 1, 1, -1):
            out = out * x + k * (k - 1) * c[k]
        return out if np.ndim(out) else float(out)

    def critical_points(self) -> np.ndarray:
        """Real roots of ``U'`` in ascending order."""
        roots = np.polynomial.polynomial.polyroots(self.derivative_coefficients)
        real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots.real))].real
        return np.sort(real)

    def default_interval(self) -> tuple[float, float]:
        """An interval bracketing the first minimum followed by a maximum.

        Uses the polynomial roots of ``U'`` only to place the interval; the
        features themselves come from :func:`analyze`.
        """
        crit = self.critical_points()
        curv = [self.curvature(x) for x in crit]
        for i in range(len(crit) - 1):
            if curv[i] > 0 and curv[i + 1] < 0:
                x_a, x_b = crit[i], crit[i + 1]
                gap = x_b - x_a
                lo = x_a - 0.5 * gap if i == 0 else 0.5 * (crit[i - 1] + x_a)
                hi = x_b + 0.5 * gap if i + 2 >= len(crit) else 0.5 * (x_b + crit[i + 2])
                return float(lo), float(hi)
        raise MetastabilityError("no metastable structure")

    def to_dict(self) -> dict:
        return {"coefficients": list(self.coefficients), "mass": self.mass}

    @classmethod
    def from_dict(cls, data: dict) -> "Potential":
        return cls(tuple(data["coefficients"]), float(data.get("mass", 1.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class WellFeatures:
    x_a: float
    x_b: float
    omega_a: float
    omega_b: float
    delta_u: float
    u_a: float = 0.0

    def __post_init__(self):
        if not self.x_a < self.x_b:
            raise ValueError("x_a must lie below x_b")
        if not (self.omega_a > 0 and self.omega_b > 0 and self.delta_u > 0):
            raise ValueError("omega_a, omega_b and delta_u must be positive")

    @property
    def frequency_ratio(self) -> float:
        """omega_b / omega_a; the barrier treatment assumes this is large."""
        return self.omega_b / self.omega_a

    def to_dict(self) -> dict:
        return {
            "x_a": self.x_a,
            "x_b": self.x_b,
            "omega_a": self.omega_a,
            "omega_b": self.omega_b,
            "delta_u": self.delta_u,
            "omega_b_over_omega_a": self.frequency_ratio,
        }


def evaluate(potential: Potential, x):
    """Return ``(U(x), U'(x))`` by Horner's scheme.

    Works for scalars and numpy arrays alike.
    """
    c = potential.coefficients
    x = np.asarray(x, dtype=float)
    u = np.full_like(x, c[-1])
    du = np.zeros_like(x)
    for k in range(len(c) - 2, -1, -1):
        du = du * x + u
        u = u * x + c[k]
    if u.ndim == 0:
        return float(u), float(du)
    return u, du


def _bisect(f, lo: float, hi: float) -> float:
    flo = f(lo)
    while hi - lo > POSITION_TOL:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _polish(potential: Potential, x: float, lo: float, hi: float) -> float:
    """Newton steps on ``U'`` kept only while they shrink ``|U'|`` inside the bracket."""
    g = abs(evaluate(potential, x)[1])
    for _ in range(3):
        k = potential.curvature(x)
        if k == 0 or g == 0:
            break
        trial = x - evaluate(potential, x)[1] / k
        gt = abs(evaluate(potential, trial)[1])
        if not (lo <= trial <= hi and gt < g):
            break
        x, g = trial, gt
    return x


def analyze(potential: Potential, search_interval: Sequence[float] | None = None) -> WellFeatures:
    """Locate the well minimum and barrier top and extract harmonic features.

    ``U'`` is sampled on ``SCAN_SAMPLES`` uniform points; sign changes are
    refined by bisection.  The interval must contain exactly one minimum
    followed by one maximum.
    """
    if search_interval is None:
        search_interval = potential.default_interval()
    lo, hi = map(float, search_interval)
    if not hi > lo:
        raise ValueError("search interval must have lo < hi")

    def grad(x):
        return evaluate(potential, x)[1]

    xs = np.linspace(lo, hi, SCAN_SAMPLES)
    g = evaluate(potential, xs)[1]
    s = np.sign(g)
    # exact zeros on the grid: inherit the sign of the next nonzero sample
    for i in range(len(s) - 2, -1, -1):
        if s[i] == 0:
            s[i] = s[i + 1]
    changes = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if changes.size == 0:
        raise MetastabilityError("no metastable structure")
    minima, maxima = [], []
    for i in changes:
        root = _polish(potential, _bisect(grad, xs[i], xs[i + 1]), xs[i], xs[i + 1])
        (minima if s[i] < 0 else maxima).append(root)
    pairs = [(a, b) for a in minima for b in maxima if b > a]
    if len(minima) > 1 or len(maxima) > 1:
        raise MetastabilityError("ambiguous interval")
    if not pairs:
        raise MetastabilityError("no metastable structure")
    x_a, x_b = pairs[0]
    m = potential.mass
    ua, ub = evaluate(potential, x_a)[0], evaluate(potential, x_b)[0]
    ka, kb = potential.curvature(x_a), potential.curvature(x_b)
    if not (ka > 0 and kb < 0 and ub > ua):
        raise MetastabilityError("no metastable structure")
    return WellFeatures(
        x_a=x_a,
        x_b=x_b,
        omega_a=math.sqrt(ka / m),
        omega_b=math.sqrt(-kb / m),
        delta_u=ub - ua,
        u_a=ua,
    )


def make_cubic(omega_a: float, delta_u: float, mass: float = 1.0) -> Potential:
    """``U = m w^2 x^2/2 - (m w^2 / 3 x_s) x^3`` with barrier ``delta_u`` at ``x_s``."""
    if not (omega_a > 0 and delta_u > 0 and mass > 0):
        raise ValueError("omega_a, delta_u and mass must be positive")
    k = mass * omega_a**2
    x_s = math.sqrt(6.0 * delta_u / k)
    return Potential((0.0, 0.0, 0.5 * k, -k / (3.0 * x_s)), mass)


def make_quartic(omega_a: float, omega_b: float, delta_u: float, mass: float = 1.0) -> Potential:
    """Quartic with minimum at 0 and a barrier of curvature ``-m omega_b**2``.

    Writing ``U = m wa^2 x^2/2 + c3 x^3 + c4 x^4`` and imposing the three
    barrier conditions gives closed forms::

        x_b = sqrt(12 dU / (m (wa^2 + wb^2)))
        c3  = -m (2 wa^2 - wb^2) / (3 x_b)
        c4  =  m (wa^2 - wb^2) / (4 x_b^2)

    so every positive input is feasible.  For ``omega_b < omega_a`` the
    quartic confines and has a second minimum beyond the barrier; for
    ``omega_b > omega_a`` there is a second maximum at negative x.
    """
    if not (omega_a > 0 and omega_b > 0 and delta_u > 0 and mass > 0):
        raise ValueError("omega_a, omega_b, delta_u and mass must be positive")
    wa2, wb2 = omega_a**2, omega_b**2
    x_b = math.sqrt(12.0 * delta_u / (mass * (wa2 + wb2)))
    c3 = -mass * (2.0 * wa2 - wb2) / (3.0 * x_b)
    c4 = mass * (wa2 - wb2) / (4.0 * x_b**2)
    return Potential((0.0, 0.0, 0.5 * mass * wa2, c3, c4), mass)
