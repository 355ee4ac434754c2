"""Finite-volume solver for the phase-space Fokker-Planck equation.

The equation is written in conservative form

    dW/dt = -d/dx[(p/m) W] - d/dp[(-U'(x) - gamma p) W - m gamma D dW/dp]

(``gamma W + gamma p dW/dp`` is ``d(gamma p W)/dp``).  Advective fluxes are
upwinded with van Leer limited slopes, diffusion is a centered difference,
and time stepping is forward Euler.  Every flux leaves one cell and enters
its neighbour, so interior mass plus boundary outflow is conserved to
rounding, and ``W`` stays nonnegative under :func:`stable_dt`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import csv
import io
import math
import warnings
from typing import Callable

import numba as nb
import numpy as np

from .kramers import EscapeRateEstimate, RateInputs
from .potential import Potential, evaluate

DT_SAFETY = 0.9
DECAY_FLOOR = 1e-3
RESIDUAL_LIMIT = 0.05


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    p_max: float
    nx: int = 256
    np: int = 256
    right: str = "absorbing"

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if self.nx < 4 or self.np < 4:
            raise ValueError("need at least 4 cells per dimension")
        if self.right not in ("absorbing", "reflecting"):
            raise ValueError("right boundary must be 'absorbing' or 'reflecting'")

    @classmethod
    def default(cls, inputs: RateInputs, nx: int = 256, np_: int = 256, right: str = "absorbing") -> "GridSpec":
        """``x in [x_a - 4 s_x, x_b + 2 (x_b - x_a)]``, ``p in [-6 s_p, 6 s_p]`` with harmonic widths."""
        f = inputs.features
        m, d = inputs.mass, inputs.diffusion
        sx = math.sqrt(d / m) / f.omega_a
        sp = math.sqrt(m * d)
        return cls(
            x_min=f.x_a - 4.0 * sx,
            x_max=f.x_b + 2.0 * (f.x_b - f.x_a),
            p_max=6.0 * sp,
            nx=nx,
            np=np_,
            right=right,
        )

    def refined(self, factor: int = 2) -> "GridSpec":
        return replace(self, nx=self.nx * factor, np=self.np * factor)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.np

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def p(self) -> np.ndarray:
        return -self.p_max + (np.arange(self.np) + 0.5) * self.dp


@dataclass
class PhaseSpaceGrid:
    """Cell-averaged density ``W[i, j]`` at ``(x[i], p[j])``.

    Boundaries: reflecting at ``x_min``, absorbing (or reflecting) at
    ``x_max``, and ``W = 0`` beyond ``|p| = p_max``.  ``absorbed`` is the
    cumulative mass that has left through the open boundaries.
    """

    spec: GridSpec
    W: np.ndarray
    time: float = 0.0
    absorbed: float = 0.0
    initial_mass: float = field(default=float("nan"))

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=float)
        if self.W.shape != (self.spec.nx, self.spec.np):
            raise ValueError("W shape does not match the grid")
        if math.isnan(self.initial_mass):
            self.initial_mass = self.total_mass

    @property
    def x(self) -> np.ndarray:
        return self.spec.x

    @property
    def p(self) -> np.ndarray:
        return self.spec.p

    @property
    def cell_area(self) -> float:
        return self.spec.dx * self.spec.dp

    @property
    def total_mass(self) -> float:
        return float(self.W.sum() * self.cell_area)

    def well_probability(self, x_b: float) -> float:
        """Mass at ``x < x_b`` (cells whose centre lies below the barrier)."""
        return float(self.W[self.x < x_b].sum() * self.cell_area)

    @property
    def bookkeeping_error(self) -> float:
        return self.total_mass + self.absorbed - self.initial_mass

    def snapshot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "p", "W"])
        x, p = self.x, self.p
        for i in range(self.spec.nx):
            for j in range(self.spec.np):
                w.writerow([repr(float(x[i])), repr(float(p[j])), repr(float(self.W[i, j]))])
        return buf.getvalue()


def well_gaussian(spec: GridSpec, inputs: RateInputs, truncate_at: float | None = None) -> PhaseSpaceGrid:
    """Normalized ``exp(-(p^2/2m + m w_a^2 (x-x_a)^2/2)/D)`` on the grid, zero beyond ``truncate_at``."""
    f, m, d = inputs.features, inputs.mass, inputs.diffusion
    x, p = spec.x, spec.p
    W = np.exp(-(p[None, :] ** 2 / (2 * m) + 0.5 * m * f.omega_a**2 * (x[:, None] - f.x_a) ** 2) / d)
    if truncate_at is not None:
        W[x >= truncate_at, :] = 0.0
    W /= W.sum() * spec.dx * spec.dp
    return PhaseSpaceGrid(spec, W)


def _gradient(potential, x: np.ndarray) -> np.ndarray:
    if isinstance(potential, Potential):
        return np.asarray(evaluate(potential, x)[1], dtype=float)
    return np.asarray(potential(x), dtype=float) * np.ones_like(x)


def stable_dt(spec: GridSpec, grad: np.ndarray, inputs: RateInputs) -> float:
    """Largest forward-Euler step keeping ``W >= 0``.

    Also capped by ``0.5 min(dx m/p_max, dp/max|U'|, dp^2/(2 m gamma D))``.
    """
    m, g, d = inputs.mass, inputs.gamma, inputs.diffusion
    dx, dp = spec.dx, spec.dp
    vx = spec.p_max / m
    ap = float(np.max(np.abs(grad))) + g * spec.p_max
    diff = m * g * d
    positivity = DT_SAFETY / (2.0 * vx / dx + 2.0 * ap / dp + 2.0 * diff / dp**2)
    bounds = [dx * m / spec.p_max]
    gmax = float(np.max(np.abs(grad)))
    if gmax > 0:
        bounds.append(dp / gmax)
    if diff > 0:
        bounds.append(dp**2 / (2.0 * diff))
    return min(positivity, 0.5 * min(bounds))


@nb.njit(cache=True, nogil=True, inline="always")
def _van_leer(a, b):
    if a * b <= 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


@nb.njit(cache=True, nogil=True)
def _fp_step(W, out, fx, fp, force, p, pface, m, gamma, diff, dx, dp, dt, absorbing):
    """One forward-Euler step; returns the mass that left through open boundaries."""
    nx, npc = W.shape
    # x-direction faces; fx[i, j] is the flux through the left face of cell i
    for j in range(npc):
        v = p[j] / m
        fx[0, j] = 0.0
        if v > 0.0:
            for i in range(1, nx):
                sl = _van_leer(W[i - 1, j] - W[i - 2, j], W[i, j] - W[i - 1, j]) if i >= 2 else 0.0
                fx[i, j] = v * (W[i - 1, j] + 0.5 * sl)
            fx[nx, j] = v * W[nx - 1, j] if absorbing else 0.0
        else:
            for i in range(1, nx):
                sl = _van_leer(W[i, j] - W[i - 1, j], W[i + 1, j] - W[i, j]) if i <= nx - 2 else 0.0
                fx[i, j] = v * (W[i, j] - 0.5 * sl)
            fx[nx, j] = 0.0
    # p-direction faces; ghost cells beyond |p| = p_max hold W = 0
    for i in range(nx):
        f = force[i]
        for j in range(npc + 1):
            a = f - gamma * pface[j]
            wl = W[i, j - 1] if j >= 1 else 0.0
            wr = W[i, j] if j < npc else 0.0
            if a > 0.0:
                wll = W[i, j - 2] if j >= 2 else 0.0
                adv = a * (wl + 0.5 * _van_leer(wl - wll, wr - wl))
            else:
                wrr = W[i, j + 1] if j + 1 < npc else 0.0
                adv = a * (wr - 0.5 * _van_leer(wr - wl, wrr - wr))
            fp[i, j] = adv - diff * (wr - wl) / dp
    cx = dt / dx
    cp = dt / dp
    for i in range(nx):
        for j in range(npc):
            w = W[i, j] - cx * (fx[i + 1, j] - fx[i, j]) - cp * (fp[i, j + 1] - fp[i, j])
            # rounding can leave ~1e-300 negatives in empty cells
            out[i, j] = w if w > 0.0 else 0.0
    lost = 0.0
    for j in range(npc):
        lost += fx[nx, j]
    lost *= dt * dp
    edge = 0.0
    for i in range(nx):
        edge += fp[i, npc] - fp[i, 0]
    return lost + edge * dt * dx


def evolve(
    grid: PhaseSpaceGrid,
    potential: Potential | Callable,
    inputs: RateInputs,
    dt: float,
    steps: int,
    observer: Callable[[PhaseSpaceGrid], None] | None = None,
    observe_every: int = 0,
) -> PhaseSpaceGrid:
    """Advance ``W`` by ``steps`` forward-Euler steps of size ``dt``.

    ``potential`` is a :class:`Potential` or any callable returning ``U'(x)``.
    ``observer`` is called with the current grid every ``observe_every`` steps.
    """
    spec = grid.spec
    grad = _gradient(potential, spec.x)
    bound = stable_dt(spec, grad, inputs)
    if dt > bound:
        raise StabilityError(f"dt = {dt:.6g} exceeds the stability bound {bound:.6g}")
    W = grid.W.copy()
    out = np.empty_like(W)
    fx = np.empty((spec.nx + 1, spec.np))
    fp = np.empty((spec.nx, spec.np + 1))
    force = -grad
    p = spec.p
    pface = -spec.p_max + np.arange(spec.np + 1) * spec.dp
    diff = inputs.mass * inputs.gamma * inputs.diffusion
    absorbing = spec.right == "absorbing"
    state = PhaseSpaceGrid(spec, W, grid.time, grid.absorbed, grid.initial_mass)
    for k in range(steps):
        lost = _fp_step(W, out, fx, fp, force, p, pface, inputs.mass, inputs.gamma, diff, spec.dx, spec.dp, dt, absorbing)
        W, out = out, W
        state.W = W
        state.absorbed += lost
        state.time = grid.time + (k + 1) * dt
        if observer is not None and observe_every and (k + 1) % observe_every == 0:
            observer(state)
    state.W = W
    return state


def flux_at_barrier(grid: PhaseSpaceGrid, x_b: float, mass: float = 1.0) -> float:
    """``sum_j (p_j/m) W[i_b, j] dp`` at the column nearest ``x_b``."""
    x = grid.x
    if not (grid.spec.x_min <= x_b <= grid.spec.x_max):
        raise ValueError("x_b lies outside the grid")
    i = int(np.argmin(np.abs(x - x_b)))
    return float(np.sum(grid.p / mass * grid.W[i]) * grid.spec.dp)


@dataclass
class DecayResult:
    kappa: float
    fit_window: tuple[float, float]
    residual: float
    P_series: np.ndarray
    flux_ratio: np.ndarray
    bookkeeping_drift: float
    grid: PhaseSpaceGrid = field(repr=False)
    dt: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def acceptable(self) -> bool:
        return self.kappa > 0 and self.residual <= RESIDUAL_LIMIT

    def to_estimate(self) -> EscapeRateEstimate:
        return EscapeRateEstimate(
            kappa=max(self.kappa, 0.0),
            method="fokker-planck",
            uncertainty=abs(self.kappa) * self.residual,
            diagnostics={
                "fit_window": list(self.fit_window),
                "residual": self.residual,
                "bookkeeping_drift_per_time": self.bookkeeping_drift,
                "dt": self.dt,
                "nx": self.grid.spec.nx,
                "np": self.grid.spec.np,
            },
            warnings=list(self.warnings),
        )

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "P"])
        for t, P in self.P_series:
            w.writerow([repr(float(t)), repr(float(P))])
        return buf.getvalue()


def decay_rate(
    potential: Potential,
    inputs: RateInputs,
    spec: GridSpec | None = None,
    dt: float | None = None,
    horizon: float | None = None,
    fit_start: float | None = None,
    samples: int = 200,
) -> DecayResult:
    """Quasi-stationary decay rate of the well probability.

    Starts from the well Gaussian truncated at ``x_b``, evolves to
    ``horizon`` and fits ``log P(t)`` linearly on ``[fit_start, horizon]``
    (``fit_start`` defaults to ``5/gamma``, ``horizon`` to ``fit_start + 20``).
    ``residual`` is the rms deviation of ``log P`` from the fitted line
    divided by the total fitted log-decay over the window.
    """
    f = inputs.features
    if inputs.gamma <= 0 or inputs.diffusion <= 0:
        raise ValueError("decay_rate needs gamma > 0 and D > 0")
    notes = []
    ratio = inputs.barrier_ratio
    if not 3.0 <= ratio <= 12.0:
        notes.append(f"barrier ratio dU/D = {ratio:.3g} outside [3, 12]; decay may be unresolvable")
    spec = spec or GridSpec.default(inputs)
    if fit_start is None:
        fit_start = 5.0 / inputs.gamma
    if horizon is None:
        horizon = fit_start + 20.0
    if not horizon > fit_start:
        raise ValueError("horizon must exceed fit_start")
    grid = well_gaussian(spec, inputs, truncate_at=f.x_b)
    grad = _gradient(potential, spec.x)
    if dt is None:
        dt = stable_dt(spec, grad, inputs)
    n_steps = int(math.ceil(horizon / dt))
    every = max(1, n_steps // samples)
    P0 = grid.well_probability(f.x_b)
    ts, Ps, ratios = [0.0], [P0], [flux_at_barrier(grid, f.x_b, inputs.mass) / P0]

    def record(g):
        P = g.well_probability(f.x_b)
        ts.append(g.time)
        Ps.append(P)
        ratios.append(flux_at_barrier(g, f.x_b, inputs.mass) / P)

    final = evolve(grid, potential, inputs, dt, n_steps, observer=record, observe_every=every)
    t = np.array(ts)
    P = np.array(Ps)
    sel = t >= fit_start
    if sel.sum() < 3:
        raise ValueError("fit window holds fewer than 3 samples")
    slope, intercept = np.polyfit(t[sel], np.log(P[sel]), 1)
    kappa = -slope
    resid = np.log(P[sel]) - (slope * t[sel] + intercept)
    span = abs(slope) * (t[sel][-1] - t[sel][0])
    rms = float(np.sqrt(np.mean(resid**2)))
    residual = rms / span if span > 0 else math.inf
    if span < DECAY_FLOOR:
        notes.append(
            f"decay over the fit window is {span:.2e} in log P, below the numerical floor {DECAY_FLOOR:g}"
        )
    if residual > RESIDUAL_LIMIT:
        notes.append(f"non-exponential decay: residual {residual:.3g} > {RESIDUAL_LIMIT}")
    if kappa <= 0:
        notes.append("fitted decay rate is not positive")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return DecayResult(
        kappa=float(kappa),
        fit_window=(float(fit_start), float(t[-1])),
        residual=residual,
        P_series=np.column_stack([t, P]),
        flux_ratio=np.column_stack([t, np.array(ratios)]),
        bookkeeping_drift=abs(final.bookkeeping_error) / final.time,
        grid=final,
        dt=dt,
        warnings=notes,
    )
