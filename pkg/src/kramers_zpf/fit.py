"""Recover ``(hbar*omega_a, dU)`` from measured ``kappa(T)`` tables.

The model is the weak-damping rate ``kappa = (omega_a/2 pi) exp(-dU/D(T))``.
Fitting happens in log-rate and log-parameter space with a damped
Gauss-Newton iteration and an analytic Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import io
import math
from typing import Iterable, Sequence

import numpy as np

from .bath import coth, coth_log_slope
from .units import CONSTANTS

MAX_ITER = 500
GRAD_TOL = 1e-10


class UnidentifiableError(ValueError):
    pass


@dataclass(frozen=True)
class RatePoint:
    temperature: float
    kappa: float
    weight: float = 1.0


@dataclass(frozen=True)
class RateDataset:
    points: tuple[RatePoint, ...]
    label: str = ""

    def __post_init__(self):
        pts = tuple(p if isinstance(p, RatePoint) else RatePoint(*p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 3:
            raise ValueError("need at least 3 points to fit 2 parameters")
        for p in pts:
            if not (p.temperature > 0 and p.kappa > 0):
                raise ValueError("temperatures and rates must be positive")
            if not p.weight > 0:
                raise ValueError("weights must be positive")

    @property
    def temperatures(self) -> np.ndarray:
        return np.array([p.temperature for p in self.points])

    @property
    def kappas(self) -> np.ndarray:
        return np.array([p.kappa for p in self.points])

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.points])

    @classmethod
    def from_csv(cls, text: str, label: str = "") -> "RateDataset":
        """Parse ``temperature_K,kappa_per_s[,weight]`` with a header row."""
        rows = list(csv.reader(io.StringIO(text)))
        header = [h.strip() for h in rows[0]]
        if header[:2] != ["temperature_K", "kappa_per_s"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "weight"
        ):
            raise ValueError("expected header temperature_K,kappa_per_s[,weight]")
        pts = []
        for row in rows[1:]:
            if not row or not "".join(row).strip():
                continue
            vals = [float(v) for v in row]
            pts.append(RatePoint(*vals))
        return cls(tuple(pts), label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        weighted = any(p.weight != 1.0 for p in self.points)
        w.writerow(["temperature_K", "kappa_per_s"] + (["weight"] if weighted else []))
        for p in self.points:
            w.writerow([repr(p.temperature), repr(p.kappa)] + ([repr(p.weight)] if weighted else []))
        return buf.getvalue()


@dataclass
class FitResult:
    hbar_omega_a: float
    delta_u: float
    covariance: np.ndarray
    rms_log_residual: float
    per_point_residuals: list
    converged: bool
    iterations: int
    zero_point: bool
    objective_history: list = field(default_factory=list, repr=False)

    @property
    def log_param_stderr(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        return {
            "hbar_omega_a_eV": self.hbar_omega_a,
            "half_hbar_omega_a_eV": 0.5 * self.hbar_omega_a,
            "delta_u_eV": self.delta_u,
            "covariance_log_params": self.covariance.tolist(),
            "rms_log_residual": self.rms_log_residual,
            "per_point_residuals": list(self.per_point_residuals),
            "converged": self.converged,
            "iterations": self.iterations,
            "zero_point": self.zero_point,
        }


def _log_model(theta: np.ndarray, temps: np.ndarray, zero_point: bool) -> tuple[np.ndarray, np.ndarray]:
    """``log kappa`` and its Jacobian with respect to ``(log hbar w_a, log dU)``."""
    h, du = math.exp(theta[0]), math.exp(theta[1])
    log_pref = math.log(h / CONSTANTS.hbar / (2.0 * math.pi))
    kt = CONSTANTS.k_B * temps
    if zero_point:
        a = 0.5 * h / kt
        d = 0.5 * h * coth(a)
        # h dD/dh = (h/2) (coth a - a csch^2 a)
        h_dd = 0.5 * h * coth_log_slope(a)
        d_du = 1.0 + du * h_dd / d**2
    else:
        d = kt
        d_du = np.ones_like(temps)
    f = log_pref - du / d
    jac = np.column_stack([d_du, -du / d])
    return f, jac


def predict_curve(
    params: Sequence[float], temperatures: Iterable[float], zero_point: bool = True
) -> list[tuple[float, float]]:
    """``[(T, kappa)]`` in s^-1 for ``params = (hbar_omega_a, delta_u)`` in eV."""
    from .kramers import rate_paper_fit

    h, du = params
    if not (h > 0 and du > 0):
        raise ValueError("parameters must be positive")
    return [(float(t), rate_paper_fit(float(t), h, du, zero_point).kappa) for t in temperatures]


def curve_csv(rows: Sequence[Sequence[float]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def default_initial_guess(data: RateDataset) -> tuple[float, float]:
    """Data-driven start: barrier from the high-T Arrhenius slope, frequency from the plateau or intercept."""
    T = data.temperatures
    order = np.argsort(T)
    T, lk = T[order], np.log(data.kappas[order])
    beta = 1.0 / (CONSTANTS.k_B * T)
    hot = slice(len(T) // 2, None) if len(T) >= 4 else slice(None)
    slope, intercept = np.polyfit(beta[hot], lk[hot], 1)
    du = -slope if slope < 0 else 1e-2
    # plateau: low-T rate falls much slower than Arrhenius would predict
    plateau = len(T) >= 3 and (lk[1] - lk[0]) < 0.5 * du * (beta[0] - beta[1])
    if plateau:
        target = lk[0]

        def g(h):
            return math.log(h / CONSTANTS.hbar / (2 * math.pi)) - 2.0 * du / h - target

        lo, hi = 1e-8, 10.0 * du
        if g(lo) < 0 < g(hi):
            for _ in range(200):
                mid = math.sqrt(lo * hi)
                if g(mid) > 0:
                    hi = mid
                else:
                    lo = mid
            return math.sqrt(lo * hi), du
    omega = 2.0 * math.pi * math.exp(intercept)
    return CONSTANTS.hbar * omega, du


def grid_scan_guess(data: RateDataset, zero_point: bool = True, n: int = 241) -> tuple[float, float]:
    """Profile scan over ``hbar w_a`` in [1e-6, 10] eV.

    ``log kappa`` is linear in ``dU`` at fixed ``hbar w_a``, so the best
    barrier for each grid frequency is a one-line weighted least squares.
    """
    temps, y, w = data.temperatures, np.log(data.kappas), data.weights
    kt = CONSTANTS.k_B * temps
    best, arg = math.inf, None
    for h in np.geomspace(1e-6, 10.0, n):
        inv_d = 1.0 / (0.5 * h * coth(0.5 * h / kt)) if zero_point else 1.0 / kt
        a = math.log(h / CONSTANTS.hbar / (2.0 * math.pi)) - y
        du = float(np.sum(w * inv_d * a) / np.sum(w * inv_d * inv_d))
        if not du > 0:
            continue
        r = a - du * inv_d
        obj = float(np.sum(w * r * r))
        if obj < best:
            best, arg = obj, (float(h), du)
    return arg if arg is not None else default_initial_guess(data)


def fit_rate_curve(
    data: RateDataset,
    initial_guess: Sequence[float] | None = None,
    zero_point: bool = True,
) -> FitResult:
    """Weighted least squares on ``log kappa`` over ``(log hbar w_a, log dU)``.

    Without ``initial_guess`` the optimizer runs from both
    :func:`default_initial_guess` and :func:`grid_scan_guess` and the
    lower optimum is kept.

    Levenberg-damped Gauss-Newton; a step is accepted only if it lowers the
    objective, otherwise the damping grows and the step shrinks.  Converged
    when the gradient norm drops below ``GRAD_TOL``.  The covariance is
    ``s^2 (J^T W J)^-1`` at the optimum, ``s^2`` the weighted residual
    variance with ``n - 2`` degrees of freedom.
    """
    temps = data.temperatures
    if np.ptp(temps) == 0:
        raise UnidentifiableError("unidentifiable: all points share one temperature")
    if initial_guess is None:
        runs = [
            _optimize(data, default_initial_guess(data), zero_point),
            _optimize(data, grid_scan_guess(data, zero_point), zero_point),
        ]
        return min(runs, key=lambda r: r.objective_history[-1])
    return _optimize(data, initial_guess, zero_point)


def _optimize(data: RateDataset, initial_guess: Sequence[float], zero_point: bool) -> FitResult:
    temps = data.temperatures
    y = np.log(data.kappas)
    w = data.weights
    h0, du0 = initial_guess
    if not (h0 > 0 and du0 > 0):
        raise ValueError("initial guess must be positive")
    theta = np.array([math.log(h0), math.log(du0)])

    def objective(th):
        f, jac = _log_model(th, temps, zero_point)
        r = f - y
        return float(np.sum(w * r * r)), r, jac

    obj, r, jac = objective(theta)
    history = [obj]
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        grad = 2.0 * jac.T @ (w * r)
        if np.linalg.norm(grad) < GRAD_TOL:
            converged = True
            it -= 1
            break
        jtj = jac.T @ (w[:, None] * jac)
        accepted = False
        while lam < 1e16:
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-12))
            try:
                step = np.linalg.solve(a, -jac.T @ (w * r))
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if not np.all(np.isfinite(trial)):
                lam *= 10.0
                continue
            t_obj, t_r, t_jac = objective(trial)
            if math.isfinite(t_obj) and t_obj < obj:
                theta, obj, r, jac = trial, t_obj, t_r, t_jac
                history.append(obj)
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at machine precision
            grad = 2.0 * jac.T @ (w * r)
            converged = bool(np.linalg.norm(grad) < 1e-6 * max(1.0, obj))
            break
    n = len(y)
    jtj = jac.T @ (w[:, None] * jac)
    s2 = obj / (n - 2) if n > 2 else math.nan
    try:
        cov = s2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    return FitResult(
        hbar_omega_a=math.exp(theta[0]),
        delta_u=math.exp(theta[1]),
        covariance=cov,
        rms_log_residual=float(math.sqrt(np.sum(w * r * r) / np.sum(w))),
        per_point_residuals=[float(v) for v in r],
        converged=converged,
        iterations=it,
        zero_point=zero_point,
        objective_history=history,
    )


def synthetic_dataset(
    hbar_omega_a: float,
    delta_u: float,
    temperatures: Iterable[float],
    noise: float = 0.0,
    seed: int | None = None,
    zero_point: bool = True,
    label: str = "synthetic",
) -> RateDataset:
    """Rates from the model, optionally with multiplicative lognormal noise of log-sd ``noise``."""
    rows = predict_curve((hbar_omega_a, delta_u), temperatures, zero_point)
    rng = np.random.default_rng(seed)
    pts = []
    for t, k in rows:
        if noise > 0:
            k *= math.exp(noise * rng.standard_normal())
        pts.append(RatePoint(t, k))
    return RateDataset(tuple(pts), label)
