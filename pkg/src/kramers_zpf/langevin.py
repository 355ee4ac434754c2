"""Underdamped Langevin trajectories and first-passage rate estimates.

Noise is white with momentum diffusion ``m gamma D`` so the harmonic-well
stationary density is ``exp(-(p^2/2m + m w^2 xi^2/2)/D)``.  Integration uses
BAOAB splitting: half kick, half drift, exact Ornstein-Uhlenbeck momentum
update, half drift, half kick.

Every trajectory owns a random stream derived from ``(seed, index)``, so the
statistics do not depend on scheduling or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import csv
import io
import json
import math
import os
import warnings
from typing import Sequence

import numba as nb
import numpy as np

from .bath import Bath, diffusion_energy
from .kramers import EscapeRateEstimate
from .potential import Potential, WellFeatures, analyze
from .units import ReducedUnits, to_reduced

DT_STABILITY = 0.05
CENSOR_BIAS_FRACTION = 0.10
INITIAL_CONDITIONS = ("well-thermal", "well-bottom-rest")

RUNNING, ESCAPED, DIVERGED = 0, 1, 2


class TrajectoryDiverged(FloatingPointError):
    pass


class NoEscapeError(RuntimeError):
    pass


def thread_count() -> int:
    """Worker threads, from ``KRAMERS_ZPF_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("KRAMERS_ZPF_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("KRAMERS_ZPF_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


@dataclass(frozen=True)
class SimulationConfig:
    potential: Potential
    bath: Bath
    dt: float = 0.02
    absorb_at: float | None = None
    max_time: float = 1e5
    n_trajectories: int = 1000
    seed: int = 0
    initial_condition: str = "well-thermal"
    units: ReducedUnits = field(default_factory=ReducedUnits)
    search_interval: tuple[float, float] | None = None

    def __post_init__(self):
        f = self.features
        if self.absorb_at is None:
            object.__setattr__(self, "absorb_at", f.x_b + 2.0 * (f.x_b - f.x_a))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        bound = DT_STABILITY / max(f.omega_a, f.omega_b, self.gamma)
        if self.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt} exceeds the stability bound {bound:.6g}")
        if not self.absorb_at > f.x_b:
            raise ValueError("absorb_at must lie beyond the barrier top")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ValueError(f"initial_condition must be one of {INITIAL_CONDITIONS}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def features(self) -> WellFeatures:
        cached = self.__dict__.get("_features")
        if cached is None:
            cached = analyze(self.potential, self.search_interval)
            object.__setattr__(self, "_features", cached)
        return cached

    @property
    def gamma(self) -> float:
        return self.bath.gamma

    @property
    def diffusion(self) -> float:
        """``D`` in reduced energy units."""
        return to_reduced(diffusion_energy(self.bath), "energy", self.units)

    @property
    def barrier_ratio(self) -> float:
        d = self.diffusion
        return math.inf if d == 0 else self.features.delta_u / d

    def to_dict(self) -> dict:
        return {
            "potential": self.potential.to_dict(),
            "bath": self.bath.to_dict(),
            "simulation": {
                "dt": self.dt,
                "absorb_at": self.absorb_at,
                "max_time": self.max_time,
                "n_trajectories": self.n_trajectories,
                "seed": self.seed,
                "initial_condition": self.initial_condition,
            },
            "units": {
                "energy_scale": self.units.energy_scale,
                "time_scale": self.units.time_scale,
                "length_scale": self.units.length_scale,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        sim = dict(data.get("simulation", {}))
        units = ReducedUnits(**data["units"]) if "units" in data else ReducedUnits()
        return cls(
            potential=Potential.from_dict(data["potential"]),
            bath=Bath.from_dict(data["bath"]),
            units=units,
            **sim,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@nb.njit(cache=True, nogil=True, inline="always")
def _force(coeffs, x):
    g = 0.0
    for k in range(coeffs.shape[0] - 1, 0, -1):
        g = g * x + k * coeffs[k]
    return -g


@nb.njit(cache=True, nogil=True)
def _advance(x, p, t, coeffs, mass, gamma, d, dt, x_stop, noise, combine):
    """BAOAB steps until ``x >= x_stop`` or the noise block is used up.

    With ``combine == 2`` each step draws two fine-level normals and merges
    them into the coarse Ornstein-Uhlenbeck increment that two half-steps of
    the same noise would have produced (for the O part exactly).
    """
    c1 = math.exp(-gamma * dt)
    s1 = math.sqrt((1.0 - c1 * c1) * mass * d)
    ch = math.exp(-0.5 * gamma * dt)
    norm = 1.0 / math.sqrt(1.0 + ch * ch)
    f = _force(coeffs, x)
    nsteps = noise.shape[0] // combine
    for i in range(nsteps):
        if combine == 2:
            xi = (ch * noise[2 * i] + noise[2 * i + 1]) * norm
        else:
            xi = noise[i]
        p += 0.5 * dt * f
        x += 0.5 * dt * p / mass
        p = c1 * p + s1 * xi
        x += 0.5 * dt * p / mass
        f = _force(coeffs, x)
        p += 0.5 * dt * f
        t += dt
        if not (math.isfinite(x) and math.isfinite(p)):
            return x, p, t, DIVERGED, i + 1
        if x >= x_stop:
            return x, p, t, ESCAPED, i + 1
    return x, p, t, RUNNING, nsteps


@nb.njit(cache=True, nogil=True)
def _sample(x, p, coeffs, mass, gamma, d, dt, noise, wall, x_ref, k_ref, thin, out_x, out_p, n_out, sums):
    """Advance over a noise block with a reflecting wall; accumulate moments after burn-in.

    ``sums`` holds running totals: count, x, x^2, p, p^2, kinetic, harmonic potential.
    Positions are recorded every ``thin`` steps into ``out_x``/``out_p`` while room remains.
    ``n_out[0]`` counts recorded samples and ``n_out[1]`` counts steps taken.
    """
    c1 = math.exp(-gamma * dt)
    s1 = math.sqrt((1.0 - c1 * c1) * mass * d)
    f = _force(coeffs, x)
    for i in range(noise.shape[0]):
        p += 0.5 * dt * f
        x += 0.5 * dt * p / mass
        if x > wall:
            x = 2.0 * wall - x
            p = -p
        p = c1 * p + s1 * noise[i]
        x += 0.5 * dt * p / mass
        if x > wall:
            x = 2.0 * wall - x
            p = -p
        f = _force(coeffs, x)
        p += 0.5 * dt * f
        n_out[1] += 1
        if n_out[1] % thin == 0:
            xi = x - x_ref
            sums[0] += 1.0
            sums[1] += x
            sums[2] += x * x
            sums[3] += p
            sums[4] += p * p
            sums[5] += 0.5 * p * p / mass
            sums[6] += 0.5 * k_ref * xi * xi
            j = n_out[0]
            if j < out_x.shape[0]:
                out_x[j] = x
                out_p[j] = p
                n_out[0] = j + 1
    return x, p


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index``; no dependence on execution order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def step(state: tuple[float, float], config: SimulationConfig, noise: float) -> tuple[float, float]:
    """One BAOAB step from ``(x, p)`` with the standard normal draw ``noise``."""
    x, p = map(float, state)
    if not (math.isfinite(x) and math.isfinite(p)):
        raise TrajectoryDiverged("trajectory diverged")
    m, g, d, dt = config.potential.mass, config.gamma, config.diffusion, config.dt
    coeffs = np.asarray(config.potential.coefficients)
    c1 = math.exp(-g * dt)
    p += 0.5 * dt * _force(coeffs, x)
    x += 0.5 * dt * p / m
    p = c1 * p + math.sqrt((1.0 - c1 * c1) * m * d) * noise
    x += 0.5 * dt * p / m
    p += 0.5 * dt * _force(coeffs, x)
    if not (math.isfinite(x) and math.isfinite(p)):
        raise TrajectoryDiverged("trajectory diverged")
    return x, p


def _initial_state(config: SimulationConfig, rng: np.random.Generator) -> tuple[float, float]:
    f = config.features
    if config.initial_condition == "well-bottom-rest":
        return f.x_a, 0.0
    m, d = config.potential.mass, config.diffusion
    sx = math.sqrt(d / m) / f.omega_a
    sp = math.sqrt(m * d)
    # harmonic well Gaussian restricted to x < x_b
    for _ in range(10_000):
        x = f.x_a + sx * rng.standard_normal()
        p = sp * rng.standard_normal()
        if x < f.x_b:
            return x, p
    raise RuntimeError("could not sample a well state below the barrier")


def _first_passage(config: SimulationConfig, index: int, dt: float, combine: int) -> tuple[int, float]:
    rng = trajectory_rng(config.seed, index)
    x, p = _initial_state(config, rng)
    coeffs = np.asarray(config.potential.coefficients, dtype=float)
    m, g, d = config.potential.mass, config.gamma, config.diffusion
    t = 0.0
    n_steps = int(math.ceil(config.max_time / dt - 1e-9))
    done = 0
    block = 4096
    while done < n_steps:
        k = min(block, n_steps - done)
        noise = rng.standard_normal(k * combine)
        x, p, t, status, used = _advance(x, p, t, coeffs, m, g, d, dt, config.absorb_at, noise, combine)
        done += used
        if status != RUNNING:
            return status, done * dt
        block = min(2 * block, 1 << 16)
    return RUNNING, done * dt


def _run_all(config: SimulationConfig, dt: float, combine: int) -> tuple[np.ndarray, np.ndarray]:
    n = config.n_trajectories
    status = np.empty(n, dtype=np.int8)
    times = np.empty(n)

    def work(i):
        status[i], times[i] = _first_passage(config, i, dt, combine)

    workers = min(thread_count(), n)
    if workers <= 1:
        for i in range(n):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n)))
    return status, times


@dataclass
class FptStatistics:
    n_trajectories: int
    n_escaped: int
    n_censored: int
    n_diverged: int
    mean_fpt: float
    kappa: float
    kappa_stderr: float
    histogram: list[tuple[float, float, int]]
    first_passage_times: np.ndarray
    censor_time: float
    biased: bool = False
    warnings: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_estimate(self) -> EscapeRateEstimate:
        return EscapeRateEstimate(
            kappa=self.kappa,
            method="monte-carlo",
            uncertainty=self.kappa_stderr,
            diagnostics=dict(self.diagnostics, mean_fpt=self.mean_fpt, biased=self.biased),
            warnings=list(self.warnings),
        )

    def to_dict(self) -> dict:
        return {
            "method": "monte-carlo",
            "n_trajectories": self.n_trajectories,
            "n_escaped": self.n_escaped,
            "n_censored": self.n_censored,
            "n_diverged": self.n_diverged,
            "mean_fpt": self.mean_fpt,
            "kappa": self.kappa,
            "kappa_stderr": self.kappa_stderr,
            "biased": self.biased,
            "diagnostics": dict(self.diagnostics),
            "warnings": list(self.warnings),
        }

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in self.histogram:
            w.writerow([repr(left), repr(right), count])
        return buf.getvalue()

    def tail_rate(self, t_start: float) -> tuple[float, float]:
        """Exponential-tail rate beyond ``t_start`` by censored maximum likelihood.

        Returns ``(rate, standard error)``.
        """
        t = self.first_passage_times
        escaped = np.isfinite(t)
        exposure_end = np.where(escaped, t, self.censor_time)
        alive = exposure_end > t_start
        events = int(np.sum(escaped & alive))
        exposure = float(np.sum(exposure_end[alive] - t_start))
        if events == 0 or exposure <= 0:
            raise NoEscapeError("no escapes in the tail window")
        rate = events / exposure
        return rate, rate / math.sqrt(events)


def _statistics(config: SimulationConfig, status: np.ndarray, times: np.ndarray, dt: float, bins: int = 50) -> FptStatistics:
    n = config.n_trajectories
    esc = status == ESCAPED
    n_esc = int(esc.sum())
    n_div = int((status == DIVERGED).sum())
    n_cens = n - n_esc - n_div
    if n_esc == 0:
        raise NoEscapeError("no escapes observed; raise max_time or lower barrier")
    fpt = np.where(esc, times, np.nan)
    escaped_times = times[esc]
    mean = float(np.mean(escaped_times))
    kappa = 1.0 / mean
    if n_esc >= 2:
        sem = float(np.std(escaped_times, ddof=1)) / math.sqrt(n_esc)
        stderr = sem / mean**2
    else:
        stderr = math.inf
    counts, edges = np.histogram(escaped_times, bins=bins, range=(0.0, float(escaped_times.max())))
    hist = [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]
    notes = []
    biased = n_cens > CENSOR_BIAS_FRACTION * n
    if biased:
        notes.append(f"{n_cens} of {n} trajectories censored at max_time; kappa is biased high")
    if n_div:
        notes.append(f"{n_div} trajectories diverged and were discarded")
    ratio = config.barrier_ratio
    if ratio < 3.0:
        notes.append(f"barrier ratio dU/D = {ratio:.3g} < 3; no well-separated barrier")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    f = config.features
    return FptStatistics(
        n_trajectories=n,
        n_escaped=n_esc,
        n_censored=n_cens,
        n_diverged=n_div,
        mean_fpt=mean,
        kappa=kappa,
        kappa_stderr=stderr,
        histogram=hist,
        first_passage_times=fpt,
        censor_time=config.max_time,
        biased=biased,
        warnings=notes,
        diagnostics={
            "barrier_ratio": ratio,
            "D": config.diffusion,
            "gamma": config.gamma,
            "dt": dt,
            "x_a": f.x_a,
            "x_b": f.x_b,
            "absorb_at": config.absorb_at,
            "absorb_distance_over_well_width": (config.absorb_at - f.x_b) / (f.x_b - f.x_a),
        },
    )


def estimate_rate(config: SimulationConfig) -> FptStatistics:
    """Run all trajectories to absorption (or ``max_time``) and return ``kappa = 1/mean FPT``."""
    status, times = _run_all(config, config.dt, 1)
    return _statistics(config, status, times, config.dt)


def dt_refinement_pair(config: SimulationConfig) -> tuple[FptStatistics, FptStatistics]:
    """Estimates at ``dt`` and ``dt/2`` driven by the same Brownian increments.

    The fine run consumes each trajectory's normals directly; the coarse run
    merges consecutive pairs, so the difference between the two isolates
    time-step error from sampling noise.
    """
    fine_cfg = replace(config, dt=0.5 * config.dt)
    s_f, t_f = _run_all(fine_cfg, fine_cfg.dt, 1)
    s_c, t_c = _run_all(fine_cfg, config.dt, 2)
    return _statistics(config, s_c, t_c, config.dt), _statistics(fine_cfg, s_f, t_f, fine_cfg.dt)


@dataclass
class EquilibriumMoments:
    mean_energy: float
    position_variance: float
    momentum_variance: float
    kinetic_energy: float
    potential_energy: float
    n_samples: int
    x: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)


def equilibrium_moments(
    config: SimulationConfig,
    burn_in: float,
    samples: int,
    *,
    harmonic: bool = True,
    thin: int = 1,
    keep: int = 0,
    chains: int = 1,
) -> EquilibriumMoments:
    """Long-run moments in the well.

    With ``harmonic=True`` the potential is replaced by its well approximation
    ``m w_a^2 (x - x_a)^2 / 2``; otherwise the full potential is used with a
    reflecting wall at ``x_b``.  ``mean_energy`` is the harmonic oscillator
    energy ``p^2/2m + m w_a^2 xi^2/2``.  ``samples`` moment samples are taken
    every ``thin`` steps, split over ``chains`` independent chains; up to
    ``keep`` of them are returned as raw ``(x, p)`` arrays.
    """
    f = config.features
    m, g, d, dt = config.potential.mass, config.gamma, config.diffusion, config.dt
    k_ref = m * f.omega_a**2
    if harmonic:
        coeffs = np.array([0.5 * k_ref * f.x_a**2, -k_ref * f.x_a, 0.5 * k_ref])
        wall = math.inf
    else:
        coeffs = np.asarray(config.potential.coefficients, dtype=float)
        wall = f.x_b
    per_chain = -(-samples // chains)
    keep_per_chain = -(-keep // chains) if keep else 0
    sums_all = np.zeros(7)
    xs, ps = [], []
    burn_steps = int(round(burn_in / dt))
    for c in range(chains):
        rng = trajectory_rng(config.seed, c)
        x, p = _initial_state(config, rng) if d > 0 else (f.x_a + 0.1 * math.sqrt(1.0 / k_ref), 0.0)
        sink_x, sink_p, n0 = np.empty(0), np.empty(0), np.zeros(2, dtype=np.int64)
        remaining = burn_steps
        while remaining > 0:
            k = min(remaining, 1 << 20)
            x, p = _sample(x, p, coeffs, m, g, d, dt, rng.standard_normal(k), wall, f.x_a, k_ref, 1 << 62, sink_x, sink_p, n0, np.zeros(7))
            remaining -= k
        out_x, out_p = np.empty(keep_per_chain), np.empty(keep_per_chain)
        n_out = np.zeros(2, dtype=np.int64)
        sums = np.zeros(7)
        remaining = per_chain * thin
        while remaining > 0:
            k = min(remaining, 1 << 20)
            x, p = _sample(x, p, coeffs, m, g, d, dt, rng.standard_normal(k), wall, f.x_a, k_ref, thin, out_x, out_p, n_out, sums)
            remaining -= k
        sums_all += sums
        xs.append(out_x[: n_out[0]])
        ps.append(out_p[: n_out[0]])
    n = sums_all[0]
    mean_x, mean_p = sums_all[1] / n, sums_all[3] / n
    kin, pot = sums_all[5] / n, sums_all[6] / n
    return EquilibriumMoments(
        mean_energy=kin + pot,
        position_variance=sums_all[2] / n - mean_x**2,
        momentum_variance=sums_all[4] / n - mean_p**2,
        kinetic_energy=kin,
        potential_energy=pot,
        n_samples=int(n),
        x=np.concatenate(xs),
        p=np.concatenate(ps),
    )


def ks_distance_normal(samples: Sequence[float], scale: float, loc: float = 0.0) -> float:
    """Kolmogorov-Smirnov distance between samples and ``N(loc, scale**2)``."""
    from scipy import stats

    return float(stats.kstest(np.asarray(samples), "norm", args=(loc, scale)).statistic)
