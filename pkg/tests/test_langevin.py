import json
import math
import warnings

import numpy as np
import pytest

from kramers_zpf.bath import Bath
from kramers_zpf.kramers import RateInputs, rate_full
from kramers_zpf.langevin import (
    NoEscapeError,
    SimulationConfig,
    TrajectoryDiverged,
    dt_refinement_pair,
    equilibrium_moments,
    estimate_rate,
    ks_distance_normal,
    step,
    thread_count,
    trajectory_rng,
)
from kramers_zpf.potential import make_cubic


def config(ratio=4.0, gamma=0.5, **kw):
    pot = make_cubic(1.0, 1.0)
    d = 1.0 / ratio
    return SimulationConfig(pot, Bath.with_diffusion(d, gamma=gamma), **kw)


def energy(x, p):
    pot = make_cubic(1.0, 1.0)
    return 0.5 * p * p + pot(x)


class TestConfig:
    def test_defaults(self):
        c = config()
        assert c.absorb_at == pytest.approx(3.0 * math.sqrt(6.0))
        assert c.diffusion == pytest.approx(0.25)
        assert c.barrier_ratio == pytest.approx(4.0)

    def test_dt_bound(self):
        with pytest.raises(ValueError, match="stability bound"):
            config(gamma=2.0, dt=0.03)
        config(gamma=2.0, dt=0.025)

    @pytest.mark.parametrize(
        "kw",
        [
            {"dt": 0.0},
            {"absorb_at": 0.5},
            {"n_trajectories": 0},
            {"max_time": 0.0},
            {"initial_condition": "anywhere"},
            {"seed": -1},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            config(**kw)

    def test_json_round_trip(self):
        c = config(seed=17, n_trajectories=12, dt=0.01)
        again = SimulationConfig.from_dict(json.loads(c.to_json()))
        assert again.to_dict() == c.to_dict()

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("KRAMERS_ZPF_THREADS", "3")
        assert thread_count() == 3
        monkeypatch.setenv("KRAMERS_ZPF_THREADS", "0")
        assert thread_count() >= 1
        monkeypatch.setenv("KRAMERS_ZPF_THREADS", "-2")
        with pytest.raises(ValueError):
            thread_count()


class TestStep:
    def test_conservative_limit(self):
        c = config(gamma=0.0, dt=0.01)
        x, p = 0.2, 0.0
        e0 = energy(x, p)
        worst = 0.0
        for _ in range(100_000):
            x, p = step((x, p), c, 0.0)
            worst = max(worst, abs(energy(x, p) - e0))
        assert worst / e0 <= 1e-4

    def test_damped_relaxation(self):
        c = SimulationConfig(make_cubic(1.0, 1.0), Bath(0.0, 1.0, gamma=0.3, zero_point=False), dt=0.01)
        assert c.diffusion == 0.0
        x, p = 0.3, 0.0
        xs = []
        for _ in range(20_000):
            x, p = step((x, p), c, 1.7)  # noise is inert at D = 0
            xs.append(x)
        xs = np.abs(np.array(xs))
        peaks = xs[1:-1][(xs[1:-1] >= xs[:-2]) & (xs[1:-1] >= xs[2:])]
        assert len(peaks) > 10
        assert np.all(np.diff(peaks) <= 0)
        assert abs(x) < 1e-10 and abs(p) < 1e-10

    def test_diverged(self):
        with pytest.raises(TrajectoryDiverged, match="trajectory diverged"):
            step((math.nan, 0.0), config(), 0.0)

    def test_noise_variance(self):
        # with no force and p = 0 the O-update alone sets the momentum variance
        c = config(gamma=1.0, dt=0.05)
        c1 = math.exp(-0.05)
        x, p = step((0.0, 0.0), c, 1.0)
        expected_kick = math.sqrt((1 - c1 * c1) * 1.0 * 0.25)
        assert p == pytest.approx(expected_kick, rel=1e-3)


class TestRng:
    def test_streams_are_order_independent(self):
        a = trajectory_rng(42, 7).standard_normal(5)
        trajectory_rng(42, 3).standard_normal(100)
        b = trajectory_rng(42, 7).standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(trajectory_rng(1, 0).standard_normal(4), trajectory_rng(1, 1).standard_normal(4))


class TestEstimate:
    def test_counts_and_histogram(self):
        s = estimate_rate(config(ratio=3.0, n_trajectories=200, seed=5))
        assert s.n_escaped + s.n_censored + s.n_diverged == 200
        assert s.kappa == pytest.approx(1.0 / s.mean_fpt)
        assert s.kappa_stderr > 0
        rows = s.histogram_csv().splitlines()
        assert rows[0] == "bin_left,bin_right,count"
        assert sum(int(r.split(",")[2]) for r in rows[1:]) == s.n_escaped
        d = s.to_dict()
        assert json.loads(json.dumps(d)) == d
        assert s.to_estimate().method == "monte-carlo"

    def test_thread_invariance(self, monkeypatch):
        c = config(ratio=3.0, n_trajectories=64, seed=11)
        monkeypatch.setenv("KRAMERS_ZPF_THREADS", "1")
        a = estimate_rate(c)
        monkeypatch.setenv("KRAMERS_ZPF_THREADS", "4")
        b = estimate_rate(c)
        assert np.array_equal(a.first_passage_times, b.first_passage_times, equal_nan=True)
        assert a.to_dict() == b.to_dict()

    def test_no_escape(self):
        with pytest.raises(NoEscapeError, match="no escapes observed; raise max_time or lower barrier"):
            estimate_rate(config(ratio=40.0, n_trajectories=4, max_time=5.0))

    def test_censoring_flag(self):
        with pytest.warns(RuntimeWarning, match="censored"):
            s = estimate_rate(config(ratio=4.0, n_trajectories=100, max_time=50.0, seed=2))
        assert s.biased
        assert s.n_censored > 10

    def test_barrierless(self):
        with pytest.warns(RuntimeWarning, match="barrier ratio"):
            s = estimate_rate(config(ratio=0.1, n_trajectories=200, seed=3))
        assert s.mean_fpt < 20.0

    def test_well_bottom_start(self):
        s = estimate_rate(config(ratio=3.0, n_trajectories=100, seed=4, initial_condition="well-bottom-rest"))
        assert s.n_escaped == 100

    def test_rate_and_exponential_tail(self):
        c = config(ratio=4.0, n_trajectories=5000, seed=20261019)
        s = estimate_rate(c)
        k_an = rate_full(RateInputs(c.features, c.diffusion, c.gamma)).kappa
        assert abs(s.kappa - k_an) / k_an < 0.2
        rate, err = s.tail_rate(3.0 / s.kappa)
        assert abs(rate - s.kappa) < 2 * math.hypot(err, s.kappa_stderr)

    def test_dt_halving(self):
        coarse, fine = dt_refinement_pair(config(ratio=3.0, n_trajectories=2000, seed=8, dt=0.04))
        assert coarse.n_trajectories == fine.n_trajectories == 2000
        assert abs(coarse.kappa - fine.kappa) < fine.kappa_stderr


class TestEquilibrium:
    def test_noiseless(self):
        c = SimulationConfig(make_cubic(1.0, 1.0), Bath(0.0, 1.0, gamma=0.5, zero_point=False), dt=0.05)
        m = equilibrium_moments(c, burn_in=200.0, samples=1000)
        assert m.mean_energy < 1e-12
        assert m.position_variance < 1e-12 and m.momentum_variance < 1e-12

    def test_equipartition_quick(self):
        c = config(ratio=2.0, gamma=1.0, dt=0.05, seed=1)
        m = equilibrium_moments(c, burn_in=50.0, samples=1_000_000, thin=4, chains=4)
        assert m.mean_energy == pytest.approx(0.5, rel=0.02)
        assert m.kinetic_energy == pytest.approx(0.25, rel=0.03)
        assert m.potential_energy == pytest.approx(0.25, rel=0.03)

    def test_reflecting_wall_keeps_particle_in_well(self):
        c = config(ratio=3.0, gamma=1.0, dt=0.05, seed=2)
        m = equilibrium_moments(c, burn_in=20.0, samples=20_000, harmonic=False, keep=20_000)
        assert np.all(m.x <= c.features.x_b)

    def test_stationary_gaussian(self):
        c = config(ratio=2.0, gamma=1.0, dt=0.05, seed=3)
        m = equilibrium_moments(c, burn_in=50.0, samples=1_000_000, thin=20, keep=1_000_000, chains=8)
        d = 0.5
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert ks_distance_normal(m.p, math.sqrt(d)) < 0.01
            assert ks_distance_normal(m.x, math.sqrt(d)) < 0.01
