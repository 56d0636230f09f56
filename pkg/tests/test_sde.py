import math
import warnings

import numpy as np
import pytest

from stochns import noise as nz
from stochns import sde
from stochns import spectral as sp
from stochns.errors import (ConfigurationError, DivergenceError, DomainError, StatisticsRefused,
                            UnsupportedModelError)


def config(K=4, nu=1.0, dt=0.01, horizon=1.0, noise=None, **kw):
    g = sp.make_grid(K)
    noise = noise if noise is not None else nz.AdditiveDiagonal(g, a=0.0, sigma0=0.0)
    return sde.SimConfig(grid=g, nu=nu, dt=dt, horizon=horizon, noise=noise, **kw)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(nu=0.0), dict(dt=-1.0), dict(dt=2.0, horizon=1.0),
                                    dict(record_every=0)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            config(**kw)

    def test_foreign_noise_grid(self):
        with pytest.raises(ConfigurationError):
            config(K=4, noise=nz.AdditiveDiagonal(sp.make_grid(5)))

    def test_unknown_record_mode(self):
        with pytest.raises(DomainError):
            config(K=4, record_modes=[(9, 9)])

    def test_replace(self):
        c = config(horizon=2.0)
        assert c.replace(horizon=3.0).n_steps == 300
        assert c.n_steps == 200


class TestStep:
    def test_zero_stays_zero(self):
        cfg = config(horizon=5.0)
        rec = sde.simulate(cfg)
        assert not np.any(rec.energy) and not np.any(rec.palinstrophy)

    @pytest.mark.parametrize("k", [(1, 0), (2, -1), (3, 3)])
    def test_single_mode_decay(self, k):
        # a lone mode has zero self-advection, so the decay is exact
        cfg = config(K=8, nu=0.7, dt=0.05, horizon=1.0, initial=None)
        g = cfg.grid
        psi = sp.from_modes(g, {k: 1.0 + 0.5j})
        cfg = cfg.replace(initial=psi)
        rec = sde.simulate(cfg)
        lam = sp.eigenvalue(k)
        expected = sp.norm(psi) ** 2 * np.exp(-2 * 0.7 * lam * rec.times)
        np.testing.assert_allclose(rec.energy, expected, rtol=1e-12)

    def test_first_step_variance_is_exact_ou(self):
        g = sp.make_grid(2)
        nu, dt, sigma = 0.5, 0.3, 1.7
        cfg = config(K=2, nu=nu, dt=dt, horizon=dt,
                     noise=nz.AdditiveDiagonal(g, a=0.0, sigma0=sigma))
        R = 20000
        dW = np.random.default_rng(0).standard_normal((R, g.n_modes)) * math.sqrt(dt)
        x = sp.to_coords(g, sde.step_stokes(np.zeros((R, g.n_modes), complex), cfg, dW))
        target = sigma ** 2 * -np.expm1(-2 * nu * g.lam * dt) / (2 * nu * g.lam)
        ratio = x.var(axis=0) / target
        assert np.all(np.abs(ratio - 1) < 5 * math.sqrt(2 / R))

    def test_nonlinear_without_advection_equals_stokes(self, rng):
        g = sp.make_grid(4)
        cfg = config(noise=nz.AdditiveDiagonal(g), advection=False)
        psi = sp.random_field(g, rng)
        dW = rng.standard_normal(g.n_modes) * 0.1
        a = sde.step_sns(psi, cfg, dW)
        b = sde.step_stokes(psi, cfg, dW)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-15)

    def test_stokes_refuses_multiplicative(self):
        g = sp.make_grid(3)
        cfg = config(K=3, noise=nz.MultiplicativeLowMode(g, 4))
        with pytest.raises(UnsupportedModelError):
            sde.step_stokes(np.zeros(g.n_modes, complex), cfg, np.zeros(4))

    def test_energy_monotone_without_noise_or_forcing(self, rng):
        g = sp.make_grid(8)
        psi = sp.random_field(g, rng, amplitude=2.0, slope=1.0, dealiased=True)
        rec = sde.simulate(config(K=8, dt=2e-3, horizon=2.0, initial=psi))
        assert np.all(np.diff(rec.energy) <= 0)

    def test_divergence_reported_with_step(self, rng):
        g = sp.make_grid(8)
        psi = sp.random_field(g, rng, amplitude=1e5, dealiased=True)
        cfg = config(K=8, nu=1e-3, dt=0.5, horizon=500.0, initial=psi)
        with warnings.catch_warnings(), np.errstate(all="ignore"):
            warnings.simplefilter("ignore")
            with pytest.raises(DivergenceError) as err:
                sde.simulate(cfg)
        assert err.value.step >= 1

    def test_cfl_warning(self, rng):
        g = sp.make_grid(8)
        psi = sp.random_field(g, rng, amplitude=50.0, dealiased=True)
        cfg = config(K=8, nu=1.0, dt=0.01, horizon=0.2, initial=psi)
        with np.errstate(all="ignore"), pytest.warns(sde.CFLWarning):
            try:
                sde.simulate(cfg)
            except DivergenceError:
                pass


class TestTrajectory:
    def test_deterministic(self, rng):
        g = sp.make_grid(6)
        cfg = config(K=6, noise=nz.MultiplicativeLowMode(g, 10), seed=42,
                     initial=sp.random_field(g, rng, dealiased=True), record_modes=[(1, 0)])
        a, b = sde.simulate(cfg), sde.simulate(cfg)
        for name in ("energy", "enstrophy", "palinstrophy", "modes"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        c = sde.simulate(cfg.replace(seed=43))
        assert not np.array_equal(a.energy, c.energy)

    def test_record_layout(self):
        g = sp.make_grid(4)
        cfg = config(noise=nz.AdditiveDiagonal(g), horizon=1.0, record_every=10,
                     record_modes=[(1, 0), (0, 1)])
        rec = sde.simulate(cfg)
        np.testing.assert_allclose(rec.times, np.linspace(0, 1, 11))
        assert rec.modes.shape == (11, 2)
        assert not rec.ensemble
        np.testing.assert_array_equal(rec.mode_series((0, 1)), rec.modes[:, 1])

    def test_ensemble_replica_matches_solo_run(self):
        g = sp.make_grid(4)
        cfg = config(noise=nz.AdditiveDiagonal(g), seed=5, horizon=0.5)
        ens = sde.run(cfg, n_replicas=3, stream_key=2)
        assert ens.ensemble and ens.energy.shape == (3, 51)
        # replica 0 of key 2 draws the same increments as the solo stream (2, 0)
        solo = sde.run(cfg, stream_key=2)
        np.testing.assert_allclose(ens.energy[0], solo.energy, rtol=1e-13)

    def test_snapshots(self):
        g = sp.make_grid(4)
        cfg = config(noise=nz.AdditiveDiagonal(g), horizon=1.0, snapshot_every=25)
        rec = sde.simulate(cfg)
        assert [t for t, _ in rec.snapshots] == pytest.approx([0.25, 0.5, 0.75, 1.0])
        assert sp.norm(rec.snapshots[-1][1]) ** 2 == pytest.approx(rec.energy[-1])


class TestEnergyBalance:
    def test_needs_replicas(self):
        with pytest.raises(StatisticsRefused):
            sde.energy_balance(config(), 1)

    def test_deterministic_residual_small(self, rng):
        g = sp.make_grid(6)
        psi = sp.random_field(g, rng, dealiased=True)
        rep = sde.energy_balance(config(K=6, dt=1e-3, horizon=1.0, record_every=100,
                                        initial=psi), 2)
        assert np.max(np.abs(rep.residual)) < 1e-3 * sp.norm(psi) ** 2
        assert np.all(rep.inequality_holds)

    def test_additive_balance(self):
        g = sp.make_grid(4)
        cfg = config(K=4, dt=2e-3, horizon=2.0, record_every=100,
                     noise=nz.AdditiveDiagonal(g, a=0.45))
        rep = sde.energy_balance(cfg, 32)
        assert np.all(np.abs(rep.zscore) <= 3)
        assert np.all(rep.inequality_holds)

    def test_multiplicative_has_no_inequality(self):
        g = sp.make_grid(3)
        rep = sde.energy_balance(config(K=3, horizon=0.1, noise=nz.MultiplicativeLowMode(g, 3)), 4)
        assert rep.inequality_holds is None


class TestThresholds:
    def test_uniqueness_threshold(self):
        assert sde.viscosity_thresholds(0.4, 1.0).uniq_threshold == pytest.approx(1.1)

    def test_p_sup(self):
        assert sde.viscosity_thresholds(0.1, 1.0).p_sup(1.0) == pytest.approx(4.625)

    def test_bounded_noise(self):
        t = sde.viscosity_thresholds(0.0, 1.0)
        assert t.fp_threshold == 0.0 and t.uniq_threshold == 0.0
        assert t.exponential and t.p_sup(0.3) == math.inf

    @pytest.mark.parametrize("lam1", [0.0, -1.0])
    def test_lambda_domain(self, lam1):
        with pytest.raises(DomainError):
            sde.viscosity_thresholds(0.1, lam1)

    def test_negative_c1(self):
        with pytest.raises(ConfigurationError):
            sde.viscosity_thresholds(-0.1, 1.0)
