import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochns import ergodic as eg
from stochns import noise as nz
from stochns import sde
from stochns import spectral as sp
from stochns.errors import (ConfigurationError, DomainError, StatisticsRefused,
                            UnsupportedModelError)

FOUR_MODE_Z0 = [(1, 0), (-1, 0), (1, 1), (-1, -1)]


def cfg_for(noise, dt=0.01, horizon=1.0, **kw):
    return sde.SimConfig(grid=noise.grid, nu=1.0, dt=dt, horizon=horizon, noise=noise, **kw)


def record(times, values):
    """Minimal single-path record carrying ``values`` as its energy series."""
    times = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    return sde.TrajectoryRecord(times, v, v, v, np.zeros((len(times), 0), complex), (),
                                sp.make_grid(2))


class TestObservables:
    @pytest.mark.parametrize("name, kind, mode", [
        ("energy", "energy", None),
        ("mode_real(1,0)", "mode_real", (1, 0)),
        ("mode_modulus( -2, 1)", "mode_modulus", (-2, 1)),
    ])
    def test_parse(self, name, kind, mode):
        o = eg.observable(name)
        assert o.kind == kind and o.mode == mode

    def test_unknown(self):
        with pytest.raises(ConfigurationError):
            eg.observable("helicity")
        with pytest.raises(ConfigurationError):
            eg.Observable("mode_real")

    def test_values_on_field(self):
        g = sp.make_grid(4)
        psi = sp.from_modes(g, {(0, 2): np.pi})
        assert eg.observable("energy")(psi) == pytest.approx(sp.norm(psi) ** 2)
        assert eg.observable("enstrophy")(psi) == pytest.approx(2 * np.pi ** 2)
        assert eg.observable("palinstrophy")(psi) == pytest.approx(8 * np.pi ** 2)
        assert eg.observable("mode_modulus(0,-2)")(psi) == pytest.approx(np.pi)
        assert eg.observable("energy")(sp.biot_savart(psi)) == pytest.approx(sp.norm(psi) ** 2)
        assert eg.Observable("constant", value=2.5)(psi) == 2.5

    def test_unrecorded_mode(self):
        g = sp.make_grid(2)
        rec = sde.simulate(cfg_for(nz.AdditiveDiagonal(g), horizon=0.1))
        with pytest.raises(DomainError):
            eg.observable("mode_real(1,0)").of_record(rec)


class TestWindowAverage:
    def test_linear_series_exact(self):
        t = np.linspace(0, 10, 11)
        assert eg.window_average(t, t, 0, 10) == pytest.approx(5.0)
        # a window between record times
        assert eg.window_average(t, t, 2.5, 7.25) == pytest.approx(4.875)

    @given(st.floats(0.5, 5), st.floats(0, 3), st.floats(0.1, 4))
    def test_linear_in_observable(self, a, s, w):
        t = np.linspace(0, 10, 41)
        f, h = np.sin(t), t ** 2
        lhs = eg.window_average(t, a * f + h, s, s + w)
        rhs = a * eg.window_average(t, f, s, s + w) + eg.window_average(t, h, s, s + w)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    @given(st.integers(0, 30), st.integers(1, 40))
    def test_shift_invariance(self, j, n):
        t = np.linspace(0, 10, 81)
        v = np.cos(3 * t) + t
        start, stop = t[j], t[min(j + n, 80)]
        shifted = eg.window_average(t[j:] - t[j], v[j:], 0.0, stop - start)
        assert eg.window_average(t, v, start, stop) == pytest.approx(shifted, rel=1e-12)

    def test_bounded_by_sup(self, rng):
        t = np.linspace(0, 5, 200)
        v = rng.uniform(-1, 1, 200)
        for w in (0.3, 2.0, 5.0):
            assert abs(eg.window_average(t, v, 0, w)) <= np.max(np.abs(v))

    @pytest.mark.parametrize("start, stop", [(1.0, 1.0), (2.0, 1.0), (-1.0, 2.0), (0.0, 11.0)])
    def test_domain(self, start, stop):
        t = np.linspace(0, 10, 11)
        with pytest.raises(DomainError):
            eg.window_average(t, t, start, stop)


class TestTimeAverage:
    def test_constant(self):
        g = sp.make_grid(3)
        rec = sde.simulate(cfg_for(nz.AdditiveDiagonal(g), horizon=2.0))
        ta = eg.time_average(rec, eg.Observable("constant", value=-3.0), [0.5, 1.0, 2.0])
        np.testing.assert_allclose(ta.averages, -3.0)
        assert ta.cauchy <= 1e-12

    def test_zero_system(self):
        g = sp.make_grid(3)
        rec = sde.simulate(cfg_for(nz.AdditiveDiagonal(g, sigma0=0.0), horizon=2.0))
        ta = eg.time_average(rec, "energy", [1.0, 2.0])
        assert not np.any(ta.averages)

    def test_running_average_of_ramp(self):
        ta = eg.time_average(record(np.linspace(0, 4, 9), np.linspace(0, 4, 9)), "energy",
                             [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(ta.averages, [0.5, 1.0, 1.5, 2.0])
        np.testing.assert_allclose(ta.gaps, 0.5)
        assert ta.cauchy == pytest.approx(0.5)
        assert ta.as_rows()[0] == (1.0, 0.5)

    def test_single_window_has_no_cauchy(self):
        ta = eg.time_average(record([0, 1], [1, 1]), "energy", [1.0])
        assert math.isnan(ta.cauchy)

    @pytest.mark.parametrize("windows", [[], [2.0, 1.0]])
    def test_bad_windows(self, windows):
        with pytest.raises(DomainError):
            eg.time_average(record([0, 1, 2], [1, 1, 1]), "energy", windows)

    def test_linear_stokes_mode_average(self):
        g = sp.make_grid(2)
        cfg = cfg_for(nz.AdditiveDiagonal(g, a=0.0, sigma0=1.0), horizon=1000.0, seed=3,
                      record_modes=[(1, 0), (0, 1)])
        rec = sde.simulate_stokes(cfg)
        burn = rec.times >= 10.0
        sq = np.abs(rec.modes[burn]) ** 2
        # sigma^2 / (2 nu lam) with lam = 1, pooled over the two modes
        avg = eg.window_average(rec.times[burn], sq.mean(axis=1), 10.0, 1000.0)
        assert avg == pytest.approx(0.5, rel=0.05)


class TestReport:
    def test_report_fields(self):
        g = sp.make_grid(3)
        cfg = cfg_for(nz.AdditiveDiagonal(g), horizon=4.0, record_modes=[(1, 0)])
        rec = sde.simulate(cfg)
        rep = eg.ergodic_report(rec, ["energy", "mode_real(1,0)"], [1.0, 2.0, 4.0], bins=8)
        assert rep.burn_in == pytest.approx(1.0)
        assert set(rep.averages) == {"energy", "mode_real(1,0)"}
        counts, edges = rep.histograms["energy"]
        assert counts.sum() == np.sum(rec.times >= 1.0) and len(edges) == 9
        assert rep.mode_variance[(1, 0)] > 0

    def test_refuses_ensemble(self):
        g = sp.make_grid(3)
        rec = sde.run(cfg_for(nz.AdditiveDiagonal(g), horizon=0.1), n_replicas=2)
        with pytest.raises(DomainError):
            eg.ergodic_report(rec, ["energy"], [0.1])

    def test_moments(self):
        np.testing.assert_allclose(eg.moments([2.0, 2.0, 2.0]), [2.0, 0, 0, 0])
        m = eg.moments([0.0, 1.0])
        assert m[0] == 0.5 and m[1] == 0.25
        with pytest.raises(StatisticsRefused):
            eg.moments([1.0])


class TestTwoStart:
    def test_identical_starts(self, rng):
        g = sp.make_grid(4)
        x = sp.random_field(g, rng, dealiased=True)
        cfg = cfg_for(nz.AdditiveDiagonal(g), horizon=2.0, record_every=10)
        rep = eg.two_start_comparison(cfg, x, x, obs=["energy", "enstrophy"], n_replicas=4)
        assert rep.ks == {"energy": 0.0, "enstrophy": 0.0}
        assert rep.n_samples == 4 * 16
        assert not rep.deterministic_control

    def test_symmetric(self, rng):
        g = sp.make_grid(4)
        a = sp.random_field(g, rng, dealiased=True)
        b = sp.random_field(g, rng, amplitude=3.0, dealiased=True)
        cfg = cfg_for(nz.AdditiveDiagonal(g), horizon=2.0, record_every=10)
        ab = eg.two_start_comparison(cfg, a, b, n_replicas=4)
        ba = eg.two_start_comparison(cfg, b, a, n_replicas=4)
        assert ab.ks == ba.ks
        np.testing.assert_allclose(ab.moment_diffs["energy"], -ba.moment_diffs["energy"])

    def test_deterministic_control_flagged(self):
        g = sp.make_grid(3)
        cfg = cfg_for(nz.AdditiveDiagonal(g, sigma0=0.0), horizon=1.0, record_every=5)
        a = sp.from_modes(g, {(1, 0): 1.0})
        b = sp.from_modes(g, {(0, 1): 2.0})
        rep = eg.two_start_comparison(cfg, a, b, n_replicas=2)
        assert rep.deterministic_control and rep.notes

    def test_refuses_few_samples(self):
        g = sp.make_grid(3)
        cfg = cfg_for(nz.AdditiveDiagonal(g), horizon=1.0, record_every=25)
        with pytest.raises(StatisticsRefused):
            eg.two_start_comparison(cfg, np.zeros(g.n_modes), np.zeros(g.n_modes), n_replicas=4)


class TestActivation:
    def make(self, q=1.0, advection=True):
        g = sp.make_grid(4)
        return cfg_for(nz.AdditiveDegenerate(g, FOUR_MODE_Z0, q=q), dt=0.01, horizon=5.0,
                       advection=advection, record_every=10)

    def test_zero_amplitude(self):
        rep = eg.mode_activation(self.make(q=0.0), n_replicas=2)
        assert np.all(rep.variance <= 1e-12)

    def test_linear_control(self):
        rep = eg.mode_activation(self.make(advection=False), n_replicas=4, lam_max=4)
        assert rep.max_unforced() <= 1e-12
        assert np.all(rep.variance[rep.forced] > 0)

    def test_forced_first(self):
        rep = eg.mode_activation(self.make(q=5.0), n_replicas=4, lam_max=4)
        assert rep.first_variance[rep.forced].min() >= rep.first_variance[~rep.forced].max()
        assert rep.first_time == pytest.approx(0.1)
        rows = rep.table()
        assert len(rows) == int(np.sum(sp.make_grid(4).lam <= 4))
        assert sum(r[3] for r in rows) == 4

    def test_requires_degenerate_noise_from_rest(self, rng):
        g = sp.make_grid(3)
        with pytest.raises(UnsupportedModelError):
            eg.mode_activation(cfg_for(nz.AdditiveDiagonal(g)))
        cfg = cfg_for(nz.AdditiveDegenerate(g, FOUR_MODE_Z0), initial=sp.random_field(g, rng))
        with pytest.raises(ConfigurationError):
            eg.mode_activation(cfg)


class TestMixing:
    def test_trivial_events(self, rng):
        g = sp.make_grid(3)
        cfg = cfg_for(nz.AdditiveDiagonal(g), horizon=1.0)
        rep = eg.strong_mixing_probe(cfg, [eg.EventSet.whole(), eg.EventSet.empty()],
                                     [0.1, 0.5, 1.0], sp.random_field(g, rng),
                                     sp.VorticityField.zeros(g), n_replicas=8)
        for tr in (rep.trace_a, rep.trace_b):
            np.testing.assert_array_equal(tr["whole"], 1.0)
            np.testing.assert_array_equal(tr["empty"], 0.0)
        assert rep.sup_final_gap == 0.0

    def test_threshold_event_label(self):
        e = eg.EventSet.below("energy", 2.0)
        assert e.label == "-inf<=energy<=2"
        np.testing.assert_array_equal(e.indicator(np.array([1.0, 3.0])), [True, False])

    @pytest.mark.parametrize("t_grid", [[0.015], [0.5, 0.2]])
    def test_bad_grid(self, t_grid):
        g = sp.make_grid(3)
        with pytest.raises(DomainError):
            eg.strong_mixing_probe(cfg_for(nz.AdditiveDiagonal(g)), [eg.EventSet.whole()], t_grid,
                                   np.zeros(g.n_modes), np.zeros(g.n_modes), n_replicas=2)
