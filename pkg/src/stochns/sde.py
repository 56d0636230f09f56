"""Time stepping of the stochastic Navier-Stokes system in vorticity form.

The scheme is a stochastic exponential Euler method: diffusion is integrated
exactly through the factor ``exp(-nu lam dt)``, advection and forcing are
explicit, and the noise increment, frozen at the start of the step, is
weighted so that the linear part reproduces the exact Ornstein-Uhlenbeck
transition.  With ``B = 0`` and ``f = 0`` one step of :func:`step_sns` is
therefore identical to one step of :func:`step_stokes`.

Every kernel accepts leading replica axes, so ensembles advance as one array.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import ConfigurationError, DivergenceError, DomainError, StatisticsRefused, UnsupportedModelError
from .noise import NoiseModel, WienerEnsemble, WienerStream, apply_noise_coeffs
from .nonlin import AdvectionWorkspace

CFL_LIMIT = 0.5


class CFLWarning(RuntimeWarning):
    pass


@dataclass(eq=False)
class SimConfig:
    """Parameters of one simulation.

    ``record_every`` is the observation cadence in steps; ``record_modes``
    lists the wave vectors whose coefficients are kept in the record.
    ``advection=False`` switches off the nonlinearity (linear control runs).
    """

    grid: sp.SpectralGrid
    nu: float
    dt: float
    horizon: float
    noise: NoiseModel
    forcing: sp.VorticityField | None = None
    initial: sp.VorticityField | None = None
    seed: int = 0
    record_every: int = 1
    record_modes: tuple = ()
    advection: bool = True
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"viscosity must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        if self.dt > self.horizon:
            raise ConfigurationError("time step exceeds the horizon")
        if self.noise.grid.cutoff != self.grid.cutoff:
            raise ConfigurationError("noise model built for a different grid")
        for f in (self.forcing, self.initial):
            if f is not None and f.grid.cutoff != self.grid.cutoff:
                raise ConfigurationError("field built for a different grid")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        self.record_modes = tuple(tuple(int(c) for c in k) for k in self.record_modes)
        for k in self.record_modes:
            self.grid.index(k)

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def psi0(self):
        if self.initial is None:
            return np.zeros(self.grid.n_modes, dtype=complex)
        return np.array(self.initial.coeffs)

    @property
    def f(self):
        if self.forcing is None:
            return np.zeros(self.grid.n_modes, dtype=complex)
        return np.array(self.forcing.coeffs)

    @functools.cached_property
    def integrator(self):
        return Integrator(self)

    def replace(self, **changes):
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return SimConfig(**kw)


class Integrator:
    """Precomputed factors of the exponential Euler step for one config."""

    def __init__(self, cfg):
        g = cfg.grid
        self.cfg = cfg
        self.grid = g
        h = cfg.nu * g.lam * cfg.dt
        self.decay = np.exp(-h)
        # exact OU variance over one step, divided by dt
        self.noise_weight = np.sqrt(-np.expm1(-2.0 * h) / (2.0 * h))
        self.f = cfg.f
        self.has_forcing = bool(np.any(self.f))
        self.ws = AdvectionWorkspace(g)

    def drift(self, psi):
        """Explicit part ``f - u . grad psi`` (without diffusion)."""
        if self.cfg.advection:
            out = self.ws.self_advect_coeffs(psi)
            np.negative(out, out=out)
            if self.has_forcing:
                out += self.f
            return out
        return np.broadcast_to(self.f, psi.shape).copy()

    def noise(self, psi, dW):
        return self.noise_weight * apply_noise_coeffs(self.cfg.noise, psi, dW)

    def step(self, psi, dW, extra=None):
        d = self.drift(psi)
        if extra is not None:
            d += extra
        d *= self.cfg.dt
        d += psi
        d *= self.decay
        # the noise touches only the driven modes and their mirrors
        model = self.cfg.noise
        dirs = model.directions
        x = model.gains(psi) * dW * self.noise_weight[dirs]
        g = self.grid
        d[..., dirs] += g.basis_coeff[dirs] * x
        d[..., g.neg[dirs]] += np.conj(g.basis_coeff[dirs]) * x
        return d

    def stokes_step(self, psi, dW):
        return self.decay * psi + self.noise(psi, dW)


def _check_finite(psi, step):
    # non-finite entries (and overflow) make the sum non-finite
    total = complex(np.sum(psi))
    if not (math.isfinite(total.real) and math.isfinite(total.imag)):
        raise DivergenceError(step)


def _coeffs(state):
    return state.coeffs if isinstance(state, sp.VorticityField) else np.asarray(state)


def step_sns(state, cfg, dW, step=0):
    """Advance the vorticity by one step of length ``cfg.dt``.

    ``state`` is a :class:`VorticityField` or a coefficient array with leading
    replica axes; the result has the same kind.
    """
    psi = cfg.integrator.step(_coeffs(state), np.asarray(dW))
    _check_finite(psi, step)
    return sp.VorticityField(cfg.grid, psi) if isinstance(state, sp.VorticityField) else psi


def step_stokes(state, cfg, dW, step=0):
    """Exact transition of the linear stochastic Stokes equation over ``cfg.dt``."""
    if not cfg.noise.additive:
        raise UnsupportedModelError("the linear Stokes solver needs additive noise")
    psi = cfg.integrator.stokes_step(_coeffs(state), np.asarray(dW))
    _check_finite(psi, step)
    return sp.VorticityField(cfg.grid, psi) if isinstance(state, sp.VorticityField) else psi


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryRecord:
    """Observable series at the record cadence.

    Arrays carry a leading replica axis when the record comes from an
    ensemble.  ``modes`` holds the complex vorticity coefficients of
    ``mode_list`` with shape ``(..., T, len(mode_list))``.
    """

    times: np.ndarray
    energy: np.ndarray
    enstrophy: np.ndarray
    palinstrophy: np.ndarray
    modes: np.ndarray
    mode_list: tuple
    grid: sp.SpectralGrid
    snapshots: list = field(default_factory=list)

    @property
    def ensemble(self):
        return self.energy.ndim == 2

    def series(self, name):
        return getattr(self, name)

    def mode_series(self, k):
        return self.modes[..., self.mode_list.index(tuple(k))]


def _streams(cfg, n_replicas, stream_key):
    d = cfg.noise.active_modes
    if n_replicas is None:
        return WienerStream(cfg.seed, (stream_key, 0), cfg.dt, d)
    return WienerEnsemble(cfg.seed, [(stream_key, r) for r in range(n_replicas)], cfg.dt, d)


class _Recorder:
    def __init__(self, cfg, n_records, batch):
        g = cfg.grid
        self.cfg = cfg
        self.idx = [g.index(k) for k in cfg.record_modes]
        shape = batch + (n_records,)
        self.times = np.empty(n_records)
        self.energy = np.empty(shape)
        self.enstrophy = np.empty(shape)
        self.palinstrophy = np.empty(shape)
        self.modes = np.empty(shape + (len(self.idx),), dtype=complex)
        self.snapshots = []
        self.j = 0
        self._ws = cfg.integrator.ws
        self._warned = False

    def __call__(self, t, psi):
        g = self.cfg.grid
        j = self.j
        a2 = np.abs(psi) ** 2
        self.times[j] = t
        self.energy[..., j] = np.sum(a2 / g.lam, axis=-1)
        self.enstrophy[..., j] = np.sum(a2, axis=-1)
        self.palinstrophy[..., j] = np.sum(a2 * g.lam, axis=-1)
        self.modes[..., j, :] = psi[..., self.idx]
        self.j += 1
        if self.cfg.advection and not self._warned and j % 16 == 0:
            cfl = self.cfg.dt * float(np.max(self._ws.max_speed(psi))) * g.cutoff
            if cfl > CFL_LIMIT:
                warnings.warn(f"advective CFL number {cfl:.3g} exceeds {CFL_LIMIT} at t={t:g}",
                              CFLWarning, stacklevel=3)
                self._warned = True

    def record(self):
        return TrajectoryRecord(self.times, self.energy, self.enstrophy, self.palinstrophy,
                                self.modes, self.cfg.record_modes, self.cfg.grid, self.snapshots)


def run(cfg, n_replicas=None, initial=None, stream_key=0, linear_stokes=False):
    """Integrate ``cfg`` and return its :class:`TrajectoryRecord`.

    ``n_replicas`` switches to an ensemble whose replica ``r`` draws from the
    stream ``(stream_key, r)``; ``initial`` overrides the configured start.
    """
    batch = () if n_replicas is None else (n_replicas,)
    psi = cfg.psi0 if initial is None else np.array(_coeffs(initial), dtype=complex)
    psi = np.broadcast_to(psi, batch + (cfg.grid.n_modes,)).copy()
    streams = _streams(cfg, n_replicas, stream_key)
    n = cfg.n_steps
    rec = _Recorder(cfg, n // cfg.record_every + 1, batch)
    rec(0.0, psi)
    stepper = step_stokes if linear_stokes else step_sns
    for i in range(1, n + 1):
        psi = stepper(psi, cfg, streams.draw(), step=i)
        if i % cfg.record_every == 0:
            rec(i * cfg.dt, psi)
        if cfg.snapshot_every and i % cfg.snapshot_every == 0 and n_replicas is None:
            rec.snapshots.append((i * cfg.dt, sp.VorticityField(cfg.grid, psi)))
    return rec.record()


def simulate(cfg):
    """Single trajectory of the nonlinear system, deterministic in ``(cfg, seed)``."""
    return run(cfg)


def simulate_stokes(cfg):
    """Single trajectory of the linear stochastic Stokes equation."""
    return run(cfg, linear_stokes=True)


# ---------------------------------------------------------------------------
# energy balance


@dataclass
class BalanceReport:
    """Monte-Carlo Ito energy balance at the record times.

    ``residual`` is ``E||u(t)||^2 + 2 nu int E||u||_V^2 - ||u0||^2
    - 2 int E<f,u> - int E||G(u)||_HS^2``; ``inequality_*`` are the two sides of
    the mean energy estimate, present only when ``C1 = 0``.
    """

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    stderr: np.ndarray
    inequality_lhs: np.ndarray | None
    inequality_rhs: np.ndarray | None

    @property
    def zscore(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.stderr > 0, self.residual / self.stderr,
                            np.where(self.residual == 0, 0.0, np.inf))

    @property
    def inequality_holds(self):
        if self.inequality_lhs is None:
            return None
        return self.inequality_lhs <= self.inequality_rhs * (1 + 1e-12) + 1e-300


def energy_balance(cfg, n_replicas):
    """Check the Ito identity for ``||u||_H^2`` over an ensemble."""
    if n_replicas < 2:
        raise StatisticsRefused("energy balance needs at least two replicas")
    g = cfg.grid
    it = cfg.integrator
    streams = _streams(cfg, n_replicas, stream_key=0)
    psi = np.broadcast_to(cfg.psi0, (n_replicas, g.n_modes)).copy()
    f = cfg.f
    dt = cfg.dt
    model = cfg.noise

    def parts(p):
        a2 = np.abs(p) ** 2
        hs = np.sum(model.gains(p) ** 2, axis=-1)
        return np.sum(a2 / g.lam, axis=-1), np.sum(a2, axis=-1), sp.inner_h(g, f, p), hs

    e0, ens, fu, hs = parts(psi)
    e_init = e0.copy()
    diss = np.zeros(n_replicas)
    work = np.zeros(n_replicas)
    ito = np.zeros(n_replicas)
    times, lhs, rhs, res, se = [0.0], [e0.mean()], [e0.mean()], [0.0], [0.0]
    diss_mean = [0.0]
    for i in range(1, cfg.n_steps + 1):
        new = it.step(psi, streams.draw())
        _check_finite(new, i)
        e1, ens1, fu1, hs1 = parts(new)
        diss += 0.5 * dt * (ens + ens1)
        work += 0.5 * dt * (fu + fu1)
        ito += dt * hs
        psi, ens, fu, hs = new, ens1, fu1, hs1
        if i % cfg.record_every == 0:
            left = e1 + 2.0 * cfg.nu * diss
            right = e_init + 2.0 * work + ito
            r = left - right
            times.append(i * dt)
            lhs.append(left.mean())
            rhs.append(right.mean())
            res.append(r.mean())
            se.append(r.std(ddof=1) / math.sqrt(n_replicas))
            diss_mean.append(diss.mean())
    times = np.array(times)
    lhs = np.array(lhs)
    ineq_l = ineq_r = None
    if model.C1 == 0:
        energy_mean = lhs - 2.0 * cfg.nu * np.array(diss_mean)
        ineq_l = energy_mean + cfg.nu * np.array(diss_mean)
        f_dual = float(np.sum(np.abs(f) ** 2 / g.lam ** 2))
        ineq_r = e_init.mean() + times * (f_dual / cfg.nu + model.C2)
    return BalanceReport(times, lhs, np.array(rhs), np.array(res), np.array(se), ineq_l, ineq_r)


# ---------------------------------------------------------------------------
# viscosity thresholds


@dataclass(frozen=True)
class Thresholds:
    fp_threshold: float       # 3 C1 / (4 lambda1)
    uniq_threshold: float     # 11 C1 / (4 lambda1)
    C1: float
    lambda1: float

    @property
    def exponential(self):
        """Bounded noise: synchronization is exponential for every viscosity."""
        return self.C1 == 0

    def p_sup(self, nu):
        """Upper end of the admissible decay exponents, ``nu lam1 / (2 C1) - 3/8``."""
        if self.C1 == 0:
            return math.inf
        return nu * self.lambda1 / (2.0 * self.C1) - 0.375


def viscosity_thresholds(C1, lambda1):
    if lambda1 <= 0:
        raise DomainError("lambda1 must be positive")
    if C1 < 0:
        raise ConfigurationError("C1 must be non-negative")
    return Thresholds(3.0 * C1 / (4.0 * lambda1), 11.0 * C1 / (4.0 * lambda1), float(C1),
                      float(lambda1))
