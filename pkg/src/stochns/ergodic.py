"""Time averages, two-start comparisons and noise-propagation diagnostics.

Scalar observables are evaluated either on a :class:`TrajectoryRecord` or
directly on vorticity coefficient arrays.  Running averages integrate the
piecewise-linear interpolant of the recorded series, so a window may end
between two record times.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import spectral as sp
from .errors import ConfigurationError, DomainError, StatisticsRefused, UnsupportedModelError
from .noise import AdditiveDegenerate, WienerEnsemble
from .sde import _check_finite, run

KINDS = ("energy", "enstrophy", "palinstrophy", "mode_real", "mode_modulus", "constant")
BURN_IN_FRACTION = 0.25
MIN_SAMPLES = 20


@dataclass(frozen=True)
class Observable:
    """Named scalar functional of the state.

    ``energy`` is ``||u||_H^2``, ``enstrophy`` is ``||psi||^2 = ||u||_V^2`` and
    ``palinstrophy`` is ``||psi||_V^2``.  The single-mode kinds read the
    vorticity coefficient at ``mode``; ``constant`` returns ``value``.
    """

    kind: str
    mode: tuple | None = None
    value: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown observable kind {self.kind!r}; expected one of {KINDS}")
        if self.kind.startswith("mode_"):
            if self.mode is None:
                raise ConfigurationError(f"observable {self.kind!r} needs a mode")
            object.__setattr__(self, "mode", tuple(int(c) for c in self.mode))
        if not self.name:
            label = self.kind if self.mode is None else f"{self.kind}({self.mode[0]},{self.mode[1]})"
            object.__setattr__(self, "name", label)

    def of_coeffs(self, grid, psi):
        """Value on coefficient arrays ``(..., n)``; leading axes are kept."""
        psi = np.asarray(psi)
        if self.kind == "constant":
            return np.full(psi.shape[:-1], float(self.value))
        if self.kind.startswith("mode_"):
            c = psi[..., grid.index(self.mode)]
            return c.real if self.kind == "mode_real" else np.abs(c)
        a2 = psi.real ** 2 + psi.imag ** 2
        w = {"energy": 1.0 / grid.lam, "enstrophy": 1.0, "palinstrophy": grid.lam}[self.kind]
        return np.sum(a2 * w, axis=-1)

    def __call__(self, x):
        if isinstance(x, sp.VorticityField):
            return float(self.of_coeffs(x.grid, x.coeffs))
        if isinstance(x, sp.VelocityField):
            return float(self.of_coeffs(x.grid, sp.curl(x).coeffs))
        return self.of_record(x)

    def of_record(self, rec):
        """Series ``(..., T)`` from a trajectory record."""
        if self.kind == "constant":
            return np.full(rec.energy.shape, float(self.value))
        if self.kind.startswith("mode_"):
            if self.mode not in rec.mode_list:
                raise DomainError(f"mode {self.mode} was not recorded; add it to record_modes")
            c = rec.mode_series(self.mode)
            return c.real if self.kind == "mode_real" else np.abs(c)
        return np.asarray(rec.series(self.kind))


def observable(spec):
    """Build an :class:`Observable` from a name such as ``"energy"`` or ``"mode_real(1,0)"``."""
    if isinstance(spec, Observable):
        return spec
    s = str(spec).replace(" ", "")
    if "(" in s:
        kind, rest = s.split("(", 1)
        k = tuple(int(p) for p in rest.rstrip(")").split(","))
        return Observable(kind, mode=k)
    return Observable(s)


# ---------------------------------------------------------------------------
# running averages


def _integral_to(times, values, t):
    """``int_{times[0]}^t`` of the linear interpolant, along the last axis."""
    times = np.asarray(times)
    cum = integrate.cumulative_trapezoid(values, times, axis=-1, initial=0.0)
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(max(j, 0), len(times) - 1)
    if j == len(times) - 1:
        return cum[..., j]
    t0, t1 = times[j], times[j + 1]
    w = (t - t0) / (t1 - t0)
    v_end = (1.0 - w) * values[..., j] + w * values[..., j + 1]
    return cum[..., j] + 0.5 * (t - t0) * (values[..., j] + v_end)


def window_average(times, values, start, stop):
    """Mean of the interpolated series over ``[start, stop]``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not stop > start:
        raise DomainError(f"empty window [{start}, {stop}]")
    if start < times[0] - 1e-12 or stop > times[-1] + 1e-9 * max(1.0, abs(times[-1])):
        raise DomainError(f"window [{start}, {stop}] leaves the record [{times[0]}, {times[-1]}]")
    stop = min(stop, times[-1])
    return (_integral_to(times, values, stop) - _integral_to(times, values, start)) / (stop - start)


@dataclass
class TimeAverage:
    name: str
    windows: np.ndarray
    averages: np.ndarray      # (..., len(windows))
    gaps: np.ndarray          # successive differences of the averages
    cauchy: np.ndarray | float

    def as_rows(self):
        return [(float(t), float(a)) for t, a in zip(self.windows, np.atleast_1d(self.averages))]


def time_average(traj, obs, windows):
    """Running averages ``(1/t_n) int_0^{t_n} phi(u(r)) dr`` along one path.

    The Cauchy diagnostic is the largest jump between successive averages
    among the last three windows (NaN with a single window).
    """
    obs = observable(obs)
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 1 or windows.size == 0:
        raise DomainError("need at least one window")
    if np.any(np.diff(windows) <= 0):
        raise DomainError("windows must increase")
    t0 = float(traj.times[0])
    values = obs.of_record(traj)
    avgs = np.stack([window_average(traj.times, values, t0, t0 + w) for w in windows], axis=-1)
    gaps = np.abs(np.diff(avgs, axis=-1))
    if gaps.shape[-1] == 0:
        cauchy = np.full(avgs.shape[:-1], np.nan) if avgs.ndim > 1 else math.nan
    else:
        cauchy = np.max(gaps[..., -3:], axis=-1)
        cauchy = cauchy if np.ndim(cauchy) else float(cauchy)
    return TimeAverage(obs.name, windows, avgs, gaps, cauchy)


def moments(x):
    """Mean, variance, skewness and excess kurtosis of a sample."""
    x = np.ravel(np.asarray(x, dtype=float))
    if x.size < 2:
        raise StatisticsRefused("moments need at least two samples")
    var = float(np.var(x))
    if var == 0.0:
        return np.array([float(np.mean(x)), 0.0, 0.0, 0.0])
    return np.array([float(np.mean(x)), var, float(stats.skew(x)), float(stats.kurtosis(x))])


@dataclass
class ErgodicReport:
    windows: np.ndarray
    averages: dict
    cauchy_gaps: dict
    cauchy: dict
    histograms: dict          # name -> (counts, edges)
    moments: dict             # name -> (mean, var, skew, excess kurtosis)
    mode_variance: dict       # (k1, k2) -> variance of the coefficient after burn-in
    burn_in: float


def _burn_in(horizon, burn_in):
    return BURN_IN_FRACTION * horizon if burn_in is None else float(burn_in)


def ergodic_report(traj, observables, windows, burn_in=None, bins=32):
    """Time averages plus post-burn-in statistics of a single trajectory."""
    obs = [observable(o) for o in observables]
    if traj.ensemble:
        raise DomainError("time averages are taken along a single path")
    times = np.asarray(traj.times)
    b = _burn_in(times[-1] - times[0], burn_in)
    keep = times >= times[0] + b
    if keep.sum() < 2:
        raise StatisticsRefused("fewer than two samples after burn-in")
    avgs, gaps, cauchy, hists, mom = {}, {}, {}, {}, {}
    for o in obs:
        ta = time_average(traj, o, windows)
        avgs[o.name] = ta.averages
        gaps[o.name] = ta.gaps
        cauchy[o.name] = ta.cauchy
        x = o.of_record(traj)[keep]
        hists[o.name] = np.histogram(x, bins=bins)
        mom[o.name] = moments(x)
    modes = {}
    for k in traj.mode_list:
        c = traj.mode_series(k)[keep]
        modes[k] = float(np.mean(np.abs(c - c.mean()) ** 2))
    return ErgodicReport(np.asarray(windows, dtype=float), avgs, gaps, cauchy, hists, mom, modes, b)


# ---------------------------------------------------------------------------
# ensembles observed on a step schedule


def start_key(x0):
    """Stream key derived from the bytes of an initial condition.

    Equal starts share their noise, distinct starts get unrelated streams,
    and the key of a start does not depend on which start it is paired with.
    """
    c = np.ascontiguousarray(np.asarray(getattr(x0, "coeffs", x0), dtype=complex))
    return int.from_bytes(hashlib.sha256(c.tobytes()).digest()[:8], "little")


def observe_ensemble(cfg, x0, n_replicas, steps, observables, stream_key):
    """Values of each observable at the given step indices, ``(replicas, len(steps))``."""
    grid = cfg.grid
    obs = [observable(o) for o in observables]
    steps = np.asarray(sorted(set(int(s) for s in steps)))
    if steps.size == 0 or steps[0] < 0:
        raise DomainError("observation steps must be non-negative")
    psi = np.broadcast_to(np.asarray(getattr(x0, "coeffs", x0), dtype=complex),
                          (n_replicas, grid.n_modes)).copy()
    streams = WienerEnsemble(cfg.seed, [(stream_key, r) for r in range(n_replicas)], cfg.dt,
                             cfg.noise.active_modes)
    it = cfg.integrator
    out = {o.name: np.empty((n_replicas, steps.size)) for o in obs}
    j = 0
    for i in range(int(steps[-1]) + 1):
        if i:
            psi = it.step(psi, streams.draw())
            _check_finite(psi, i)
        if i == steps[j]:
            for o in obs:
                out[o.name][:, j] = o.of_coeffs(grid, psi)
            j += 1
    return steps, out


def _deterministic(cfg, starts):
    return all(not np.any(cfg.noise.gains(np.asarray(getattr(x, "coeffs", x))))
               for x in starts)


@dataclass
class TwoStartReport:
    names: tuple
    ks: dict                  # name -> KS distance
    moment_diffs: dict        # name -> (a - b) for mean, variance, skewness, excess kurtosis
    n_samples: int            # per start, pooled over replicas and times
    burn_in: float
    deterministic_control: bool
    notes: list = field(default_factory=list)

    @property
    def max_ks(self):
        return max(self.ks.values())


def two_start_comparison(cfg, x0_a, x0_b, obs=("energy",), burn_in=None, n_replicas=16):
    """Compare post-burn-in laws of the observables from two initial conditions.

    Each start runs its own ensemble; samples are pooled over replicas and
    record times after ``burn_in`` (default a quarter of the horizon).  With
    ``G = 0`` the runs are deterministic and distinct steady states need not
    agree; the report flags this control case.
    """
    obs = [observable(o) for o in (obs if not isinstance(obs, (str, Observable)) else [obs])]
    b = _burn_in(cfg.horizon, burn_in)
    first = int(math.ceil(b / cfg.dt - 1e-9))
    steps = np.arange(first, cfg.n_steps + 1)
    steps = steps[steps % cfg.record_every == 0]
    if steps.size * n_replicas < MIN_SAMPLES or steps.size < 2:
        raise StatisticsRefused(
            f"only {steps.size * n_replicas} post-burn-in samples per start (need {MIN_SAMPLES})")
    _, va = observe_ensemble(cfg, x0_a, n_replicas, steps, obs, start_key(x0_a))
    _, vb = observe_ensemble(cfg, x0_b, n_replicas, steps, obs, start_key(x0_b))
    ks, md = {}, {}
    for o in obs:
        a = va[o.name].ravel()
        c = vb[o.name].ravel()
        ks[o.name] = float(stats.ks_2samp(a, c).statistic)
        md[o.name] = moments(a) - moments(c)
    det = _deterministic(cfg, (x0_a, x0_b))
    notes = ["G = 0: deterministic control, agreement of the two starts is not expected"] if det else []
    return TwoStartReport(tuple(o.name for o in obs), ks, md, int(steps.size * n_replicas), b,
                          det, notes)


# ---------------------------------------------------------------------------
# hypoelliptic spread


@dataclass
class ActivationReport:
    """Per-mode variances of a degenerate-noise run started from rest.

    ``variance`` is taken over the stationary window (after burn-in, pooled
    over replicas); ``first_variance`` is the ensemble variance at the first
    record time.
    """

    modes: np.ndarray         # (n, 2)
    lam: np.ndarray
    forced: np.ndarray        # bool
    variance: np.ndarray
    first_variance: np.ndarray
    first_time: float
    burn_in: float
    horizon: float

    def min_unforced(self, lam_max=None):
        sel = ~self.forced
        if lam_max is not None:
            sel &= self.lam <= lam_max
        return float(self.variance[sel].min()) if sel.any() else math.nan

    def max_unforced(self, lam_max=None):
        sel = ~self.forced
        if lam_max is not None:
            sel &= self.lam <= lam_max
        return float(self.variance[sel].max()) if sel.any() else math.nan

    def table(self):
        """Rows ``(k1, k2, |k|^2, forced, variance, first_variance)``."""
        return [(int(k[0]), int(k[1]), int(l), bool(f), float(v), float(w))
                for k, l, f, v, w in zip(self.modes, self.lam, self.forced, self.variance,
                                         self.first_variance)]


def mode_activation(cfg, T=None, burn_in=None, n_replicas=8, lam_max=None):
    """Variance table of the modes with ``|k|^2 <= lam_max`` (all modes by default)."""
    if not isinstance(cfg.noise, AdditiveDegenerate):
        raise UnsupportedModelError("mode activation is defined for degenerate additive noise")
    if np.any(cfg.psi0) or np.any(cfg.f):
        raise ConfigurationError("mode activation starts from rest without forcing")
    grid = cfg.grid
    if T is not None:
        cfg = cfg.replace(horizon=float(T))
    sel = np.ones(grid.n_modes, bool) if lam_max is None else grid.lam <= lam_max
    idx = np.flatnonzero(sel)
    rcfg = cfg.replace(record_modes=tuple(map(tuple, grid.modes[idx])))
    rec = run(rcfg, n_replicas=n_replicas, stream_key=0)
    b = _burn_in(rcfg.horizon, burn_in)
    keep = rec.times >= b
    c = rec.modes[:, keep, :].reshape(-1, idx.size)
    var = np.mean(np.abs(c - c.mean(axis=0)) ** 2, axis=0)
    c1 = rec.modes[:, 1, :]
    first = np.mean(np.abs(c1 - c1.mean(axis=0)) ** 2, axis=0)
    forced = np.isin(idx, cfg.noise.directions)
    return ActivationReport(grid.modes[idx], grid.lam[idx], forced, var, first,
                            float(rec.times[1]), b, float(rcfg.horizon))


# ---------------------------------------------------------------------------
# strong mixing


@dataclass(frozen=True)
class EventSet:
    """``{x : lower <= phi(x) <= upper}``; ``whole`` and ``empty`` are the trivial sets."""

    obs: Observable | None = None
    lower: float = -math.inf
    upper: float = math.inf
    kind: str = "threshold"   # "threshold", "whole" or "empty"

    @classmethod
    def whole(cls):
        return cls(kind="whole")

    @classmethod
    def empty(cls):
        return cls(kind="empty")

    @classmethod
    def below(cls, obs, c):
        return cls(observable(obs), upper=float(c))

    @property
    def label(self):
        if self.kind != "threshold":
            return self.kind
        return f"{self.lower:g}<={self.obs.name}<={self.upper:g}"

    def indicator(self, values):
        if self.kind == "whole":
            return np.ones_like(values, dtype=bool)
        if self.kind == "empty":
            return np.zeros_like(values, dtype=bool)
        return (values >= self.lower) & (values <= self.upper)


@dataclass
class MixingReport:
    times: np.ndarray
    labels: tuple
    trace_a: dict
    trace_b: dict
    final_gap: dict

    @property
    def sup_final_gap(self):
        return max(self.final_gap.values())


def strong_mixing_probe(cfg, event_sets, t_grid, x0_a, x0_b, n_replicas=256):
    """Ensemble estimates of ``P(u(t; x) in Gamma)`` from two starts."""
    t_grid = np.asarray(t_grid, dtype=float)
    steps = np.rint(t_grid / cfg.dt).astype(int)
    if np.any(np.abs(steps * cfg.dt - t_grid) > 1e-9 * np.maximum(1.0, t_grid)):
        raise DomainError("probe times must be multiples of dt")
    if np.any(np.diff(steps) <= 0):
        raise DomainError("probe times must increase")
    events = list(event_sets)
    obs = {e.obs.name: e.obs for e in events if e.kind == "threshold"}
    if not obs:
        obs = {"energy": observable("energy")}
    _, va = observe_ensemble(cfg, x0_a, n_replicas, steps, obs.values(), start_key(x0_a))
    _, vb = observe_ensemble(cfg, x0_b, n_replicas, steps, obs.values(), start_key(x0_b))
    any_name = next(iter(obs))
    ta, tb, gap = {}, {}, {}
    for e in events:
        name = e.obs.name if e.kind == "threshold" else any_name
        pa = e.indicator(va[name]).mean(axis=0)
        pb = e.indicator(vb[name]).mean(axis=0)
        ta[e.label], tb[e.label] = pa, pb
        gap[e.label] = float(abs(pa[-1] - pb[-1]))
    return MixingReport(t_grid, tuple(e.label for e in events), ta, tb, gap)
