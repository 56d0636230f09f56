"""Nudged coupling of two solutions driven by one Wiener path.

The reference solution ``u`` follows the stochastic Navier-Stokes equation;
the nudged copy ``v`` feels the additional drift ``(nu lam_N / 2) P_N (u - v)``.
Both consume the same increment each step.  When the noise has a right
inverse ``g`` on the first N modes, the nudge equals ``G(v) h`` with the
shift ``h = (nu lam_N / 2) g(v) P_N (u - v)``, whose accumulated energy
``int ||h||^2 dt`` is tracked along the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import spectral as sp
from .errors import ConfigurationError, DomainError, StatisticsRefused
from .noise import WienerEnsemble, apply_noise_coeffs
from .sde import _check_finite

FIT_TRANSIENT = 0.2
FIT_FLOOR = 1e-20


def nudge_gain(grid, N, nu):
    """``nu lam_N / 2``; zero when nudging is off (``N = 0``)."""
    if int(N) != N or not 0 <= N <= grid.n_modes:
        raise DomainError(f"nudge index must lie in [0, {grid.n_modes}], got {N!r}")
    return 0.0 if N == 0 else 0.5 * nu * sp.ordered_eigenvalue(int(N), grid)


def nudge_coeffs(grid, u, v, N, nu):
    return nudge_gain(grid, N, nu) * sp.project_low_coeffs(grid, u - v, int(N))


def _nudge_into(out, grid, u, v, N, gain):
    if np.all(grid.neg[:N] < N):
        # closed under k -> -k: the projection is a truncation
        np.subtract(u[..., :N], v[..., :N], out=out[..., :N])
        out[..., :N] *= gain
    else:
        out[...] = gain * sp.project_low_coeffs(grid, u - v, N)


def nudge_term(u, v, N, nu):
    """``(nu lam_N / 2) P_N (u - v)`` as a vorticity field."""
    if u.grid.cutoff != v.grid.cutoff:
        raise DomainError("fields live on different grids")
    return sp.VorticityField(u.grid, nudge_coeffs(u.grid, u.coeffs, v.coeffs, N, nu))


def _shift_coeffs(grid, u, v, N, nu, model):
    if model.inverse_span() < N:
        raise ConfigurationError(
            f"shift needs a right inverse on the first {N} modes; "
            f"{type(model).__name__} covers {model.inverse_span()}")
    # coordinates are local in the mode index, so only the first N are formed
    gap = 2.0 * (np.conj(grid.basis_coeff[:N]) * (u[..., :N] - v[..., :N])).real / grid.lam[:N]
    h = np.zeros(np.shape(v)[:-1] + (model.active_modes,))
    if N:
        h[..., :N] = nudge_gain(grid, N, nu) * gap / model.gains(v)[..., :N]
    return h


def girsanov_shift(u, v, N, nu, model):
    """Noise-space drift ``h`` with ``G(v) h`` equal to the nudge term.

    Requires a model whose range contains ``P_N H`` (``M >= N`` for the
    low-mode multiplicative family).
    """
    return _shift_coeffs(u.grid, u.coeffs, v.coeffs, int(N), nu, model)


def shift_residual(u, v, N, nu, model):
    """``||G(v) h - nudge||_H`` for the shift of :func:`girsanov_shift`."""
    h = girsanov_shift(u, v, N, nu, model)
    back = apply_noise_coeffs(model, v.coeffs, h)
    return float(np.sqrt(sp.energy(u.grid, back - nudge_coeffs(u.grid, u.coeffs, v.coeffs, N, nu))))


@dataclass
class CoupledState:
    """A reference/nudged pair; ``u`` and ``v`` may carry leading replica axes."""

    u: np.ndarray
    v: np.ndarray
    N: int
    drift_integral: np.ndarray | float = 0.0
    t: float = 0.0

    @classmethod
    def start(cls, u0, v0, N):
        u = np.array(getattr(u0, "coeffs", u0), dtype=complex)
        v = np.array(getattr(v0, "coeffs", v0), dtype=complex)
        return cls(u, v, int(N), np.zeros(u.shape[:-1]) if u.ndim > 1 else 0.0)

    def gap_sq(self, grid):
        return sp.energy(grid, self.u - self.v)


def step_coupled(cs, cfg, dW, nudge="explicit", step=0, u_next=None):
    """Advance both members of the pair with the shared increment ``dW``.

    ``nudge="implicit"`` treats the nudge by a backward-Euler substep on the
    first N modes, which stays stable for gains far above ``1/dt``.
    ``u_next`` may carry the already computed update of ``cs.u`` (several
    nudged copies following one reference).
    """
    it = cfg.integrator
    grid = cfg.grid
    dt = cfg.dt
    N = cs.N
    gain = nudge_gain(grid, N, cfg.nu)
    track = N > 0 and cfg.noise.inverse_span() >= N
    if track:
        h = _shift_coeffs(grid, cs.u, cs.v, N, cfg.nu, cfg.noise)
        drift = cs.drift_integral + np.sum(h ** 2, axis=-1) * dt
    else:
        drift = cs.drift_integral
    u = it.step(cs.u, dW) if u_next is None else u_next
    if nudge == "explicit":
        v = it.step(cs.v, dW, extra=nudge_coeffs(grid, cs.u, cs.v, N, cfg.nu) if N else None)
    elif nudge == "implicit":
        v = it.step(cs.v, dW)
        if N:
            xv = sp.to_coords(grid, v)
            xu = sp.to_coords(grid, u)
            a = gain * dt
            xv[..., :N] = (xv[..., :N] + a * xu[..., :N]) / (1.0 + a)
            v = sp.from_coords(grid, xv)
    else:
        raise ConfigurationError(f"unknown nudge scheme {nudge!r}")
    if u_next is None:
        _check_finite(u, step)
    _check_finite(v, step)
    return CoupledState(u, v, N, drift, cs.t + dt)


# ---------------------------------------------------------------------------
# synchronization experiment


@dataclass
class RateFit:
    kind: str            # "exponential" (log gap vs t) or "power" (log gap vs log t)
    rate: float          # delta-hat or p-hat
    r2: float
    window: tuple
    n_points: int


@dataclass
class FPReport:
    times: np.ndarray
    mean_sq_gap: np.ndarray
    stderr: np.ndarray
    integer_times: np.ndarray
    gap_at_integers: np.ndarray       # (replicas, n)
    event_fractions: np.ndarray       # P(gap(n) <= 1/n^2)
    tail_fractions: np.ndarray        # P(gap(n) <= 1/n^2 for all n >= m), m = 1..
    m_star: int | None
    m_star_ci: tuple | None
    fit: RateFit | None
    p_admissible: tuple
    drift_mean: float
    drift_max: float
    N: int
    n_replicas: int
    extras: dict = field(default_factory=dict)

    def gap_at(self, t):
        return float(np.interp(t, self.times, self.mean_sq_gap))


def fit_rate(times, gap, exponential, transient=FIT_TRANSIENT, floor=FIT_FLOOR):
    """Least-squares decay fit after the transient and above the round-off floor."""
    times = np.asarray(times)
    gap = np.asarray(gap)
    t_end = times[-1]
    cut = floor * max(gap[0], np.finfo(float).tiny)
    ok = (times >= transient * t_end) & (times > 0) & (gap > cut)
    if ok.sum() < 3:
        return None
    t, y = times[ok], np.log(gap[ok])
    x = t if exponential else np.log(t)
    res = stats.linregress(x, y)
    return RateFit("exponential" if exponential else "power", float(-res.slope),
                   float(res.rvalue ** 2), (float(t[0]), float(t[-1])), int(ok.sum()))


def _summarize(cfg, N, times, means, errs, at_int, drift, n_replicas):
    at_int = np.stack(at_int, axis=1)
    n = np.arange(1, at_int.shape[1] + 1)
    good = at_int <= 1.0 / n ** 2
    tail_good = np.flip(np.logical_and.accumulate(np.flip(good, axis=1), axis=1), axis=1)
    tail_fractions = tail_good.mean(axis=0)
    m_star = ci = None
    above = np.flatnonzero(tail_fractions > 0.5)
    if above.size:
        j = int(above[0])
        m_star = j + 1
        k = int(tail_good[:, j].sum())
        iv = stats.binomtest(k, n_replicas).proportion_ci(confidence_level=0.95, method="wilson")
        ci = (float(iv.low), float(iv.high))
    C1 = cfg.noise.C1
    p_sup = math.inf if C1 == 0 else cfg.nu * cfg.grid.lam[0] / (2.0 * C1) - 0.375
    means = np.array(means)
    drift = np.asarray(drift, dtype=float)
    return FPReport(
        times=np.array(times),
        mean_sq_gap=means,
        stderr=np.array(errs),
        integer_times=n,
        gap_at_integers=at_int,
        event_fractions=good.mean(axis=0),
        tail_fractions=tail_fractions,
        m_star=m_star,
        m_star_ci=ci,
        fit=fit_rate(times, means, exponential=(C1 == 0)),
        p_admissible=(0.0, p_sup),
        drift_mean=float(drift.mean()),
        drift_max=float(drift.max()),
        N=int(N),
        n_replicas=n_replicas,
    )


def fp_experiment(cfg, N, n_replicas, integer_horizon, v0, nudge="explicit",
                  record_every=None, stream_key=0):
    """Monte-Carlo mean-square gap between ``u`` (from ``cfg.initial``) and nudged ``v``.

    ``N`` may be a sequence of nudge indices; the arms then share one reference
    trajectory ``u`` per replica (and hence its noise path) and a list of
    reports is returned in the same order.
    """
    many = np.ndim(N) > 0
    arms = [int(x) for x in np.atleast_1d(N)]
    if nudge not in ("explicit", "implicit"):
        raise ConfigurationError(f"unknown nudge scheme {nudge!r}")
    if n_replicas < 8:
        raise StatisticsRefused(f"need at least 8 replicas, got {n_replicas}")
    grid = cfg.grid
    dt = cfg.dt
    per_unit = round(1.0 / dt)
    if abs(per_unit * dt - 1.0) > 1e-9:
        raise ConfigurationError("dt must divide 1 so that integer times are grid points")
    for x in arms:
        nudge_gain(grid, x, cfg.nu)
    n_steps = int(integer_horizon) * per_unit
    every = record_every or cfg.record_every
    streams = WienerEnsemble(cfg.seed, [(stream_key, r) for r in range(n_replicas)], dt,
                             cfg.noise.active_modes)
    shape = (n_replicas, grid.n_modes)
    u0 = np.broadcast_to(cfg.psi0, shape)
    v0 = np.broadcast_to(np.asarray(getattr(v0, "coeffs", v0)), shape)
    # reference and nudged copies advance as one stacked array (arm axis first)
    X = np.stack([u0] + [v0] * len(arms)).astype(complex)
    gains = [nudge_gain(grid, x, cfg.nu) for x in arms]
    tracked = [x > 0 and cfg.noise.inverse_span() >= x for x in arms]
    drift = [np.zeros(n_replicas) for _ in arms]
    it = cfg.integrator
    times = [0.0]
    means = [[] for _ in arms]
    errs = [[] for _ in arms]
    at_int = [[] for _ in arms]
    sqrt_r = math.sqrt(n_replicas)

    def record(i):
        gaps = sp.energy(grid, X[0] - X[1:])
        for j, gap in enumerate(gaps):
            if i % every == 0:
                means[j].append(gap.mean())
                errs[j].append(gap.std(ddof=1) / sqrt_r)
            if i and i % per_unit == 0:
                at_int[j].append(gap)

    record(0)
    extra = np.zeros_like(X) if nudge == "explicit" and any(arms) else None
    for i in range(1, n_steps + 1):
        dW = streams.draw()
        for j, x in enumerate(arms):
            if tracked[j]:
                h = _shift_coeffs(grid, X[0], X[j + 1], x, cfg.nu, cfg.noise)
                drift[j] += np.sum(h ** 2, axis=-1) * dt
            if x and extra is not None:
                _nudge_into(extra[j + 1], grid, X[0], X[j + 1], x, gains[j])
        X = it.step(X, dW, extra=extra)
        if nudge == "implicit":
            xs = sp.to_coords(grid, X)
            for j, x in enumerate(arms):
                a = gains[j] * dt
                xs[j + 1, :, :x] = (xs[j + 1, :, :x] + a * xs[0, :, :x]) / (1.0 + a)
            X = sp.from_coords(grid, xs)
        _check_finite(X, i)
        if i % every == 0 or i % per_unit == 0:
            record(i)
        if i % every == 0:
            times.append(i * dt)
    reports = [_summarize(cfg, x, times, means[j], errs[j], at_int[j],
                          drift[j], n_replicas)
               for j, x in enumerate(arms)]
    return reports if many else reports[0]
