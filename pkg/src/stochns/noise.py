"""Wiener increments and noise operators ``G(u)``.

All three model families are diagonal in the velocity eigenbasis ``e_n`` of
:mod:`stochns.spectral`: the j-th driven direction ``f_j`` of the noise space
is sent to ``gain_j(u) * e_{m_j}``.  A model is therefore described by the mode
indices ``directions`` (the ``m_j``) and a gain function.  Norms are taken in
H, the velocity L^2 space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import spectral as sp
from .errors import ConfigurationError, DomainError, UnsupportedModelError


class NoiseModel:
    """Base class: ``G(u) f_j = gains(u)[j] e_{directions[j]}``."""

    grid: sp.SpectralGrid
    additive = True

    @property
    def active_modes(self):
        return len(self.directions)

    def gains(self, psi):
        """Per-direction gains for vorticity coefficients ``psi`` of shape ``(..., n)``."""
        raise NotImplementedError

    # constants of the linear-growth and Lipschitz bounds
    C1 = 0.0
    C2 = 0.0
    lipschitz = 0.0

    def inverse_span(self):
        """Largest M with ``Rg G(u) >= P_M H`` for all u (0 when none)."""
        return 0


@dataclass(frozen=True, eq=False)
class AdditiveDiagonal(NoiseModel):
    """``G f_n = sigma0 * lam_n^(-a) e_n`` on every grid mode."""

    grid: sp.SpectralGrid
    a: float = 0.45
    sigma0: float = 1.0
    _gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ConfigurationError("sigma0 must be non-negative")
        g = self.sigma0 * self.grid.lam ** (-self.a)
        g.setflags(write=False)
        object.__setattr__(self, "_gain", g)

    @property
    def directions(self):
        return np.arange(self.grid.n_modes)

    def gains(self, psi):
        return np.broadcast_to(self._gain, np.shape(psi)[:-1] + self._gain.shape)

    @property
    def C2(self):
        return float(np.sum(self._gain ** 2))

    def inverse_span(self):
        return self.grid.n_modes if self.sigma0 > 0 else 0


@dataclass(frozen=True, eq=False)
class AdditiveDegenerate(NoiseModel):
    """``G h_k = q_k h_k`` for ``k`` in ``z0`` and zero elsewhere.

    ``h_k`` is the L^2-normalised sine/cosine vorticity mode, which equals
    ``e_k / |k|`` in velocity terms; the gain along ``e_k`` is ``q_k / |k|``.
    ``q`` is a scalar or one value per element of ``z0``.
    """

    grid: sp.SpectralGrid
    z0: tuple
    q: object = 1.0
    _gain: np.ndarray = field(init=False, repr=False)
    _dirs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        z0 = tuple(tuple(int(c) for c in k) for k in self.z0)
        if len(set(z0)) != len(z0) or not z0:
            raise ConfigurationError("z0 must be a non-empty set of distinct wave vectors")
        q = np.broadcast_to(np.asarray(self.q, dtype=float), (len(z0),))
        dirs = np.array([self.grid.index(k) for k in z0])
        gain = q / np.sqrt(self.grid.lam[dirs])
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "_dirs", dirs)
        object.__setattr__(self, "_gain", gain)

    @property
    def directions(self):
        return self._dirs

    def gains(self, psi):
        return np.broadcast_to(self._gain, np.shape(psi)[:-1] + self._gain.shape)

    @property
    def C2(self):
        return float(np.sum(self._gain ** 2))


@dataclass(frozen=True, eq=False)
class MultiplicativeLowMode(NoiseModel):
    """``G(u) f_n = sqrt(||u||_H^2 + 1) / (n + 1) e_n`` for ``n <= M``."""

    grid: sp.SpectralGrid
    M: int
    additive = False

    def __post_init__(self):
        if int(self.M) != self.M or not 1 <= self.M <= self.grid.n_modes:
            raise ConfigurationError(
                f"M must be an integer in [1, {self.grid.n_modes}], got {self.M!r}")

    @property
    def directions(self):
        return np.arange(self.M)

    @property
    def _weights(self):
        return 1.0 / np.arange(2, self.M + 2)

    def gains(self, psi):
        amp = np.sqrt(sp.energy(self.grid, psi) + 1.0)
        return amp[..., None] * self._weights

    @property
    def C1(self):
        return float(np.sum(self._weights ** 2))

    C2 = C1

    @property
    def lipschitz(self):
        # x -> sqrt(x^2 + 1) is 1-Lipschitz
        return math.sqrt(self.C1)

    def inverse_span(self):
        return self.M


# ---------------------------------------------------------------------------
# operator actions


def _state(u):
    return u.coeffs if isinstance(u, sp.VorticityField) else np.asarray(u)


def apply_noise_coeffs(model, psi, dW):
    """Vorticity increment ``G(psi) dW`` for arrays ``psi (..., n)``, ``dW (..., d)``."""
    g = model.grid
    d = model.directions
    x = model.gains(psi) * dW
    out = np.zeros(np.shape(x)[:-1] + (g.n_modes,), dtype=complex)
    # a real direction e_n has coefficients at k_n and at -k_n
    out[..., d] = g.basis_coeff[d] * x
    out[..., g.neg[d]] += np.conj(g.basis_coeff[d]) * x
    return out


def apply_noise(model, u, dW):
    """``G(u) dW`` as a vorticity field; ``dW`` has one entry per driven direction."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (model.active_modes,):
        raise DomainError(f"increment has shape {dW.shape}, model drives "
                          f"{model.active_modes} directions")
    return sp.VorticityField(model.grid, apply_noise_coeffs(model, _state(u), dW))


def apply_to_mode(model, u, k):
    """``G(u)`` applied to the noise direction attached to wave vector ``k``.

    Directions of the noise space that the model does not drive are sent to
    zero, so this is the zero field whenever ``k`` lies outside the model's
    support.
    """
    i = model.grid.index(k)
    hit = np.flatnonzero(model.directions == i)
    if hit.size == 0:
        return sp.VorticityField.zeros(model.grid)
    dW = np.zeros(model.active_modes)
    dW[hit[0]] = 1.0
    return apply_noise(model, u, dW)


def hs_norm_sq(model, u):
    """Squared Hilbert-Schmidt norm ``sum_j ||G(u) f_j||_H^2``."""
    return float(np.sum(model.gains(_state(u)) ** 2))


def lipschitz_check(model, samples):
    """Largest ``||G(u) - G(v)||_HS / ||u - v||_H`` over all pairs of samples."""
    samples = list(samples)
    if len(samples) < 2:
        raise DomainError("need at least two samples")
    grid = model.grid
    psi = np.stack([_state(s) for s in samples])
    g = model.gains(psi)
    best = 0.0
    for i in range(len(samples)):
        d_state = np.sqrt(sp.energy(grid, psi[i + 1:] - psi[i]))
        d_op = np.sqrt(np.sum((g[i + 1:] - g[i]) ** 2, axis=-1))
        ok = d_state > 0
        if ok.any():
            best = max(best, float(np.max(d_op[ok] / d_state[ok])))
    return best


def right_inverse(model, u, x):
    """``g(u) x``: noise-space vector with ``G(u) g(u) x = P_M x``."""
    M = model.inverse_span()
    if M == 0:
        raise UnsupportedModelError(f"{type(model).__name__} has no right inverse")
    psi = _state(u)
    coords = sp.to_coords(model.grid, _state(x))
    out = np.zeros(np.shape(coords)[:-1] + (model.active_modes,))
    g = model.gains(psi)
    # directions are 0..active-1 for every invertible model
    out[..., :M] = coords[..., :M] / g[..., :M]
    return out


def inverse_norm(model, u):
    """Operator norm ``||g(u)||_{L(H, U)}``."""
    M = model.inverse_span()
    if M == 0:
        raise UnsupportedModelError(f"{type(model).__name__} has no right inverse")
    return float(np.max(1.0 / model.gains(_state(u))[..., :M]))


@dataclass(frozen=True)
class RightInverseReport:
    residual: float
    inverse_norm: float
    inverse_bound: float


def right_inverse_check(model, u, x):
    """Residual ``||G(u) g(u) x - P_M x||_H`` and the bound on ``||g(u)||``."""
    if not isinstance(model, MultiplicativeLowMode):
        raise UnsupportedModelError("right inverse check is defined for the low-mode model")
    psi = _state(u)
    h = right_inverse(model, u, x)
    back = apply_noise_coeffs(model, psi, h)
    target = sp.project_low_coeffs(model.grid, _state(x), model.M)
    res = float(np.sqrt(sp.energy(model.grid, back - target)))
    return RightInverseReport(residual=res, inverse_norm=inverse_norm(model, u),
                              inverse_bound=float(model.M + 1))


# ---------------------------------------------------------------------------
# degenerate forcing sets


def hermite_rows(vectors):
    """Row-reduce integer 2-vectors to echelon (Hermite) form by Euclid steps.

    Returns the nonzero rows ``[[a, b], [0, c]]`` (or fewer when rank < 2);
    they span the same lattice as the input.
    """
    rows = [[int(a), int(b)] for a, b in vectors]
    top = 0
    for col in range(2):
        while True:
            live = [i for i in range(top, len(rows)) if rows[i][col]]
            if not live:
                break
            piv = min(live, key=lambda i: abs(rows[i][col]))
            rows[top], rows[piv] = rows[piv], rows[top]
            p = rows[top][col]
            done = True
            for i in range(top + 1, len(rows)):
                q = rows[i][col] // p
                rows[i] = [x - q * y for x, y in zip(rows[i], rows[top])]
                done &= rows[i][col] == 0
            if done:
                top += 1
                break
    return [r for r in rows[:top] if r != [0, 0]]


def lattice_invariant_factors(vectors):
    """Smith invariant factors ``(d1, d2)`` of the lattice spanned by 2-vectors.

    A zero factor means the span has rank below 2.
    """
    h = hermite_rows(vectors)
    if not h:
        return (0, 0)
    if len(h) == 1:
        return (math.gcd(*h[0]), 0)
    (a, b), (_, c) = h
    d1 = math.gcd(math.gcd(a, b), c)
    return (d1, abs(a * c) // d1)


@dataclass(frozen=True)
class Z0Report:
    symmetric: bool
    two_norms: bool
    generates: bool

    @property
    def all(self):
        return self.symmetric and self.two_norms and self.generates


def z0_conditions(z0):
    """Symmetry, two-norm and lattice-generation conditions on a forcing set."""
    pts = {tuple(int(c) for c in k) for k in z0}
    if not pts:
        raise DomainError("forcing set must be non-empty")
    symmetric = all((-a, -b) in pts for a, b in pts)
    two_norms = len({a * a + b * b for a, b in pts}) >= 2
    generates = lattice_invariant_factors(sorted(pts)) == (1, 1)
    return Z0Report(symmetric, two_norms, generates)


def determinantal_divisors(vectors):
    """gcd of entries and gcd of 2x2 minors (independent check of the factors)."""
    v = [(int(a), int(b)) for a, b in vectors]
    d1 = reduce(math.gcd, (abs(c) for p in v for c in p), 0)
    d2 = reduce(math.gcd, (abs(p[0] * q[1] - p[1] * q[0]) for i, p in enumerate(v)
                           for q in v[i + 1:]), 0)
    return d1, d2


# ---------------------------------------------------------------------------
# Wiener increments


class WienerStream:
    """Reproducible Gaussian increments with variance ``dt`` per direction.

    ``(seed, stream_id)`` determines the sequence; increments are drawn in
    fixed-size blocks so that any pattern of consumption yields the same
    values.
    """

    block = 512

    def __init__(self, seed, stream_id, dt, active_modes):
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        self.seed = int(seed)
        self.stream_id = stream_id
        self.dt = float(dt)
        self.active_modes = int(active_modes)
        key = stream_id if isinstance(stream_id, tuple) else (stream_id,)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(k) for k in key))
        self._rng = np.random.Generator(np.random.PCG64(ss))
        self._scale = math.sqrt(self.dt)
        self._buf = np.empty((0, self.active_modes))
        self._pos = 0

    def _refill(self):
        self._buf = self._rng.standard_normal((self.block, self.active_modes)) * self._scale
        self._pos = 0

    def draw(self):
        if self._pos >= len(self._buf):
            self._refill()
        row = self._buf[self._pos]
        self._pos += 1
        return row

    def take(self, n):
        out = np.empty((n, self.active_modes))
        i = 0
        while i < n:
            if self._pos >= len(self._buf):
                self._refill()
            m = min(n - i, len(self._buf) - self._pos)
            out[i:i + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            i += m
        return out


def sample_increments(stream, n_steps):
    """Next ``n_steps`` increments of ``stream`` as an ``(n_steps, d)`` array."""
    return stream.take(int(n_steps))


class WienerEnsemble:
    """Independent streams stacked along a leading replica axis.

    Row ``r`` of every draw equals the next draw of ``WienerStream(seed,
    stream_ids[r], ...)``.  The ensemble owns its streams and reads their
    generators directly in blocks sized to a fixed memory budget; normal
    draws do not depend on how the sequence is chunked.
    """

    budget = 1 << 21   # floats per stacked block

    def __init__(self, seed, stream_ids, dt, active_modes):
        self.streams = [WienerStream(seed, s, dt, active_modes) for s in stream_ids]
        d = max(int(active_modes), 1)
        self._rows = max(1, min(WienerStream.block, self.budget // (d * max(len(self.streams), 1))))
        self._block = None
        self._pos = 0

    def draw(self):
        if self._block is None or self._pos >= self._block.shape[1]:
            rows = self._rows
            self._block = np.empty((len(self.streams), rows, self.streams[0].active_modes))
            for j, s in enumerate(self.streams):
                s._rng.standard_normal(out=self._block[j])
            self._block *= self.streams[0]._scale
            self._pos = 0
        row = self._block[:, self._pos]
        self._pos += 1
        return row
