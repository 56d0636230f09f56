"""Advection term of the vorticity equation and checks of its algebra.

Products are formed on an ``L x L`` physical grid (``L >= 2K + 1``) with inputs
restricted to the 2/3-rule box ``max(|k1|, |k2|) <= floor(2K/3)``; the result is projected
back onto the same box.  For that box the transform product has no aliasing,
so the Galerkin triad sums are reproduced exactly and the energy and enstrophy
cancellations hold to round-off.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import spectral as sp
from .errors import DomainError

TWO_PI = 2.0 * np.pi
CHUNK = 32


class AdvectionWorkspace:
    """Transform plans and scratch buffers for one grid.

    Owned by a single trajectory or ensemble at a time; not thread safe.
    """

    def __init__(self, grid):
        self.grid = grid
        L = scipy.fft.next_fast_len(grid.n_phys, real=True)
        self.L = L
        m = grid.modes
        self._half = np.flatnonzero(m[:, 1] >= 0)
        self._rows = m[self._half, 0] % L
        self._cols = m[self._half, 1]
        self._to_phys_scale = L * L / TWO_PI
        self._from_phys_scale = TWO_PI / (L * L)
        self._lower = np.flatnonzero(m[:, 1] < 0)
        self._lower_src = grid.neg[self._lower]
        self._mask = grid.dealias_mask.astype(float)
        self._buffers = {}
        # Products of fields in the 2/3 box only need 3 kd + 1 points per
        # direction: aliased images of |k| <= 2 kd land outside the box.
        kd = grid.dealias_cutoff
        Ld = scipy.fft.next_fast_len(3 * kd + 1, real=True)
        self.L_advect = Ld
        keep = grid.dealias_mask
        self._dh = np.flatnonzero(keep & (m[:, 1] >= 0))
        self._dl = np.flatnonzero(keep & (m[:, 1] < 0))
        self._dl_src = np.searchsorted(self._dh, grid.neg[self._dl])
        kh = m[self._dh].astype(float)
        lam = grid.lam[self._dh]
        up = Ld * Ld / TWO_PI
        # multipliers taking psi to u1, u2, d1 psi, d2 psi on the half box
        self._mult = up * np.stack([-1j * kh[:, 1] / lam, 1j * kh[:, 0] / lam,
                                    1j * kh[:, 0], 1j * kh[:, 1]])
        self._drows = m[self._dh, 0] % Ld
        self._dcols = m[self._dh, 1]
        self._flat = self._drows * (Ld // 2 + 1) + self._dcols
        self._down = TWO_PI / (Ld * Ld)
        self._basdevant = self._down * np.stack([kh[:, 0] * kh[:, 1], kh[:, 0] ** 2 - kh[:, 1] ** 2])
        self._abuffers = {}

    def _buffer(self, batch):
        buf = self._buffers.get(batch)
        if buf is None:
            buf = np.zeros(batch + (self.L, self.L // 2 + 1), dtype=complex)
            self._buffers[batch] = buf
        return buf

    def to_phys(self, c):
        """Real grid values ``(..., L, L)`` of coefficient arrays ``(..., n)``.

        ``c`` may also be a list of equally shaped arrays; they are transformed
        together and stacked on a new axis before the grid axes.
        """
        if isinstance(c, (list, tuple)):
            buf = self._buffer(c[0].shape[:-1] + (len(c),))
            for j, cj in enumerate(c):
                buf[..., j, self._rows, self._cols] = cj[..., self._half]
        else:
            buf = self._buffer(c.shape[:-1])
            buf[..., self._rows, self._cols] = c[..., self._half]
        buf *= self._to_phys_scale
        return scipy.fft.irfft2(buf, s=(self.L, self.L))

    def from_phys(self, f):
        """Coefficients ``(..., n)`` of real grid values ``(..., L, L)``."""
        F = scipy.fft.rfft2(f)
        half = F[..., self._rows, self._cols] * self._from_phys_scale
        out = np.empty(f.shape[:-2] + (self.grid.n_modes,), dtype=complex)
        out[..., self._half] = half
        out[..., self._lower] = np.conj(out[..., self._lower_src])
        return out

    def advect_coeffs(self, a, b):
        """``P[u(a) . grad b]`` on coefficient arrays, ``a`` and ``b`` shaped ``(..., n)``."""
        if a is b:
            return self._chunked(self._self_advect, a)
        a, b = np.broadcast_arrays(a, b)
        return self._chunked(self._advect, a, b)

    def self_advect_coeffs(self, a):
        """``P[u(a) . grad a]``; same values as ``advect_coeffs(a, a)``."""
        return self._chunked(self._self_advect, a)

    def _chunked(self, kernel, *arrays):
        # large batches are cut into cache-sized blocks
        shape = arrays[0].shape
        count = int(np.prod(shape[:-1], dtype=int))
        if count <= CHUNK:
            return kernel(*arrays)
        flat = [x.reshape(count, shape[-1]) for x in arrays]
        out = np.empty((count, shape[-1]), dtype=complex)
        for i in range(0, count, CHUNK):
            out[i:i + CHUNK] = kernel(*(x[i:i + CHUNK] for x in flat))
        return out.reshape(shape)

    def _advect(self, a, b):
        batch = np.broadcast_shapes(np.shape(a)[:-1], np.shape(b)[:-1])
        Ld = self.L_advect
        nh = Ld // 2 + 1
        buf = self._abuffers.get(batch)
        if buf is None:
            buf = np.zeros(batch + (4, Ld * nh), dtype=complex)
            self._abuffers[batch] = buf
        buf[..., :2, self._flat] = a[..., None, self._dh] * self._mult[:2]
        buf[..., 2:, self._flat] = b[..., None, self._dh] * self._mult[2:]
        p = scipy.fft.irfft2(buf.reshape(batch + (4, Ld, nh)), s=(Ld, Ld))
        prod = p[..., 0, :, :] * p[..., 2, :, :]
        prod += p[..., 1, :, :] * p[..., 3, :, :]
        half = scipy.fft.rfft2(prod).reshape(batch + (Ld * nh,))[..., self._flat] * self._down
        out = np.zeros(batch + (self.grid.n_modes,), dtype=complex)
        out[..., self._dh] = half
        out[..., self._dl] = np.conj(half[..., self._dl_src])
        return out

    def _self_advect(self, a):
        """``P[u(a) . grad a]`` from the two velocity components only.

        For divergence-free ``u`` with ``psi = d2 u1 - d1 u2`` one has
        ``u . grad psi = d1 d2 (u1^2 - u2^2) + (d2^2 - d1^2)(u1 u2)``, so two
        inverse and two forward transforms suffice.
        """
        batch = np.shape(a)[:-1]
        Ld = self.L_advect
        nh = Ld // 2 + 1
        key = batch + ("self",)
        buf = self._abuffers.get(key)
        if buf is None:
            buf = np.zeros(batch + (2, Ld * nh), dtype=complex)
            self._abuffers[key] = buf
        buf[..., self._flat] = a[..., None, self._dh] * self._mult[:2]
        p = scipy.fft.irfft2(buf.reshape(batch + (2, Ld, nh)), s=(Ld, Ld))
        u1 = p[..., 0, :, :]
        u2 = p[..., 1, :, :]
        q = np.stack([(u2 - u1) * (u2 + u1), u1 * u2], axis=-3)
        hat = scipy.fft.rfft2(q).reshape(batch + (2, Ld * nh))[..., self._flat]
        half = self._basdevant[0] * hat[..., 0, :] + self._basdevant[1] * hat[..., 1, :]
        out = np.zeros(batch + (self.grid.n_modes,), dtype=complex)
        out[..., self._dh] = half
        out[..., self._dl] = np.conj(half[..., self._dl_src])
        return out

    def velocity_advection_coeffs(self, u, v):
        """``P[(u . grad) v]`` componentwise for velocity arrays ``(..., n, 2)``."""
        g = self.grid
        mk = self._mask[:, None]
        u = u * mk
        v = v * mk
        ik1 = 1j * g.modes[:, 0]
        ik2 = 1j * g.modes[:, 1]
        p = self.to_phys([u[..., 0], u[..., 1],
                          ik1 * v[..., 0], ik2 * v[..., 0],
                          ik1 * v[..., 1], ik2 * v[..., 1]])
        w1 = p[..., 0, :, :] * p[..., 2, :, :] + p[..., 1, :, :] * p[..., 3, :, :]
        w2 = p[..., 0, :, :] * p[..., 4, :, :] + p[..., 1, :, :] * p[..., 5, :, :]
        out = self.from_phys(np.stack([w1, w2], axis=-3))
        return np.moveaxis(out, -2, -1) * mk

    def max_speed(self, psi):
        """Largest pointwise speed of the velocity of ``psi`` (batched)."""
        u = sp.velocity_coeffs(self.grid, psi)
        phys = self.to_phys([u[..., 0], u[..., 1]])
        return np.sqrt(np.max(phys[..., 0, :, :] ** 2 + phys[..., 1, :, :] ** 2, axis=(-2, -1)))


def _check_grids(*fields):
    K = {f.grid.cutoff for f in fields}
    if len(K) != 1:
        raise DomainError(f"fields live on different grids: K in {sorted(K)}")


def advect(psi_a, psi_b, ws=None):
    """Dealiased Galerkin projection of ``biot_savart(psi_a) . grad psi_b``."""
    _check_grids(psi_a, psi_b)
    if ws is None:
        ws = AdvectionWorkspace(psi_a.grid)
    elif ws.grid.cutoff != psi_a.grid.cutoff:
        raise DomainError("workspace built for a different grid")
    return sp.VorticityField(psi_a.grid, ws.advect_coeffs(psi_a.coeffs, psi_b.coeffs))


@functools.lru_cache(maxsize=None)
def _triads(K):
    grid = sp.make_grid(K)
    keep = np.flatnonzero(grid.dealias_mask)
    p = np.repeat(keep, len(keep))
    q = np.tile(keep, len(keep))
    s = grid.modes[p] + grid.modes[q]
    kd = grid.dealias_cutoff
    ok = (np.abs(s).max(axis=1) <= kd) & np.any(s != 0, axis=1)
    p, q, s = p[ok], q[ok], s[ok]
    target = grid.lookup[s[:, 0] + K, s[:, 1] + K]
    return p, q, target


def advect_oracle(psi_a, psi_b):
    """Direct convolution sum of the dealiased advection term (no transforms).

    ``out(k) = sum_{p+q=k} u_a(p) . (i q) psi_b(q) / (2 pi)`` over ``p, q, k`` in
    the dealiasing box.  Only for ``K <= 8``.
    """
    _check_grids(psi_a, psi_b)
    grid = psi_a.grid
    if grid.cutoff > 8:
        raise DomainError(f"oracle refused for K={grid.cutoff} > 8")
    p, q, target = _triads(grid.cutoff)
    u = sp.velocity_coeffs(grid, psi_a.coeffs)
    qv = grid.modes[q]
    terms = (u[p, 0] * qv[:, 0] + u[p, 1] * qv[:, 1]) * 1j * psi_b.coeffs[q] / TWO_PI
    out = np.zeros(grid.n_modes, dtype=complex)
    np.add.at(out, target, terms)
    return sp.VorticityField(grid, out)


@dataclass(frozen=True)
class PairingReport:
    """Trilinear pairings that vanish identically, with their natural scales."""

    energy: float          # <B(u,v), v>
    antisymmetry: float    # <B(u,v), z> + <B(u,z), v>
    enstrophy: float       # <u . grad psi, psi>, psi = curl v
    energy_scale: float
    antisymmetry_scale: float
    enstrophy_scale: float

    @property
    def relative(self):
        def rel(x, s):
            return abs(x) / s if s > 0 else abs(x)
        return (rel(self.energy, self.energy_scale),
                rel(self.antisymmetry, self.antisymmetry_scale),
                rel(self.enstrophy, self.enstrophy_scale))


def _b_pair(ws, u, v, z):
    w = ws.velocity_advection_coeffs(u.coeffs, v.coeffs)
    return float(np.sum((np.conj(z.coeffs) * w).real))


def pairing_checks(u, v, z, ws=None):
    """Evaluate the three pairings of the advection term that must vanish.

    ``u``, ``v``, ``z`` are velocity fields; scales are products of V norms of
    their dealiased parts.
    """
    _check_grids(u, v, z)
    grid = u.grid
    ws = ws or AdvectionWorkspace(grid)
    mk = grid.dealias_mask[:, None]
    u, v, z = (sp.VelocityField(grid, f.coeffs * mk) for f in (u, v, z))
    e = _b_pair(ws, u, v, v)
    anti = _b_pair(ws, u, v, z) + _b_pair(ws, u, z, v)
    psi = sp.curl(v)
    adv = ws.advect_coeffs(sp.curl(u).coeffs, psi.coeffs)
    ens = float(np.sum((np.conj(psi.coeffs) * adv).real))
    nu_, nv, nz = (sp.norm(f, "V") for f in (u, v, z))
    return PairingReport(
        energy=e,
        antisymmetry=anti,
        enstrophy=ens,
        energy_scale=nu_ * nv * nv,
        antisymmetry_scale=nu_ * nv * nz,
        enstrophy_scale=nu_ * nv * sp.norm(v, "D", alpha=1.0),
    )


def _as_velocity(x):
    return sp.biot_savart(x) if isinstance(x, sp.VorticityField) else x


def bilinear_dual_norm(u, v, ws=None):
    """``||B(u, v)||_{V'}`` of the Leray-projected Galerkin advection."""
    u, v = _as_velocity(u), _as_velocity(v)
    _check_grids(u, v)
    grid = u.grid
    ws = ws or AdvectionWorkspace(grid)
    w = ws.velocity_advection_coeffs(u.coeffs, v.coeffs)
    k = grid.modes
    kw = k[:, 0] * w[:, 0] + k[:, 1] * w[:, 1]
    w = w - k * (kw / grid.lam)[:, None]
    return float(np.sqrt(np.sum(np.abs(w) ** 2 / grid.lam[:, None])))


def giga_ratio(u, v, ws=None):
    """``||B(u,v)||_{V'} / (||u||_{D(A^1/4)} ||v||_{D(A^1/4)})`` on the dealiased parts."""
    u, v = _as_velocity(u), _as_velocity(v)
    _check_grids(u, v)
    mk = u.grid.dealias_mask[:, None]
    u = sp.VelocityField(u.grid, u.coeffs * mk)
    v = sp.VelocityField(v.grid, v.coeffs * mk)
    den = sp.norm(u, "D", alpha=0.25) * sp.norm(v, "D", alpha=0.25)
    if den == 0.0:
        raise DomainError("ratio undefined for a zero field")
    return bilinear_dual_norm(u, v, ws) / den
