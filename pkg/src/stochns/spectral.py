"""Fourier representation of mean-zero fields on the torus [-pi, pi]^2.

Fields are stored as complex coefficients against the orthonormal exponentials
``exp(i k.x) / (2 pi)``, one entry per admissible wave vector of the grid, in
the grid's mode order.  A real field therefore satisfies
``c(-k) == conj(c(k))``.  Under this convention every norm below is a plain
weighted coefficient sum (Parseval holds with constant one).

Vorticity follows the convention ``psi = d2 u1 - d1 u2``.  The velocity of a
vorticity mode is ``u(k) = i psi(k) (-k2, k1) / |k|^2``.

Real coordinates
----------------
Each ordered mode ``k`` carries one real direction of the Galerkin space: the
velocity eigenfunction ``e_n`` whose vorticity is ``|k| sqrt(2) sin(k.x) / (2 pi)``
when ``k`` is in the upper half lattice and ``|k| sqrt(2) cos(k.x) / (2 pi)``
otherwise.  The ``e_n`` are orthonormal in H (the velocity L^2 space) and are
eigenfunctions of the Stokes operator with eigenvalue ``|k|^2``.
:func:`to_coords` / :func:`from_coords` convert between the two descriptions.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

NORMALIZATION_TAG = "orthonormal-fourier/psi=d2u1-d1u2"


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Truncated lattice ``0 < max(|k1|, |k2|) <= K`` with ordering data."""

    cutoff: int
    modes: np.ndarray          # (n, 2) int, ordered by (|k|^2, k1, k2)
    lam: np.ndarray            # (n,) Stokes eigenvalues |k|^2
    neg: np.ndarray            # (n,) index of -k
    upper: np.ndarray          # (n,) True for k in the upper half lattice
    dealias_mask: np.ndarray   # (n,) True iff max(|k1|,|k2|) <= floor(2K/3)
    basis_coeff: np.ndarray    # (n,) coefficient of e_n at its own k
    lookup: np.ndarray         # (2K+1, 2K+1) mode index, -1 at the origin

    @property
    def n_modes(self):
        return len(self.lam)

    @functools.cached_property
    def inv_lam_pairs(self):
        """``1/lam`` repeated for the real and imaginary parts of each coefficient."""
        return np.repeat(1.0 / self.lam, 2)

    @property
    def dealias_cutoff(self):
        return (2 * self.cutoff) // 3

    @property
    def n_phys(self):
        """Physical grid points per direction used by the transforms."""
        return 2 * self.cutoff + 1

    @property
    def ordered_modes(self):
        return [WaveVector(int(a), int(b)) for a, b in self.modes]

    def index(self, k):
        """0-based position of wave vector ``k`` in the mode order."""
        k1, k2 = (int(v) for v in k)
        K = self.cutoff
        if max(abs(k1), abs(k2)) > K:
            raise DomainError(f"mode {(k1, k2)} outside grid K={K}")
        i = int(self.lookup[k1 + K, k2 + K])
        if i < 0:
            raise DomainError("mode (0, 0) is excluded (zero-mean fields)")
        return i


@dataclass(frozen=True)
class WaveVector:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 == 0 and self.k2 == 0:
            raise DomainError("wave vector (0, 0) is excluded")

    def __iter__(self):
        yield self.k1
        yield self.k2


@functools.lru_cache(maxsize=None)
def make_grid(K):
    """Build the grid of all modes with ``max(|k1|, |k2|) <= K``."""
    if int(K) != K or K < 2:
        raise ConfigurationError(f"grid cutoff must be an integer >= 2, got {K!r}")
    K = int(K)
    r = np.arange(-K, K + 1)
    k1, k2 = (a.ravel() for a in np.meshgrid(r, r, indexing="ij"))
    keep = (k1 != 0) | (k2 != 0)
    k1, k2 = k1[keep], k2[keep]
    lam = k1 * k1 + k2 * k2
    order = np.lexsort((k2, k1, lam))
    modes = np.stack([k1[order], k2[order]], axis=1)
    lam = lam[order].astype(float)

    lookup = np.full((2 * K + 1, 2 * K + 1), -1, dtype=np.int64)
    lookup[modes[:, 0] + K, modes[:, 1] + K] = np.arange(len(modes))
    neg = lookup[-modes[:, 0] + K, -modes[:, 1] + K]
    upper = (modes[:, 1] > 0) | ((modes[:, 1] == 0) & (modes[:, 0] > 0))
    kd = (2 * K) // 3
    dealias = np.abs(modes).max(axis=1) <= kd
    kabs = np.sqrt(lam)
    basis_coeff = np.where(upper, -1j * kabs / np.sqrt(2), kabs / np.sqrt(2) + 0j)
    return SpectralGrid(
        cutoff=K,
        modes=_frozen(modes),
        lam=_frozen(lam),
        neg=_frozen(neg),
        upper=_frozen(upper),
        dealias_mask=_frozen(dealias),
        basis_coeff=_frozen(basis_coeff),
        lookup=_frozen(lookup),
    )


def eigenvalue(k):
    """Stokes eigenvalue ``|k|^2`` of a torus mode."""
    k1, k2 = (int(v) for v in k)
    if k1 == 0 and k2 == 0:
        raise DomainError("mode (0, 0) is excluded")
    return float(k1 * k1 + k2 * k2)


def ordered_eigenvalue(n, grid):
    """The n-th eigenvalue (1-based) in the grid's ordering."""
    if int(n) != n or not 1 <= n <= grid.n_modes:
        raise DomainError(f"eigenvalue index must lie in [1, {grid.n_modes}], got {n!r}")
    return float(grid.lam[int(n) - 1])


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class VorticityField:
    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_modes,):
            raise DomainError(
                f"expected {self.grid.n_modes} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", _frozen(c.copy()))

    def __add__(self, other):
        _same_grid(self, other)
        return VorticityField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_grid(self, other)
        return VorticityField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return VorticityField(self.grid, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return VorticityField(self.grid, -self.coeffs)

    def coeff(self, k):
        return complex(self.coeffs[self.grid.index(k)])

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n_modes, dtype=complex))


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: SpectralGrid
    coeffs: np.ndarray  # (n, 2)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_modes, 2):
            raise DomainError(
                f"expected ({self.grid.n_modes}, 2) coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", _frozen(c.copy()))

    def __add__(self, other):
        _same_grid(self, other)
        return VelocityField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same_grid(self, other)
        return VelocityField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return VelocityField(self.grid, self.coeffs * s)

    __rmul__ = __mul__

    def divergence(self):
        """Spectral divergence ``k . u(k)`` per mode (zero for valid fields)."""
        return self.grid.modes[:, 0] * self.coeffs[:, 0] + self.grid.modes[:, 1] * self.coeffs[:, 1]


def _same_grid(a, b):
    if a.grid.cutoff != b.grid.cutoff:
        raise DomainError("fields live on different grids")


def hermitian_defect(x):
    """Largest violation of ``c(-k) = conj(c(k))``."""
    c = x.coeffs
    return float(np.max(np.abs(c[x.grid.neg] - np.conj(c)))) if c.size else 0.0


# ---------------------------------------------------------------------------
# array kernels (leading batch axes allowed)


def velocity_coeffs(grid, psi):
    """Velocity coefficients ``(..., n, 2)`` of vorticity coefficients ``(..., n)``."""
    fac = 1j * psi / grid.lam
    return np.stack([-grid.modes[:, 1] * fac, grid.modes[:, 0] * fac], axis=-1)


def curl_coeffs(grid, u):
    k1 = grid.modes[:, 0]
    k2 = grid.modes[:, 1]
    return 1j * (k2 * u[..., 0] - k1 * u[..., 1])


def energy(grid, psi):
    """``||u||_H^2`` of the velocity with vorticity coefficients ``psi``."""
    psi = np.asarray(psi)
    if psi.dtype == complex and psi.ndim and psi.strides[-1] == psi.itemsize:
        a = psi.view(float)
        return (a * a) @ grid.inv_lam_pairs
    return np.sum(np.abs(psi) ** 2 / grid.lam, axis=-1)


def enstrophy(grid, psi):
    """``||u||_V^2 = ||psi||_{L^2}^2``."""
    return np.sum(np.abs(psi) ** 2, axis=-1)


def inner_h(grid, a, b):
    """H inner product of the velocities of two vorticity coefficient arrays."""
    return np.sum((np.conj(a) * b).real / grid.lam, axis=-1)


def to_coords(grid, psi):
    """Real coordinates ``<u, e_n>_H`` for every ordered mode."""
    return 2.0 * (np.conj(grid.basis_coeff) * psi).real / grid.lam


def from_coords(grid, x):
    """Vorticity coefficients of ``sum_n x_n e_n``; inverse of :func:`to_coords`."""
    x = np.asarray(x, dtype=float)
    a = grid.basis_coeff
    return a * x + np.conj(a[grid.neg]) * x[..., grid.neg]


def project_low_coeffs(grid, c, N):
    """``P_N`` on vorticity coefficient arrays ``(..., n)``.

    The projection acts on the real coordinates: each ordered mode is one real
    sine or cosine direction, so a cut through a ``(k, -k)`` pair keeps only
    the matching component and the result stays Hermitian.
    """
    if np.all(grid.neg[:N] < N):
        # the first N modes are closed under k -> -k: plain truncation
        out = np.zeros_like(c)
        out[..., :N] = c[..., :N]
        return out
    x = to_coords(grid, c)
    x[..., N:] = 0.0
    return from_coords(grid, x)


# ---------------------------------------------------------------------------
# operations on field values


def project_low(x, N):
    """Orthogonal projection ``P_N`` onto ``span{e_1, ..., e_N}``."""
    grid = x.grid
    if int(N) != N or not 0 <= N <= grid.n_modes:
        raise DomainError(f"projection index must lie in [0, {grid.n_modes}], got {N!r}")
    if isinstance(x, VelocityField):
        return biot_savart(VorticityField(grid, project_low_coeffs(grid, curl(x).coeffs, int(N))))
    return VorticityField(grid, project_low_coeffs(grid, x.coeffs, int(N)))


def biot_savart(psi):
    """Divergence-free velocity whose curl is ``psi``."""
    return VelocityField(psi.grid, velocity_coeffs(psi.grid, psi.coeffs))


def curl(u):
    """Vorticity ``d2 u1 - d1 u2`` of a velocity field."""
    return VorticityField(u.grid, curl_coeffs(u.grid, u.coeffs))


def norm(x, space="H", alpha=None):
    """Norm of the velocity described by ``x`` in H, V or D(A^alpha).

    ``x`` may be a :class:`VorticityField` (the velocity is its Biot-Savart
    reconstruction) or a :class:`VelocityField`.  ``space="D"`` requires
    ``alpha``.
    """
    grid = x.grid
    if isinstance(x, VorticityField):
        vel_sq = np.abs(x.coeffs) ** 2 / grid.lam
    else:
        vel_sq = np.sum(np.abs(x.coeffs) ** 2, axis=-1)
    if space == "H":
        w = 1.0
    elif space == "V":
        w = grid.lam
    elif space == "D":
        if alpha is None:
            raise DomainError("space 'D' needs an exponent alpha")
        w = grid.lam ** (2.0 * alpha)
    else:
        raise DomainError(f"unknown space {space!r}")
    return float(np.sqrt(np.sum(w * vel_sq)))


def inner(x, y):
    """H inner product of two fields of the same kind."""
    _same_grid(x, y)
    if isinstance(x, VorticityField):
        return float(inner_h(x.grid, x.coeffs, y.coeffs))
    return float(np.sum((np.conj(x.coeffs) * y.coeffs).real))


def basis_field(grid, n):
    """Vorticity of the H-orthonormal eigenfunction ``e_n`` (n is 1-based)."""
    if not 1 <= n <= grid.n_modes:
        raise DomainError(f"basis index must lie in [1, {grid.n_modes}], got {n}")
    x = np.zeros(grid.n_modes)
    x[n - 1] = 1.0
    return VorticityField(grid, from_coords(grid, x))


def from_modes(grid, values):
    """Field from ``{(k1, k2): coefficient}``; the conjugate partner is filled in.

    Giving both ``k`` and ``-k`` adds the two contributions symmetrically, so the
    result is always real.
    """
    c = np.zeros(grid.n_modes, dtype=complex)
    for k, v in values.items():
        i = grid.index(k)
        c[i] += v
        c[grid.neg[i]] += np.conj(v)
    return VorticityField(grid, c)


def random_field(grid, rng, amplitude=1.0, slope=0.0, dealiased=False):
    """Random real field with coordinates ``~ N(0, amplitude^2 lam^-slope)``."""
    x = rng.standard_normal(grid.n_modes) * amplitude * grid.lam ** (-0.5 * slope)
    if dealiased:
        x = np.where(grid.dealias_mask, x, 0.0)
    return VorticityField(grid, from_coords(grid, x))


# ---------------------------------------------------------------------------
# snapshot files


def snapshot_text(field):
    """Text form of a field: header, then one ``k1,k2,re,im`` row per mode."""
    grid = field.grid
    lines = [f"# K={grid.cutoff}", f"# normalization={NORMALIZATION_TAG}", "k1,k2,re,im"]
    for (k1, k2), c in zip(grid.modes, field.coeffs):
        lines.append(f"{k1},{k2},{float(c.real)!r},{float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def write_snapshot(path, field):
    Path(path).write_text(snapshot_text(field))


def read_snapshot(path):
    text = Path(path).read_text().splitlines()
    header = {}
    body = []
    for line in text:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        elif line and not line.startswith("k1"):
            body.append(line)
    if header.get("normalization") != NORMALIZATION_TAG:
        raise ConfigurationError(
            f"snapshot normalization {header.get('normalization')!r} not understood")
    grid = make_grid(int(header["K"]))
    c = np.zeros(grid.n_modes, dtype=complex)
    seen = np.zeros(grid.n_modes, dtype=bool)
    for row in body:
        k1, k2, re, im = row.split(",")
        i = grid.index((int(k1), int(k2)))
        c[i] = complex(float(re), float(im))
        seen[i] = True
    if not seen.all():
        raise ConfigurationError(f"snapshot {path} is missing {int((~seen).sum())} modes")
    return VorticityField(grid, c)


def evaluate(x, xi1, xi2):
    """Point values of a field at coordinates ``xi1, xi2`` (direct sum, no FFT).

    Returns real values for a vorticity field and an array with a trailing
    component axis of length 2 for a velocity field.
    """
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    m = x.grid.modes
    phase = np.exp(1j * (np.multiply.outer(xi1, m[:, 0]) + np.multiply.outer(xi2, m[:, 1])))
    vals = phase @ x.coeffs / (2 * np.pi)
    return vals.real
