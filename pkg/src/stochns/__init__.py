"""Spectral Galerkin simulation of the stochastic 2D Navier-Stokes equations on the torus.

Modules
-------
spectral
    Wave-vector grid, field types, norms, projections and snapshot I/O.
nonlin
    Dealiased advection term, its direct-sum oracle and algebraic checks.
noise
    Noise models, Wiener streams and checks of the noise assumptions.
sde
    Time stepping, trajectory records and the Ito energy balance.
coupling
    Nudged coupling and Foias-Prodi synchronization experiments.
ergodic
    Time averages, two-start comparisons and mode-activation diagnostics.
cli
    Configuration-driven experiment runner.
"""

__version__ = "0.1.0"

from . import coupling, ergodic, noise, nonlin, sde, spectral  # noqa: E402,F401
from .errors import (ConfigurationError, DivergenceError, DomainError,  # noqa: E402,F401
                     StatisticsRefused, UnsupportedModelError)
