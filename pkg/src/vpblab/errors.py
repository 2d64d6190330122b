"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage/config errors -> 1,
numerical failures -> 2, I/O and cache errors -> 3.
"""

from __future__ import annotations


class VpbError(Exception):
    """Base class for all package errors."""


class ConfigError(VpbError):
    """Bad configuration file, option value, or argument combination."""


class NumericalError(VpbError):
    """A numerical procedure failed (non-convergence, loss of definiteness, ...)."""


class BlowupError(NumericalError):
    """A time integration exceeded the configured per-step growth factor."""


class NonConvergenceError(NumericalError):
    """An iterative procedure or a quadrature certification did not converge."""


class CacheError(VpbError):
    """A binary cache file is missing, corrupt, or incompatible."""
