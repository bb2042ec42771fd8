"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4. InputError signals a caller contract violation and is a
plain ValueError so library users can catch it naturally.
"""

from __future__ import annotations


class PolyIrlError(Exception):
    """Base class for package-specific failures."""


class ConfigError(PolyIrlError):
    """Invalid or unparseable run configuration."""


class InputError(PolyIrlError, ValueError):
    """A function was called with arguments violating its preconditions."""


class DataError(PolyIrlError):
    """Corrupt, missing, or mismatched dataset/manifest content."""


class NumericalError(PolyIrlError):
    """Optimization or numerical routine failed to produce finite results."""
