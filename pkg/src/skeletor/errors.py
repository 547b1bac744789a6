"""Exception hierarchy shared by all skeletor modules.

Each class maps to one machine-readable error category used by the CLI
(`category` attribute); keep the categories stable, they are part of the
error-record format.
"""

from __future__ import annotations


class SkeletorError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"


class StructuralError(SkeletorError):
    """Skeleton/tree structure mismatch (joint counts, bad parent arrays)."""

    category = "structural"


class DegenerateGeometryError(SkeletorError):
    """Geometry too degenerate to proceed (e.g. all limbs zero length)."""

    category = "degenerate-geometry"


class InvalidStateError(SkeletorError):
    """A state object (normalization state, checkpoint) is unusable."""

    category = "invalid-state"


class ShapeError(SkeletorError):
    """Tensor shape mismatch."""

    category = "shape"


class ConfigError(SkeletorError):
    """Invalid configuration value or combination."""

    category = "config"


class NumericalError(SkeletorError):
    """Non-finite values where finite ones are required."""

    category = "numerical"


class FormatError(SkeletorError):
    """Malformed input file (JSON schema, checkpoint framing)."""

    category = "format"
