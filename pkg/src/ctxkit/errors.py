"""Exception hierarchy shared across the toolkit.

Two broad failure families matter to callers (and to the CLI's exit codes):

* configuration/input problems -- malformed files, bad schemas, inconsistent
  shapes, out-of-range indices supplied by the caller;
* mathematical/numerical problems -- violated hypotheses of a formula,
  singular systems, divergence discovered mid-computation.
"""

from __future__ import annotations


class CtxkitError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CtxkitError):
    """A config file, schema, or experiment description is invalid."""


class StructuralError(CtxkitError, ValueError):
    """Inputs are malformed: wrong shapes, asymmetry, mismatched sample sets."""


class BoundsError(CtxkitError, IndexError):
    """An index, dimension, or size is outside the valid range."""


class DomainError(CtxkitError, ValueError):
    """A mathematical hypothesis of the requested quantity is violated."""


class NumericalError(CtxkitError, ArithmeticError):
    """A computation failed numerically (divergence, NaN, singularity)."""
