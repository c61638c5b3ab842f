"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: domain/validation problems
exit 1, malformed input files and I/O problems exit 2.
"""


class A3SimError(Exception):
    """Base class for all package errors."""


class ValidationError(A3SimError):
    """A domain invariant was violated (bad layer, link, config value, ...)."""


class ConfigFormatError(A3SimError):
    """An input document could not be parsed at all (syntax, not semantics)."""
