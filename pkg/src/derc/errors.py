"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, ParseError /
ValidationError -> 2, NumericError -> 3.
"""


class DercError(Exception):
    """Base class for all package errors."""


class ParseError(DercError):
    """Malformed input file (bad markers, non-numeric cells, ragged rows)."""


class ValidationError(DercError):
    """Structurally valid input that violates a domain contract."""


class NumericError(DercError):
    """Numeric failure during training (e.g. a cluster collapsed)."""
