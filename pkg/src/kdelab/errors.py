"""Exception hierarchy.

Two families matter operationally: ``InputError`` (bad user input, CLI exit
code 2) and ``NumericalError`` (a computation could not meet its accuracy
contract, CLI exit code 3).
"""


class KdelabError(Exception):
    """Base class for all package errors."""


class InputError(KdelabError):
    """Invalid input: bad shapes, bad parameters, missing files."""


class DimensionMismatch(InputError):
    pass


class NotSymmetric(InputError):
    pass


class NotPositiveDefinite(InputError):
    pass


class EmptySamples(InputError):
    pass


class OrderUnavailable(InputError):
    """A derivative order beyond what the density model provides."""


class NumericalError(KdelabError):
    """A numerical routine failed to reach its requested accuracy."""


class QuadratureFailed(NumericalError):
    pass


class MaxSubdivisionsExceeded(NumericalError):
    pass


class MomentDiverged(NumericalError):
    """Partial sums or tail extensions failed the stability test."""


class AllPointsExcluded(NumericalError):
    """Every point of a scaling study fell below the reliability floor."""
