"""Exception hierarchy.

Input problems derive from :class:`InputError` and numerical trouble from
:class:`NumericError`; the CLI maps them to distinct exit codes.
"""


class BGCRError(Exception):
    pass


class InputError(BGCRError, ValueError):
    """Malformed or inconsistent user input."""


class NumericError(BGCRError, ArithmeticError):
    """A numerical procedure failed."""


# phylo
class ParseError(InputError):
    pass


class MultifurcationError(InputError):
    pass


class DuplicateLeafError(InputError):
    pass


class MissingValueError(InputError):
    pass


# dataset
class NonIntegerCell(InputError):
    pass


class NegativeCount(InputError):
    pass


class HeaderMismatch(InputError):
    pass


class UnknownColumn(InputError):
    pass


class NonBinaryGroup(InputError):
    pass


class NonNumericColumn(InputError):
    pass


class KTooLarge(InputError):
    pass


class ZeroVarianceColumn(InputError):
    pass


class LeafNameMismatch(InputError):
    pass


class SampleIdMismatch(InputError):
    pass


# node model / inference
class DomainError(InputError):
    pass


class ConvergenceError(NumericError):
    pass


class DegenerateMarginal(NumericError):
    pass


class ZeroMessage(NumericError):
    pass


class BudgetTooSmall(InputError):
    pass


class TreeTooLarge(InputError):
    pass


class TooManyCovariates(InputError):
    pass


class UnknownTarget(InputError):
    pass
