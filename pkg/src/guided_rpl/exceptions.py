"""Exception hierarchy shared by all submodules."""

import numpy as np


class GuidedRPLError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GuidedRPLError, ValueError):
    pass


class NumericError(GuidedRPLError, ArithmeticError):
    """Non-finite input or intermediate value."""


class NotPositiveDefinite(GuidedRPLError, np.linalg.LinAlgError):
    """A matrix expected to be SPD failed to factorize."""


class DegenerateColumn(GuidedRPLError, ValueError):
    pass


class DuplicateClass(GuidedRPLError, ValueError):
    pass


class IncompleteGrid(GuidedRPLError, ValueError):
    pass


class UndefinedMetric(GuidedRPLError, ValueError):
    pass


class FormatError(GuidedRPLError, ValueError):
    """Base for binary file format problems."""


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class IndivisibleSplit(GuidedRPLError, ValueError):
    pass


class ConfigError(GuidedRPLError, ValueError):
    pass


class UnknownKey(ConfigError):
    pass


class MalformedValue(ConfigError):
    pass
