"""Exception hierarchy shared by every stage of the pipeline.

The class name doubles as the machine-readable error code printed by the CLI.
"""

from __future__ import annotations


class CodeContrastError(Exception):
    """Base class; ``code`` is what the CLI reports."""

    @property
    def code(self) -> str:
        return type(self).__name__


# syntax
class ParseError(CodeContrastError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


# pair construction
class NoEligibleNode(CodeContrastError):
    pass


class TransformNoop(CodeContrastError):
    pass


class TooShort(CodeContrastError):
    pass


class EmptyOutput(CodeContrastError):
    pass


# autodiff
class ShapeMismatch(CodeContrastError, ValueError):
    pass


class DegenerateMask(ShapeMismatch):
    pass


class NonDistributionTarget(CodeContrastError, ValueError):
    pass


class NotScalar(CodeContrastError, ValueError):
    pass


class TapeConsumed(CodeContrastError, RuntimeError):
    pass


# training
class BatchTooSmall(CodeContrastError):
    pass


class CorpusTooSmall(CodeContrastError):
    pass


class PoolTooSmall(CodeContrastError):
    pass


class EmptyNegatives(CodeContrastError):
    pass


class NumericalDivergence(CodeContrastError, FloatingPointError):
    pass


# retrieval
class KTooLarge(CodeContrastError, ValueError):
    pass


class MissingRelevance(CodeContrastError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


# configuration
class ConfigError(CodeContrastError, ValueError):
    pass
