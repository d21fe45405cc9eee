"""Exception types shared across the package."""


class PuzzleLabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PuzzleLabError, ValueError):
    pass


class NonUnitaryGate(PuzzleLabError, ValueError):
    pass


class QubitCapExceeded(PuzzleLabError, ValueError):
    pass


class UndefinedSupport(PuzzleLabError):
    """A conditional was requested at a prefix carrying zero probability mass."""

    def __init__(self, prefix: str):
        super().__init__(f"prefix {prefix!r} has zero mass")
        self.prefix = prefix


class InfeasibleNoise(PuzzleLabError, ValueError):
    """The requested noise level cannot be realized on this distribution."""


class DegenerateQuery(PuzzleLabError):
    """Both probability-oracle answers of a key-bit query were zero."""
