"""
Exception hierarchy for multihom.

Every exception carries the process exit code the CLI maps it to:
- 2: configuration or precondition problems (the input is at fault)
- 3: numerical failures (the input was accepted but a computation failed)

Verdict failures of experiments are not exceptions; they are reported in
the experiment result and turned into exit code 1 by the CLI.
"""

from typing import List, Optional, Sequence, Tuple


class MultihomError(Exception):
    """Base class for all multihom errors."""
    exit_code = 3


class ConfigError(MultihomError):
    """Malformed configuration: unknown key, bad type, schema mismatch."""
    exit_code = 2

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class PreconditionError(MultihomError, ValueError):
    """An operation was called with arguments outside its domain."""
    exit_code = 2


class DimensionError(PreconditionError):
    """Shape mismatch between a spec and the arguments passed to it."""

    def __init__(self, message: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)


class ResolutionError(PreconditionError):
    """Grid too coarse for the oscillation it has to resolve."""


class StructureError(PreconditionError):
    """The coefficient does not have the structure an operation requires."""


class DomainError(PreconditionError):
    """A point falls outside the grid it should be evaluated on."""


class ScaleOrderError(PreconditionError):
    """A scale tuple is not ordered eps_1 >= eps_2 >= ... > 0."""

    def __init__(self, row: int, index: int, message: str = ""):
        self.row = row
        self.index = index
        text = f"scale tuple {row} violates ordering at index {index}"
        super().__init__(f"{text}: {message}" if message else text)


class NotEllipticError(MultihomError):
    """Sampled eigenvalues contradict ellipticity or the declared constant."""

    def __init__(self, message: str, lambda_min: float, lambda_max: float):
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        super().__init__(message)


class InsufficientDataError(MultihomError):
    """A limit needed by the scale analysis cannot be estimated."""

    def __init__(self, ratio: str, message: str):
        self.ratio = ratio
        super().__init__(f"insufficient data for {ratio}: {message}")


class ConvergenceError(MultihomError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residuals: Sequence[float]):
        self.residuals: List[float] = list(residuals)
        tail = ", ".join(f"{r:.3e}" for r in self.residuals[-5:])
        super().__init__(
            f"{message} after {len(self.residuals)} iterations "
            f"(last residuals: {tail})")


class ExtrapolationError(MultihomError):
    """A regularization sequence does not settle as rho -> 0."""

    def __init__(self, message: str, sequence: Sequence[float]):
        self.sequence: List[float] = list(sequence)
        super().__init__(f"{message}: {self.sequence}")


class NondegeneracyError(MultihomError):
    """A cut-and-project matrix has an integer relation M^T z = 0."""

    def __init__(self, witness: Tuple[int, ...], value: float):
        self.witness = tuple(int(z) for z in witness)
        self.value = float(value)
        super().__init__(
            f"projection is degenerate: |M^T z| = {value:.3e} at z = {self.witness}")
