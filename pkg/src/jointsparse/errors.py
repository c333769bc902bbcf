"""Exception types shared across the package."""


class JointSparseError(Exception):
    """Base class for all package errors."""


class ZeroSignal(JointSparseError):
    """A signal that must be normalized has zero norm."""


class BadSparsity(JointSparseError):
    """Requested sparsity is outside [1, n_atoms]."""


class SingleColumn(JointSparseError):
    """Coherence needs at least two columns."""


class ZeroOnSupport(JointSparseError):
    """Both modality coefficients vanish on a support index."""


class Infeasible(JointSparseError):
    """No point satisfies the residual-ball constraints.

    ``min_slack`` is the amount by which the best achievable residual
    exceeds the allowed one (positive means provably infeasible).
    """

    def __init__(self, min_slack, message=None):
        self.min_slack = float(min_slack)
        super().__init__(message or f"infeasible; minimal slack {self.min_slack:.3e}")


class EmptyMask(JointSparseError):
    """Inpainting mask has no observed pixel."""


class TooSmall(JointSparseError):
    """Image below the minimum size for the operation."""


class Exhausted(JointSparseError):
    """Could not draw enough valid patches from the data."""


class SizeMismatch(JointSparseError):
    """Dictionaries being compared have different atom counts."""


class DegenerateDenominator(JointSparseError):
    """Recovery-bound denominator is not positive; the bound is vacuous."""


class MissingDictionary(JointSparseError):
    """Experiment requires a dictionary pair that was not provided."""


class ParseError(JointSparseError):
    """Malformed file content.

    ``line`` is the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatch(JointSparseError):
    """Shapes of related arrays are inconsistent."""
