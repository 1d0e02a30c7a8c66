"""Exception hierarchy shared by the solver modules."""


class HmmError(Exception):
    """Base class for all errors raised by :mod:`hmmrd`."""


class MeshError(HmmError, ValueError):
    """Invalid mesh input."""


class DegenerateCell(MeshError):
    """A cell has non-positive measure (wrong orientation or self-intersecting)."""


class NonStarShaped(MeshError):
    """Some orthogonal distance from the cell center to a face is not positive."""


class NonConformingFace(MeshError):
    """A face is shared by more than two cells."""


class UnsupportedCellType(MeshError):
    """Operation is restricted to a cell type the mesh does not have."""


class PreconditionError(HmmError, ValueError):
    """Input data violates a documented precondition."""


class SolverFailure(HmmError, RuntimeError):
    """A linear solve did not reach the requested tolerance."""


class LinearSolverFailure(SolverFailure):
    """Linear solve failure inside a time step."""


class NonConvergence(SolverFailure):
    """Iterative solver hit the iteration cap."""


class SingularMatrix(HmmError, ArithmeticError):
    """Dense factorisation detected rank deficiency."""


class SingularBlock(HmmError, ArithmeticError):
    """Cell block of the hybrid system has a non-positive entry."""


class FixedPointDivergence(HmmError, RuntimeError):
    """Fixed-point iteration of the implicit step did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(HmmError, ValueError):
    """Malformed or inconsistent run configuration."""


class NonFiniteState(HmmError, FloatingPointError):
    """A time step produced NaN or infinite values."""
