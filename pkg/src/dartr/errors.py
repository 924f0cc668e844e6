"""Exception hierarchy for the dartr package.

Every failure mode raised on purpose by the library derives from
:class:`DartrError`, split into configuration errors (bad user input,
CLI exit code 1) and numerical errors (a computation could not be
completed, CLI exit code 2).  Plain I/O failures use the builtin
``OSError`` family (CLI exit code 3).
"""


class DartrError(Exception):
    """Base class for all errors raised by dartr."""


class ConfigError(DartrError):
    """Invalid configuration, options, or file contents."""


class NumericalError(DartrError):
    """A numerical computation failed or its preconditions do not hold."""


# -- grids / measures ---------------------------------------------------------

class NonCommensurateGrid(NumericalError):
    """The mesh size does not divide the grid span."""


class DimensionMismatch(NumericalError):
    """Vectors or matrices have incompatible shapes."""


# -- operators / data generation ----------------------------------------------

class MissingDerivative(NumericalError):
    """An operator needs the derivative of u but none was provided."""


class QuadratureNoConvergence(NumericalError):
    """Adaptive quadrature exceeded its subdivision budget."""


# -- assembly -----------------------------------------------------------------

class EmptyExploration(NumericalError):
    """The data explores no distance at all (all measure weights vanish)."""


class DegenerateSupport(NumericalError):
    """Some output sample has an empty estimated support."""


class DimensionOutOfRange(NumericalError):
    """Requested hypothesis-space dimension is outside the admissible range."""


class SingularBasis(NumericalError):
    """The basis Gram matrix is numerically singular."""


# -- regularized solving ------------------------------------------------------

class NotPositiveDefinite(NumericalError):
    """A matrix that must be positive definite is not."""


class NoConvergence(NumericalError):
    """An iterative eigenvalue or least-squares routine did not converge."""


class AllZeroSpectrum(NumericalError):
    """Every eigenvalue was truncated; nothing is identifiable."""


class NegativeLambda(NumericalError):
    """Regularization strength must be nonnegative."""


# -- hyperparameter selection / rate fitting -----------------------------------

class DegenerateCurve(NumericalError):
    """Too few points to locate a curvature maximum on the L-curve."""


class NoCandidates(NumericalError):
    """Dimension selection received an empty candidate list."""


class DegenerateFit(NumericalError):
    """Rate fitting needs at least two distinct mesh sizes and positive errors."""
