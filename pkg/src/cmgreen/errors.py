"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI lives in cli.py; library code raises these
and never calls sys.exit.
"""


class CMGreenError(Exception):
    """Base class for all package errors."""


class NotARelation(CMGreenError):
    """The integer vector fails the cusp-form pairing conditions, so no
    weakly holomorphic form with that principal part exists."""

    def __init__(self, message, obstruction=None):
        super().__init__(message)
        self.obstruction = obstruction


class PrecisionError(CMGreenError):
    """An operation would need series coefficients outside the stored window."""


class DiagonalSingularity(CMGreenError):
    """Evaluation requested on (or too close to) the diagonal of H x H."""


class SingularSupport(CMGreenError):
    """The point lies on the divisor where the Hecke-translated Green's
    function has its logarithmic singularity."""


class ConvergenceRegion(CMGreenError):
    """The Fourier-expansion evaluator was called outside its region of
    guaranteed convergence (y1*y2 too small)."""


class NotSameField(CMGreenError):
    """The two CM points generate different imaginary quadratic fields."""


class NonzeroConstantTerm(CMGreenError):
    """The regularized rank-(2,0) integral needs all component constant
    terms to vanish; at least one does not."""


class QuadratureBudgetExceeded(CMGreenError):
    """Adaptive quadrature could not certify the requested error bound
    within its panel/order budget."""


class LinearSolveFailed(CMGreenError):
    """An internal linear system that must be consistent was not; indicates
    an implementation bug rather than bad input."""


class LatticeError(CMGreenError):
    """Degenerate, indefinite, or otherwise invalid lattice input."""
