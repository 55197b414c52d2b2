"""Exception types raised across the package.

Everything derives from :class:`CCEffError` so callers can catch the whole
family with one clause.  The CLI maps these to exit code 1 (data/model
failures) while argument problems exit with 2.
"""


class CCEffError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateConstraint(CCEffError):
    """The prevalence constraint does not determine theta (beta == 0)."""


class InfeasiblePrevalence(CCEffError):
    """The requested prevalence cannot be attained by any theta in [0, 1]."""


class BracketFailure(CCEffError):
    """Root bracketing for the intercept exceeded the allowed range."""


class ZeroCell(CCEffError):
    """A contingency table cell needed by a closed-form estimate is zero."""


class ZeroMargin(CCEffError):
    """A covariate or exposure stratum contains no observations."""


class Separation(CCEffError):
    """The likelihood is maximized at infinity (estimates diverged)."""


class NonConvergence(CCEffError):
    """An iterative fit failed to meet its convergence tolerance."""


class InfeasibleStart(CCEffError):
    """No valid starting point exists for the constrained fit."""


class BoundaryEstimate(CCEffError):
    """A constrained estimate ran into the boundary of the parameter space."""


class SingularInformation(CCEffError):
    """The information matrix is numerically singular."""


class NotConverged(CCEffError):
    """A root search for a limiting value failed to converge."""


class VacuousMinimizer(CCEffError):
    """A least-false parameter search has no interior solution."""


class AllReplicatesFailed(CCEffError):
    """Every Monte Carlo replicate raised; no estimates to aggregate."""
