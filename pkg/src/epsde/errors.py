"""Exception types shared across the package.

Numerical failures derive from :class:`NumericalError` so callers can
distinguish "the solver broke down" (exit code 3 in the CLI) from
configuration mistakes (:class:`ConfigError`, exit code 2).
"""

from __future__ import annotations


class NumericalError(RuntimeError):
    """Base class for failures of the numerical machinery."""


class NonPositiveDefinite(NumericalError):
    """A matrix required to be positive definite was not.

    Raised by Cholesky-based conversions instead of silently producing
    NaNs.  ``time_index`` locates the failing grid node when the error
    comes out of a filtering or smoothing pass, ``sweep`` the iteration
    when it comes out of the fixed-point loop.
    """

    def __init__(self, what: str, time_index: int | None = None):
        self.what = what
        self.time_index = time_index
        self.sweep: int | None = None
        msg = f"matrix not positive definite: {what}"
        if time_index is not None:
            msg += f" (grid node {time_index})"
        super().__init__(msg)


class DivergedMoments(NumericalError):
    """Moment integration left the trust region (entries above ~1e12)."""

    def __init__(self, msg: str, time_index: int | None = None):
        self.time_index = time_index
        self.sweep: int | None = None
        if time_index is not None:
            msg += f" (grid node {time_index})"
        super().__init__(msg)


class ImproperCavity(NumericalError):
    """A cavity distribution had non-positive-definite precision."""


class QuadratureUnderflow(NumericalError):
    """Every quadrature node carried zero likelihood mass."""


class NegativeRate(NumericalError):
    """A jump-process rate function evaluated to a negative value."""


class DivergedPath(NumericalError):
    """A simulated trajectory exploded or exceeded the jump budget."""


class NotConverged(RuntimeError):
    """Fixed-point iteration stopped at max_sweeps without converging.

    Only raised by callers that demand convergence; the solver itself
    returns the final state with ``converged=False``.
    """


class ConfigError(ValueError):
    """A configuration file or CLI argument is invalid."""
