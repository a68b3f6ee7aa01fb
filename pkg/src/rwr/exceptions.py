"""Exception and warning types raised across the package."""


class RWRError(Exception):
    """Base class for errors raised by this package."""


class DataError(RWRError, ValueError):
    """Malformed or invalid input data (bad CSV cell, missing column, ...)."""


class DesignError(RWRError, ValueError):
    """An inadmissible or unresolvable design-matrix specification."""


class SpecError(RWRError, ValueError):
    """A variable-role specification that an estimator cannot accept."""


class EstimationError(RWRError, RuntimeError):
    """An estimator could not produce a result (e.g. a probit failed to converge)."""


class BootstrapError(RWRError, RuntimeError):
    """Too many bootstrap replicates failed."""


class RankDeficiencyWarning(UserWarning):
    """Columns were dropped from a least-squares design."""


class PositivityWarning(UserWarning):
    """Estimated treatment probabilities hit the clamp boundary."""


class DegenerateColumnWarning(UserWarning):
    """A residualized column has zero variance and was zeroed or dropped."""
