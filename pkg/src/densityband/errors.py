"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """An invalid configuration value (bad scenario parameters, alpha, J, ...)."""


class IngestionError(ValueError):
    """A malformed input file; the message names the offending row/column."""


class DegeneracyWarning(RuntimeWarning):
    """A degenerate numeric situation that was handled by a documented fallback
    (density-level plateau, floored scale estimate, empty calibration cell)."""


class GridCoverageWarning(RuntimeWarning):
    """A target grid too narrow for the density it is meant to carry."""
