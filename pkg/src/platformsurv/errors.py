"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4, I/O failures -> 5.
"""


class PlatformSurvError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PlatformSurvError):
    """Invalid configuration (bad parameter values, malformed config files)."""


class DataError(PlatformSurvError):
    """Invalid or inconsistent input data."""


class SchemaError(DataError):
    """Input file does not match the declared column schema."""


class DesignViolationError(DataError):
    """Subjects assigned to a treatment that was unavailable at their entry."""


class EmptyPopulationError(DataError):
    """An estimator required a population stratum that contains no subjects."""


class NumericalError(PlatformSurvError):
    """A numerical routine failed to produce a usable result."""


class SeparationError(NumericalError):
    """Complete or quasi-complete separation in a logistic fit."""


class SingularDesignError(NumericalError):
    """Rank-deficient design matrix."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"singular design matrix; offending columns: {', '.join(self.columns)}")


class DegenerateHazardError(NumericalError):
    """A hazard value of 1 or more makes the product-limit representation collapse."""


class BootstrapInstabilityError(NumericalError):
    """Too many bootstrap replicates failed to produce an estimate."""


class PoolingDiagnosticWarning(UserWarning):
    """Advisory: pooled and concurrent nuisance fits differ materially."""
