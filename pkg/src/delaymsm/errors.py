"""Exception hierarchy shared across the package."""


class DelayMsmError(Exception):
    """Base class for all package errors."""


class ConfigError(DelayMsmError):
    """Invalid or incomplete configuration."""


class DataError(DelayMsmError):
    """Malformed or inconsistent input data."""


class EstimationError(DelayMsmError):
    """An estimator could not produce a valid result."""


class SeparationError(EstimationError):
    """Monotone partial likelihood: a coefficient diverged during fitting."""

    def __init__(self, covariate, value):
        self.covariate = covariate
        self.value = value
        super().__init__(
            f"coefficient for '{covariate}' diverged (|{value:.2f}| > 20); "
            "the data likely exhibit complete separation for this covariate"
        )


class CollinearityError(EstimationError):
    """Singular observed information matrix."""

    def __init__(self, covariates):
        self.covariates = list(covariates)
        names = ", ".join(self.covariates)
        super().__init__(f"information matrix is singular; collinear covariates: {names}")
