"""Exception types shared across the package."""


class IonflopError(Exception):
    """Base class for all package errors."""


class InvalidInputError(IonflopError, ValueError):
    pass


class DeconvolutionError(InvalidInputError):
    """Measured spectral width does not exceed the instrument width."""


class NonConvergenceError(IonflopError, RuntimeError):
    pass


class FitFailure(IonflopError, RuntimeError):
    """A fit did not produce a usable estimate.

    ``diagnostics`` carries whatever the fitter knew at the point of failure
    (iterations, last parameters, residual norm).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NonIdentifiableError(FitFailure):
    pass


class ConfigError(IonflopError, ValueError):
    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
