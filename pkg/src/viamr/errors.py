"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class AssemblyError(ValueError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class SolverFailure(RuntimeError):
    """A linear or nonlinear solve did not meet its contract.

    ``residual`` carries the last residual norm when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    pass
