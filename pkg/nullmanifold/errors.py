"""Exception hierarchy shared by the library and the CLI.

Input problems map to exit code 2, numerical and runtime failures to exit code 3.
"""
from typing import Optional


class NullManifoldError(Exception):
    exit_code = 3


class InputError(NullManifoldError):
    exit_code = 2


class ParameterError(InputError):
    pass


class DimensionError(InputError):
    pass


class ComputationError(NullManifoldError):
    exit_code = 3


class ConvergenceError(ComputationError):
    def __init__(self, message: str, residual_norm: Optional[float] = None):
        super().__init__(message)
        self.residual_norm = residual_norm


class DegenerateTaskError(ComputationError):
    pass


class SamplingError(ComputationError):
    pass


class NumericalError(ComputationError):
    pass


class DegenerateQueryError(ComputationError):
    pass


class StallError(ComputationError):
    pass


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, NullManifoldError):
        return exc.exit_code
    # unreadable or malformed input files
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, ValueError)):
        return 2
    return 3
