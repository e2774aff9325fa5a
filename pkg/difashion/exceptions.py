"""
Error classes shared by every app. The exit code of a failing management
command is taken from the class of the error that stopped it.
"""


class DifashionError(Exception):
    exit_code = 1

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail

    def __str__(self):
        message = super().__str__()
        if self.detail:
            return f"{message}: {self.detail}"
        return message


class ConfigError(DifashionError):
    """Invalid configuration value or combination."""

    exit_code = 2


class RequestError(ConfigError):
    """A sampling request that cannot be served."""


class DataError(DifashionError):
    """Missing, corrupt or inconsistent dataset and run files."""

    exit_code = 3


class CheckpointError(DataError):
    pass


class ContractError(DifashionError):
    """A caller broke an operation's precondition."""

    exit_code = 4


class InvalidShapeError(ContractError):
    pass


class ClassifierAccuracyError(ContractError):
    pass
