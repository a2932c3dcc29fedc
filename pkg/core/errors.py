# core/errors.py
"""Exception hierarchy. Every error carries the exit code the CLI reports."""


class HyssimError(Exception):
    exit_code = 1


class ParameterError(HyssimError, ValueError):
    exit_code = 2


class ConfigError(HyssimError, ValueError):
    exit_code = 2


class IngestionError(HyssimError):
    exit_code = 4

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ContractViolation(HyssimError):
    """A scheduler or dispatcher broke an engine contract."""


class NotDrainedError(HyssimError):
    pass


class ProvisioningError(HyssimError):
    exit_code = 3


class InfeasibleError(HyssimError):
    exit_code = 3

    def __init__(self, message: str, interval: int | None = None):
        self.interval = interval
        super().__init__(message)


class EnvelopeError(HyssimError):
    exit_code = 3
