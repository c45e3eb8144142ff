"""
Exception hierarchy; each family maps to a distinct CLI exit code.
"""


class AttnReidError(Exception):
    """Base class for all attnreid errors."""

    exit_code = 1


class ConfigError(AttnReidError):
    """Invalid or unreadable run configuration."""

    exit_code = 3


class DataError(AttnReidError):
    """Dataset, image or file-level problem."""

    exit_code = 4


class CheckpointError(DataError):
    """Corrupt or incompatible checkpoint container."""

    def __init__(self, message: str, expected_version=None, found_version=None):
        if expected_version is not None or found_version is not None:
            message = f"{message} (expected version {expected_version}, found {found_version})"
        super().__init__(message)
        self.expected_version = expected_version
        self.found_version = found_version


class NumericAbortError(AttnReidError):
    """A loss term became non-finite; training stops."""

    exit_code = 5

    def __init__(self, term: str, value: float, step: int = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term '{term}' = {value}{where}")
        self.term = term
        self.value = value
        self.step = step
