"""
Error types shared across the toolkit.

ConfigError and DataError map onto distinct CLI exit codes; any other
exception escaping a command is reported as an internal error.
"""

from typing import Dict, Iterable, Optional, Tuple

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


class SensitivityError(Exception):
    """Base class for every error raised on purpose by the toolkit."""

    exit_code = EXIT_INTERNAL


class ConfigError(SensitivityError):
    exit_code = EXIT_CONFIG


class DataError(SensitivityError):
    exit_code = EXIT_DATA


class ParseError(DataError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DuplicateError(DataError):
    pass


class ConflictError(DataError):
    pass


class UnknownPassageError(DataError):
    pass


class FusionError(DataError):
    pass


class EvaluationError(DataError):
    pass


class SamplingError(DataError):
    pass


class ReportError(DataError):
    pass


class IndexFormatError(DataError):
    pass


class InsufficientDepthError(DataError):
    """Raised when seed rankings cannot supply d non-gold passages for some topics."""

    def __init__(self, failures: Dict[str, Tuple[int, int]]):
        # topic -> (available non-gold entries, required d)
        self.failures = dict(failures)
        preview = ", ".join(
            f"{topic} ({have}/{need})" for topic, (have, need) in sorted(self.failures.items())[:5]
        )
        more = "" if len(self.failures) <= 5 else f" and {len(self.failures) - 5} more"
        super().__init__(
            f"insufficient seed ranking depth for {len(self.failures)} topic(s): {preview}{more}"
        )


class MissingSecondStageError(DataError):
    def __init__(self, missing: Iterable[Tuple[str, str]]):
        self.missing = sorted(set(missing))
        preview = ", ".join(f"({topic}, {passage})" for topic, passage in self.missing[:5])
        super().__init__(
            f"missing second-stage external runs for {len(self.missing)} (topic, seed-passage) pair(s): {preview}"
        )
