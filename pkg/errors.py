"""
errors.py

Exception hierarchy shared by every module of the reconstruction pipeline,
plus the mapping from exceptions to CLI exit codes.

Exit codes:
    0  success
    2  configuration / input error (including malformed cloud files)
    3  numerical failure (lost interface, empty band, contract violations)
    4  I/O error (missing or unreadable files)
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class ReconstructionError(Exception):
    """Base class. Carries optional (run, iteration, leaf) context."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def with_context(self, **context):
        """Returns self after merging context keys that are not already set."""
        for key, value in context.items():
            if value is not None and key not in self.context:
                self.context[key] = value
        return self

    def __str__(self):
        if not self.context:
            return self.message
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({ctx})"


class ConfigError(ReconstructionError):
    exit_code = EXIT_CONFIG


class DegenerateInputError(ReconstructionError):
    exit_code = EXIT_CONFIG


class CloudFormatError(ReconstructionError):
    exit_code = EXIT_CONFIG

    def __init__(self, message, line_number=None, **context):
        super().__init__(message, line=line_number, **context)
        self.line_number = line_number


class DomainViolationError(ReconstructionError):
    pass


class ContractViolation(ReconstructionError):
    pass


class LostInterfaceError(ReconstructionError):
    pass


class EmptyBandError(ReconstructionError):
    pass


class PropagationError(ReconstructionError):
    pass


def exit_code_for(exc):
    """Maps any exception raised by a run to the documented exit code."""
    if isinstance(exc, ReconstructionError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERICAL
