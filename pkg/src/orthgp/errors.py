"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class OrthGPError(Exception):
    exit_code = 1


class InputError(OrthGPError, ValueError):
    """Malformed or inconsistent user input."""

    exit_code = 2


class NumericalError(OrthGPError, ArithmeticError):
    """A factorization failed even after jitter escalation."""

    exit_code = 3

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class OptimizationError(OrthGPError):
    """Positive definiteness could not be recovered by step halving."""

    exit_code = 3


class CapabilityError(OrthGPError):
    """A dense computation was requested above its size gate."""

    exit_code = 4


def check_gate(size, limit, what):
    if size > limit:
        raise CapabilityError(f"{what}: size {size} exceeds dense gate {limit}")
