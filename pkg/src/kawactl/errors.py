"""Exception hierarchy. Each class carries the CLI exit status for its category."""


class KawaError(Exception):
    category = "internal"
    exit_code = 1


class ConfigError(KawaError):
    """Malformed or unparsable configuration (bad JSON, unknown keys, bad presets)."""

    category = "parse"
    exit_code = 2


class ValidationError(KawaError):
    category = "validation"
    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class HypothesisError(KawaError):
    """A hypothesis of the control theorems fails (e.g. |g1| dips below g0)."""

    category = "hypothesis"
    exit_code = 4


class ConvergenceError(KawaError):
    category = "convergence"
    exit_code = 5

    def __init__(self, message, iterations=None, contraction=None):
        super().__init__(message)
        self.iterations = iterations
        self.contraction = contraction


class DivergenceError(ConvergenceError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SolverError(KawaError):
    """Singular or ill-conditioned banded system."""


class DimensionError(KawaError):
    pass


class PreconditionError(KawaError):
    pass


class DomainError(KawaError, ValueError):
    """Parameter outside its admissible range."""

    category = "parse"
    exit_code = 2
