"""Exception hierarchy shared across the package."""


class LLCBenchError(Exception):
    """Base class for all errors raised by llcbench."""


class ContractViolation(LLCBenchError, ValueError):
    """An argument does not satisfy a documented shape or range contract."""


class ConfigurationError(LLCBenchError, ValueError):
    """A configuration value is invalid or inconsistent."""


class AnalyticLLCError(LLCBenchError):
    """The closed-form learning coefficient could not be determined.

    Carries the ``deltas`` that triggered the failure so that callers can
    log the skipped task.
    """

    kind = "analytic-llc-error"

    def __init__(self, message, deltas=None):
        super().__init__(message)
        self.deltas = None if deltas is None else tuple(deltas)


class SigmaNotFound(AnalyticLLCError):
    kind = "sigma-not-found"


class SigmaAmbiguous(AnalyticLLCError):
    kind = "sigma-ambiguous"


class EllZero(AnalyticLLCError):
    kind = "ell-zero"


class ReadingConflict(AnalyticLLCError):
    """The two readings of the third index-set condition give different answers."""

    kind = "sigma-reading-conflict"


class InsufficientSamples(LLCBenchError):
    """A Monte-Carlo volume estimate saw no hits at some threshold."""
