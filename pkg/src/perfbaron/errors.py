"""Shared error types mapped onto API error codes and CLI exit codes."""


class PerfbaronError(Exception):
    """Base class for domain errors."""


class NotFoundError(PerfbaronError):
    pass


class ConflictError(PerfbaronError):
    pass


class VersionConflictError(ConflictError):
    """Optimistic-concurrency check failed on a triage transition."""


class ValidationError(PerfbaronError):
    pass


class IllegalTransitionError(PerfbaronError):
    pass
