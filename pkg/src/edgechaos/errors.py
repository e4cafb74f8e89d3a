"""Exception hierarchy shared across the package.

Only subclasses of :class:`RetryableError` are retried by
:func:`edgechaos.orchestrator.with_retry`; everything else propagates on the
first attempt.
"""

from __future__ import annotations


class RetryableError(Exception):
    """A failure that may succeed if the same call is attempted again."""


class TransportError(RetryableError):
    """The remote backend could not be reached or returned a bad response."""


class FaultRejected(RetryableError):
    """The backend refused a fault specification (transient)."""


class ConfirmationTimeout(RetryableError):
    """A fault was submitted but never showed up as an active schedule."""


class LoadGenerationError(RetryableError):
    """The workload runner failed to start or aborted mid-window."""


class PlanError(ValueError):
    """An experiment plan could not be parsed or failed validation."""


class UnknownTargetError(ValueError):
    """A fault names a deployment or node the cluster does not have."""

    def __init__(self, target: str):
        super().__init__(f"unknown fault target: {target!r}")
        self.target = target


class UnknownNamespaceError(ValueError):
    def __init__(self, namespace: str):
        super().__init__(f"unknown namespace: {namespace!r}")
        self.namespace = namespace


class CapacityError(ValueError):
    """Requested replicas do not fit in the cluster."""


class RetryExhausted(Exception):
    """All attempts of a retried operation failed."""

    def __init__(self, op_kind: str, attempts: int, last_error: BaseException):
        super().__init__(f"{op_kind}: gave up after {attempts} attempts: {last_error}")
        self.op_kind = op_kind
        self.attempts = attempts
        self.last_error = last_error


class HealthCheckExhausted(Exception):
    """The cluster did not become healthy within the allowed checks."""

    def __init__(self, attempts: int, report):
        super().__init__(f"cluster still unhealthy after {attempts} checks")
        self.attempts = attempts
        self.report = report


class MissingBaselineError(ValueError):
    """No baseline-intensity data exists for a configuration group."""

    def __init__(self, group: str, reason: str = "no baseline cases"):
        super().__init__(f"missing baseline for group {group!r}: {reason}")
        self.group = group
