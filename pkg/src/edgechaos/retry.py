"""Exponential-backoff retry shared by the orchestrator and the load runner."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, TypeVar

from edgechaos.errors import RetryableError, RetryExhausted

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_initial_ms: float = 1000.0
    backoff_multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.backoff_multiplier < 1.0:
            raise ValueError("backoff_multiplier must be >= 1.0")
        if self.backoff_initial_ms < 0:
            raise ValueError("backoff_initial_ms must be >= 0")

    def backoff_ms(self, failures: int) -> float:
        """Wait after the ``failures``-th failed attempt (1-based)."""
        return self.backoff_initial_ms * self.backoff_multiplier ** (failures - 1)


def with_retry(
    op_kind: str,
    policy: RetryPolicy,
    action: Callable[[], T],
    *,
    sleep: Callable[[float], None] | None = None,
    on_event: Callable[[str, dict], None] | None = None,
) -> T:
    """Run ``action`` until it succeeds or ``policy.max_attempts`` is spent.

    Only :class:`RetryableError` triggers another attempt. ``sleep`` receives
    milliseconds (the backend's ``wait`` on the simulator).
    """
    sleep = sleep or (lambda ms: time.sleep(ms / 1000.0))
    emit = on_event or (lambda event, detail: None)
    for attempt in range(1, policy.max_attempts + 1):
        try:
            result = action()
        except RetryableError as exc:
            emit("attempt_failed", {"op": op_kind, "attempt": attempt, "error": str(exc)})
            logger.info("%s attempt %d/%d failed: %s", op_kind, attempt, policy.max_attempts, exc)
            if attempt == policy.max_attempts:
                raise RetryExhausted(op_kind, attempt, exc) from exc
            wait_ms = policy.backoff_ms(attempt)
            emit("retry_wait", {"op": op_kind, "attempt": attempt, "wait_ms": wait_ms})
            sleep(wait_ms)
        else:
            if attempt > 1:
                emit("attempt_succeeded", {"op": op_kind, "attempt": attempt})
            return result
    raise AssertionError("unreachable")  # pragma: no cover
