"""Cluster validation before and after experiments, and recovery actions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from edgechaos.backend.base import Backend, parse_ready_fraction
from edgechaos.errors import HealthCheckExhausted
from edgechaos.retry import RetryPolicy, with_retry

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_MS = 5000.0
DEFAULT_MAX_ATTEMPTS = 60
RESTART_POLL_MS = 250.0
RESTART_LIMIT_MS = 300_000.0


@dataclass(frozen=True)
class PodFailure:
    pod: str
    ready_fraction: str


@dataclass(frozen=True)
class HealthReport:
    checked_at_ms: float
    node_failures: tuple[str, ...] = ()
    active_schedules: tuple[str, ...] = ()
    pod_failures: tuple[PodFailure, ...] = ()

    @property
    def healthy(self) -> bool:
        return not (self.node_failures or self.active_schedules or self.pod_failures)

    def to_dict(self) -> dict:
        return {
            "healthy": self.healthy,
            "checked_at_ms": self.checked_at_ms,
            "node_failures": list(self.node_failures),
            "active_schedules": list(self.active_schedules),
            "pod_failures": [{"pod": p.pod, "ready_fraction": p.ready_fraction} for p in self.pod_failures],
        }


@dataclass(frozen=True)
class HealthPolicy:
    interval_ms: float = DEFAULT_INTERVAL_MS
    max_attempts: int = DEFAULT_MAX_ATTEMPTS


def check_health(backend: Backend, namespace: str) -> HealthReport:
    """One snapshot: nodes Ready, no fault schedules, every pod fully ready."""
    t = backend.now_ms()
    nodes = backend.node_statuses()
    schedules = backend.active_fault_schedules()
    pods = backend.pod_statuses(namespace)
    pod_failures = []
    for p in pods:
        ready, total = parse_ready_fraction(p.ready)
        if ready != total:
            pod_failures.append(PodFailure(p.name, p.ready))
    return HealthReport(
        checked_at_ms=t,
        node_failures=tuple(n.name for n in nodes if not n.ready),
        active_schedules=tuple(h.id for h in schedules),
        pod_failures=tuple(pod_failures),
    )


def await_healthy(
    backend: Backend,
    namespace: str,
    interval_ms: float = DEFAULT_INTERVAL_MS,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    *,
    check_policy: RetryPolicy | None = None,
    on_check: Callable[[int, HealthReport], None] | None = None,
) -> HealthReport:
    """Poll until healthy; at most ``max_attempts`` checks, ``interval_ms`` apart.

    Each check is itself retried under ``check_policy`` when the backend is
    unreachable. Raises :class:`HealthCheckExhausted` with the last report.
    """
    if interval_ms <= 0:
        raise ValueError("interval_ms must be positive")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    policy = check_policy or RetryPolicy(max_attempts=1)
    report = None
    for attempt in range(1, max_attempts + 1):
        report = with_retry("cluster_validation", policy, lambda: check_health(backend, namespace), sleep=backend.wait)
        if on_check:
            on_check(attempt, report)
        if report.healthy:
            return report
        if attempt < max_attempts:
            backend.wait(interval_ms)
    logger.warning("cluster unhealthy after %d checks: %s", max_attempts, report)
    raise HealthCheckExhausted(max_attempts, report)


@dataclass(frozen=True)
class RestartReport:
    namespace: str
    started_at_ms: float
    finished_at_ms: float
    completed: dict[str, bool] = field(default_factory=dict)
    active_overlays: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return all(self.completed.values())

    @property
    def elapsed_ms(self) -> float:
        return self.finished_at_ms - self.started_at_ms


def restart_deployments(
    backend: Backend,
    namespace: str,
    *,
    poll_ms: float = RESTART_POLL_MS,
    limit_ms: float = RESTART_LIMIT_MS,
) -> RestartReport:
    """Restart every deployment at once and wait for all pods to come back.

    Active fault schedules do not block the restart; they are reported.
    """
    started = backend.now_ms()
    overlays = tuple(h.id for h in backend.active_fault_schedules())
    names = backend.restart_deployments(namespace)
    done = {n: False for n in names}
    while True:
        pods = backend.pod_statuses(namespace)
        for name in done:
            mine = [p for p in pods if p.deployment == name]
            done[name] = all(_fully_ready(p.ready) for p in mine)
        if all(done.values()) or backend.now_ms() - started >= limit_ms:
            break
        backend.wait(poll_ms)
    report = RestartReport(namespace, started, backend.now_ms(), dict(done), overlays)
    if overlays:
        logger.info("restart of %s ran with active faults: %s", namespace, ", ".join(overlays))
    return report


def _fully_ready(fraction: str) -> bool:
    r, t = parse_ready_fraction(fraction)
    return r == t
