"""Experiment lifecycle and campaign loop.

Every experiment walks the same five phases:

    P1  wait for a healthy cluster
    P2  apply the fault and record its confirmed on-time
    P3  drive the workload while the fault timeline toggles activations
    P4  summarize the request records
    P5  remove faults, restart deployments, stabilize, re-validate

A P5 failure stops the campaign: an unrestored cluster would poison every
measurement after it.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from edgechaos.backend.base import DEFAULT_NAMESPACE, Backend
from edgechaos.config import ExperimentCase, ExperimentPlan, RetryPolicySet, expand_campaign
from edgechaos.errors import HealthCheckExhausted, RetryExhausted, UnknownTargetError
from edgechaos.faults import ActivationWindow, FaultHandle, FaultTimeline, apply_fault, build_timeline, remove_fault
from edgechaos.health import HealthPolicy, HealthReport, await_healthy, restart_deployments
from edgechaos.load import ArrivalSchedule, RequestRecord, execute_workload, plan_arrivals
from edgechaos.metrics import BASELINE_INTENSITY, Baseline, DegradationReport, MetricsSummary, correlate_fault_windows, summarize
from edgechaos.retry import RetryPolicy, with_retry

logger = logging.getLogger(__name__)

PHASES = ("P1", "P2", "P3", "P4", "P5")

COMPLETED = "completed"
ABORTED = "aborted"

# Abort reasons
UNHEALTHY_PRECONDITION = "unhealthy-precondition"
FAULT_APPLY = "fault-apply"
LOAD = "load"
RECOVERY = "recovery"

Progress = Callable[[str], None]


@dataclass(frozen=True)
class Event:
    ts_ms: float
    phase: str
    event: str
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"ts_ms": self.ts_ms, "phase": self.phase, "event": self.event, "detail": self.detail}


class EventLog:
    """Append-only, timestamped from the backend clock."""

    def __init__(self, clock: Callable[[], float], sink: Callable[[Event], None] | None = None):
        self._clock = clock
        self._sink = sink
        self.events: list[Event] = []

    def emit(self, phase: str, event: str, **detail: Any) -> Event:
        ev = Event(self._clock(), phase, event, detail)
        self.events.append(ev)
        if self._sink:
            self._sink(ev)
        return ev

    def hook(self, phase: str, **extra: Any) -> Callable[[str, dict], None]:
        """Adapter for ``with_retry``'s ``on_event``."""
        return lambda event, detail: self.emit(phase, event, **extra, **detail)

    def phases(self) -> list[str]:
        return [e.phase for e in self.events]


@dataclass
class ExperimentResult:
    case_id: str
    case: ExperimentCase
    phase_log: list[Event] = field(default_factory=list)
    status: str = COMPLETED
    reason: str | None = None
    fault_on_ts_ms: float | None = None
    fault_off_ts_ms: float | None = None
    load_start_ts_ms: float | None = None
    records: list[RequestRecord] = field(default_factory=list)
    planned_arrivals: int | None = None
    timeline: FaultTimeline | None = None
    summary: MetricsSummary | None = None
    degradation: DegradationReport | None = None

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    @property
    def status_label(self) -> str:
        return self.status if self.completed else f"{ABORTED}({self.reason})"


@dataclass
class CampaignResult:
    plan_name: str
    cases: list[ExperimentCase]
    results: list[ExperimentResult] = field(default_factory=list)
    started_ts_ms: float = 0.0
    finished_ts_ms: float = 0.0
    halted: bool = False

    @property
    def aborted_cases(self) -> list[str]:
        return [r.case_id for r in self.results if not r.completed]

    @property
    def unrun_cases(self) -> list[str]:
        ran = {r.case_id for r in self.results}
        return [c.case_id for c in self.cases if c.case_id not in ran]

    @property
    def events(self) -> list[Event]:
        return [e for r in self.results for e in r.phase_log]


def _shift(timeline: FaultTimeline, offset: float) -> FaultTimeline:
    return FaultTimeline(tuple(ActivationWindow(w.on_ms + offset, w.off_ms + offset) for w in timeline))


def _timeline_hooks(
    timeline: FaultTimeline, switch_on: Callable[[int], None], switch_off: Callable[[int], None]
) -> list[tuple[float, Callable[[], None]]]:
    # Window 0 is switched on by P2. At a shared instant, off runs before on.
    actions = []
    for k, w in enumerate(timeline):
        if k > 0:
            actions.append((w.on_ms, 1, k, switch_on))
        actions.append((w.off_ms, 0, k, switch_off))
    actions.sort(key=lambda a: (a[0], a[1], a[2]))
    return [(t, (lambda fn=fn, k=k: fn(k))) for t, _, k, fn in actions]


def run_experiment(
    case: ExperimentCase,
    backend: Backend,
    policies: RetryPolicySet | None = None,
    *,
    stabilization_s: float = 30.0,
    namespace: str = DEFAULT_NAMESPACE,
    health: HealthPolicy = HealthPolicy(),
    baseline: Baseline | None = None,
    on_event: Callable[[Event], None] | None = None,
    progress: Progress | None = None,
) -> ExperimentResult:
    policies = policies or RetryPolicySet()
    log = EventLog(backend.now_ms, on_event)
    result = ExperimentResult(case.case_id, case, phase_log=log.events)
    say = progress or (lambda line: None)
    if hasattr(backend, "reseed"):
        backend.reseed(case.seed)

    # P1
    say(f"{case.case_id} P1 health gate")
    log.emit("P1", "phase_start", case_id=case.case_id)
    try:
        report = _await(backend, namespace, health, policies.cluster_validation, log, "P1")
    except (HealthCheckExhausted, RetryExhausted) as exc:
        return _abort(result, log, "P1", UNHEALTHY_PRECONDITION, exc)
    log.emit("P1", "phase_end", healthy=report.healthy)

    # P2
    say(f"{case.case_id} P2 fault apply {case.fault_type} i{case.intensity}")
    log.emit("P2", "phase_start", spec=case.fault.to_dict())
    handles: list[FaultHandle] = []

    def apply_once(phase: str) -> FaultHandle:
        h = with_retry(
            "fault_injection",
            policies.fault_injection,
            lambda: apply_fault(backend, case.fault),
            sleep=backend.wait,
            on_event=log.hook(phase),
        )
        handles.append(h)
        log.emit(phase, "fault_applied", fault_id=h.id, targets=list(h.spec.targets))
        return h

    try:
        first = apply_once("P2")
    except (RetryExhausted, UnknownTargetError) as exc:
        _abort(result, log, "P2", FAULT_APPLY, exc)
        return _recover(result, backend, namespace, health, policies, stabilization_s, handles, log, say)
    result.fault_on_ts_ms = first.on_ts_ms
    log.emit("P2", "phase_end", fault_on_ts_ms=first.on_ts_ms)

    # P3
    say(f"{case.case_id} P3 workload {case.workload.mode.value} x{case.workload.threads}")
    log.emit("P3", "phase_start")
    schedule: ArrivalSchedule = plan_arrivals(case.workload, case.seed)
    result.planned_arrivals = schedule.planned
    timeline = build_timeline(case.fault, case.workload.window_s)

    by_window = {0: first}

    def switch_on(k: int) -> None:
        by_window[k] = apply_once("P3")

    def switch_off(k: int) -> None:
        h = by_window.pop(k, None)
        if h is None:
            return
        remove_fault(backend, h)
        handles.remove(h)
        log.emit("P3", "fault_removed", fault_id=h.id)

    hooks = _timeline_hooks(timeline, switch_on, switch_off)
    start = backend.now_ms()
    try:
        records = with_retry(
            "load_generation",
            policies.load_generation,
            lambda: execute_workload(
                backend,
                case.topology,
                schedule,
                case.workload,
                experiment_id=case.case_id,
                hooks=hooks,
                request_policy=policies.request_send,
                on_event=log.hook("P3"),
            ),
            sleep=backend.wait,
            on_event=log.hook("P3"),
        )
    except RetryExhausted as exc:
        reason = FAULT_APPLY if exc.op_kind == "fault_injection" else LOAD
        _abort(result, log, "P3", reason, exc)
        return _recover(result, backend, namespace, health, policies, stabilization_s, handles, log, say)
    result.load_start_ts_ms = start
    result.timeline = _shift(timeline, start)
    result.records = [dataclasses.replace(r, send_ts_ms=r.send_ts_ms + start) for r in records]
    log.emit("P3", "phase_end", requests=len(records), planned=schedule.planned)

    # P4
    log.emit("P4", "phase_start")
    if result.records:
        result.summary = summarize(result.records, case.workload.timeout_s)
        mu, sigma = (baseline.mu, baseline.sigma) if baseline else (None, None)
        result.degradation = correlate_fault_windows(result.records, result.timeline, mu, sigma)
    log.emit(
        "P4",
        "phase_end",
        total=len(result.records),
        failed=result.summary.failed_requests if result.summary else 0,
    )
    return _recover(result, backend, namespace, health, policies, stabilization_s, handles, log, say)


def _await(backend, namespace, health: HealthPolicy, policy: RetryPolicy, log: EventLog, phase: str) -> HealthReport:
    def on_check(attempt: int, report: HealthReport) -> None:
        log.emit(phase, "health_check", attempt=attempt, **report.to_dict())

    return await_healthy(
        backend, namespace, health.interval_ms, health.max_attempts, check_policy=policy, on_check=on_check
    )


def _abort(result: ExperimentResult, log: EventLog, phase: str, reason: str, exc: BaseException) -> ExperimentResult:
    result.status = ABORTED
    result.reason = reason
    log.emit(phase, "aborted", reason=reason, error=str(exc))
    logger.warning("%s aborted (%s): %s", result.case_id, reason, exc)
    return result


def _recover(
    result: ExperimentResult,
    backend: Backend,
    namespace: str,
    health: HealthPolicy,
    policies: RetryPolicySet,
    stabilization_s: float,
    handles: list[FaultHandle],
    log: EventLog,
    say: Progress,
) -> ExperimentResult:
    say(f"{result.case_id} P5 recovery")
    log.emit("P5", "phase_start")
    try:
        # Anything the backend still lists, not only what this run tracked.
        leftover = {h.id: h for h in handles}
        leftover.update({h.id: h for h in backend.active_fault_schedules()})
        for h in leftover.values():
            remove_fault(backend, h)
            log.emit("P5", "fault_removed", fault_id=h.id)
        handles.clear()
        if result.fault_on_ts_ms is not None:
            result.fault_off_ts_ms = backend.now_ms()
        rr = restart_deployments(backend, namespace)
        log.emit("P5", "restart", completed=rr.completed, elapsed_ms=rr.elapsed_ms, active_overlays=list(rr.active_overlays))
        backend.wait(stabilization_s * 1000.0)
        log.emit("P5", "stabilized", waited_ms=stabilization_s * 1000.0)
        _await(backend, namespace, health, policies.cluster_validation, log, "P5")
    except (HealthCheckExhausted, RetryExhausted) as exc:
        return _abort(result, log, "P5", RECOVERY, exc)
    log.emit("P5", "phase_end", status=result.status_label)
    return result


def run_campaign(
    plan: ExperimentPlan,
    backend_factory: Callable[[], Backend],
    out_dir=None,
    progress: Progress | None = None,
    *,
    health: HealthPolicy = HealthPolicy(),
    namespace: str = DEFAULT_NAMESPACE,
) -> CampaignResult:
    """Run every case in expansion order on one backend.

    With ``out_dir`` set, each case is written as soon as it finishes.
    """
    from edgechaos.outputs import CampaignWriter  # outputs imports this module

    cases = expand_campaign(plan)
    backend = backend_factory()
    campaign = CampaignResult(plan.name, cases, started_ts_ms=backend.now_ms())
    writer = CampaignWriter(out_dir, plan, cases) if out_dir is not None else None
    baselines: dict[str, list[float]] = {}
    baseline_intensity = BASELINE_INTENSITY
    say = progress or (lambda line: None)
    for case in cases:
        lat = baselines.get(case.group_key)
        base = Baseline.from_latencies(lat, baseline_intensity) if lat else None
        result = run_experiment(
            case,
            backend,
            plan.retries,
            stabilization_s=plan.stabilization_s,
            namespace=namespace,
            health=health,
            baseline=base,
            progress=say,
        )
        campaign.results.append(result)
        if case.intensity == baseline_intensity and result.summary:
            baselines.setdefault(case.group_key, []).extend(r.latency_ms for r in result.records if r.ok)
        if writer:
            writer.write_result(result)
        say(f"{case.case_id} {result.status_label}")
        if result.reason == RECOVERY:
            campaign.halted = True
            say(f"campaign halted after {case.case_id}: recovery failed")
            break
    campaign.finished_ts_ms = backend.now_ms()
    if writer:
        writer.finish(campaign)
    return campaign


def campaign_phase_order_ok(events: Sequence[Event]) -> bool:
    """True when phases never go backwards within one experiment's log."""
    idx = [PHASES.index(e.phase) for e in events]
    return all(a <= b for a, b in zip(idx, idx[1:]))


__all__ = [
    "ABORTED",
    "COMPLETED",
    "CampaignResult",
    "Event",
    "EventLog",
    "ExperimentResult",
    "PHASES",
    "run_campaign",
    "run_experiment",
    "with_retry",
]
