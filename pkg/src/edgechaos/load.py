"""Workload generation: arrival planning, execution, per-request records."""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from edgechaos.backend.base import Backend, Outcome, RequestOutcome, ServiceTopology
from edgechaos.errors import RetryExhausted
from edgechaos.retry import RetryPolicy, with_retry

logger = logging.getLogger(__name__)

ERROR_CLASSES = {
    Outcome.TIMEOUT: "TIMEOUT",
    Outcome.CONNECTION_ERROR: "CONN",
    Outcome.SERVER_ERROR: "HTTP_5XX",
}


class WorkloadMode(str, Enum):
    CONSTANT = "constant"
    CONCURRENT = "concurrent"
    PIGGYBACK = "piggyback"

    @property
    def open_loop(self) -> bool:
        return self is not WorkloadMode.CONCURRENT


@dataclass(frozen=True)
class WorkloadSpec:
    mode: WorkloadMode
    threads: int
    timeout_s: float
    window_s: float
    rate_per_thread_rps: float = 5.0
    background_rps_per_thread: float = 1.0
    burst_size: int = 20
    burst_every_s: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", WorkloadMode(self.mode))
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass(frozen=True)
class ArrivalSchedule:
    """Open-loop send times per thread (ms from load start), or a closed-loop marker."""

    mode: WorkloadMode
    threads: int
    window_ms: float
    per_thread: tuple[tuple[float, ...], ...] | None

    @property
    def closed_loop(self) -> bool:
        return self.per_thread is None

    @property
    def planned(self) -> int | None:
        return None if self.per_thread is None else sum(len(t) for t in self.per_thread)


@dataclass(frozen=True)
class RequestRecord:
    experiment_id: str
    request_id: int
    send_ts_ms: float
    outcome: Outcome
    latency_ms: float | None = None
    error_class: str = ""

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def classify_error(outcome: Outcome | RequestOutcome) -> str:
    status = outcome.status if isinstance(outcome, RequestOutcome) else Outcome(outcome)
    if status is Outcome.SUCCESS:
        raise ValueError("not a failure: successful outcomes have no error class")
    return ERROR_CLASSES[status]


def _periodic(start: float, period: float, end: float) -> list[float]:
    out = []
    k = 0
    while (t := start + k * period) < end:
        out.append(t)
        k += 1
    return out


def plan_arrivals(workload: WorkloadSpec, seed: int) -> ArrivalSchedule:
    """Arrival plan for one experiment.

    Each thread's periodic stream starts at a seeded offset within its first
    period, so threads do not fire in lockstep.
    """
    window_ms = workload.window_s * 1000.0
    if workload.mode is WorkloadMode.CONCURRENT:
        return ArrivalSchedule(workload.mode, workload.threads, window_ms, None)
    rng = random.Random(seed)
    threads = []
    if workload.mode is WorkloadMode.CONSTANT:
        if workload.rate_per_thread_rps <= 0:
            raise ValueError("constant mode needs a positive rate_per_thread_rps")
        period = 1000.0 / workload.rate_per_thread_rps
        for _ in range(workload.threads):
            threads.append(tuple(_periodic(rng.uniform(0, period), period, window_ms)))
    else:
        if workload.background_rps_per_thread <= 0 or workload.burst_every_s <= 0:
            raise ValueError("piggyback mode needs positive background rate and burst period")
        period = 1000.0 / workload.background_rps_per_thread
        bursts = _periodic(0.0, workload.burst_every_s * 1000.0, window_ms)
        for _ in range(workload.threads):
            background = _periodic(rng.uniform(0, period), period, window_ms)
            burst_times = [t for t in bursts for _ in range(workload.burst_size)]
            threads.append(tuple(sorted(background + burst_times)))
    return ArrivalSchedule(workload.mode, workload.threads, window_ms, tuple(threads))


Hook = tuple[float, Callable[[], None]]


def execute_workload(
    transport: Backend,
    topology: ServiceTopology,
    schedule: ArrivalSchedule,
    workload: WorkloadSpec,
    *,
    experiment_id: str = "",
    hooks: Iterable[Hook] = (),
    request_policy: RetryPolicy | None = None,
    on_event: Callable[[str, dict], None] | None = None,
) -> list[RequestRecord]:
    """Issue every planned request and return one record per request, in send order.

    ``hooks`` are ``(t_ms, fn)`` pairs run at their load-relative time, ahead
    of any request due at the same instant; the orchestrator uses them to
    switch fault activations on and off while traffic flows. Late requests
    are sent immediately, never skipped.
    """
    policy = request_policy or RetryPolicy(max_attempts=1)
    start = transport.now_ms()
    queue: list[tuple[float, int, int, int]] = []  # (t, kind, a, b); kind 0 = hook, 1 = request
    hook_fns: list[Callable[[], None]] = []
    for t, fn in hooks:
        heapq.heappush(queue, (t, 0, len(hook_fns), 0))
        hook_fns.append(fn)
    if schedule.per_thread is not None:
        for th, times in enumerate(schedule.per_thread):
            for i, t in enumerate(times):
                heapq.heappush(queue, (t, 1, th, i))
    else:
        for th in range(schedule.threads):
            heapq.heappush(queue, (0.0, 1, th, 0))

    records: list[RequestRecord] = []
    while queue:
        t, kind, a, b = heapq.heappop(queue)
        transport.wait_until(start + t)
        if kind == 0:
            hook_fns[a]()
            continue
        send_ts = transport.now_ms() - start
        outcome = _send(transport, topology, workload.timeout_s, policy, on_event)
        records.append(_record(experiment_id, len(records), send_ts, outcome))
        if schedule.closed_loop:
            nxt = max(send_ts + outcome.elapsed_ms, transport.now_ms() - start)
            if nxt < schedule.window_ms:
                heapq.heappush(queue, (nxt, 1, a, b + 1))
    logger.debug("%s: %d requests issued", experiment_id, len(records))
    return records


def _send(transport, topology, timeout_s, policy, on_event) -> RequestOutcome:
    try:
        return with_retry(
            "request_send",
            policy,
            lambda: transport.send_request(topology, timeout_s),
            sleep=transport.wait,
            on_event=on_event,
        )
    except RetryExhausted as exc:
        return RequestOutcome(
            Outcome.CONNECTION_ERROR, elapsed_ms=timeout_s * 1000.0, failing_hop=f"transport: {exc.last_error}"
        )


def _record(experiment_id: str, request_id: int, send_ts: float, outcome: RequestOutcome) -> RequestRecord:
    if outcome.ok:
        return RequestRecord(experiment_id, request_id, send_ts, outcome.status, outcome.latency_ms, "")
    return RequestRecord(experiment_id, request_id, send_ts, outcome.status, None, classify_error(outcome))

