"""Fault specifications: intensity mapping, percentage targeting, timelines.

Network and CPU faults turn intensity into a magnitude and hit every eligible
target; kill and partition faults have no magnitude and use intensity to pick
what fraction of targets is hit.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Sequence

from edgechaos.errors import ConfirmationTimeout

logger = logging.getLogger(__name__)

INTENSITY_LEVELS = (25, 50, 75, 100)

# Anchor points for the two interpolated magnitudes.
DELAY_MS_AT_MIN = 100.0
DELAY_MS_AT_MAX = 1000.0
BANDWIDTH_MBPS_AT_MIN = 10.0
BANDWIDTH_MBPS_AT_MAX = 1.0

# Table-IV style defaults for an activation pattern.
DEFAULT_DURATION_S = 3.0
DEFAULT_TRIGGER_EVERY_S = 3.0


class FaultAction(str, Enum):
    CONTAINER_KILL = "container-kill"
    POD_KILL = "pod-kill"
    NETWORK_DELAY = "network-delay"
    NETWORK_LOSS = "network-loss"
    NETWORK_BANDWIDTH = "network-bandwidth"
    NETWORK_PARTITION = "network-partition"
    CPU_STRESS = "cpu-stress"
    NODE_KILL = "node-kill"

    @property
    def scoped_by_intensity(self) -> bool:
        """True when intensity selects a fraction of targets instead of a magnitude."""
        return self in _SCOPED_ACTIONS

    @property
    def targets_nodes(self) -> bool:
        return self in (FaultAction.NODE_KILL, FaultAction.NETWORK_PARTITION)


_SCOPED_ACTIONS = frozenset(
    {
        FaultAction.CONTAINER_KILL,
        FaultAction.POD_KILL,
        FaultAction.NODE_KILL,
        FaultAction.NETWORK_PARTITION,
    }
)

_MAGNITUDE_FACET = {
    FaultAction.NETWORK_DELAY: "delay_ms",
    FaultAction.NETWORK_LOSS: "drop_prob",
    FaultAction.NETWORK_BANDWIDTH: "bandwidth_mbps",
    FaultAction.CPU_STRESS: "cpu_factor",
}


@dataclass(frozen=True)
class FaultMagnitude:
    """At most one facet is set; kill and partition faults set none."""

    delay_ms: float | None = None
    drop_prob: float | None = None
    bandwidth_mbps: float | None = None
    cpu_factor: float | None = None

    def __post_init__(self) -> None:
        if len(self.as_dict()) > 1:
            raise ValueError(f"magnitude sets more than one facet: {self.as_dict()}")

    @property
    def facet(self) -> str | None:
        d = self.as_dict()
        return next(iter(d)) if d else None

    def as_dict(self) -> dict[str, float]:
        return {
            k: v
            for k, v in (
                ("delay_ms", self.delay_ms),
                ("drop_prob", self.drop_prob),
                ("bandwidth_mbps", self.bandwidth_mbps),
                ("cpu_factor", self.cpu_factor),
            )
            if v is not None
        }

    def matches(self, action: FaultAction) -> bool:
        return self.facet == _MAGNITUDE_FACET.get(action)


@dataclass(frozen=True)
class FaultSpec:
    action: FaultAction
    targets: tuple[str, ...]
    magnitude: FaultMagnitude = field(default_factory=FaultMagnitude)
    value: float = 100.0
    mode: str = "fixed-percent"
    duration_s: float = DEFAULT_DURATION_S
    trigger_every_s: float = DEFAULT_TRIGGER_EVERY_S

    def __post_init__(self) -> None:
        object.__setattr__(self, "action", FaultAction(self.action))
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.mode != "fixed-percent":
            raise ValueError(f"unsupported targeting mode {self.mode!r}")
        if not 0 < self.value <= 100:
            raise ValueError(f"value must be in (0,100], got {self.value}")
        if not self.targets:
            raise ValueError("fault targets must be non-empty")
        if not self.magnitude.matches(self.action):
            raise ValueError(
                f"magnitude {self.magnitude.as_dict()} does not fit action {self.action.value}"
            )

    @property
    def overlapping(self) -> bool:
        """Activations overlap when a window outlasts the trigger period."""
        return self.duration_s > self.trigger_every_s

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action.value,
            "mode": self.mode,
            "value": self.value,
            "targets": list(self.targets),
            "duration_s": self.duration_s,
            "trigger_every_s": self.trigger_every_s,
            "magnitude": self.magnitude.as_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FaultSpec":
        return cls(
            action=FaultAction(d["action"]),
            mode=d.get("mode", "fixed-percent"),
            value=d.get("value", 100.0),
            targets=tuple(d["targets"]),
            duration_s=d.get("duration_s", DEFAULT_DURATION_S),
            trigger_every_s=d.get("trigger_every_s", DEFAULT_TRIGGER_EVERY_S),
            magnitude=FaultMagnitude(**d.get("magnitude", {})),
        )


@dataclass(frozen=True)
class FaultHandle:
    """Returned by a backend once a fault is confirmed active."""

    id: str
    spec: FaultSpec
    on_ts_ms: float

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "on_ts_ms": self.on_ts_ms, "spec": self.spec.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FaultHandle":
        return cls(id=d["id"], on_ts_ms=float(d["on_ts_ms"]), spec=FaultSpec.from_dict(d["spec"]))


@dataclass(frozen=True)
class ActivationWindow:
    on_ms: float
    off_ms: float


@dataclass(frozen=True)
class FaultTimeline:
    activations: tuple[ActivationWindow, ...]

    def __iter__(self):
        return iter(self.activations)

    def __len__(self) -> int:
        return len(self.activations)


def map_intensity(action: FaultAction | str, intensity: int) -> FaultMagnitude:
    """Magnitude for a magnitude-driven fault at one of the four levels.

    Delay interpolates linearly in milliseconds, bandwidth log-linearly in
    Mbps; both hit their anchor values exactly at 25 and 100.
    """
    action = FaultAction(action)
    if intensity not in INTENSITY_LEVELS:
        raise ValueError(
            f"unsupported intensity {intensity!r} for {action.value}; "
            f"expected one of {INTENSITY_LEVELS}"
        )
    if action.scoped_by_intensity:
        return FaultMagnitude()
    # fraction of the way from the lowest to the highest level
    t = Fraction(intensity - INTENSITY_LEVELS[0], INTENSITY_LEVELS[-1] - INTENSITY_LEVELS[0])
    if action is FaultAction.NETWORK_DELAY:
        return FaultMagnitude(delay_ms=float(DELAY_MS_AT_MIN + t * (DELAY_MS_AT_MAX - DELAY_MS_AT_MIN)))
    if action is FaultAction.NETWORK_BANDWIDTH:
        ratio = BANDWIDTH_MBPS_AT_MAX / BANDWIDTH_MBPS_AT_MIN
        if t == 0:
            return FaultMagnitude(bandwidth_mbps=BANDWIDTH_MBPS_AT_MIN)
        if t == 1:
            return FaultMagnitude(bandwidth_mbps=BANDWIDTH_MBPS_AT_MAX)
        return FaultMagnitude(bandwidth_mbps=BANDWIDTH_MBPS_AT_MIN * ratio ** float(t))
    if action is FaultAction.NETWORK_LOSS:
        return FaultMagnitude(drop_prob=intensity / 100)
    if action is FaultAction.CPU_STRESS:
        return FaultMagnitude(cpu_factor=1 + 3 * intensity / 100)
    raise ValueError(f"no intensity mapping for {action.value}")  # pragma: no cover


def target_count(n_eligible: int, value_percent: float) -> int:
    return math.ceil(Fraction(value_percent) * n_eligible / 100)


def select_targets(
    eligible: Sequence[str], mode: str, value_percent: float, seed: int
) -> list[str]:
    """Pick ``ceil(value% * len(eligible))`` items from a seeded shuffle."""
    if not eligible:
        raise ValueError("cannot select targets from an empty eligible set")
    if mode != "fixed-percent":
        raise ValueError(f"unsupported targeting mode {mode!r}")
    if not 0 < value_percent <= 100:
        raise ValueError(f"value must be in (0,100], got {value_percent}")
    pool = list(eligible)
    random.Random(seed).shuffle(pool)
    return pool[: target_count(len(pool), value_percent)]


def build_timeline(spec: FaultSpec, window_s: float) -> FaultTimeline:
    """Recurring activation windows starting at 0, clipped at the window end."""
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if spec.duration_s <= 0:
        raise ValueError("fault duration_s must be positive")
    if spec.trigger_every_s <= 0:
        raise ValueError("fault trigger_every_s must be positive")
    window_ms = window_s * 1000.0
    every_ms = spec.trigger_every_s * 1000.0
    duration_ms = spec.duration_s * 1000.0
    windows = []
    k = 0
    while (on := k * every_ms) < window_ms:
        windows.append(ActivationWindow(on, min(on + duration_ms, window_ms)))
        k += 1
    return FaultTimeline(tuple(windows))


def fault_spec_for(
    action: FaultAction | str,
    intensity: int,
    *,
    deployments: Sequence[str],
    nodes: Sequence[str],
    seed: int,
    duration_s: float = DEFAULT_DURATION_S,
    trigger_every_s: float = DEFAULT_TRIGGER_EVERY_S,
) -> FaultSpec:
    """Concrete spec for one campaign cell."""
    action = FaultAction(action)
    magnitude = map_intensity(action, intensity)
    eligible = nodes if action.targets_nodes else deployments
    if action.scoped_by_intensity:
        value = float(intensity)
        targets = select_targets(eligible, "fixed-percent", value, seed)
    else:
        value = 100.0
        targets = list(eligible)
    return FaultSpec(
        action=action,
        targets=tuple(targets),
        magnitude=magnitude,
        value=value,
        duration_s=duration_s,
        trigger_every_s=trigger_every_s,
    )


def apply_fault(
    backend, spec: FaultSpec, *, confirm_timeout_ms: float = 30_000, poll_ms: float = 500
) -> FaultHandle:
    """Submit ``spec`` and block until the backend lists it as active."""
    handle = backend.apply_fault(spec)
    deadline = backend.now_ms() + confirm_timeout_ms
    while True:
        if any(h.id == handle.id for h in backend.active_fault_schedules()):
            logger.debug("fault %s confirmed at %.1f ms", handle.id, handle.on_ts_ms)
            return handle
        if backend.now_ms() >= deadline:
            raise ConfirmationTimeout(f"fault {handle.id} not confirmed within {confirm_timeout_ms} ms")
        backend.wait(poll_ms)


def remove_fault(backend, handle: FaultHandle) -> None:
    """Idempotent: removing an already-removed handle is a no-op."""
    backend.remove_fault(handle)
