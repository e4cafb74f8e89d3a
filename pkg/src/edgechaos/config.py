"""Experiment plans: parse, validate, serialize, expand into cases.

A plan file is YAML with exactly these top-level keys (all but ``name`` and
``fault_types``/``intensities`` are optional)::

    name: delay-study
    backend: sim                 # sim | remote
    cluster_profile: cluster-4   # cluster-4 | cluster-8 | inline mapping
    topology: chain(3)           # monolith | chain(k)
    deployment_mode: cloud       # cloud | cloud_edge
    fault_types:                 # action name, or mapping with timing
      - network-delay
      - {action: network-loss, duration_s: 3, trigger_every_s: 6}
    intensities: [25, 50, 75, 100]
    workload_modes:              # mode name, or mapping with rates
      - constant
      - {mode: piggyback, burst_size: 10}
    thread_counts: [1, 4]
    timeouts_s: [5]
    window_s: 60
    seed: 42
    retries:
      fault_injection: {max_attempts: 5}
    stabilization_s: 30
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from edgechaos.backend.base import (
    BUILTIN_PROFILES,
    ClusterProfile,
    DeploymentMode,
    ServiceTopology,
    resolve_profile,
)
from edgechaos.errors import PlanError
from edgechaos.faults import (
    DEFAULT_DURATION_S,
    DEFAULT_TRIGGER_EVERY_S,
    INTENSITY_LEVELS,
    FaultAction,
    FaultSpec,
    fault_spec_for,
)
from edgechaos.load import WorkloadMode, WorkloadSpec
from edgechaos.retry import RetryPolicy

PLAN_KEYS = (
    "name", "backend", "cluster_profile", "topology", "deployment_mode",
    "fault_types", "intensities", "workload_modes", "thread_counts",
    "timeouts_s", "window_s", "seed", "retries", "stabilization_s",
)
RETRY_KINDS = ("request_send", "fault_injection", "load_generation", "cluster_validation")
DEFAULT_THREADS = frozenset({1, 2, 4, 8, 16})
TIMEOUT_RANGE_S = (1.0, 10.0)
BACKENDS = ("sim", "remote")
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class FaultType:
    action: str
    duration_s: float = DEFAULT_DURATION_S
    trigger_every_s: float = DEFAULT_TRIGGER_EVERY_S


@dataclass(frozen=True)
class WorkloadModeSpec:
    mode: str
    rate_per_thread_rps: float = 5.0
    background_rps_per_thread: float = 1.0
    burst_size: int = 20
    burst_every_s: float = 30.0


@dataclass(frozen=True)
class RetryPolicySet:
    request_send: RetryPolicy = field(default_factory=RetryPolicy)
    fault_injection: RetryPolicy = field(default_factory=RetryPolicy)
    load_generation: RetryPolicy = field(default_factory=RetryPolicy)
    cluster_validation: RetryPolicy = field(default_factory=RetryPolicy)


@dataclass(frozen=True)
class ExperimentPlan:
    """Campaign definition. Holds raw values; see :func:`validate_plan`."""

    name: str
    fault_types: tuple[FaultType, ...]
    intensities: tuple[int, ...]
    backend: str = "sim"
    cluster_profile: str | ClusterProfile = "cluster-4"
    topology: str = "monolith"
    deployment_mode: str = "cloud"
    workload_modes: tuple[WorkloadModeSpec, ...] = (WorkloadModeSpec("constant"),)
    thread_counts: tuple[int, ...] = (1,)
    timeouts_s: tuple[float, ...] = (5.0,)
    window_s: float = 60.0
    seed: int = 0
    retries: RetryPolicySet = field(default_factory=RetryPolicySet)
    stabilization_s: float = 30.0

    def service_topology(self) -> ServiceTopology:
        return ServiceTopology.parse(self.topology)

    def profile(self) -> ClusterProfile:
        return resolve_profile(self.cluster_profile, self.service_topology())


@dataclass(frozen=True)
class ExperimentCase:
    case_id: str
    ordinal: int
    intensity: int
    fault: FaultSpec
    workload: WorkloadSpec
    deployment_mode: DeploymentMode
    topology: ServiceTopology
    seed: int

    @property
    def fault_type(self) -> str:
        return self.fault.action.value

    @property
    def group_key(self) -> str:
        """Cases sharing this key are normalized against the same baseline."""
        return "|".join((self.fault_type, self.deployment_mode.value, self.topology.label(), self.workload.mode.value))


# -- parsing -----------------------------------------------------------------


def _float(v: Any, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PlanError(f"{what} must be a number, got {v!r}")
    return float(v)


def _int(v: Any, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise PlanError(f"{what} must be an integer, got {v!r}")
    return v


def _list(v: Any, what: str) -> list:
    if not isinstance(v, list):
        raise PlanError(f"{what} must be a list, got {v!r}")
    return v


def _mapping_entry(cls, raw: Any, key: str, what: str):
    if isinstance(raw, str):
        return cls(raw)
    if not isinstance(raw, dict):
        raise PlanError(f"{what} entries must be a name or a mapping, got {raw!r}")
    allowed = {f.name for f in fields(cls)}
    for k in raw:
        if k not in allowed:
            raise PlanError(f"unknown key {k!r} in {what} entry")
    if key not in raw:
        raise PlanError(f"{what} entry is missing {key!r}")
    kw = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        v = raw[f.name]
        if f.name == key:
            kw[f.name] = str(v)
        elif f.name == "burst_size":
            kw[f.name] = _int(v, f"{what}.{f.name}")
        else:
            kw[f.name] = _float(v, f"{what}.{f.name}")
    return cls(**kw)


def _retry_set(raw: Any) -> RetryPolicySet:
    if not isinstance(raw, dict):
        raise PlanError("retries must be a mapping")
    kw = {}
    for kind, pol in raw.items():
        if kind not in RETRY_KINDS:
            raise PlanError(f"unknown key {kind!r} in retries")
        if not isinstance(pol, dict):
            raise PlanError(f"retries.{kind} must be a mapping")
        for k in pol:
            if k not in ("max_attempts", "backoff_initial_ms", "backoff_multiplier"):
                raise PlanError(f"unknown key {k!r} in retries.{kind}")
        attempts = _int(pol.get("max_attempts", 3), f"retries.{kind}.max_attempts")
        initial = _float(pol.get("backoff_initial_ms", 1000.0), f"retries.{kind}.backoff_initial_ms")
        mult = _float(pol.get("backoff_multiplier", 2.0), f"retries.{kind}.backoff_multiplier")
        try:
            kw[kind] = RetryPolicy(attempts, initial, mult)
        except ValueError as exc:
            raise PlanError(f"retries.{kind}: {exc}") from exc
    return RetryPolicySet(**kw)


def plan_from_dict(data: Any) -> ExperimentPlan:
    """Build (without validating) a plan from a decoded document."""
    if not isinstance(data, dict):
        raise PlanError("plan document must be a mapping of keys to values")
    for k in data:
        if k not in PLAN_KEYS:
            raise PlanError(f"unknown key {k!r}")
    for k in ("name", "fault_types", "intensities"):
        if k not in data:
            raise PlanError(f"missing required key {k!r}")
    kw: dict[str, Any] = {"name": str(data["name"])}
    kw["fault_types"] = tuple(
        _mapping_entry(FaultType, x, "action", "fault_types") for x in _list(data["fault_types"], "fault_types")
    )
    kw["intensities"] = tuple(_int(x, "intensities") for x in _list(data["intensities"], "intensities"))
    if "workload_modes" in data:
        kw["workload_modes"] = tuple(
            _mapping_entry(WorkloadModeSpec, x, "mode", "workload_modes")
            for x in _list(data["workload_modes"], "workload_modes")
        )
    if "thread_counts" in data:
        kw["thread_counts"] = tuple(_int(x, "thread_counts") for x in _list(data["thread_counts"], "thread_counts"))
    if "timeouts_s" in data:
        kw["timeouts_s"] = tuple(_float(x, "timeouts_s") for x in _list(data["timeouts_s"], "timeouts_s"))
    for k in ("backend", "topology", "deployment_mode"):
        if k in data:
            kw[k] = str(data[k])
    for k in ("window_s", "stabilization_s"):
        if k in data:
            kw[k] = _float(data[k], k)
    if "seed" in data:
        kw["seed"] = _int(data["seed"], "seed")
    if "retries" in data:
        kw["retries"] = _retry_set(data["retries"])
    if "cluster_profile" in data:
        ref = data["cluster_profile"]
        if isinstance(ref, str):
            kw["cluster_profile"] = ref
        elif isinstance(ref, dict):
            try:
                kw["cluster_profile"] = ClusterProfile.from_dict(ref)
            except (KeyError, TypeError, ValueError) as exc:
                raise PlanError(f"cluster_profile: {exc}") from exc
        else:
            raise PlanError("cluster_profile must be a profile name or a mapping")
    return ExperimentPlan(**kw)


def parse_plan(text: str) -> ExperimentPlan:
    """Parse and validate a plan document; raises :class:`PlanError`."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise PlanError(f"syntax error at {where}: {exc.problem or exc}") from exc
    except yaml.YAMLError as exc:
        raise PlanError(f"syntax error: {exc}") from exc
    plan = plan_from_dict(data)
    violations = validate_plan(plan)
    if violations:
        raise PlanError("; ".join(violations))
    return plan


def load_plan(path) -> ExperimentPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())


def plan_to_dict(plan: ExperimentPlan) -> dict[str, Any]:
    def entry(obj) -> dict[str, Any]:
        return {f.name: getattr(obj, f.name) for f in fields(obj)}

    profile = plan.cluster_profile
    return {
        "name": plan.name,
        "backend": plan.backend,
        "cluster_profile": profile if isinstance(profile, str) else profile.to_dict(),
        "topology": plan.topology,
        "deployment_mode": plan.deployment_mode,
        "fault_types": [entry(f) for f in plan.fault_types],
        "intensities": list(plan.intensities),
        "workload_modes": [entry(w) for w in plan.workload_modes],
        "thread_counts": list(plan.thread_counts),
        "timeouts_s": list(plan.timeouts_s),
        "window_s": plan.window_s,
        "seed": plan.seed,
        "retries": {k: entry(getattr(plan.retries, k)) for k in RETRY_KINDS},
        "stabilization_s": plan.stabilization_s,
    }


def serialize_plan(plan: ExperimentPlan) -> str:
    return yaml.safe_dump(plan_to_dict(plan), sort_keys=False, default_flow_style=None)


# -- validation --------------------------------------------------------------


def validate_plan(plan: ExperimentPlan, allowed_threads=DEFAULT_THREADS) -> list[str]:
    """Every constraint the plan breaks, as readable strings (empty = runnable)."""
    v: list[str] = []
    if not re.fullmatch(r"[A-Za-z0-9][A-Za-z0-9_.-]*", plan.name):
        v.append(f"name {plan.name!r} must be an identifier ([A-Za-z0-9_.-])")
    if plan.backend not in BACKENDS:
        v.append(f"backend must be one of {{{','.join(BACKENDS)}}}")
    if plan.deployment_mode not in {m.value for m in DeploymentMode}:
        v.append("deployment_mode must be one of {cloud,cloud_edge}")

    m = re.fullmatch(r"chain\((-?\d+)\)", plan.topology)
    if plan.topology != "monolith" and not m:
        v.append(f"topology {plan.topology!r} must be 'monolith' or 'chain(k)'")
    elif m:
        k = int(m.group(1))
        if k < 1:
            v.append("chain topology: hop count ≥ 1")
        elif k == 1:
            v.append("chain topology: hop count ≥ 2 (a single hop is a monolith)")

    if isinstance(plan.cluster_profile, str) and plan.cluster_profile not in BUILTIN_PROFILES:
        v.append(f"cluster_profile must be one of {sorted(BUILTIN_PROFILES)} or a mapping")

    for key in ("fault_types", "intensities", "workload_modes", "thread_counts", "timeouts_s"):
        if not getattr(plan, key):
            v.append(f"{key} must be non-empty")

    actions = {a.value for a in FaultAction}
    for ft in plan.fault_types:
        if ft.action not in actions:
            v.append(f"unknown fault type {ft.action!r}")
        if ft.duration_s <= 0:
            v.append(f"{ft.action}: duration_s must be > 0")
        if ft.trigger_every_s <= 0:
            v.append(f"{ft.action}: trigger_every_s must be > 0")
    for i in plan.intensities:
        if i not in INTENSITY_LEVELS:
            v.append(f"intensity must be one of {{25,50,75,100}} (got {i})")
    modes = {w.value for w in WorkloadMode}
    for w in plan.workload_modes:
        if w.mode not in modes:
            v.append(f"unknown workload mode {w.mode!r}")
        if w.rate_per_thread_rps <= 0 or w.background_rps_per_thread <= 0 or w.burst_every_s <= 0:
            v.append(f"{w.mode}: rates and burst period must be > 0")
        if w.burst_size < 0:
            v.append(f"{w.mode}: burst_size must be >= 0")
    for t in plan.thread_counts:
        if t not in allowed_threads:
            v.append(f"thread count must be one of {{{','.join(map(str, sorted(allowed_threads)))}}} (got {t})")
    lo, hi = TIMEOUT_RANGE_S
    if any(not lo <= t <= hi for t in plan.timeouts_s):
        v.append(f"timeouts_s out of range [{lo:g},{hi:g}]")
    if plan.window_s <= 0:
        v.append("window_s must be > 0")
    if plan.stabilization_s < 0:
        v.append("stabilization_s must be >= 0")
    if not 0 <= plan.seed <= _U64:
        v.append("seed must be a 64-bit unsigned integer")

    if not v:
        try:
            profile = plan.profile()
        except (KeyError, ValueError) as exc:
            v.append(f"cluster_profile: {exc}")
        else:
            have = {d.name for d in profile.deployments}
            for hop in plan.service_topology().hops:
                if hop not in have:
                    v.append(f"topology hop {hop!r} has no deployment in cluster_profile")
    return v


# -- expansion ---------------------------------------------------------------


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def derive_seed(plan_seed: int, ordinal: int) -> int:
    return splitmix64((plan_seed ^ splitmix64(ordinal)) & _U64)


def expand_campaign(plan: ExperimentPlan) -> list[ExperimentCase]:
    """Cross product of the plan's dimensions.

    Order, outer to inner: fault type, intensity, workload mode, threads, timeout.
    """
    violations = validate_plan(plan)
    if violations:
        raise PlanError("; ".join(violations))
    topology = plan.service_topology()
    profile = plan.profile()
    mode = DeploymentMode(plan.deployment_mode)
    nodes = profile.node_names(mode)
    cases = []
    grid = itertools.product(plan.fault_types, plan.intensities, plan.workload_modes, plan.thread_counts, plan.timeouts_s)
    for ordinal, (ft, intensity, wm, threads, timeout) in enumerate(grid):
        seed = derive_seed(plan.seed, ordinal)
        fault = fault_spec_for(
            ft.action,
            intensity,
            deployments=topology.hops,
            nodes=nodes,
            seed=seed,
            duration_s=ft.duration_s,
            trigger_every_s=ft.trigger_every_s,
        )
        workload = WorkloadSpec(
            mode=WorkloadMode(wm.mode),
            threads=threads,
            timeout_s=timeout,
            window_s=plan.window_s,
            rate_per_thread_rps=wm.rate_per_thread_rps,
            background_rps_per_thread=wm.background_rps_per_thread,
            burst_size=wm.burst_size,
            burst_every_s=wm.burst_every_s,
        )
        case_id = f"{plan.name}-{ordinal:04d}-{ft.action}-i{intensity}-{wm.mode}-t{threads}-to{timeout:g}"
        cases.append(ExperimentCase(case_id, ordinal, intensity, fault, workload, mode, topology, seed))
    return cases
