"""Per-experiment aggregates, baseline z-scores, fault-window correlation.

Conventions:

* ``mean_rt_ms`` charges every failed request its full timeout budget;
  ``mean_rt_success_ms`` and ``p95_ms`` use successful requests only.
* p95 is the nearest-rank order statistic, ``ceil(0.95 n)``-th smallest.
* A group's baseline is the pooled successful latencies of its cases at the
  baseline intensity; sigma is the population standard deviation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from edgechaos.errors import MissingBaselineError
from edgechaos.faults import FaultTimeline
from edgechaos.load import RequestRecord

SIGMA_FLOOR = 1e-9
BASELINE_INTENSITY = 25


@dataclass(frozen=True)
class MetricsSummary:
    total_requests: int
    failed_requests: int
    mean_rt_ms: float
    mean_rt_success_ms: float | None
    p95_ms: float | None
    error_histogram: dict[str, int] = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        return self.failed_requests / self.total_requests


def p95_nearest_rank(values: Sequence[float] | np.ndarray) -> float | None:
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n == 0:
        return None
    k = (95 * n + 99) // 100  # ceil(0.95 n) without float rounding
    return float(np.partition(arr, k - 1)[k - 1])


def summarize(records: Sequence[RequestRecord], timeout_s: float) -> MetricsSummary:
    if not records:
        raise ValueError("cannot summarize an empty record list")
    ok = np.array([r.latency_ms for r in records if r.ok], dtype=float)
    failed = len(records) - ok.size
    budget = timeout_s * 1000.0
    hist = Counter(r.error_class for r in records if not r.ok)
    return MetricsSummary(
        total_requests=len(records),
        failed_requests=failed,
        mean_rt_ms=(float(ok.sum()) + failed * budget) / len(records),
        mean_rt_success_ms=float(ok.mean()) if ok.size else None,
        p95_ms=p95_nearest_rank(ok),
        error_histogram=dict(sorted(hist.items())),
    )


def experiment_failure_rate(statuses: Iterable[str]) -> float | None:
    """Share of experiments that did not complete."""
    statuses = list(statuses)
    if not statuses:
        return None
    return sum(s != "completed" for s in statuses) / len(statuses)


# -- z-scores ----------------------------------------------------------------


@dataclass(frozen=True)
class Baseline:
    mu: float
    sigma: float
    intensity: int
    n: int

    @property
    def degenerate(self) -> bool:
        return self.sigma < SIGMA_FLOOR

    @classmethod
    def from_latencies(cls, latencies: Sequence[float] | np.ndarray, intensity: int = BASELINE_INTENSITY) -> "Baseline":
        arr = np.asarray(latencies, dtype=float)
        if arr.size == 0:
            raise ValueError("baseline needs at least one successful latency")
        return cls(mu=float(arr.mean()), sigma=float(arr.std(ddof=0)), intensity=intensity, n=int(arr.size))

    def z(self, x: float | None) -> float | None:
        """Deviation of ``x`` in baseline standard deviations."""
        if x is None:
            return None
        if self.degenerate:
            return 0.0 if x == self.mu else math.copysign(math.inf, x - self.mu)
        return (x - self.mu) / self.sigma

    def z_array(self, xs: Sequence[float] | np.ndarray) -> np.ndarray:
        arr = np.asarray(xs, dtype=float)
        if self.degenerate:
            out = np.where(arr == self.mu, 0.0, np.copysign(np.inf, arr - self.mu))
            return out.astype(float)
        return (arr - self.mu) / self.sigma


@dataclass(frozen=True)
class CaseData:
    """What the normalization step needs to know about one experiment."""

    case_id: str
    group_key: str
    intensity: int
    latencies: tuple[float, ...]

    @property
    def mean_success(self) -> float | None:
        return float(np.mean(self.latencies)) if self.latencies else None

    @property
    def p95(self) -> float | None:
        return p95_nearest_rank(self.latencies)

    @classmethod
    def from_records(cls, case_id: str, group_key: str, intensity: int, records: Iterable[RequestRecord]) -> "CaseData":
        return cls(case_id, group_key, intensity, tuple(r.latency_ms for r in records if r.ok))


@dataclass(frozen=True)
class ZRow:
    case_id: str
    group_key: str
    z_mean: float | None
    z_p95: float | None
    degenerate: bool


@dataclass(frozen=True)
class ZScoreTable:
    baselines: dict[str, Baseline]
    rows: tuple[ZRow, ...]
    skipped_groups: tuple[str, ...] = ()


def group_baselines(
    cases: Sequence[CaseData], baseline_intensity: int = BASELINE_INTENSITY, strict: bool = True
) -> tuple[dict[str, Baseline], list[str]]:
    groups: dict[str, list[float]] = {}
    has_case: set[str] = set()
    for c in cases:
        groups.setdefault(c.group_key, [])
        if c.intensity == baseline_intensity:
            has_case.add(c.group_key)
            groups[c.group_key].extend(c.latencies)
    baselines, skipped = {}, []
    for key, lat in groups.items():
        if key not in has_case:
            reason = f"no cases at intensity {baseline_intensity}"
        elif not lat:
            reason = f"no successful requests at intensity {baseline_intensity}"
        else:
            baselines[key] = Baseline.from_latencies(lat, baseline_intensity)
            continue
        if strict:
            raise MissingBaselineError(key, reason)
        skipped.append(key)
    return baselines, skipped


def zscore_normalize(
    cases: Sequence[CaseData], baseline_intensity: int = BASELINE_INTENSITY, strict: bool = True
) -> ZScoreTable:
    """z of each case's mean and p95 against its group's baseline."""
    baselines, skipped = group_baselines(cases, baseline_intensity, strict)
    rows = []
    for c in cases:
        b = baselines.get(c.group_key)
        if b is None:
            continue
        rows.append(ZRow(c.case_id, c.group_key, b.z(c.mean_success), b.z(c.p95), b.degenerate))
    return ZScoreTable(baselines, tuple(rows), tuple(skipped))


# -- fault-window correlation ------------------------------------------------


@dataclass(frozen=True)
class WindowDegradation:
    on_ms: float
    off_ms: float
    requests: int
    pre_mean_ms: float | None
    in_mean_ms: float | None
    amplification: float | None
    onset_lag_ms: float | None


@dataclass(frozen=True)
class DegradationReport:
    windows: tuple[WindowDegradation, ...]


def correlate_fault_windows(
    records: Sequence[RequestRecord], timeline: FaultTimeline, mu: float | None = None, sigma: float | None = None
) -> DegradationReport:
    """Compare each activation window with the equally long stretch before it.

    Windows without any request are left out. Onset lag is the delay from
    activation to the first request that failed or exceeded ``mu + 2 sigma``.
    """
    if not len(timeline):
        raise ValueError("timeline has no activation windows")
    ts = np.array([r.send_ts_ms for r in records], dtype=float)
    threshold = None if mu is None or sigma is None else mu + 2 * sigma
    out = []
    for w in timeline:
        inside = [r for r, t in zip(records, ts) if w.on_ms <= t < w.off_ms]
        if not inside:
            continue
        length = w.off_ms - w.on_ms
        before = [r for r, t in zip(records, ts) if w.on_ms - length <= t < w.on_ms]
        in_mean = _mean_ok(inside)
        pre_mean = _mean_ok(before)
        amp = in_mean / pre_mean if in_mean is not None and pre_mean else None
        onset = None
        if threshold is not None:
            for r in inside:
                if not r.ok or r.latency_ms > threshold:
                    onset = r.send_ts_ms - w.on_ms
                    break
        out.append(WindowDegradation(w.on_ms, w.off_ms, len(inside), pre_mean, in_mean, amp, onset))
    return DegradationReport(tuple(out))


def _mean_ok(records: Sequence[RequestRecord]) -> float | None:
    lat = [r.latency_ms for r in records if r.ok]
    return float(np.mean(lat)) if lat else None


# -- directional patterns ----------------------------------------------------


@dataclass(frozen=True)
class PatternCheck:
    name: str
    passed: bool | None  # None when the data cannot decide
    detail: str


def _by_intensity(cases: Sequence[CaseData]) -> dict[int, np.ndarray]:
    pooled: dict[int, list[float]] = {}
    for c in cases:
        pooled.setdefault(c.intensity, []).extend(c.latencies)
    return {i: np.asarray(v, dtype=float) for i, v in sorted(pooled.items())}


def _single_baseline(cases: Sequence[CaseData], baseline_intensity: int) -> Baseline:
    keys = {c.group_key for c in cases}
    if len(keys) != 1:
        raise ValueError(f"expected cases from one group, got {sorted(keys)}")
    baselines, _ = group_baselines(cases, baseline_intensity)
    return baselines[keys.pop()]


def z_variance_by_intensity(cases: Sequence[CaseData], baseline_intensity: int = BASELINE_INTENSITY) -> dict[int, float]:
    """Population variance of per-request z-scores, pooled per intensity."""
    base = _single_baseline(cases, baseline_intensity)
    return {
        i: float(np.var(base.z_array(lat))) for i, lat in _by_intensity(cases).items() if lat.size
    }


def z_median_by_intensity(cases: Sequence[CaseData], baseline_intensity: int = BASELINE_INTENSITY) -> dict[int, float]:
    base = _single_baseline(cases, baseline_intensity)
    return {i: float(np.median(base.z_array(lat))) for i, lat in _by_intensity(cases).items() if lat.size}


def mean_success_by_intensity(cases: Sequence[CaseData]) -> dict[int, float]:
    return {i: float(lat.mean()) for i, lat in _by_intensity(cases).items() if lat.size}


def _fmt(d: Mapping[int, float]) -> str:
    return ", ".join(f"{k}%={v:.3g}" for k, v in d.items())


def check_delay_amplification(
    cloud_chain: Sequence[CaseData], edge_monolith: Sequence[CaseData], intensities=(75, 100)
) -> PatternCheck:
    """Delay hurts a multi-hop cloud chain more, in baseline units, than an edge monolith."""
    cloud = z_variance_by_intensity(cloud_chain)
    edge = z_variance_by_intensity(edge_monolith)
    common = [i for i in intensities if i in cloud and i in edge]
    passed = bool(common) and all(cloud[i] > edge[i] for i in common)
    return PatternCheck(
        "delay: z-variance(cloud chain) > z-variance(edge monolith)",
        passed if common else None,
        f"cloud chain {_fmt(cloud)}; edge monolith {_fmt(edge)}",
    )


def check_bandwidth_volatility(
    edge: Sequence[CaseData], cloud: Sequence[CaseData], intensities=(50, 75, 100)
) -> PatternCheck:
    ze = z_variance_by_intensity(edge)
    zc = z_variance_by_intensity(cloud)
    common = [i for i in intensities if i in ze and i in zc]
    passed = bool(common) and all(ze[i] > zc[i] for i in common)
    return PatternCheck(
        "bandwidth: z-variance(edge) > z-variance(cloud)",
        passed if common else None,
        f"edge {_fmt(ze)}; cloud {_fmt(zc)}",
    )


def check_loss_survivorship(cases: Sequence[CaseData]) -> PatternCheck:
    means = mean_success_by_intensity(cases)
    if 75 not in means or 100 not in means:
        return PatternCheck("loss: mean success RT at 100% < at 75%", None, f"means {_fmt(means)}")
    return PatternCheck(
        "loss: mean success RT at 100% < at 75%", means[100] < means[75], f"means {_fmt(means)}"
    )


def check_partition_stability(edge: Sequence[CaseData], threshold: float = 0.5) -> PatternCheck:
    med = z_median_by_intensity(edge)
    silent = sorted({c.intensity for c in edge} - set(med))
    detail = f"medians {_fmt(med)}"
    if silent:
        # No successes means no median; the check cannot claim stability there.
        return PatternCheck(
            f"partition: edge median z < {threshold:g} at every intensity",
            None,
            detail + f"; no successful requests at {', '.join(f'{i}%' for i in silent)}",
        )
    return PatternCheck(
        f"partition: edge median z < {threshold:g} at every intensity",
        all(v < threshold for v in med.values()),
        detail,
    )
