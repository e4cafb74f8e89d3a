"""On-disk artifacts of a campaign, and the analysis/report passes over them.

A run directory holds::

    requests.csv   one row per request
    summary.csv    one row per experiment that produced records
    zscores.csv    per-case z of mean and p95 against the group baseline
    events.log     JSON lines: ts_ms, phase, event, detail
    manifest.json  schema versions, plan echo, seed, per-case status

Everything is written with LF endings and fixed float precision so a rerun
on the simulator reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from edgechaos.config import ExperimentCase, ExperimentPlan, plan_to_dict
from edgechaos.metrics import (
    BASELINE_INTENSITY,
    CaseData,
    PatternCheck,
    ZScoreTable,
    check_bandwidth_volatility,
    check_delay_amplification,
    check_loss_survivorship,
    check_partition_stability,
    zscore_normalize,
)
from edgechaos.orchestrator import CampaignResult, ExperimentResult

logger = logging.getLogger(__name__)

REQUESTS_CSV = "requests.csv"
SUMMARY_CSV = "summary.csv"
ZSCORES_CSV = "zscores.csv"
EVENTS_LOG = "events.log"
MANIFEST = "manifest.json"
REPORT_MD = "report.md"

REQUEST_COLUMNS = ("experiment_id", "request_id", "send_ts_ms", "latency_ms", "outcome", "error_class")
SUMMARY_COLUMNS = (
    "case_id", "fault_type", "intensity", "mode", "threads", "timeout_s", "deployment_mode", "topology",
    "total", "failed", "failure_rate", "mean_rt_ms", "mean_rt_success_ms", "p95_ms",
)  # fmt: skip
ZSCORE_COLUMNS = ("case_id", "group_key", "z_mean", "z_p95", "degenerate")
SCHEMA_VERSIONS = {REQUESTS_CSV: 1, SUMMARY_CSV: 1, ZSCORES_CSV: 1, EVENTS_LOG: 1, MANIFEST: 1}


def fmt_float(x: float | None) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _parse_float(s: str) -> float | None:
    return float(s) if s != "" else None


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _open(path: Path, mode: str):
    return open(path, mode, encoding="utf-8", newline="")


def request_row(r) -> list[str]:
    return [
        r.experiment_id,
        str(r.request_id),
        fmt_float(r.send_ts_ms),
        fmt_float(r.latency_ms),
        r.outcome.value,
        r.error_class,
    ]


def summary_row(result: ExperimentResult) -> list[str]:
    c, s = result.case, result.summary
    return [
        c.case_id,
        c.fault_type,
        str(c.intensity),
        c.workload.mode.value,
        str(c.workload.threads),
        fmt_float(c.workload.timeout_s),
        c.deployment_mode.value,
        c.topology.label(),
        str(s.total_requests),
        str(s.failed_requests),
        fmt_float(s.failure_rate),
        fmt_float(s.mean_rt_ms),
        fmt_float(s.mean_rt_success_ms),
        fmt_float(s.p95_ms),
    ]


class CampaignWriter:
    """Writes a campaign incrementally; a crash loses at most the running case."""

    def __init__(self, out_dir, plan: ExperimentPlan, cases: Sequence[ExperimentCase]):
        self.dir = Path(out_dir)
        if not self.dir.exists():
            logger.info("creating output directory %s", self.dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.plan = plan
        self.status = {c.case_id: {"case_id": c.case_id, "status": "pending", "reason": None} for c in cases}
        self.halted = False
        with _open(self.dir / REQUESTS_CSV, "w") as fh:
            _writer(fh).writerow(REQUEST_COLUMNS)
        with _open(self.dir / SUMMARY_CSV, "w") as fh:
            _writer(fh).writerow(SUMMARY_COLUMNS)
        (self.dir / EVENTS_LOG).write_bytes(b"")
        self._write_manifest()

    def write_result(self, result: ExperimentResult) -> None:
        with _open(self.dir / REQUESTS_CSV, "a") as fh:
            w = _writer(fh)
            for r in result.records:
                w.writerow(request_row(r))
        if result.summary is not None:
            with _open(self.dir / SUMMARY_CSV, "a") as fh:
                _writer(fh).writerow(summary_row(result))
        with _open(self.dir / EVENTS_LOG, "a") as fh:
            for ev in result.phase_log:
                fh.write(json.dumps(ev.to_dict(), default=str) + "\n")
        self.status[result.case_id].update(status=result.status, reason=result.reason)
        self._write_manifest()

    def finish(self, campaign: CampaignResult) -> ZScoreTable:
        self.halted = campaign.halted
        for case_id in campaign.unrun_cases:
            self.status[case_id]["status"] = "unrun"
        table = analyze_dir(self.dir, strict=False)
        self._write_manifest()
        return table

    def _write_manifest(self) -> None:
        manifest = {
            "schema_versions": SCHEMA_VERSIONS,
            "plan": plan_to_dict(self.plan),
            "seed": self.plan.seed,
            "halted": self.halted,
            "cases": list(self.status.values()),
        }
        tmp = self.dir / (MANIFEST + ".tmp")
        with _open(tmp, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=False)
            fh.write("\n")
        tmp.replace(self.dir / MANIFEST)


def write_outputs(campaign: CampaignResult, plan: ExperimentPlan, out_dir) -> dict:
    """Write a finished campaign in one go and return the manifest."""
    writer = CampaignWriter(out_dir, plan, campaign.cases)
    for result in campaign.results:
        writer.write_result(result)
    writer.finish(campaign)
    return json.loads((Path(out_dir) / MANIFEST).read_text(encoding="utf-8"))


# -- reading a run directory -------------------------------------------------


@dataclass(frozen=True)
class RunCase:
    """One summary.csv row plus that case's successful latencies."""

    data: CaseData
    fault_type: str
    deployment_mode: str
    topology: str
    mode: str
    row: dict[str, str]


def _read_csv(path: Path) -> list[dict[str, str]]:
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found")
    with _open(path, "r") as fh:
        return list(csv.DictReader(fh))


def load_run(run_dir) -> list[RunCase]:
    run_dir = Path(run_dir)
    summary = _read_csv(run_dir / SUMMARY_CSV)
    latencies: dict[str, list[float]] = {}
    for row in _read_csv(run_dir / REQUESTS_CSV):
        if row["outcome"] == "success":
            latencies.setdefault(row["experiment_id"], []).append(float(row["latency_ms"]))
    cases = []
    for row in summary:
        key = "|".join((row["fault_type"], row["deployment_mode"], row["topology"], row["mode"]))
        data = CaseData(row["case_id"], key, int(row["intensity"]), tuple(latencies.get(row["case_id"], ())))
        cases.append(RunCase(data, row["fault_type"], row["deployment_mode"], row["topology"], row["mode"], row))
    return cases


def write_zscores(table: ZScoreTable, path) -> None:
    with _open(Path(path), "w") as fh:
        w = _writer(fh)
        w.writerow(ZSCORE_COLUMNS)
        for r in table.rows:
            w.writerow([r.case_id, r.group_key, fmt_float(r.z_mean), fmt_float(r.z_p95), str(r.degenerate).lower()])


def analyze_dir(run_dir, baseline_intensity: int = BASELINE_INTENSITY, strict: bool = True) -> ZScoreTable:
    """Recompute zscores.csv from the persisted records."""
    cases = load_run(run_dir)
    if not cases:
        raise ValueError(f"{run_dir}: no experiments with records in {SUMMARY_CSV}")
    table = zscore_normalize([c.data for c in cases], baseline_intensity, strict=strict)
    for key in table.skipped_groups:
        logger.warning("no baseline for group %s; its z-scores are not written", key)
    write_zscores(table, Path(run_dir) / ZSCORES_CSV)
    return table


# -- report ------------------------------------------------------------------


def pattern_checks(cases: Iterable[RunCase]) -> list[PatternCheck]:
    """Run every directional check the given cases can decide.

    Cases may come from several run directories; checks comparing two
    configurations are run once per workload mode present on both sides.
    """
    cases = list(cases)

    def pick(fault: str, mode: str | None = None, chain: bool | None = None) -> dict[str, list[CaseData]]:
        out: dict[str, list[CaseData]] = {}
        for c in cases:
            if c.fault_type != fault or (mode and c.deployment_mode != mode):
                continue
            if chain is not None and c.topology.startswith("chain") != chain:
                continue
            out.setdefault(c.data.group_key, []).append(c.data)
        return out

    def by_workload(groups: dict[str, list[CaseData]]) -> dict[str, list[CaseData]]:
        return {k.rsplit("|", 1)[1]: v for k, v in groups.items()}

    checks = []
    pairs = [
        ("network-delay", check_delay_amplification, pick("network-delay", "cloud", True), pick("network-delay", "cloud_edge", False)),
        ("network-bandwidth", check_bandwidth_volatility, pick("network-bandwidth", "cloud_edge", False), pick("network-bandwidth", "cloud", False)),
    ]  # fmt: skip
    for _, check, left, right in pairs:
        lw, rw = by_workload(left), by_workload(right)
        for wl in sorted(set(lw) & set(rw)):
            if _has_baseline(lw[wl]) and _has_baseline(rw[wl]):
                checks.append(_tag(check(lw[wl], rw[wl]), wl))
    for key, group in sorted(pick("network-loss").items()):
        if _has_baseline(group):
            checks.append(_tag(check_loss_survivorship(group), key))
    for key, group in sorted(pick("network-partition", "cloud_edge").items()):
        if _has_baseline(group):
            checks.append(_tag(check_partition_stability(group), key))
    return checks


def _has_baseline(group: Sequence[CaseData]) -> bool:
    return any(c.intensity == BASELINE_INTENSITY and c.latencies for c in group)


def _tag(check: PatternCheck, scope: str) -> PatternCheck:
    return PatternCheck(f"{check.name} [{scope}]", check.passed, check.detail)


def _cell(s: str) -> str:
    return s if s else "n/a"


def build_report(run_dir, compare_dirs: Sequence = ()) -> str:
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{manifest_path} not found")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    cases = load_run(run_dir)
    z = {row["case_id"]: row for row in _read_csv(run_dir / ZSCORES_CSV)}

    lines = [f"# Campaign report: {manifest['plan']['name']}", ""]
    lines.append(f"Seed {manifest['seed']}; {len(cases)} experiments with records.")
    lines.append("")
    by_fault: dict[str, list[RunCase]] = {}
    for c in cases:
        by_fault.setdefault(c.fault_type, []).append(c)
    for fault in sorted(by_fault):
        lines += [f"## {fault}", ""]
        lines.append("| case | intensity | mean_rt_ms | p95_ms | failure_rate | z_mean |")
        lines.append("|---|---:|---:|---:|---:|---:|")
        for c in sorted(by_fault[fault], key=lambda c: (c.data.intensity, c.data.case_id)):
            r = c.row
            zm = z.get(c.data.case_id, {}).get("z_mean", "")
            lines.append(
                f"| {r['case_id']} | {r['intensity']} | {_cell(r['mean_rt_ms'])} | {_cell(r['p95_ms'])} "
                f"| {r['failure_rate']} | {_cell(zm)} |"
            )
        lines.append("")

    pooled = list(cases)
    for d in compare_dirs:
        pooled += load_run(d)
    lines += ["## Pattern checks", ""]
    checks = pattern_checks(pooled)
    if not checks:
        lines.append("No directional check can be decided from these runs.")
    for chk in checks:
        verdict = {True: "PASS", False: "FAIL", None: "UNDECIDED"}[chk.passed]
        lines.append(f"- {verdict} {chk.name}: {chk.detail}")
    lines.append("")

    lines += ["## Aborted", ""]
    aborted = [c for c in manifest["cases"] if c["status"] == "aborted"]
    lines += [f"- {c['case_id']}: {c['reason']}" for c in aborted] or ["none"]
    unrun = [c["case_id"] for c in manifest["cases"] if c["status"] in ("unrun", "pending")]
    if unrun:
        lines += ["", "## Not run", ""]
        lines += [f"- {cid}" for cid in unrun]
    return "\n".join(lines) + "\n"


def write_report(run_dir, compare_dirs: Sequence = ()) -> Path:
    text = build_report(run_dir, compare_dirs)
    path = Path(run_dir) / REPORT_MD
    with _open(path, "w") as fh:
        fh.write(text)
    return path
