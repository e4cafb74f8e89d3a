"""Fault-injection campaigns against cloud-edge container clusters.

Plans expand into experiments; each experiment runs a health gate, a fault,
a workload and a recovery, on a simulated cluster or a remote one. Results
are summarized, normalized against a low-intensity baseline, and written as
CSV plus a JSON-lines event log.
"""

from edgechaos.backend import ClusterProfile, DeploymentMode, RemoteBackend, ServiceTopology, SimCluster
from edgechaos.config import ExperimentCase, ExperimentPlan, expand_campaign, load_plan, parse_plan
from edgechaos.faults import FaultAction, FaultSpec, build_timeline, map_intensity, select_targets
from edgechaos.health import await_healthy, check_health
from edgechaos.load import WorkloadMode, WorkloadSpec, execute_workload, plan_arrivals
from edgechaos.metrics import summarize, zscore_normalize
from edgechaos.orchestrator import CampaignResult, ExperimentResult, run_campaign, run_experiment
from edgechaos.outputs import analyze_dir, write_outputs, write_report
from edgechaos.retry import RetryPolicy, with_retry

__version__ = "0.1.0"

__all__ = [
    "CampaignResult",
    "ClusterProfile",
    "DeploymentMode",
    "ExperimentCase",
    "ExperimentPlan",
    "ExperimentResult",
    "FaultAction",
    "FaultSpec",
    "RemoteBackend",
    "RetryPolicy",
    "ServiceTopology",
    "SimCluster",
    "WorkloadMode",
    "WorkloadSpec",
    "analyze_dir",
    "await_healthy",
    "build_timeline",
    "check_health",
    "execute_workload",
    "expand_campaign",
    "load_plan",
    "map_intensity",
    "parse_plan",
    "plan_arrivals",
    "run_campaign",
    "run_experiment",
    "select_targets",
    "summarize",
    "with_retry",
    "write_outputs",
    "write_report",
    "zscore_normalize",
]
