"""JSON-over-HTTP adapter for a cluster agent.

Routes::

    GET    /nodes             -> [{name, ready, is_edge}]
    GET    /pods?ns=NS        -> [{name, deployment, node, phase, ready}]
    GET    /faults            -> [{id, on_ts_ms, spec}]
    POST   /faults            <- {action, mode, value, targets, duration_s, trigger_every_s, magnitude}
                              -> {id, on_ts_ms, spec}
    DELETE /faults/{id}       -> 204 (404 is treated as already removed)
    POST   /restart?ns=NS     -> {deployments: [...]}
    POST   /request           <- {topology: {kind, hops}, timeout_s}
                              -> {status, elapsed_ms, latency_ms, failing_hop}

Connection problems and 5xx replies raise :class:`TransportError`; a 409 or
503 on ``POST /faults`` raises :class:`FaultRejected`. Both are retryable.
"""

from __future__ import annotations

import time
from typing import Any

import requests

from edgechaos.backend.base import Backend, NodeStatus, PodStatus, RequestOutcome, ServiceTopology
from edgechaos.errors import FaultRejected, TransportError, UnknownNamespaceError, UnknownTargetError
from edgechaos.faults import FaultHandle, FaultSpec


class RemoteBackend(Backend):
    def __init__(self, endpoint: str, timeout_s: float = 30.0, session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._t0 = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def wait(self, ms: float) -> None:
        if ms > 0:
            time.sleep(ms / 1000.0)

    def _call(self, method: str, path: str, *, params=None, body=None, timeout_s: float | None = None) -> Any:
        url = f"{self.endpoint}{path}"
        try:
            resp = self._session.request(
                method, url, params=params, json=body, timeout=timeout_s or self.timeout_s
            )
        except requests.RequestException as exc:
            raise TransportError(f"{method} {path}: {exc}") from exc
        if resp.status_code >= 500 and not (path == "/faults" and resp.status_code == 503):
            raise TransportError(f"{method} {path}: HTTP {resp.status_code}")
        if resp.status_code == 404 and method == "DELETE":
            return None
        if path == "/faults" and method == "POST" and resp.status_code in (409, 503):
            raise FaultRejected(_error_text(resp))
        if resp.status_code >= 400:
            payload = _json_or_empty(resp)
            if "target" in payload:
                raise UnknownTargetError(payload["target"])
            if "namespace" in payload:
                raise UnknownNamespaceError(payload["namespace"])
            raise ValueError(f"{method} {path}: HTTP {resp.status_code}: {_error_text(resp)}")
        if resp.status_code == 204 or not resp.content:
            return None
        return resp.json()

    def node_statuses(self) -> list[NodeStatus]:
        return [NodeStatus(d["name"], bool(d["ready"]), bool(d["is_edge"])) for d in self._call("GET", "/nodes")]

    def pod_statuses(self, namespace: str) -> list[PodStatus]:
        return [
            PodStatus(d["name"], d["deployment"], d.get("node"), d["phase"], d["ready"])
            for d in self._call("GET", "/pods", params={"ns": namespace})
        ]

    def active_fault_schedules(self) -> list[FaultHandle]:
        return [FaultHandle.from_dict(d) for d in self._call("GET", "/faults")]

    def apply_fault(self, spec: FaultSpec) -> FaultHandle:
        return FaultHandle.from_dict(self._call("POST", "/faults", body=spec.to_dict()))

    def remove_fault(self, handle: FaultHandle) -> None:
        self._call("DELETE", f"/faults/{handle.id}")

    def restart_deployments(self, namespace: str) -> list[str]:
        return list(self._call("POST", "/restart", params={"ns": namespace})["deployments"])

    def send_request(self, topology: ServiceTopology, timeout_s: float) -> RequestOutcome:
        body = {"topology": {"kind": topology.kind, "hops": list(topology.hops)}, "timeout_s": timeout_s}
        # the agent enforces the budget; allow slack for the round trip
        return RequestOutcome.from_dict(self._call("POST", "/request", body=body, timeout_s=timeout_s + 5))


def _json_or_empty(resp: requests.Response) -> dict:
    try:
        data = resp.json()
    except ValueError:
        return {}
    return data if isinstance(data, dict) else {}


def _error_text(resp: requests.Response) -> str:
    return str(_json_or_empty(resp).get("error") or resp.text or resp.reason)
