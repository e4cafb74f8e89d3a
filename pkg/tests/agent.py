"""A tiny HTTP cluster agent over SimCluster, for exercising RemoteBackend."""

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from edgechaos.backend import ServiceTopology
from edgechaos.errors import UnknownNamespaceError, UnknownTargetError
from edgechaos.faults import FaultHandle, FaultSpec


class Agent:
    def __init__(self, sim, speed=None):
        self.sim = sim
        # With ``speed`` set, virtual time follows wall time scaled by it.
        self.speed = speed
        self._t0 = time.monotonic()
        self._lock = threading.Lock()
        self.reject_faults = 0  # answer the next N fault posts with 503
        self.fail_gets = 0  # answer the next N GETs with 500
        self.calls: list[tuple[str, str]] = []
        agent = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, code, body=None):
                data = b"" if body is None else json.dumps(body).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def _body(self):
                n = int(self.headers.get("Content-Length") or 0)
                return json.loads(self.rfile.read(n) or b"null")

            def _dispatch(self, method):
                url = urlparse(self.path)
                q = parse_qs(url.query)
                agent.calls.append((method, url.path))
                try:
                    agent.tick()
                    code, body = agent.handle(method, url.path, q, self._body() if method == "POST" else None)
                except UnknownTargetError as exc:
                    code, body = 404, {"error": str(exc), "target": exc.target}
                except UnknownNamespaceError as exc:
                    code, body = 404, {"error": str(exc), "namespace": exc.namespace}
                self._send(code, body)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_DELETE(self):
                self._dispatch("DELETE")

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def tick(self):
        if self.speed is None:
            return
        with self._lock:
            target = (time.monotonic() - self._t0) * 1000.0 * self.speed
            if target > self.sim.now_ms():
                self.sim.step_until(target)

    def handle(self, method, path, q, body):
        sim = self.sim
        if method == "GET" and self.fail_gets:
            self.fail_gets -= 1
            return 500, {"error": "busy"}
        if (method, path) == ("GET", "/nodes"):
            return 200, [{"name": n.name, "ready": n.ready, "is_edge": n.is_edge} for n in sim.node_statuses()]
        if (method, path) == ("GET", "/pods"):
            pods = sim.pod_statuses(q["ns"][0])
            return 200, [{"name": p.name, "deployment": p.deployment, "node": p.node, "phase": p.phase, "ready": p.ready} for p in pods]
        if (method, path) == ("GET", "/faults"):
            return 200, [h.to_dict() for h in sim.active_fault_schedules()]
        if (method, path) == ("POST", "/faults"):
            if self.reject_faults:
                self.reject_faults -= 1
                return 503, {"error": "controller busy"}
            return 201, sim.apply_fault(FaultSpec.from_dict(body)).to_dict()
        if method == "DELETE" and path.startswith("/faults/"):
            fid = path.rsplit("/", 1)[1]
            live = {h.id: h for h in sim.active_fault_schedules()}
            if fid not in live:
                return 404, {"error": "no such fault"}
            sim.remove_fault(live[fid])
            return 204, None
        if (method, path) == ("POST", "/restart"):
            return 200, {"deployments": sim.restart_deployments(q["ns"][0])}
        if (method, path) == ("POST", "/request"):
            topo = ServiceTopology(body["topology"]["kind"], tuple(body["topology"]["hops"]))
            return 200, sim.send_request(topo, body["timeout_s"]).to_dict()
        return 404, {"error": f"no route {method} {path}"}

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


__all__ = ["Agent", "FaultHandle"]
