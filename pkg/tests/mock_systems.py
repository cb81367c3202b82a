"""In-repo test doubles for remote dialog systems.

FakeConnector plugs straight into the orchestrator (no sockets) and
records every ConnectorRequest per system. MockDialogSystem is a real
threaded HTTP server implementing the connector protocol (/respond and
/ping) for exercising the HTTP client, timeouts, and end-to-end flows.
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from dialoghub.errors import ConnectorError, ConnectorTimeoutError
from dialoghub.orchestrator import ConnectorRequest, ConnectorResponse
from dialoghub.registry import ProbeResult, SystemDescriptor


def echo_behavior(request: ConnectorRequest) -> ConnectorResponse:
    return ConnectorResponse(response_text=f"you said: {request.user_utterance}")


def scripted(text: str, state_updates: dict | None = None, end_session: bool = False):
    def behavior(_request: ConnectorRequest) -> ConnectorResponse:
        return ConnectorResponse(response_text=text, state_updates=state_updates, end_session=end_session)

    return behavior


def failing(code: str = "TIMEOUT"):
    def behavior(_request: ConnectorRequest) -> ConnectorResponse:
        if code == "TIMEOUT":
            raise ConnectorTimeoutError("mock timeout")
        raise ConnectorError("mock transport failure")

    return behavior


class FakeConnector:
    """Connector test double: system_id -> behavior(request)."""

    def __init__(self, behaviors: dict | None = None):
        self.behaviors = behaviors or {}
        self.requests: dict[str, list[ConnectorRequest]] = {}

    def set(self, system_id: str, behavior) -> None:
        self.behaviors[system_id] = behavior

    def call(self, descriptor: SystemDescriptor, request: ConnectorRequest) -> ConnectorResponse:
        self.requests.setdefault(descriptor.system_id, []).append(request)
        behavior = self.behaviors.get(descriptor.system_id, echo_behavior)
        return behavior(request)

    def ping(self, descriptor: SystemDescriptor) -> ProbeResult:
        behavior = self.behaviors.get(descriptor.system_id, echo_behavior)
        try:
            behavior(ConnectorRequest(session_token="ping", user_utterance="", dialog_state={}))
        except ConnectorTimeoutError:
            return ProbeResult.TIMEOUT
        except ConnectorError:
            return ProbeResult.ERROR
        return ProbeResult.OK


class MockDialogSystem:
    """A real HTTP dialog system speaking the connector protocol.

    `responder(payload: dict) -> dict` maps a ConnectorRequest body to a
    ConnectorResponse body; `delay_seconds` simulates a slow system.
    """

    def __init__(self, responder=None, delay_seconds: float = 0.0, status_code: int = 200):
        self.responder = responder or (lambda payload: {"response_text": f"you said: {payload['user_utterance']}"})
        self.delay_seconds = delay_seconds
        self.status_code = status_code
        self.requests: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def do_GET(self):
                if self.path == "/ping":
                    if outer.delay_seconds:
                        time.sleep(outer.delay_seconds)
                    self.send_response(200)
                    self.end_headers()
                    self.wfile.write(b"ok")
                else:
                    self.send_response(404)
                    self.end_headers()

            def do_POST(self):
                if self.path != "/respond":
                    self.send_response(404)
                    self.end_headers()
                    return
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append(payload)
                if outer.delay_seconds:
                    time.sleep(outer.delay_seconds)
                body = json.dumps(outer.responder(payload)).encode("utf-8")
                self.send_response(outer.status_code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def start(self) -> "MockDialogSystem":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
