"""HTTP client side of the connector protocol.

Remote systems implement two endpoints:

    POST {endpoint}/respond   JSON ConnectorRequest -> JSON ConnectorResponse
    GET  {endpoint}/ping      -> 200 within the timeout

One request per turn, one attempt, a hard timeout; anything else is an
error surfaced to failover. Response validation is strict: unknown slot
keys or an empty response_text (without end_session) count as malformed.
The full protocol is documented in docs/connector-protocol.md.
"""

from __future__ import annotations

import httpx

from ..errors import ConnectorTimeoutError, ConnectorError, MalformedResponseError
from ..orchestrator import ConnectorRequest, ConnectorResponse
from ..registry import ProbeResult, SystemDescriptor

DEFAULT_TIMEOUT = 10.0


class HttpConnector:
    def __init__(
        self,
        timeout_seconds: float = DEFAULT_TIMEOUT,
        allowed_slots: frozenset[str] | set[str] = frozenset(),
        client: httpx.Client | None = None,
    ):
        self.timeout_seconds = timeout_seconds
        self.allowed_slots = frozenset(allowed_slots)
        self._client = client or httpx.Client(timeout=timeout_seconds)

    def close(self) -> None:
        self._client.close()

    def _headers(self, descriptor: SystemDescriptor) -> dict[str, str]:
        if descriptor.bearer_token:
            return {"Authorization": f"Bearer {descriptor.bearer_token}"}
        return {}

    def call(self, descriptor: SystemDescriptor, request: ConnectorRequest) -> ConnectorResponse:
        url = descriptor.endpoint.rstrip("/") + "/respond"
        try:
            http_response = self._client.post(
                url,
                json=request.to_dict(),
                headers=self._headers(descriptor),
                timeout=self.timeout_seconds,
            )
        except httpx.TimeoutException as exc:
            raise ConnectorTimeoutError(f"{descriptor.system_id}: no response within "
                                        f"{self.timeout_seconds}s") from exc
        except httpx.HTTPError as exc:
            raise ConnectorError(f"{descriptor.system_id}: transport failure: {exc}") from exc
        if http_response.status_code != 200:
            raise ConnectorError(f"{descriptor.system_id}: HTTP {http_response.status_code}")
        try:
            body = http_response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"{descriptor.system_id}: response is not JSON") from exc
        return self.parse_response(body, descriptor.system_id)

    def parse_response(self, body: dict, system_id: str) -> ConnectorResponse:
        if not isinstance(body, dict) or "response_text" not in body:
            raise MalformedResponseError(f"{system_id}: missing response_text")
        text = body["response_text"]
        if not isinstance(text, str):
            raise MalformedResponseError(f"{system_id}: response_text must be a string")
        end_session = bool(body.get("end_session", False))
        if not text and not end_session:
            raise MalformedResponseError(f"{system_id}: empty response_text without end_session")
        updates = body.get("state_updates")
        if updates is not None:
            if not isinstance(updates, dict):
                raise MalformedResponseError(f"{system_id}: state_updates must be a mapping")
            unknown = set(updates) - self.allowed_slots
            if unknown:
                raise MalformedResponseError(
                    f"{system_id}: state_updates carry unknown slots {sorted(unknown)}"
                )
            updates = {str(k): str(v) for k, v in updates.items()}
        return ConnectorResponse(response_text=text, state_updates=updates, end_session=end_session)

    def ping(self, descriptor: SystemDescriptor) -> ProbeResult:
        url = descriptor.endpoint.rstrip("/") + "/ping"
        try:
            response = self._client.get(url, headers=self._headers(descriptor), timeout=self.timeout_seconds)
        except httpx.TimeoutException:
            return ProbeResult.TIMEOUT
        except httpx.HTTPError:
            return ProbeResult.ERROR
        return ProbeResult.OK if response.status_code == 200 else ProbeResult.ERROR
