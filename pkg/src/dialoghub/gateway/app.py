"""The network surface: chat (client) endpoints, dashboard endpoints,
admin endpoints, and the wiring that assembles registry, store,
orchestrator, and connector into one service.

Client-facing responses carry a random session token and dialog text
only; nothing in them ever identifies which system is talking. Dashboard
and admin endpoints are researcher-facing and do expose system ids.
"""

from __future__ import annotations

import secrets
import threading
import uuid
from contextlib import asynccontextmanager
from datetime import datetime
from decimal import Decimal, InvalidOperation
from typing import Callable

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .. import analytics
from ..analytics import DialogFilter, RankBy, SCORERS
from ..errors import (
    DialogHubError,
    InvalidFilterError,
    ModelInvariantError,
    UnauthorizedError,
    UnknownSessionError,
)
from ..model import FeedbackEvent, FeedbackKind, Side, utc_now
from ..orchestrator import Orchestrator, SelectionPolicy
from ..registry import HealthProber, Registry, SystemDescriptor
from ..store import DialogStore
from .config import GatewayConfig
from .connector import HttpConnector

_STATUS_BY_CODE = {
    "UNKNOWN_SESSION": 404,
    "UNKNOWN_SYSTEM": 404,
    "SESSION_ENDED": 409,
    "DUPLICATE_ID": 409,
    "NO_SYSTEMS_AVAILABLE": 503,
    "EMPTY_CANDIDATES": 503,
    "ALL_SYSTEMS_FAILED": 502,
    "TIMEOUT": 502,
    "TRANSPORT_ERROR": 502,
    "MALFORMED_RESPONSE": 502,
    "INVALID_TURN_INDEX": 400,
    "MISSING_PAYLOAD": 400,
    "INVALID_VALUE": 400,
    "INVALID_ENDPOINT": 400,
    "EMPTY_DOMAINS": 400,
    "INVALID_FILTER": 400,
    "UNKNOWN_RANK_ATTRIBUTE": 400,
    "INVALID_PROJECT": 400,
    "STALE_TURN": 409,
    "STORAGE_FAILURE": 500,
    "UNAUTHORIZED": 401,
}


def status_for_code(code: str) -> int:
    return _STATUS_BY_CODE.get(code, 500)


class UtteranceIn(BaseModel):
    text: str


class FeedbackIn(BaseModel):
    kind: str
    turn_index: int
    payload: str | None = None


class StartIn(BaseModel):
    user_meta: dict | None = None


class RegisterIn(BaseModel):
    name: str
    endpoint: str
    domains: list[str]
    system_id: str | None = None
    bearer_token: str | None = None


class RatingsIn(BaseModel):
    ratings: dict[str, float]


class DialogQueryIn(BaseModel):
    filter: dict = {}
    rank_by: dict | None = None


class _TokenBook:
    """client token <-> session id; tokens are 128-bit random values so
    sessions cannot be enumerated."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_token: dict[str, str] = {}

    def issue(self, session_id: str) -> str:
        token = secrets.token_hex(16)
        with self._lock:
            self._by_token[token] = session_id
        return token

    def session_id(self, token: str) -> str:
        with self._lock:
            try:
                return self._by_token[token]
            except KeyError:
                raise UnknownSessionError("unknown session token") from None


def create_app(
    config: GatewayConfig | None = None,
    connector=None,
    clock: Callable[[], datetime] = utc_now,
) -> FastAPI:
    """Assemble the full service from a config. A custom `connector`
    (anything with call/ping) replaces the HTTP one, which is how tests
    exercise routing without sockets."""
    cfg = config or GatewayConfig()
    store = DialogStore(cfg.log_dir) if cfg.log_dir else DialogStore()
    registry = Registry(down_after=cfg.down_after_failures, listener=store.append)
    if connector is None:
        connector = HttpConnector(
            timeout_seconds=cfg.connector_timeout_seconds,
            allowed_slots=cfg.schema.slot_names,
        )
    policy = SelectionPolicy(cfg.selection_seed)
    orchestrator = Orchestrator(
        registry=registry,
        store=store,
        connector=connector,
        schema=cfg.schema,
        domain_rules=cfg.domain_rules,
        policy=policy,
        topic_prompts=cfg.topic_prompts,
        clock=clock,
    )
    for system in cfg.systems:
        registry.register(
            SystemDescriptor(
                system_id=system.system_id,
                name=system.name,
                endpoint=system.endpoint,
                domains=frozenset(system.domains),
                bearer_token=system.bearer_token,
                registered_at=clock(),
            )
        )

    prober: HealthProber | None = None
    if hasattr(connector, "ping") and cfg.probe_interval_seconds > 0:
        prober = HealthProber(registry, connector.ping, cfg.probe_interval_seconds)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if prober is not None:
            prober.start()
        yield
        # Graceful shutdown: let in-flight turns complete (bounded by one
        # connector timeout plus slack) before the process exits.
        if prober is not None:
            prober.stop()
        orchestrator.drain(timeout=cfg.connector_timeout_seconds + 5.0)

    app = FastAPI(title="dialoghub", lifespan=lifespan)
    app.state.config = cfg
    app.state.store = store
    app.state.registry = registry
    app.state.orchestrator = orchestrator
    app.state.policy = policy
    app.state.connector = connector
    app.state.tokens = _TokenBook()
    app.state.human_ratings = {}
    app.state.scorer = SCORERS.get(cfg.quality_scorer, SCORERS["null"])()

    @app.exception_handler(DialogHubError)
    async def dialoghub_error(_request: Request, exc: DialogHubError):
        return JSONResponse(
            status_code=status_for_code(exc.code),
            content={"code": exc.code, "message": exc.message},
        )

    def require_admin(authorization: str | None = Header(default=None)) -> None:
        token = cfg.admin_token
        if token and authorization != f"Bearer {token}":
            raise UnauthorizedError("admin endpoints require the shared bearer token")

    # -- service health ------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "systems": len(registry.all_systems())}

    # -- client (chat) endpoints ----------------------------------------------

    @app.post("/api/session")
    def start_session(body: StartIn | None = None):
        session = orchestrator.start_session(body.user_meta if body else None)
        token = app.state.tokens.issue(session.session_id)
        out = {"session_token": token}
        if cfg.greeting:
            out["greeting"] = cfg.greeting
        return out

    @app.post("/api/session/{token}/utterance")
    def post_utterance(token: str, body: UtteranceIn):
        session_id = app.state.tokens.session_id(token)
        outcome = orchestrator.handle_utterance(session_id, body.text)
        session = orchestrator.get_session(session_id)
        return {
            "session_token": token,
            "reply": outcome.response_text,
            "turn_index": len(session.turns) - 1,
            "ended": session.status.value == "ENDED",
        }

    @app.post("/api/session/{token}/feedback")
    def post_feedback(token: str, body: FeedbackIn):
        session_id = app.state.tokens.session_id(token)
        try:
            kind = FeedbackKind(body.kind)
        except ValueError:
            raise ModelInvariantError(f"unknown feedback kind {body.kind!r}") from None
        event = FeedbackEvent(
            kind=kind, turn_index=body.turn_index, payload=body.payload, timestamp=clock()
        )
        orchestrator.record_feedback(session_id, event)
        return {"status": "ok"}

    @app.post("/api/session/{token}/end")
    def end_session(token: str):
        session_id = app.state.tokens.session_id(token)
        orchestrator.end_session(session_id)
        return {"status": "ended"}

    @app.get("/api/session/{token}/history")
    def history(token: str):
        session_id = app.state.tokens.session_id(token)
        session = orchestrator.get_session(session_id)
        utterances = []
        for turn in session.turns:
            for utt in (turn.user, turn.system):
                utterances.append(
                    {"side": utt.side.value, "text": utt.text, "timestamp": utt.timestamp.isoformat()}
                )
        return {"session_token": token, "status": session.status.value, "utterances": utterances}

    # -- dashboard endpoints -----------------------------------------------------

    @app.get("/api/dashboard/systems")
    def dashboard_systems():
        return {
            "systems": [
                {"system_id": s.system_id, "name": s.name, "health": s.health.value, "domains": sorted(s.domains)}
                for s in registry.all_systems()
            ]
        }

    @app.get("/api/dashboard/systems/{system_id}/summary")
    def dashboard_summary(system_id: str):
        summary = analytics.system_summary(
            system_id, store, scorer=app.state.scorer, human_ratings=app.state.human_ratings
        )
        return summary.to_dict()

    @app.post("/api/dashboard/dialogs")
    def dashboard_dialogs(body: DialogQueryIn):
        dialog_filter = DialogFilter.from_dict(body.filter)
        rank_by = None
        if body.rank_by is not None:
            if "attribute" not in body.rank_by:
                raise InvalidFilterError("rank_by needs an attribute")
            rank_by = RankBy(
                attribute=body.rank_by["attribute"],
                direction=body.rank_by.get("direction", "desc"),
            )
        sessions = analytics.filter_and_rank(dialog_filter, rank_by, store, scorer=app.state.scorer)
        return {"sessions": [s.to_dict() for s in sessions]}

    @app.get("/api/dashboard/systems/{system_id}/ngrams")
    def dashboard_ngrams(system_id: str, side: str = "USER", n: int = 1, min_count: int = 1):
        try:
            side_enum = Side(side)
        except ValueError:
            raise InvalidFilterError("side must be USER or SYSTEM") from None
        if n not in (1, 2, 3):
            raise InvalidFilterError("n must be 1, 2, or 3")
        rows = analytics.ngram_frequencies(system_id, side_enum, n, min_count, store)
        return {"ngrams": [{"ngram": g, "count": c} for g, c in rows]}

    @app.get("/api/dashboard/systems/{system_id}/progress")
    def dashboard_progress(system_id: str, bucket: str = "DAY"):
        if bucket not in analytics.BUCKETS:
            raise InvalidFilterError(f"bucket must be one of {analytics.BUCKETS}")
        series = analytics.progress_series(system_id, bucket, store)
        return {"series": [{"bucket_start": start.isoformat(), "new_dialogs": count} for start, count in series]}

    @app.get("/api/dashboard/cost")
    def dashboard_cost(budget: str, min_turns: int | None = None):
        try:
            amount = Decimal(budget)
        except InvalidOperation:
            raise InvalidFilterError(f"budget {budget!r} is not a number") from None
        if amount < 0:
            raise InvalidFilterError("budget must be >= 0")
        report = analytics.collection_cost(
            amount, store, min_turns if min_turns is not None else cfg.min_turns_usable
        )
        return report.to_dict()

    # -- admin endpoints ------------------------------------------------------------

    @app.get("/api/admin/systems", dependencies=[Depends(require_admin)])
    def admin_systems():
        return {"systems": [s.to_dict() for s in registry.all_systems()]}

    @app.post("/api/admin/systems", dependencies=[Depends(require_admin)])
    def admin_register(body: RegisterIn):
        descriptor = SystemDescriptor(
            system_id=body.system_id or uuid.uuid4().hex,
            name=body.name,
            endpoint=body.endpoint,
            domains=frozenset(body.domains),
            bearer_token=body.bearer_token,
            registered_at=clock(),
        )
        system_id = registry.register(descriptor)
        return {"system_id": system_id}

    @app.post("/api/admin/ratings", dependencies=[Depends(require_admin)])
    def admin_ratings(body: RatingsIn):
        app.state.human_ratings.update(body.ratings)
        return {"imported": len(body.ratings)}

    @app.get("/api/admin/export", dependencies=[Depends(require_admin)])
    def admin_export():
        return PlainTextResponse(store.export_bytes(), media_type="application/x-ndjson")

    return app
