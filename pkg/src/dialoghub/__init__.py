"""dialoghub: a self-hostable orchestration gateway for remote dialog
systems, with shared slot state, failover, dialog analytics, and a
crowdsourcing quality toolkit."""

__version__ = "0.1.0"

from .model import (
    FeedbackEvent,
    FeedbackKind,
    Session,
    SessionStatus,
    SharedDialogState,
    Side,
    SlotValue,
    Turn,
    Utterance,
    count_units,
    is_usable,
)
from .registry import Health, ProbeResult, Registry, SystemDescriptor
from .orchestrator import Orchestrator, RoutingOutcome, SelectionPolicy, select_system
from .store import DialogStore, EventKind, StoreEvent

__all__ = [
    "__version__",
    "Utterance",
    "Turn",
    "FeedbackEvent",
    "FeedbackKind",
    "Side",
    "Session",
    "SessionStatus",
    "SharedDialogState",
    "SlotValue",
    "count_units",
    "is_usable",
    "Registry",
    "SystemDescriptor",
    "Health",
    "ProbeResult",
    "Orchestrator",
    "RoutingOutcome",
    "SelectionPolicy",
    "select_system",
    "DialogStore",
    "EventKind",
    "StoreEvent",
]
