"""Error hierarchy. Every error carries a stable machine-readable code;
the gateway maps codes onto structured HTTP error bodies."""

from __future__ import annotations


class DialogHubError(Exception):
    """Base for all errors surfaced through operation contracts."""

    code = "INTERNAL_ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class ModelInvariantError(DialogHubError):
    code = "INVALID_VALUE"


class MissingPayloadError(ModelInvariantError):
    code = "MISSING_PAYLOAD"


# --- registry ---

class DuplicateIdError(DialogHubError):
    code = "DUPLICATE_ID"


class InvalidEndpointError(DialogHubError):
    code = "INVALID_ENDPOINT"


class EmptyDomainsError(DialogHubError):
    code = "EMPTY_DOMAINS"


class UnknownSystemError(DialogHubError):
    code = "UNKNOWN_SYSTEM"


# --- dialog state ---

class StaleTurnError(DialogHubError):
    code = "STALE_TURN"


# --- orchestrator ---

class NoSystemsAvailableError(DialogHubError):
    code = "NO_SYSTEMS_AVAILABLE"


class EmptyCandidatesError(DialogHubError):
    code = "EMPTY_CANDIDATES"


class UnknownSessionError(DialogHubError):
    code = "UNKNOWN_SESSION"


class SessionEndedError(DialogHubError):
    code = "SESSION_ENDED"


class AllSystemsFailedError(DialogHubError):
    code = "ALL_SYSTEMS_FAILED"


class InvalidTurnIndexError(DialogHubError):
    code = "INVALID_TURN_INDEX"


# --- store ---

class StorageFailureError(DialogHubError):
    code = "STORAGE_FAILURE"


# --- analytics ---

class InvalidFilterError(DialogHubError):
    code = "INVALID_FILTER"


class UnknownRankAttributeError(DialogHubError):
    code = "UNKNOWN_RANK_ATTRIBUTE"


# --- crowd toolkit ---

class InvalidProjectError(DialogHubError):
    code = "INVALID_PROJECT"


class NonpositiveInputError(DialogHubError):
    code = "NONPOSITIVE_INPUT"


class TooFewRatersError(DialogHubError):
    code = "TOO_FEW_RATERS"


class UnknownLabelError(DialogHubError):
    code = "UNKNOWN_LABEL"


class IncompleteSubmissionError(DialogHubError):
    code = "INCOMPLETE_SUBMISSION"


class NoSubmissionsError(DialogHubError):
    code = "NO_SUBMISSIONS"


# --- gateway ---

class InvalidConfigError(DialogHubError):
    code = "INVALID_CONFIG"


class UnauthorizedError(DialogHubError):
    code = "UNAUTHORIZED"


class BindFailureError(DialogHubError):
    code = "BIND_FAILURE"


class ConnectorError(DialogHubError):
    """Base for connector-protocol call failures; triggers failover."""

    code = "TRANSPORT_ERROR"


class ConnectorTimeoutError(ConnectorError):
    code = "TIMEOUT"


class MalformedResponseError(ConnectorError):
    code = "MALFORMED_RESPONSE"
