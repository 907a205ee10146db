"""Exception hierarchy shared across the portal, fabric, and clients.

Every error that crosses the wire is identified by its class name, so the
line protocols and the HTTP API can rebuild the right exception on the
client side (see :func:`by_code`).
"""

from __future__ import annotations


class GridGateError(Exception):
    """Base class for all errors raised by this package."""


class MalformedUri(GridGateError):
    pass


class InvalidTransition(GridGateError):
    pass


class ValidationError(GridGateError):
    pass


class NotFound(GridGateError):
    pass


class MalformedCredential(GridGateError):
    pass


class InvalidParent(GridGateError):
    pass


class UnknownSite(GridGateError):
    pass


class EmptySet(GridGateError):
    pass


class BindError(GridGateError):
    pass


class AuthError(GridGateError):
    pass


class CacheMissing(GridGateError):
    pass


class QueueFull(GridGateError):
    pass


class UnknownContact(GridGateError):
    pass


class MalformedDescription(GridGateError):
    pass


class MalformedRequest(GridGateError):
    pass


class SourceMissing(GridGateError):
    pass


class DestinationUnreachable(GridGateError):
    pass


class ChecksumMismatch(GridGateError):
    pass


class EmptyPowerList(GridGateError):
    pass


class UnknownActiveSet(GridGateError):
    pass


class StaleActiveSet(GridGateError):
    pass


class UnknownJob(GridGateError):
    pass


class UnknownJobset(GridGateError):
    pass


class ResultMissing(GridGateError):
    pass


_CODE_TABLE = {
    cls.__name__: cls
    for cls in (
        MalformedUri,
        InvalidTransition,
        ValidationError,
        NotFound,
        MalformedCredential,
        InvalidParent,
        UnknownSite,
        EmptySet,
        BindError,
        AuthError,
        CacheMissing,
        QueueFull,
        UnknownContact,
        MalformedDescription,
        MalformedRequest,
        SourceMissing,
        DestinationUnreachable,
        ChecksumMismatch,
        EmptyPowerList,
        UnknownActiveSet,
        StaleActiveSet,
        UnknownJob,
        UnknownJobset,
        ResultMissing,
    )
}


def by_code(code: str, message: str) -> GridGateError:
    """Rebuild an error from its wire code; unknown codes become the base class."""
    cls = _CODE_TABLE.get(code, GridGateError)
    return cls(message)


def code_of(err: Exception) -> str:
    """Wire code for an error (its class name)."""
    return type(err).__name__
