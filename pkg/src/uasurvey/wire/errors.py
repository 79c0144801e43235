"""Exception hierarchy for the binary codec."""

from __future__ import annotations


class CodecError(Exception):
    """Base class for every decode/encode failure raised by :mod:`uasurvey.wire`."""


class Truncated(CodecError):
    """Input ended before a declared length was satisfied."""


class UnknownKind(CodecError):
    """The transport header does not carry one of the six OPC UA message codes.

    This is the usual signature of a non-OPC UA speaker on port 4840.
    """

    def __init__(self, raw: bytes):
        super().__init__(f"unknown message kind {raw!r}")
        self.raw = raw


class OversizedMessage(CodecError):
    """A frame or an assembled message exceeds a size limit."""


class MalformedResponse(CodecError):
    """Structural decode failure inside a service body."""


class UnsupportedService(CodecError):
    """Encoding was requested for a service outside the scanner's surface."""


class ServiceFault(Exception):
    """The peer answered a request with a ServiceFault or a bad service result.

    Not a :class:`CodecError`: the bytes decoded fine, the server said no.
    """

    def __init__(self, status: int, service: str | None = None):
        from uasurvey.wire.status import status_name

        label = f" to {service}" if service else ""
        super().__init__(f"service fault{label}: {status_name(status)} (0x{status:08X})")
        self.status = status
        self.service = service
