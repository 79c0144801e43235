"""Service bodies: the encoding-id prefix plus the request/response structure."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from uasurvey.wire import status as sc
from uasurvey.wire.binary import NodeId, Reader, Writer, read_nodeid, write_nodeid
from uasurvey.wire.errors import CodecError, MalformedResponse, ServiceFault, UnsupportedService
from uasurvey.wire.structs import (
    ActivateSessionRequest,
    ActivateSessionResponse,
    AnonymousIdentityToken,
    BrowseNextRequest,
    BrowseNextResponse,
    BrowseRequest,
    BrowseResponse,
    CloseSecureChannelRequest,
    CreateSessionRequest,
    CreateSessionResponse,
    EndpointDescription,
    GetEndpointsRequest,
    GetEndpointsResponse,
    OpenSecureChannelRequest,
    OpenSecureChannelResponse,
    ReadRequest,
    ReadResponse,
    ServiceFaultBody,
    Struct,
)


class Service(str, Enum):
    GET_ENDPOINTS = "GetEndpoints"
    OPEN_SECURE_CHANNEL = "OpenSecureChannel"
    CLOSE_SECURE_CHANNEL = "CloseSecureChannel"
    CREATE_SESSION = "CreateSession"
    ACTIVATE_SESSION = "ActivateSession"
    BROWSE = "Browse"
    BROWSE_NEXT = "BrowseNext"
    READ = "Read"


# DefaultBinary encoding ids, namespace 0
SERVICE_FAULT_ID = 397
ANONYMOUS_IDENTITY_TOKEN_ID = 321
USERNAME_IDENTITY_TOKEN_ID = 324
X509_IDENTITY_TOKEN_ID = 327
ISSUED_IDENTITY_TOKEN_ID = 940

REQUEST_IDS = {
    Service.GET_ENDPOINTS: 428,
    Service.OPEN_SECURE_CHANNEL: 446,
    Service.CLOSE_SECURE_CHANNEL: 452,
    Service.CREATE_SESSION: 461,
    Service.ACTIVATE_SESSION: 467,
    Service.BROWSE: 527,
    Service.BROWSE_NEXT: 533,
    Service.READ: 631,
}
RESPONSE_IDS = {
    Service.GET_ENDPOINTS: 431,
    Service.OPEN_SECURE_CHANNEL: 449,
    Service.CREATE_SESSION: 464,
    Service.ACTIVATE_SESSION: 470,
    Service.BROWSE: 530,
    Service.BROWSE_NEXT: 536,
    Service.READ: 634,
}

REQUEST_TYPES: dict[Service, type[Struct]] = {
    Service.GET_ENDPOINTS: GetEndpointsRequest,
    Service.OPEN_SECURE_CHANNEL: OpenSecureChannelRequest,
    Service.CLOSE_SECURE_CHANNEL: CloseSecureChannelRequest,
    Service.CREATE_SESSION: CreateSessionRequest,
    Service.ACTIVATE_SESSION: ActivateSessionRequest,
    Service.BROWSE: BrowseRequest,
    Service.BROWSE_NEXT: BrowseNextRequest,
    Service.READ: ReadRequest,
}
RESPONSE_TYPES: dict[Service, type[Struct]] = {
    Service.GET_ENDPOINTS: GetEndpointsResponse,
    Service.OPEN_SECURE_CHANNEL: OpenSecureChannelResponse,
    Service.CREATE_SESSION: CreateSessionResponse,
    Service.ACTIVATE_SESSION: ActivateSessionResponse,
    Service.BROWSE: BrowseResponse,
    Service.BROWSE_NEXT: BrowseNextResponse,
    Service.READ: ReadResponse,
}

# Services the fixture must recognise in order to refuse them.  Names follow
# the standard encoding ids so the log reads naturally.
KNOWN_FOREIGN_IDS = {
    422: "FindServers",
    473: "CloseSession",
    673: "Write",
    712: "Call",
    751: "CreateSubscription",
    787: "CreateMonitoredItems",
    826: "Publish",
    488: "AddNodes",
    500: "DeleteNodes",
    700: "HistoryUpdate",
}

_BY_ID: dict[int, tuple[Service, type[Struct], bool]] = {}
for _svc, _tid in REQUEST_IDS.items():
    _BY_ID[_tid] = (_svc, REQUEST_TYPES[_svc], True)
for _svc, _tid in RESPONSE_IDS.items():
    _BY_ID[_tid] = (_svc, RESPONSE_TYPES[_svc], False)


@dataclass(frozen=True)
class UnsupportedServiceMessage:
    """A service body outside the scanner's surface, kept opaque."""

    type_id: NodeId
    raw: bytes

    @property
    def name(self) -> str:
        if self.type_id.namespace == 0 and isinstance(self.type_id.identifier, int):
            return KNOWN_FOREIGN_IDS.get(self.type_id.identifier, f"i={self.type_id.identifier}")
        return str(self.type_id)


@dataclass(frozen=True)
class ServiceMessage:
    service: Service | None
    is_request: bool
    body: object
    type_id: NodeId

    @property
    def name(self) -> str:
        if self.service is None:
            return "ServiceFault"
        return self.service.value


def encode_service_request(service: Service | str, body: Struct) -> bytes:
    """Encoding-id NodeId followed by the request structure.

    The encoder samples nothing: timestamps and handles must already be in
    ``body``, so identical inputs always give identical bytes.
    """
    try:
        service = Service(service)
    except ValueError:
        raise UnsupportedService(f"service {service!r} is not part of the scanner surface") from None
    expected = REQUEST_TYPES[service]
    if not isinstance(body, expected):
        raise CodecError(f"{service.value} expects {expected.__name__}, got {type(body).__name__}")
    return _encode(REQUEST_IDS[service], body)


def encode_service_response(service: Service | str, body: Struct) -> bytes:
    service = Service(service)
    if service not in RESPONSE_TYPES:
        raise UnsupportedService(f"{service.value} has no response body")
    expected = RESPONSE_TYPES[service]
    if not isinstance(body, expected):
        raise CodecError(f"{service.value} expects {expected.__name__}, got {type(body).__name__}")
    return _encode(RESPONSE_IDS[service], body)


def encode_close_request(body: CloseSecureChannelRequest) -> bytes:
    """CLO body; channel teardown rather than a service, so kept out of the request surface."""
    return _encode(REQUEST_IDS[Service.CLOSE_SECURE_CHANNEL], body)


def encode_service_fault(body: ServiceFaultBody) -> bytes:
    return _encode(SERVICE_FAULT_ID, body)


def _encode(type_id: int, body: Struct) -> bytes:
    w = Writer()
    write_nodeid(w, NodeId(type_id))
    body.encode_into(w)
    return w.getvalue()


def decode_service_message(payload: bytes) -> ServiceMessage | UnsupportedServiceMessage:
    """Decode any service body.  Unknown encoding ids come back opaque, not as errors."""
    r = Reader(payload)
    type_id = read_nodeid(r)
    numeric = type_id.identifier if type_id.namespace == 0 and isinstance(type_id.identifier, int) else None
    if numeric == SERVICE_FAULT_ID:
        body = ServiceFaultBody.decode_from(r)
        _expect_end(r)
        return ServiceMessage(None, False, body, type_id)
    entry = _BY_ID.get(numeric) if numeric is not None else None
    if entry is None:
        return UnsupportedServiceMessage(type_id, r.rest())
    service, cls, is_request = entry
    body = cls.decode_from(r)
    _expect_end(r)
    return ServiceMessage(service, is_request, body, type_id)


def decode_service_response(payload: bytes, service: Service):
    """Decode a response to ``service``; faults and bad service results raise ServiceFault."""
    msg = decode_service_message(payload)
    if isinstance(msg, UnsupportedServiceMessage):
        raise MalformedResponse(f"expected {service.value} response, got {msg.name}")
    if msg.service is None:
        raise ServiceFault(msg.body.response_header.service_result, service.value)
    if msg.service is not service or msg.is_request:
        raise MalformedResponse(f"expected {service.value} response, got {msg.name}")
    result = msg.body.response_header.service_result
    if sc.is_bad(result):
        raise ServiceFault(result, service.value)
    return msg.body


def decode_get_endpoints_response(payload: bytes) -> list[EndpointDescription]:
    """Endpoints in server order, URLs and policy URIs untouched."""
    return list(decode_service_response(payload, Service.GET_ENDPOINTS).endpoints)


def decode_get_endpoints_request(payload: bytes) -> GetEndpointsRequest:
    msg = decode_service_message(payload)
    if isinstance(msg, UnsupportedServiceMessage) or msg.service is not Service.GET_ENDPOINTS or not msg.is_request:
        raise MalformedResponse("not a GetEndpoints request")
    return msg.body


def anonymous_identity_token(policy_id: str):
    """The ExtensionObject carrying an AnonymousIdentityToken for ``policy_id``."""
    from uasurvey.wire.binary import ExtensionObject

    return ExtensionObject(NodeId(ANONYMOUS_IDENTITY_TOKEN_ID), AnonymousIdentityToken(policy_id).encode(), 1)


def _expect_end(r: Reader) -> None:
    if r.remaining:
        raise MalformedResponse(f"{r.remaining} unexpected trailing bytes")
