"""Structured types used by the scanner's seven services.

Each structure is a dataclass whose fields carry their wire type in the
field metadata; :func:`encode` / :func:`decode` walk those declarations in
order, which is exactly the OPC UA binary layout for structures.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, ClassVar

from uasurvey.wire import binary as b
from uasurvey.wire.binary import (
    NULL_BYTES,
    NULL_STRING,
    DataValue,
    DiagnosticInfo,
    ExpandedNodeId,
    ExtensionObject,
    LocalizedText,
    NodeId,
    QualifiedName,
    Reader,
    Variant,
    Writer,
)

_BUILTINS: dict[str, tuple[Callable[[Reader], Any], Callable[[Writer, Any], None]]] = {
    "Boolean": (Reader.boolean, Writer.boolean),
    "Byte": (Reader.byte, Writer.byte),
    "UInt16": (Reader.uint16, Writer.uint16),
    "Int32": (Reader.int32, Writer.int32),
    "UInt32": (Reader.uint32, Writer.uint32),
    "Int64": (Reader.int64, Writer.int64),
    "Double": (Reader.double, Writer.double),
    "String": (Reader.string, Writer.string),
    "ByteString": (Reader.bytestring, Writer.bytestring),
    "DateTime": (Reader.datetime, Writer.datetime),
    "StatusCode": (Reader.status, Writer.status),
    "NodeId": (b.read_nodeid, b.write_nodeid),
    "ExpandedNodeId": (b.read_expanded_nodeid, b.write_expanded_nodeid),
    "QualifiedName": (b.read_qualified_name, b.write_qualified_name),
    "LocalizedText": (b.read_localized_text, b.write_localized_text),
    "ExtensionObject": (b.read_extension_object, b.write_extension_object),
    "DiagnosticInfo": (b.read_diagnostic_info, b.write_diagnostic_info),
    "Variant": (b.read_variant, b.write_variant),
    "DataValue": (b.read_data_value, b.write_data_value),
}


def ua(kind, default=dataclasses.MISSING, *, factory=dataclasses.MISSING):
    """Declare a structure field and its wire type.

    ``kind`` is a builtin name, an ``IntEnum`` subclass, a :class:`Struct`
    subclass, or ``[kind]`` for an array of ``kind``.
    """
    if default is dataclasses.MISSING and factory is dataclasses.MISSING:
        default, factory = _default_for(kind)
    if factory is not dataclasses.MISSING:
        return field(default_factory=factory, metadata={"ua": kind})
    return field(default=default, metadata={"ua": kind})


def _default_for(kind):
    missing = dataclasses.MISSING
    if isinstance(kind, list):
        return missing, list
    if isinstance(kind, type) and issubclass(kind, IntEnum):
        return next(iter(kind)), missing
    if isinstance(kind, type) and issubclass(kind, Struct):
        return missing, kind
    return {
        "Boolean": (False, missing),
        "String": (NULL_STRING, missing),
        "ByteString": (NULL_BYTES, missing),
        "Double": (0.0, missing),
        "NodeId": (NodeId(), missing),
        "ExpandedNodeId": (ExpandedNodeId(), missing),
        "QualifiedName": (QualifiedName(), missing),
        "LocalizedText": (LocalizedText(), missing),
        "ExtensionObject": (ExtensionObject(), missing),
        "DiagnosticInfo": (DiagnosticInfo(), missing),
        "Variant": (Variant(), missing),
        "DataValue": (DataValue(), missing),
    }.get(kind, (0, missing))


def _codec_for(kind) -> tuple[Callable[[Reader], Any], Callable[[Writer, Any], None]]:
    if isinstance(kind, list):
        (inner,) = kind
        rd, wr = _codec_for(inner)
        return (lambda r: r.array(rd)), (lambda w, v: w.array(v, wr))
    if isinstance(kind, type) and issubclass(kind, IntEnum):
        unsigned = getattr(kind, "_ua_unsigned", False)
        raw_rd = Reader.uint32 if unsigned else Reader.int32
        raw_wr = Writer.uint32 if unsigned else Writer.int32

        def rd(r: Reader, _enum=kind, _raw=raw_rd):
            value = _raw(r)
            try:
                return _enum(value)
            except ValueError:
                # out-of-range values are kept verbatim, classification decides later
                return value

        return rd, (lambda w, v, _raw=raw_wr: _raw(w, int(v)))
    if isinstance(kind, type) and issubclass(kind, Struct):
        return kind.decode_from, (lambda w, v: v.encode_into(w))
    return _BUILTINS[kind]


class Struct:
    """Base for wire structures; subclasses must be dataclasses."""

    _ua_fields: ClassVar[list | None] = None

    @classmethod
    def _fields(cls):
        if cls.__dict__.get("_ua_fields") is None:
            cls._ua_fields = [
                (f.name, *_codec_for(f.metadata["ua"])) for f in dataclasses.fields(cls) if "ua" in f.metadata
            ]
        return cls._ua_fields

    @classmethod
    def decode_from(cls, r: Reader):
        with r.nested():
            values = {name: rd(r) for name, rd, _ in cls._fields()}
        return cls(**values)

    def encode_into(self, w: Writer) -> None:
        for name, _, wr in self._fields():
            wr(w, getattr(self, name))

    @classmethod
    def decode(cls, data: bytes):
        return cls.decode_from(Reader(data))

    def encode(self) -> bytes:
        w = Writer()
        self.encode_into(w)
        return w.getvalue()


# --- enumerations ------------------------------------------------------------


class MessageSecurityMode(IntEnum):
    INVALID = 0
    NONE = 1
    SIGN = 2
    SIGN_AND_ENCRYPT = 3

    @property
    def label(self) -> str:
        return {0: "Invalid", 1: "None", 2: "Sign", 3: "SignAndEncrypt"}[self.value]


class UserTokenType(IntEnum):
    ANONYMOUS = 0
    USERNAME = 1
    CERTIFICATE = 2
    ISSUED_TOKEN = 3

    @property
    def label(self) -> str:
        return {0: "Anonymous", 1: "Username", 2: "Certificate", 3: "IssuedToken"}[self.value]


class ApplicationType(IntEnum):
    SERVER = 0
    CLIENT = 1
    CLIENT_AND_SERVER = 2
    DISCOVERY_SERVER = 3


class SecurityTokenRequestType(IntEnum):
    ISSUE = 0
    RENEW = 1


class BrowseDirection(IntEnum):
    FORWARD = 0
    INVERSE = 1
    BOTH = 2


class NodeClass(IntEnum):
    UNSPECIFIED = 0
    OBJECT = 1
    VARIABLE = 2
    METHOD = 4
    OBJECT_TYPE = 8
    VARIABLE_TYPE = 16
    REFERENCE_TYPE = 32
    DATA_TYPE = 64
    VIEW = 128


NodeClass._ua_unsigned = True


class TimestampsToReturn(IntEnum):
    SOURCE = 0
    SERVER = 1
    BOTH = 2
    NEITHER = 3


# --- headers -----------------------------------------------------------------


@dataclass
class RequestHeader(Struct):
    authentication_token: NodeId = ua("NodeId")
    timestamp: int = ua("DateTime")
    request_handle: int = ua("UInt32")
    return_diagnostics: int = ua("UInt32")
    audit_entry_id: str = ua("String")
    timeout_hint: int = ua("UInt32")
    additional_header: ExtensionObject = ua("ExtensionObject")


@dataclass
class ResponseHeader(Struct):
    timestamp: int = ua("DateTime")
    request_handle: int = ua("UInt32")
    service_result: int = ua("StatusCode")
    service_diagnostics: DiagnosticInfo = ua("DiagnosticInfo")
    string_table: list[str] = ua(["String"])
    additional_header: ExtensionObject = ua("ExtensionObject")


@dataclass
class ServiceFaultBody(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)


# --- discovery ---------------------------------------------------------------


@dataclass
class ApplicationDescription(Struct):
    application_uri: str = ua("String")
    product_uri: str = ua("String")
    application_name: LocalizedText = ua("LocalizedText")
    application_type: ApplicationType = ua(ApplicationType)
    gateway_server_uri: str = ua("String")
    discovery_profile_uri: str = ua("String")
    discovery_urls: list[str] = ua(["String"])


@dataclass
class UserTokenPolicy(Struct):
    policy_id: str = ua("String")
    token_type: UserTokenType = ua(UserTokenType)
    issued_token_type: str = ua("String")
    issuer_endpoint_url: str = ua("String")
    security_policy_uri: str = ua("String")


@dataclass
class EndpointDescription(Struct):
    endpoint_url: str = ua("String")
    server: ApplicationDescription = ua(ApplicationDescription)
    server_certificate: bytes = ua("ByteString")
    security_mode: MessageSecurityMode = ua(MessageSecurityMode)
    security_policy_uri: str = ua("String")
    user_identity_tokens: list[UserTokenPolicy] = ua([UserTokenPolicy])
    transport_profile_uri: str = ua("String")
    security_level: int = ua("Byte")

    @property
    def application_uri(self) -> str:
        return self.server.application_uri

    @property
    def product_uri(self) -> str:
        return self.server.product_uri

    @property
    def user_token_policies(self) -> list[UserTokenPolicy]:
        return self.user_identity_tokens

    def token_types(self) -> set[UserTokenType]:
        return {t.token_type for t in self.user_identity_tokens if isinstance(t.token_type, UserTokenType)}


@dataclass
class GetEndpointsRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    endpoint_url: str = ua("String")
    locale_ids: list[str] = ua(["String"])
    profile_uris: list[str] = ua(["String"])


@dataclass
class GetEndpointsResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    endpoints: list[EndpointDescription] = ua([EndpointDescription])


# --- secure channel ----------------------------------------------------------


@dataclass
class ChannelSecurityToken(Struct):
    channel_id: int = ua("UInt32")
    token_id: int = ua("UInt32")
    created_at: int = ua("DateTime")
    revised_lifetime: int = ua("UInt32")


@dataclass
class OpenSecureChannelRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    client_protocol_version: int = ua("UInt32")
    request_type: SecurityTokenRequestType = ua(SecurityTokenRequestType)
    security_mode: MessageSecurityMode = ua(MessageSecurityMode, MessageSecurityMode.NONE)
    client_nonce: bytes = ua("ByteString")
    requested_lifetime: int = ua("UInt32", 3_600_000)


@dataclass
class OpenSecureChannelResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    server_protocol_version: int = ua("UInt32")
    security_token: ChannelSecurityToken = ua(ChannelSecurityToken)
    server_nonce: bytes = ua("ByteString")


@dataclass
class CloseSecureChannelRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)


# --- session -----------------------------------------------------------------


@dataclass
class SignatureData(Struct):
    algorithm: str = ua("String")
    signature: bytes = ua("ByteString")


@dataclass
class SignedSoftwareCertificate(Struct):
    certificate_data: bytes = ua("ByteString")
    signature: bytes = ua("ByteString")


@dataclass
class CreateSessionRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    client_description: ApplicationDescription = ua(ApplicationDescription)
    server_uri: str = ua("String")
    endpoint_url: str = ua("String")
    session_name: str = ua("String")
    client_nonce: bytes = ua("ByteString")
    client_certificate: bytes = ua("ByteString")
    requested_session_timeout: float = ua("Double", 60_000.0)
    max_response_message_size: int = ua("UInt32")


@dataclass
class CreateSessionResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    session_id: NodeId = ua("NodeId")
    authentication_token: NodeId = ua("NodeId")
    revised_session_timeout: float = ua("Double")
    server_nonce: bytes = ua("ByteString")
    server_certificate: bytes = ua("ByteString")
    server_endpoints: list[EndpointDescription] = ua([EndpointDescription])
    server_software_certificates: list[SignedSoftwareCertificate] = ua([SignedSoftwareCertificate])
    server_signature: SignatureData = ua(SignatureData)
    max_request_message_size: int = ua("UInt32")


@dataclass
class AnonymousIdentityToken(Struct):
    policy_id: str = ua("String")


@dataclass
class ActivateSessionRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    client_signature: SignatureData = ua(SignatureData)
    client_software_certificates: list[SignedSoftwareCertificate] = ua([SignedSoftwareCertificate])
    locale_ids: list[str] = ua(["String"])
    user_identity_token: ExtensionObject = ua("ExtensionObject")
    user_token_signature: SignatureData = ua(SignatureData)


@dataclass
class ActivateSessionResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    server_nonce: bytes = ua("ByteString")
    results: list[int] = ua(["StatusCode"])
    diagnostic_infos: list[DiagnosticInfo] = ua(["DiagnosticInfo"])


# --- view / attribute --------------------------------------------------------


@dataclass
class ViewDescription(Struct):
    view_id: NodeId = ua("NodeId")
    timestamp: int = ua("DateTime")
    view_version: int = ua("UInt32")


@dataclass
class BrowseDescription(Struct):
    node_id: NodeId = ua("NodeId")
    browse_direction: BrowseDirection = ua(BrowseDirection)
    reference_type_id: NodeId = ua("NodeId")
    include_subtypes: bool = ua("Boolean")
    node_class_mask: int = ua("UInt32")
    result_mask: int = ua("UInt32", 0x3F)


@dataclass
class BrowseRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    view: ViewDescription = ua(ViewDescription)
    requested_max_references_per_node: int = ua("UInt32")
    nodes_to_browse: list[BrowseDescription] = ua([BrowseDescription])


@dataclass
class ReferenceDescription(Struct):
    reference_type_id: NodeId = ua("NodeId")
    is_forward: bool = ua("Boolean", True)
    node_id: ExpandedNodeId = ua("ExpandedNodeId")
    browse_name: QualifiedName = ua("QualifiedName")
    display_name: LocalizedText = ua("LocalizedText")
    node_class: NodeClass = ua(NodeClass)
    type_definition: ExpandedNodeId = ua("ExpandedNodeId")


@dataclass
class BrowseResult(Struct):
    status_code: int = ua("StatusCode")
    continuation_point: bytes = ua("ByteString")
    references: list[ReferenceDescription] = ua([ReferenceDescription])


@dataclass
class BrowseResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    results: list[BrowseResult] = ua([BrowseResult])
    diagnostic_infos: list[DiagnosticInfo] = ua(["DiagnosticInfo"])


@dataclass
class BrowseNextRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    release_continuation_points: bool = ua("Boolean")
    continuation_points: list[bytes] = ua(["ByteString"])


@dataclass
class BrowseNextResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    results: list[BrowseResult] = ua([BrowseResult])
    diagnostic_infos: list[DiagnosticInfo] = ua(["DiagnosticInfo"])


@dataclass
class ReadValueId(Struct):
    node_id: NodeId = ua("NodeId")
    attribute_id: int = ua("UInt32", 13)
    index_range: str = ua("String")
    data_encoding: QualifiedName = ua("QualifiedName")


@dataclass
class ReadRequest(Struct):
    request_header: RequestHeader = ua(RequestHeader)
    max_age: float = ua("Double")
    timestamps_to_return: TimestampsToReturn = ua(TimestampsToReturn, TimestampsToReturn.NEITHER)
    nodes_to_read: list[ReadValueId] = ua([ReadValueId])


@dataclass
class ReadResponse(Struct):
    response_header: ResponseHeader = ua(ResponseHeader)
    results: list[DataValue] = ua(["DataValue"])
    diagnostic_infos: list[DiagnosticInfo] = ua(["DiagnosticInfo"])


# --- connection protocol bodies ----------------------------------------------


@dataclass
class Hello(Struct):
    protocol_version: int = ua("UInt32")
    receive_buffer_size: int = ua("UInt32", 65535)
    send_buffer_size: int = ua("UInt32", 65535)
    max_message_size: int = ua("UInt32")
    max_chunk_count: int = ua("UInt32")
    endpoint_url: str = ua("String")


@dataclass
class Acknowledge(Struct):
    protocol_version: int = ua("UInt32")
    receive_buffer_size: int = ua("UInt32", 65535)
    send_buffer_size: int = ua("UInt32", 65535)
    max_message_size: int = ua("UInt32")
    max_chunk_count: int = ua("UInt32")


@dataclass
class ErrorMessage(Struct):
    error: int = ua("StatusCode")
    reason: str = ua("String")


@dataclass
class AsymmetricSecurityHeader(Struct):
    security_policy_uri: str = ua("String")
    sender_certificate: bytes = ua("ByteString")
    receiver_certificate_thumbprint: bytes = ua("ByteString")
