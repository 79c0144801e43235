"""OPC UA binary protocol codec: framing, built-in types and service bodies."""

from uasurvey.wire.binary import (
    NULL_BYTES,
    NULL_STRING,
    DataValue,
    ExpandedNodeId,
    ExtensionObject,
    LocalizedText,
    NodeId,
    QualifiedName,
    Reader,
    Variant,
    VariantType,
    Writer,
)
from uasurvey.wire.errors import (
    CodecError,
    MalformedResponse,
    OversizedMessage,
    ServiceFault,
    Truncated,
    UnknownKind,
    UnsupportedService,
)
from uasurvey.wire.services import (
    Service,
    UnsupportedServiceMessage,
    decode_get_endpoints_request,
    decode_get_endpoints_response,
    decode_service_message,
    decode_service_response,
    encode_service_request,
    encode_service_response,
)
from uasurvey.wire.structs import (
    EndpointDescription,
    MessageSecurityMode,
    NodeClass,
    UserTokenPolicy,
    UserTokenType,
)
from uasurvey.wire.transport import (
    ChunkType,
    MessageKind,
    TransportMessage,
    decode_transport,
    encode_transport,
)

__all__ = [
    "NULL_BYTES",
    "NULL_STRING",
    "ChunkType",
    "CodecError",
    "DataValue",
    "EndpointDescription",
    "ExpandedNodeId",
    "ExtensionObject",
    "LocalizedText",
    "MalformedResponse",
    "MessageKind",
    "MessageSecurityMode",
    "NodeClass",
    "NodeId",
    "OversizedMessage",
    "QualifiedName",
    "Reader",
    "Service",
    "ServiceFault",
    "TransportMessage",
    "Truncated",
    "UnknownKind",
    "UnsupportedService",
    "UnsupportedServiceMessage",
    "UserTokenPolicy",
    "UserTokenType",
    "Variant",
    "VariantType",
    "Writer",
    "decode_get_endpoints_request",
    "decode_get_endpoints_response",
    "decode_service_message",
    "decode_service_response",
    "decode_transport",
    "encode_service_request",
    "encode_service_response",
    "encode_transport",
]
