"""Regenerate the hex-dump fixture corpus under tests/data/fixtures.

The bytes come from the mock server's encoder.  The JSON next to each dump
holds the decoded facts a test expects; test_fixtures.py additionally walks
the GetEndpoints dumps by hand, byte by byte, so the expectations do not rest
on the codec alone.
"""

import dataclasses
import hashlib
import json
from pathlib import Path

from uasurvey.mock.config import EndpointSpec, FixtureConfig
from uasurvey.mock.server import MockServer
from uasurvey.wire.binary import NodeId
from uasurvey.wire.services import (
    Service,
    anonymous_identity_token,
    encode_service_fault,
    encode_service_request,
    encode_service_response,
)
from uasurvey.wire.structs import (
    ActivateSessionRequest,
    GetEndpointsRequest,
    GetEndpointsResponse,
    Hello,
    ReadRequest,
    ReadValueId,
    RequestHeader,
    ResponseHeader,
    ServiceFaultBody,
)
from uasurvey.wire.transport import ChunkType, MessageKind, TransportMessage, encode_transport

OUT = Path(__file__).resolve().parent / "fixtures"
STAMP = 132_223_104_000_000_000  # 2020-01-01T00:00:00Z in 100 ns ticks since 1601


def hexdump(data: bytes) -> str:
    return "".join(data[i : i + 16].hex(" ") + "\n" for i in range(0, len(data), 16))


def write(name: str, data: bytes, expected: dict) -> None:
    (OUT / f"{name}.hex").write_text(hexdump(data))
    (OUT / f"{name}.json").write_text(json.dumps(expected, indent=1, sort_keys=True) + "\n")


def endpoints_of(config: FixtureConfig, host_url: str):
    srv = MockServer(config)
    try:
        eps = srv.endpoint_descriptions()
    finally:
        srv.stop()
    fixed = []
    for e in eps:
        server = dataclasses.replace(e.server, discovery_urls=[host_url])
        url = e.endpoint_url.replace(srv.url, host_url)
        fixed.append(dataclasses.replace(e, server=server, endpoint_url=url))
    return fixed


def describe(eps) -> list[dict]:
    return [
        {
            "endpoint_url": e.endpoint_url,
            "security_mode": int(e.security_mode),
            "security_policy_uri": e.security_policy_uri,
            "tokens": [[t.policy_id, int(t.token_type)] for t in e.user_identity_tokens],
            "certificate_sha256": hashlib.sha256(e.server_certificate).hexdigest(),
            "application_uri": e.server.application_uri,
            "security_level": e.security_level,
        }
        for e in eps
    ]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    header = ResponseHeader(timestamp=STAMP, request_handle=7)

    three = FixtureConfig(
        endpoints=[
            EndpointSpec("None", "None", ["Anonymous"]),
            EndpointSpec("Sign", "Basic256", ["Anonymous", "Username"]),
            EndpointSpec("SignAndEncrypt", "Basic256Sha256", ["Username", "Certificate"]),
        ],
        application_uri="urn:plant:press-line",
    )
    eps = endpoints_of(three, "opc.tcp://h:4840")
    write(
        "get_endpoints_three",
        encode_service_response(Service.GET_ENDPOINTS, GetEndpointsResponse(header, eps)),
        {"endpoints": describe(eps)},
    )
    write("get_endpoints_empty", encode_service_response(Service.GET_ENDPOINTS, GetEndpointsResponse(header, [])), {"endpoints": []})

    lds = FixtureConfig(
        endpoints=[],
        referral_endpoints=["opc.tcp://10.1.2.3:4840", "opc.tcp://10.1.2.4:48010/plc"],
    )
    eps = endpoints_of(lds, "opc.tcp://h:4840")
    write(
        "get_endpoints_discovery",
        encode_service_response(Service.GET_ENDPOINTS, GetEndpointsResponse(header, eps)),
        {"endpoints": describe(eps)},
    )

    req_header = RequestHeader(timestamp=STAMP, request_handle=1, timeout_hint=10_000)
    write(
        "get_endpoints_request",
        encode_service_request(Service.GET_ENDPOINTS, GetEndpointsRequest(req_header, "opc.tcp://h:4840")),
        {"endpoint_url": "opc.tcp://h:4840", "request_handle": 1},
    )
    write(
        "read_namespace_array",
        encode_service_request(
            Service.READ, ReadRequest(req_header, nodes_to_read=[ReadValueId(NodeId(2255), attribute_id=13)])
        ),
        {"node": "i=2255", "attribute_id": 13},
    )
    write(
        "activate_anonymous",
        encode_service_request(
            Service.ACTIVATE_SESSION,
            ActivateSessionRequest(req_header, user_identity_token=anonymous_identity_token("anonymous")),
        ),
        {"policy_id": "anonymous", "token_type_id": 321},
    )
    write(
        "service_fault",
        encode_service_fault(ServiceFaultBody(ResponseHeader(timestamp=STAMP, service_result=0x801F0000))),
        {"status": 0x801F0000},
    )
    hello = Hello(0, 65535, 65535, 0, 0, "opc.tcp://h:4840")
    write(
        "hello_frame",
        encode_transport(TransportMessage(MessageKind.HEL, ChunkType.FINAL, hello.encode())),
        {"kind": "HEL", "endpoint_url": "opc.tcp://h:4840", "receive_buffer_size": 65535},
    )


if __name__ == "__main__":
    main()
