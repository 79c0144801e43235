"""In-process OPC UA server fixture.

Serves the server side of the scanner's protocol surface from a
:class:`~uasurvey.mock.config.FixtureConfig`, with real channel security for
secured endpoints.  Every request it receives (including Write and Call,
which are always refused) is appended to a thread-safe service log.
"""

from __future__ import annotations

import base64
import itertools
import os
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from uasurvey import crypto
from uasurvey.addressspace import (
    HAS_COMPONENT,
    HAS_PROPERTY,
    HIERARCHICAL_REFERENCES,
    NAMESPACE_ARRAY,
    OBJECTS_FOLDER,
    ORGANIZES,
    ROOT_FOLDER,
    SERVER_OBJECT,
    SOFTWARE_VERSION,
    STANDARD_NAMESPACE,
)
from uasurvey.channel import ConnectionClosed, FramedSocket, SecureConversation, encode_error
from uasurvey.mock.certgen import Identity, make_identity
from uasurvey.mock.config import NODE_CLASSES, TOKENS, EndpointSpec, FixtureConfig
from uasurvey.policies import policy_from_uri
from uasurvey.wire import status as sc
from uasurvey.wire.binary import (
    DataValue,
    LocalizedText,
    NodeId,
    QualifiedName,
    Variant,
    VariantType,
    ExpandedNodeId,
    now_ticks,
)
from uasurvey.wire.errors import CodecError
from uasurvey.wire.services import (
    ANONYMOUS_IDENTITY_TOKEN_ID,
    Service,
    ServiceMessage,
    UnsupportedServiceMessage,
    decode_service_message,
    encode_service_fault,
    encode_service_response,
)
from uasurvey.wire.structs import (
    Acknowledge,
    ActivateSessionResponse,
    ApplicationDescription,
    ApplicationType,
    BrowseDirection,
    BrowseNextResponse,
    BrowseResponse,
    BrowseResult,
    ChannelSecurityToken,
    CreateSessionResponse,
    EndpointDescription,
    GetEndpointsResponse,
    Hello,
    MessageSecurityMode,
    NodeClass,
    OpenSecureChannelResponse,
    ReadResponse,
    ReferenceDescription,
    ResponseHeader,
    ServiceFaultBody,
    SignatureData,
    UserTokenPolicy,
)
from uasurvey.wire.transport import (
    ChunkAssembler,
    ChunkType,
    MessageKind,
    TransportMessage,
    encode_transport,
    read_asymmetric_prefix,
)

TCP_TRANSPORT = "http://opcfoundation.org/UA-Profile/Transport/uatcp-uasc-uabinary"
ALLOWED_SCANNER_SERVICES = frozenset(
    {
        "Hello",
        "OpenSecureChannel",
        "GetEndpoints",
        "CreateSession",
        "ActivateSession",
        "Browse",
        "BrowseNext",
        "Read",
        "Close",
    }
)
_HIERARCHICAL = {ORGANIZES, HAS_COMPONENT, HAS_PROPERTY, HIERARCHICAL_REFERENCES}


class BindFailure(OSError):
    pass


@dataclass(frozen=True)
class LogEntry:
    time: float  # time.monotonic() when the complete request was in
    service: str
    peer: str
    channel_id: int = 0
    detail: str = ""


class ServiceLog:
    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[LogEntry] = []
        self._connections = 0
        self._active = 0
        self._idle = threading.Condition(self._lock)

    def append(self, entry: LogEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def connected(self) -> None:
        with self._lock:
            self._connections += 1
            self._active += 1

    def disconnected(self) -> None:
        with self._lock:
            self._active -= 1
            self._idle.notify_all()

    def settle(self, timeout: float = 5.0) -> bool:
        """Wait until every open connection has been handled to the end."""
        with self._lock:
            return self._idle.wait_for(lambda: self._active == 0, timeout)

    @property
    def connections(self) -> int:
        with self._lock:
            return self._connections

    def entries(self) -> list[LogEntry]:
        with self._lock:
            return list(self._entries)

    def services(self) -> list[str]:
        return [e.service for e in self.entries()]

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._connections = 0


# --- address space -------------------------------------------------------------


@dataclass
class MockNode:
    node_id: NodeId
    browse_name: str
    node_class: NodeClass
    access_level: int = 0
    user_access_level: int = 0
    executable: bool = False
    user_executable: bool = False
    value: Variant | None = None
    refs: list[tuple[NodeId, NodeId]] = field(default_factory=list)  # (reference type, target)


def _variant(value) -> Variant:
    if isinstance(value, Variant):
        return value
    if isinstance(value, bool):
        return Variant(value, VariantType.Boolean)
    if isinstance(value, int):
        return Variant(value, VariantType.Int32 if -(2**31) <= value < 2**31 else VariantType.Int64)
    if isinstance(value, float):
        return Variant(value, VariantType.Double)
    if isinstance(value, str):
        return Variant(value, VariantType.String)
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return Variant(list(value), VariantType.String, True)
    if value is None:
        return Variant()
    raise ValueError(f"unsupported fixture value {value!r}")


def build_address_space(config: FixtureConfig) -> dict[NodeId, MockNode]:
    """Standard skeleton (Root, Objects, Server, NamespaceArray, SoftwareVersion) plus the config's nodes."""
    namespaces = [STANDARD_NAMESPACE, *config.namespaces]
    rw = 0x01
    nodes = {
        ROOT_FOLDER: MockNode(ROOT_FOLDER, "Root", NodeClass.OBJECT),
        OBJECTS_FOLDER: MockNode(OBJECTS_FOLDER, "Objects", NodeClass.OBJECT),
        SERVER_OBJECT: MockNode(SERVER_OBJECT, "Server", NodeClass.OBJECT),
        NAMESPACE_ARRAY: MockNode(NAMESPACE_ARRAY, "NamespaceArray", NodeClass.VARIABLE, rw, rw, value=_variant(namespaces)),
        SOFTWARE_VERSION: MockNode(
            SOFTWARE_VERSION, "SoftwareVersion", NodeClass.VARIABLE, rw, rw, value=_variant(config.software_version)
        ),
    }
    nodes[ROOT_FOLDER].refs.append((ORGANIZES, OBJECTS_FOLDER))
    nodes[OBJECTS_FOLDER].refs.append((ORGANIZES, SERVER_OBJECT))
    nodes[SERVER_OBJECT].refs += [(HAS_PROPERTY, NAMESPACE_ARRAY), (HAS_COMPONENT, SOFTWARE_VERSION)]
    for spec in config.address_space:
        node_id = NodeId.parse(spec.node_id)
        if node_id in nodes:
            raise ValueError(f"node {spec.node_id} collides with the standard skeleton")
        cls = NODE_CLASSES[spec.node_class]
        user_al = spec.access_level if spec.user_access_level is None else spec.user_access_level
        user_ex = spec.executable if spec.user_executable is None else spec.user_executable
        nodes[node_id] = MockNode(
            node_id,
            spec.browse_name or spec.node_id,
            cls,
            access_level=spec.access_level if cls is NodeClass.VARIABLE else 0,
            user_access_level=user_al if cls is NodeClass.VARIABLE else 0,
            executable=spec.executable if cls is NodeClass.METHOD else False,
            user_executable=user_ex if cls is NodeClass.METHOD else False,
            value=_variant(spec.value) if cls is NodeClass.VARIABLE else None,
        )
    for spec in config.address_space:
        node_id = NodeId.parse(spec.node_id)
        parent = NodeId.parse(spec.parent)
        if parent not in nodes:
            raise ValueError(f"parent {spec.parent} of {spec.node_id} does not exist")
        ref_type = ORGANIZES if nodes[node_id].node_class is NodeClass.OBJECT else HAS_COMPONENT
        nodes[parent].refs.append((ref_type, node_id))
        for extra in spec.references:
            target = NodeId.parse(extra)
            if target not in nodes:
                raise ValueError(f"reference target {extra} does not exist")
            nodes[node_id].refs.append((ORGANIZES, target))
    return nodes


# --- server state --------------------------------------------------------------


@dataclass
class _Session:
    session_id: NodeId
    token: NodeId
    channel_id: int
    endpoint: EndpointSpec
    activated: bool = False
    continuations: dict[bytes, list] = field(default_factory=dict)


class MockServer:
    """A running fixture.  Use :func:`serve` to create one."""

    def __init__(self, config: FixtureConfig, host: str = "127.0.0.1", port: int = 0):
        self.config = config
        self.log = ServiceLog()
        self.identity = _identity(config)
        self.nodes = build_address_space(config)
        self._inverse: dict[NodeId, list[tuple[NodeId, NodeId]]] = {}
        for node in self.nodes.values():
            for ref_type, target in node.refs:
                self._inverse.setdefault(target, []).append((ref_type, node.node_id))
        self._sessions: dict[NodeId, _Session] = {}
        self._lock = threading.Lock()
        self._channel_ids = itertools.count(1)
        self._session_ids = itertools.count(1)
        self.referral_urls = [e.url or "" for e in config.referral_endpoints]
        try:
            self._server = _TCPServer((host, port), _Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        self._server.fixture = self
        self._thread: threading.Thread | None = None

    # lifecycle

    @property
    def host(self) -> str:
        return self._server.server_address[0]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        return f"opc.tcp://{self.config.advertised_host or self.host}:{self.port}"

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        # shutdown() waits for serve_forever, which never ran on an unstarted fixture
        if self._thread is not None:
            self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()

    # advertised endpoints

    def endpoint_descriptions(self) -> list[EndpointDescription]:
        cfg = self.config
        server = ApplicationDescription(
            application_uri=cfg.application_uri,
            product_uri=cfg.product_uri,
            application_name=LocalizedText(cfg.application_name, "en"),
            application_type=ApplicationType.SERVER,
            discovery_urls=[self.url],
        )
        out = []
        specs = [(e, e.url or self.url) for e in cfg.endpoints]
        specs += list(zip(cfg.referral_endpoints, self.referral_urls))
        for spec, url in specs:
            level = spec.security_level
            if level is None:
                level = {MessageSecurityMode.NONE: 0, MessageSecurityMode.SIGN: 1}.get(spec.security_mode, 2)
                level = level * 10 + policy_from_uri(spec.policy_uri).rank
            tokens = [
                UserTokenPolicy(policy_id=f"{t.lower()}", token_type=TOKENS[t], security_policy_uri=None)
                for t in spec.tokens
            ]
            out.append(
                EndpointDescription(
                    endpoint_url=url,
                    server=server,
                    server_certificate=self.identity.certificate,
                    security_mode=spec.security_mode,
                    security_policy_uri=spec.policy_uri,
                    user_identity_tokens=tokens,
                    transport_profile_uri=TCP_TRANSPORT,
                    security_level=level,
                )
            )
        return out

    def find_endpoint(self, policy_uri: str, mode) -> EndpointSpec | None:
        for spec in self.config.endpoints:
            if spec.policy_uri == policy_uri and spec.security_mode == mode:
                return spec
        return None

    def offers_policy(self, policy_uri: str) -> bool:
        return any(spec.policy_uri == policy_uri for spec in self.config.endpoints)

    # sessions

    def create_session(self, channel_id: int, endpoint: EndpointSpec) -> _Session:
        with self._lock:
            n = next(self._session_ids)
            session = _Session(NodeId(n, 1), NodeId(os.urandom(16), 0), channel_id, endpoint)
            self._sessions[session.token] = session
            return session

    def session(self, token: NodeId) -> _Session | None:
        with self._lock:
            return self._sessions.get(token)

    def next_channel_id(self) -> int:
        with self._lock:
            return next(self._channel_ids)


def _identity(config: FixtureConfig) -> Identity:
    spec = config.certificate
    if spec.der_b64:
        if not spec.key_pem:
            raise ValueError("an explicit certificate needs its private key")
        return Identity(base64.b64decode(spec.der_b64), crypto.private_key_from_pem(spec.key_pem.encode()))
    return make_identity(
        spec.common_name or config.application_name,
        spec.hash,
        spec.key_bits,
        key_slot=spec.key_slot,
        application_uri=config.application_uri,
        dns_names=tuple(spec.dns_names),
        organization=spec.organization,
        not_before=spec.not_before_dt,
        lifetime_days=spec.lifetime_days,
    )


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 64
    fixture: MockServer


# --- connection handler --------------------------------------------------------


class _Reject(Exception):
    def __init__(self, status: int, reason: str = "", close_only: bool = False):
        super().__init__(reason)
        self.status = status
        self.reason = reason
        self.close_only = close_only


class _Handler(socketserver.BaseRequestHandler):
    fixture: MockServer

    def setup(self):
        self.fixture = self.server.fixture
        self.fixture.log.connected()
        self.peer = "%s:%s" % self.client_address[:2]
        self.fs = FramedSocket(self.request, 65535, timeout=60.0)
        self.conv = SecureConversation()
        self.channel_id = 0
        self.send_chunk = 65535
        self.assembler = ChunkAssembler()

    def finish(self):
        self.fixture.log.disconnected()

    def log(self, service: str, detail: str = "") -> None:
        self.fixture.log.append(LogEntry(time.monotonic(), service, self.peer, self.channel_id, detail))

    def handle(self):
        try:
            self._hello()
            while True:
                msg, raw = self.fs.recv_frame()
                if msg.kind is MessageKind.OPN:
                    self._open(msg, raw)
                elif msg.kind is MessageKind.MSG:
                    self._message(msg, raw)
                elif msg.kind is MessageKind.CLO:
                    try:
                        self.conv.open(msg, raw)
                    finally:
                        self.log("Close")
                    return
                else:
                    raise _Reject(sc.BAD_TCP_MESSAGE_TYPE_INVALID, f"unexpected {msg.kind.value}")
        except _Reject as rej:
            if not rej.close_only:
                self._send_quietly(encode_error(rej.status, rej.reason))
        except crypto.SecurityCheckFailed as exc:
            self._send_quietly(encode_error(sc.BAD_SECURITY_CHECKS_FAILED, str(exc)))
        except CodecError as exc:
            self._send_quietly(encode_error(sc.BAD_DECODING_ERROR, str(exc)[:200]))
        except (ConnectionClosed, OSError):
            pass

    def _send_quietly(self, data: bytes) -> None:
        try:
            self.fs.send(data)
        except OSError:
            pass

    def _hello(self) -> None:
        msg, _ = self.fs.recv_frame()
        if msg.kind is not MessageKind.HEL:
            raise _Reject(sc.BAD_TCP_MESSAGE_TYPE_INVALID, "expected HEL")
        hello = Hello.decode(msg.payload)
        self.log("Hello", str(hello.endpoint_url or ""))
        cfg = self.fixture.config
        if hello.receive_buffer_size:
            self.send_chunk = max(8192, min(cfg.max_chunk_size, hello.receive_buffer_size))
        ack = Acknowledge(cfg.protocol_version, 65535, self.send_chunk, 4 * 1024 * 1024, 0)
        self.fs.send(encode_transport(TransportMessage(MessageKind.ACK, ChunkType.FINAL, ack.encode())))

    # --- OpenSecureChannel ------------------------------------------------

    def _open(self, msg: TransportMessage, raw: bytes) -> None:
        fixture = self.fixture
        _, header, _ = read_asymmetric_prefix(msg.payload)
        policy = policy_from_uri(header.security_policy_uri)
        secured = crypto.algorithms_for(policy) is not None
        if not policy.is_none and not secured:
            self.log("OpenSecureChannel", f"unsupported {header.security_policy_uri}")
            raise _Reject(sc.BAD_SECURITY_POLICY_REJECTED)
        if secured and not fixture.offers_policy(policy.uri):
            self.log("OpenSecureChannel", f"policy {policy.name} not offered")
            raise _Reject(sc.BAD_SECURITY_POLICY_REJECTED)
        if secured and not fixture.config.accept_client_cert:
            self.log("OpenSecureChannel", "client certificate rejected")
            raise _Reject(sc.BAD_SECURITY_CHECKS_FAILED, "", close_only=fixture.config.reject_with == "close")
        if self.conv.channel_id == 0:
            self.conv = SecureConversation(
                policy,
                MessageSecurityMode.NONE,
                fixture.identity.certificate if secured else None,
                fixture.identity.key if secured else None,
            )
        opened = self.conv.open(msg, raw)
        body = self.assembler.add(opened.chunk_type, opened.body)
        if body is None:
            return
        decoded = decode_service_message(body)
        if not isinstance(decoded, ServiceMessage) or decoded.service is not Service.OPEN_SECURE_CHANNEL:
            self.log(getattr(decoded, "name", "Unknown"))
            raise _Reject(sc.BAD_TCP_MESSAGE_TYPE_INVALID, "OPN must carry OpenSecureChannel")
        req = decoded.body
        if self.channel_id == 0:
            self.channel_id = fixture.next_channel_id()
        self.log("OpenSecureChannel", policy.name)
        mode = req.security_mode
        if secured and mode not in (MessageSecurityMode.SIGN, MessageSecurityMode.SIGN_AND_ENCRYPT):
            raise _Reject(sc.BAD_SECURITY_MODE_REJECTED)
        if secured and fixture.find_endpoint(policy.uri, mode) is None:
            raise _Reject(sc.BAD_SECURITY_MODE_REJECTED)
        self.conv.mode = mode if secured else MessageSecurityMode.NONE
        self.conv.channel_id = self.channel_id
        self.conv.token_id += 1
        server_nonce = self.conv.make_nonce()
        self.conv.derive(bytes(req.client_nonce or b""))
        resp = OpenSecureChannelResponse(
            response_header=self._response_header(req.request_header),
            server_protocol_version=fixture.config.protocol_version,
            security_token=ChannelSecurityToken(self.channel_id, self.conv.token_id, now_ticks(), req.requested_lifetime),
            server_nonce=server_nonce,
        )
        payload = encode_service_response(Service.OPEN_SECURE_CHANNEL, resp)
        for frame in self.conv.seal(MessageKind.OPN, payload, opened.request_id, self.send_chunk):
            self.fs.send(frame)

    # --- MSG --------------------------------------------------------------

    def _message(self, msg: TransportMessage, raw: bytes) -> None:
        if self.channel_id == 0:
            raise _Reject(sc.BAD_SECURE_CHANNEL_ID_INVALID, "no channel")
        opened = self.conv.open(msg, raw)
        body = self.assembler.add(opened.chunk_type, opened.body)
        if body is None:
            return
        decoded = decode_service_message(body)
        if isinstance(decoded, UnsupportedServiceMessage):
            self.log(decoded.name, "refused")
            self._reply_fault(opened.request_id, None, sc.BAD_SERVICE_UNSUPPORTED)
            return
        if not decoded.is_request:
            self.log(decoded.name, "unexpected response")
            self._reply_fault(opened.request_id, None, sc.BAD_DECODING_ERROR)
            return
        service = decoded.service
        self.log(service.value)
        req = decoded.body
        handler = {
            Service.GET_ENDPOINTS: self._get_endpoints,
            Service.CREATE_SESSION: self._create_session,
            Service.ACTIVATE_SESSION: self._activate_session,
            Service.BROWSE: self._browse,
            Service.BROWSE_NEXT: self._browse_next,
            Service.READ: self._read,
        }.get(service)
        if handler is None:
            self._reply_fault(opened.request_id, req.request_header, sc.BAD_SERVICE_UNSUPPORTED)
            return
        try:
            resp = handler(req)
        except _Fault as fault:
            self._reply_fault(opened.request_id, req.request_header, fault.status)
            return
        self._reply(opened.request_id, encode_service_response(service, resp))

    def _reply(self, request_id: int, payload: bytes) -> None:
        for frame in self.conv.seal(MessageKind.MSG, payload, request_id, self.send_chunk):
            self.fs.send(frame)

    def _reply_fault(self, request_id: int, request_header, status: int) -> None:
        header = self._response_header(request_header, status)
        self._reply(request_id, encode_service_fault(ServiceFaultBody(header)))

    @staticmethod
    def _response_header(request_header, status: int = sc.GOOD) -> ResponseHeader:
        handle = request_header.request_handle if request_header is not None else 0
        return ResponseHeader(timestamp=now_ticks(), request_handle=handle, service_result=status)

    # --- services -----------------------------------------------------------

    def _get_endpoints(self, req):
        return GetEndpointsResponse(self._response_header(req.request_header), self.fixture.endpoint_descriptions())

    def _create_session(self, req):
        fixture = self.fixture
        cfg = fixture.config
        if cfg.anonymous_session_behavior == "FaultOnCreate":
            raise _Fault(cfg.session_fault_status or sc.BAD_INTERNAL_ERROR)
        endpoint = fixture.find_endpoint(self.conv.policy.uri, self.conv.mode)
        if endpoint is None:
            raise _Fault(sc.BAD_SECURITY_POLICY_REJECTED)
        session = fixture.create_session(self.channel_id, endpoint)
        signature = SignatureData()
        if self.conv.secured and req.client_certificate:
            data = bytes(req.client_certificate) + bytes(req.client_nonce or b"")
            signature = SignatureData(
                self.conv.alg.signature_uri, crypto.rsa_sign(self.conv.alg, fixture.identity.key, data)
            )
        return CreateSessionResponse(
            response_header=self._response_header(req.request_header),
            session_id=session.session_id,
            authentication_token=session.token,
            revised_session_timeout=min(float(req.requested_session_timeout or 0) or 30_000.0, 60_000.0),
            server_nonce=os.urandom(32),
            server_certificate=fixture.identity.certificate,
            server_endpoints=fixture.endpoint_descriptions(),
            server_signature=signature,
            max_request_message_size=4 * 1024 * 1024,
        )

    def _activate_session(self, req):
        fixture = self.fixture
        cfg = fixture.config
        session = fixture.session(req.request_header.authentication_token)
        if session is None:
            raise _Fault(sc.BAD_SESSION_ID_INVALID)
        if cfg.anonymous_session_behavior == "FaultOnActivate":
            raise _Fault(cfg.session_fault_status or sc.BAD_IDENTITY_TOKEN_REJECTED)
        token = req.user_identity_token
        type_id = token.type_id if token is not None else NodeId()
        if type_id != NodeId(ANONYMOUS_IDENTITY_TOKEN_ID) or "Anonymous" not in session.endpoint.tokens:
            raise _Fault(sc.BAD_IDENTITY_TOKEN_REJECTED)
        session.activated = True
        return ActivateSessionResponse(self._response_header(req.request_header), os.urandom(32), [], [])

    def _active_session(self, req) -> _Session:
        session = self.fixture.session(req.request_header.authentication_token)
        if session is None:
            raise _Fault(sc.BAD_SESSION_ID_INVALID)
        if not session.activated:
            raise _Fault(sc.BAD_SESSION_NOT_ACTIVATED)
        return session

    def _references(self, desc) -> list[ReferenceDescription] | None:
        node = self.fixture.nodes.get(desc.node_id)
        if node is None:
            return None
        pairs = []
        if desc.browse_direction in (BrowseDirection.FORWARD, BrowseDirection.BOTH):
            pairs += [(t, n, True) for t, n in node.refs]
        if desc.browse_direction in (BrowseDirection.INVERSE, BrowseDirection.BOTH):
            pairs += [(t, n, False) for t, n in self.fixture._inverse.get(node.node_id, [])]
        wanted = desc.reference_type_id
        out = []
        for ref_type, target_id, forward in pairs:
            if not wanted.is_null:
                if wanted == HIERARCHICAL_REFERENCES and desc.include_subtypes:
                    if ref_type not in _HIERARCHICAL:
                        continue
                elif ref_type != wanted:
                    continue
            target = self.fixture.nodes[target_id]
            if desc.node_class_mask and not (desc.node_class_mask & int(target.node_class)):
                continue
            out.append(
                ReferenceDescription(
                    reference_type_id=ref_type,
                    is_forward=forward,
                    node_id=ExpandedNodeId(target.node_id),
                    browse_name=QualifiedName(target.browse_name, target.node_id.namespace),
                    display_name=LocalizedText(target.browse_name),
                    node_class=target.node_class,
                    type_definition=ExpandedNodeId(NodeId()),
                )
            )
        return out

    def _page(self, session: _Session, refs: list, limit: int) -> BrowseResult:
        cap = self.fixture.config.browse_page_size
        limits = [x for x in (limit, cap) if x]
        size = min(limits) if limits else len(refs)
        if len(refs) <= size:
            return BrowseResult(sc.GOOD, None, refs)
        cp = os.urandom(8)
        session.continuations[cp] = (refs[size:], size)
        return BrowseResult(sc.GOOD, cp, refs[:size])

    def _browse(self, req):
        session = self._active_session(req)
        results = []
        for desc in req.nodes_to_browse:
            refs = self._references(desc)
            if refs is None:
                results.append(BrowseResult(sc.BAD_NODE_ID_UNKNOWN, None, []))
            else:
                results.append(self._page(session, refs, req.requested_max_references_per_node))
        return BrowseResponse(self._response_header(req.request_header), results, [])

    def _browse_next(self, req):
        session = self._active_session(req)
        results = []
        for cp in req.continuation_points:
            entry = session.continuations.pop(bytes(cp or b""), None)
            if entry is None:
                results.append(BrowseResult(sc.BAD_CONTINUATION_POINT_INVALID, None, []))
            elif req.release_continuation_points:
                results.append(BrowseResult(sc.GOOD, None, []))
            else:
                rest, size = entry
                results.append(self._page(session, rest, size))
        return BrowseNextResponse(self._response_header(req.request_header), results, [])

    def _read(self, req):
        self._active_session(req)
        return ReadResponse(
            self._response_header(req.request_header), [self._read_one(r) for r in req.nodes_to_read], []
        )

    def _read_one(self, rv) -> DataValue:
        node = self.fixture.nodes.get(rv.node_id)
        if node is None:
            return DataValue(status=sc.BAD_NODE_ID_UNKNOWN)
        attr = rv.attribute_id
        is_var = node.node_class is NodeClass.VARIABLE
        is_method = node.node_class is NodeClass.METHOD
        if attr == 1:
            return DataValue(Variant(node.node_id, VariantType.NodeId))
        if attr == 2:
            return DataValue(Variant(int(node.node_class), VariantType.Int32))
        if attr == 3:
            return DataValue(Variant(QualifiedName(node.browse_name, node.node_id.namespace), VariantType.QualifiedName))
        if attr == 4:
            return DataValue(Variant(LocalizedText(node.browse_name), VariantType.LocalizedText))
        if attr == 13 and is_var:
            if not node.user_access_level & 0x01:
                return DataValue(status=sc.BAD_NOT_READABLE)
            return DataValue(node.value)
        if attr == 17 and is_var:
            return DataValue(Variant(node.access_level, VariantType.Byte))
        if attr == 18 and is_var:
            return DataValue(Variant(node.user_access_level, VariantType.Byte))
        if attr == 21 and is_method:
            return DataValue(Variant(node.executable, VariantType.Boolean))
        if attr == 22 and is_method:
            return DataValue(Variant(node.user_executable, VariantType.Boolean))
        return DataValue(status=sc.BAD_ATTRIBUTE_ID_INVALID)


class _Fault(Exception):
    def __init__(self, status: int):
        super().__init__(sc.status_name(status))
        self.status = status


# --- public entry points -------------------------------------------------------


def serve(config: FixtureConfig, host: str = "127.0.0.1", port: int = 0) -> MockServer:
    """Bind and start one fixture; ``port=0`` picks a free port."""
    return MockServer(config, host, port).start()


def fleet(configs: list[FixtureConfig], host: str = "127.0.0.1", base_port: int | None = None, attempts: int = 20) -> list[MockServer]:
    """Start fixtures on consecutive ports.

    Referral URLs of the form ``fleet:N`` resolve to the N-th fixture of the
    same fleet.
    """
    if not configs:
        return []
    start = base_port or _free_port(host)
    for _ in range(attempts):
        servers: list[MockServer] = []
        try:
            for i, cfg in enumerate(configs):
                servers.append(MockServer(cfg, host, start + i))
        except BindFailure:
            for s in servers:
                s._server.server_close()
            start = _free_port(host) if base_port is None else start + len(configs)
            continue
        for s in servers:
            s.referral_urls = [_resolve(e.url, servers) for e in s.config.referral_endpoints]
            s.start()
        return servers
    raise BindFailure(f"no run of {len(configs)} consecutive free ports found")


def _resolve(url: str | None, servers: list[MockServer]) -> str:
    if url and url.startswith("fleet:"):
        return servers[int(url.split(":", 1)[1])].url
    return url or ""


def _free_port(host: str) -> int:
    with socket.socket() as s:
        s.bind((host, 0))
        return s.getsockname()[1]


def stop_all(servers: list[MockServer]) -> None:
    for s in servers:
        s.stop()


def serve_banner(banner: bytes, host: str = "127.0.0.1", port: int = 0):
    """A TCP listener that answers every connection with ``banner`` (e.g. an HTTP response) and hangs up."""

    class _Banner(socketserver.BaseRequestHandler):
        def handle(self):
            try:
                self.request.recv(4096)
                self.request.sendall(banner)
            except OSError:
                pass

    srv = _TCPServer((host, port), _Banner)
    threading.Thread(target=srv.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True).start()
    return srv
