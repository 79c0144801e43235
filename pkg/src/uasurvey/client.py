"""Per-host probe: endpoints, certificate-bearing channel, anonymous session, traversal.

A probe runs strictly in phase order and never issues a service outside
GetEndpoints, OpenSecureChannel, CreateSession, ActivateSession, Browse,
BrowseNext and Read.  Every request passes through a
:class:`~uasurvey.budget.BudgetTracker`, which enforces the inter-request
gap and the per-host time and byte ceilings.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import socket
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID

from uasurvey import crypto
from uasurvey.addressspace import (
    ATTR_USER_ACCESS_LEVEL,
    ATTR_USER_EXECUTABLE,
    ATTR_VALUE,
    HIERARCHICAL_REFERENCES,
    NAMESPACE_ARRAY,
    ROOT_FOLDER,
    SOFTWARE_VERSION,
    AccessLevel,
    AddressSpaceSnapshot,
    NodeRecord,
)
from uasurvey.budget import BudgetExceeded, BudgetTracker, ScanBudget
from uasurvey.channel import ConnectionClosed, ErrorReceived, FramedSocket, SecureConversation, connect, decode_error
from uasurvey.policies import NONE, PolicyId, SecurityPolicy, policy_from_uri
from uasurvey.targets import Target, url_points_to
from uasurvey.wire import status as sc
from uasurvey.wire.binary import LocalizedText, NodeId, now_ticks
from uasurvey.wire.errors import CodecError, ServiceFault, UnknownKind
from uasurvey.wire.services import (
    Service,
    anonymous_identity_token,
    decode_service_response,
    encode_close_request,
    encode_service_request,
)
from uasurvey.wire.structs import (
    Acknowledge,
    ActivateSessionRequest,
    ApplicationDescription,
    ApplicationType,
    BrowseDescription,
    BrowseDirection,
    BrowseNextRequest,
    BrowseRequest,
    CloseSecureChannelRequest,
    CreateSessionRequest,
    EndpointDescription,
    GetEndpointsRequest,
    Hello,
    MessageSecurityMode,
    NodeClass,
    OpenSecureChannelRequest,
    ReadRequest,
    ReadValueId,
    RequestHeader,
    SecurityTokenRequestType,
    SignatureData,
    UserTokenType,
)
from uasurvey.wire.transport import ChunkAssembler, ChunkType, MessageKind, TransportMessage, encode_transport

RECEIVE_BUFFER = 65535
SEND_BUFFER = 65535
MAX_MESSAGE = 4 * 1024 * 1024


class ChannelProbe(str, Enum):
    NOT_ATTEMPTED = "NotAttempted"
    ACCEPTED = "Accepted"
    CERTIFICATE_REJECTED = "CertificateRejected"
    ERROR = "Error"


class SessionProbe(str, Enum):
    NOT_ATTEMPTED = "NotAttempted"
    ANONYMOUS_ACCEPTED = "AnonymousAccepted"
    AUTHENTICATION_REJECTED = "AuthenticationRejected"
    SECURE_CHANNEL_REJECTED = "SecureChannelRejected"
    INVALID_CONFIGURATION = "InvalidConfiguration"


class ProbeError(str, Enum):
    CONNECT_TIMEOUT = "ConnectTimeout"
    CONNECT_REFUSED = "ConnectRefused"
    NOT_OPC_UA = "NotOpcUa"
    TRANSPORT_ERROR = "TransportError"
    BUDGET_EXCEEDED = "BudgetExceeded"
    BROWSE_FAULT = "BrowseFault"


@dataclass(frozen=True)
class PhaseError:
    phase: str  # endpoints | channel | session | traversal
    kind: ProbeError | str
    detail: str = ""
    status: int | None = None


@dataclass(frozen=True)
class ProbeResult:
    target: Target
    reached: bool = False
    endpoints: tuple[EndpointDescription, ...] = ()
    server_certificate: bytes | None = None
    channel_probe: ChannelProbe = ChannelProbe.NOT_ATTEMPTED
    channel_status: int | None = None
    channel_endpoint: int | None = None
    session_probe: SessionProbe = SessionProbe.NOT_ATTEMPTED
    session_status: int | None = None
    session_endpoint: int | None = None
    software_version: str | None = None
    application_uri: str | None = None
    address_space: AddressSpaceSnapshot | None = None
    server_protocol_version: int | None = None
    errors: tuple[PhaseError, ...] = ()
    bytes_sent: int = 0
    requests: int = 0
    duration: float = 0.0
    budget_tripped: str | None = None
    started_at: str = ""

    @property
    def error(self) -> PhaseError | None:
        return self.errors[0] if self.errors else None


# --- client identity -----------------------------------------------------------


@dataclass(frozen=True)
class ClientIdentity:
    """Self-signed scanner certificate; the contact string rides in subject and ApplicationName."""

    certificate: bytes
    key: rsa.RSAPrivateKey
    application_uri: str
    application_name: str

    def description(self) -> ApplicationDescription:
        return ApplicationDescription(
            application_uri=self.application_uri,
            product_uri="urn:uasurvey",
            application_name=LocalizedText(self.application_name, "en"),
            application_type=ApplicationType.CLIENT,
        )


def create_client_identity(
    contact: str = "",
    application_uri: str = "urn:uasurvey:scanner",
    name: str = "uasurvey research scanner",
    key_bits: int = 2048,
) -> ClientIdentity:
    key = rsa.generate_private_key(public_exponent=65537, key_size=key_bits)
    full_name = f"{name} ({contact})" if contact else name
    attrs = [x509.NameAttribute(NameOID.COMMON_NAME, full_name[:64])]
    if contact:
        attrs.append(x509.NameAttribute(NameOID.ORGANIZATIONAL_UNIT_NAME, contact[:64]))
    subject = x509.Name(attrs)
    alt: list[x509.GeneralName] = [x509.UniformResourceIdentifier(application_uri)]
    if "@" in contact:
        alt.append(x509.RFC822Name(contact.split()[-1].strip("<>")))
    now = dt.datetime.now(dt.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - dt.timedelta(days=1))
        .not_valid_after(now + dt.timedelta(days=365))
        .add_extension(x509.SubjectAlternativeName(alt), critical=False)
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True,
                content_commitment=True,
                key_encipherment=True,
                data_encipherment=True,
                key_agreement=False,
                key_cert_sign=False,
                crl_sign=False,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(
            x509.ExtendedKeyUsage([ExtendedKeyUsageOID.CLIENT_AUTH, ExtendedKeyUsageOID.SERVER_AUTH]),
            critical=False,
        )
        .sign(key, hashes.SHA256())
    )
    return ClientIdentity(cert.public_bytes(serialization.Encoding.DER), key, application_uri, full_name)


# --- configuration -------------------------------------------------------------


@dataclass
class ProbeConfig:
    identity: ClientIdentity | None = None
    references: str = "hierarchical"  # or "all"
    read_batch: int = 50
    browse_batch: int = 50
    max_references_per_node: int = 1000
    connect_timeout: float = 10.0
    io_timeout: float = 30.0
    session_timeout_ms: float = 30_000.0
    traverse: bool = True

    def __post_init__(self):
        if self.references not in ("hierarchical", "all"):
            raise ValueError("references must be 'hierarchical' or 'all'")
        if self.read_batch < 1 or self.browse_batch < 1:
            raise ValueError("batch sizes must be positive")


# --- connection ----------------------------------------------------------------


class Connection:
    """One TCP connection carrying one secure channel (and maybe a session)."""

    def __init__(self, target: Target, tracker: BudgetTracker, config: ProbeConfig, endpoint_url: str):
        self.target = target
        self.tracker = tracker
        self.config = config
        self.endpoint_url = endpoint_url
        timeout = min(config.connect_timeout, max(tracker.remaining_time(), 0.05))
        self.fs = FramedSocket(connect(target.host, target.port, timeout), RECEIVE_BUFFER, timeout)
        self.fs.on_send = tracker.count_bytes
        self.conv = SecureConversation()
        self.ack: Acknowledge | None = None
        self.send_chunk = SEND_BUFFER
        self.channel_open = False
        self.auth_token = NodeId()
        self._request_id = 0
        self._handle = 0

    # plumbing

    def _next_ids(self) -> tuple[int, int]:
        self._request_id += 1
        self._handle += 1
        return self._request_id, self._handle

    def header(self) -> RequestHeader:
        _, handle = self._next_ids()
        return RequestHeader(
            authentication_token=self.auth_token,
            timestamp=now_ticks(),
            request_handle=handle,
            timeout_hint=int(self.config.io_timeout * 1000),
        )

    def _arm_timeout(self) -> None:
        remaining = self.tracker.remaining_time()
        self.fs.sock.settimeout(max(0.05, min(self.config.io_timeout, remaining + 0.05)))

    def _recv(self):
        try:
            return self.fs.recv_frame()
        except socket.timeout:
            if self.tracker.remaining_time() <= 0:
                self.tracker.tripped = "time"
                raise BudgetExceeded("time", "while waiting for a response") from None
            raise

    def _receive(self, request_id: int, expect: MessageKind) -> bytes:
        assembler = ChunkAssembler(MAX_MESSAGE)
        while True:
            msg, raw = self._recv()
            if msg.kind is MessageKind.ERR:
                raise decode_error(msg)
            if msg.kind is not expect:
                raise CodecError(f"expected {expect.value}, got {msg.kind.value}")
            opened = self.conv.open(msg, raw)
            if opened.request_id != request_id:
                continue
            body = assembler.add(opened.chunk_type, opened.body)
            if body is not None:
                self.tracker.mark_response()
                return body

    # protocol steps

    def hello(self) -> Acknowledge:
        self.tracker.before_request()
        hello = Hello(0, RECEIVE_BUFFER, SEND_BUFFER, MAX_MESSAGE, 0, self.endpoint_url)
        payload = hello.encode()
        self._arm_timeout()
        self.fs.send(encode_transport(TransportMessage(MessageKind.HEL, ChunkType.FINAL, payload)))
        msg, _ = self._recv()
        if msg.kind is MessageKind.ERR:
            raise decode_error(msg)
        if msg.kind is not MessageKind.ACK:
            raise CodecError(f"expected ACK, got {msg.kind.value}")
        self.tracker.mark_response()
        self.ack = Acknowledge.decode(msg.payload)
        if self.ack.receive_buffer_size:
            self.send_chunk = min(SEND_BUFFER, self.ack.receive_buffer_size)
        return self.ack

    def open_channel(
        self,
        policy: SecurityPolicy = NONE,
        mode: MessageSecurityMode = MessageSecurityMode.NONE,
        server_certificate: bytes | None = None,
    ):
        identity = self.config.identity
        secured = crypto.algorithms_for(policy) is not None
        if secured and (identity is None or not server_certificate):
            raise ValueError("a secured channel needs a client identity and the server certificate")
        self.conv = SecureConversation(
            policy,
            mode,
            identity.certificate if secured else None,
            identity.key if secured else None,
            server_certificate if secured else None,
        )
        self.tracker.before_request()
        request_id = self._request_id + 1
        body = OpenSecureChannelRequest(
            request_header=self.header(),
            client_protocol_version=0,
            request_type=SecurityTokenRequestType.ISSUE,
            security_mode=mode,
            client_nonce=self.conv.make_nonce(),
            requested_lifetime=3_600_000,
        )
        frames = self.conv.seal(
            MessageKind.OPN, encode_service_request(Service.OPEN_SECURE_CHANNEL, body), request_id, self.send_chunk
        )
        self._arm_timeout()
        for frame in frames:
            self.fs.send(frame)
        payload = self._receive(request_id, MessageKind.OPN)
        resp = decode_service_response(payload, Service.OPEN_SECURE_CHANNEL)
        self.conv.channel_id = resp.security_token.channel_id
        self.conv.token_id = resp.security_token.token_id
        self.conv.derive(resp.server_nonce or b"")
        self.channel_open = True
        return resp

    def call(self, service: Service, build):
        """Send one request; ``build(header)`` returns the request body."""
        self.tracker.before_request()
        request_id = self._request_id + 1
        body = build(self.header())
        frames = self.conv.seal(MessageKind.MSG, encode_service_request(service, body), request_id, self.send_chunk)
        self._arm_timeout()
        for frame in frames:
            self.fs.send(frame)
        payload = self._receive(request_id, MessageKind.MSG)
        return decode_service_response(payload, service)

    def close(self) -> None:
        """Send CLO if the budget still allows one more message, then drop the socket."""
        try:
            if self.channel_open:
                self.tracker.before_request()
                request_id = self._request_id + 1
                body = encode_close_request(CloseSecureChannelRequest(self.header()))
                for frame in self.conv.seal(MessageKind.CLO, body, request_id, self.send_chunk):
                    self.fs.send(frame)
        except (BudgetExceeded, OSError, CodecError):
            pass
        finally:
            self.channel_open = False
            self.fs.close()


# --- endpoint selection --------------------------------------------------------


def _mode_rank(mode) -> int:
    return {MessageSecurityMode.NONE: 0, MessageSecurityMode.SIGN: 1, MessageSecurityMode.SIGN_AND_ENCRYPT: 2}.get(
        mode, 3
    )


def _implementable(ep: EndpointDescription) -> bool:
    """Can this client open a channel for ``ep``?"""
    policy = policy_from_uri(ep.security_policy_uri)
    if ep.security_mode is MessageSecurityMode.NONE:
        return policy.is_none
    if ep.security_mode not in (MessageSecurityMode.SIGN, MessageSecurityMode.SIGN_AND_ENCRYPT):
        return False
    return crypto.algorithms_for(policy) is not None and bool(ep.server_certificate)


def _security_order(item: tuple[int, EndpointDescription]):
    i, ep = item
    return (_mode_rank(ep.security_mode), policy_from_uri(ep.security_policy_uri).rank, i)


def local_endpoints(endpoints, target: Target) -> list[tuple[int, EndpointDescription]]:
    return [(i, ep) for i, ep in enumerate(endpoints) if url_points_to(ep.endpoint_url, target)]


def choose_session_endpoint(endpoints, target: Target) -> int | None:
    """Lowest-security local endpoint that offers an Anonymous token (mode None first)."""
    candidates = [
        (i, ep)
        for i, ep in local_endpoints(endpoints, target)
        if UserTokenType.ANONYMOUS in ep.token_types() and _implementable(ep)
    ]
    if not candidates:
        return None
    return min(candidates, key=_security_order)[0]


def choose_channel_endpoint(endpoints, target: Target, session_index: int | None) -> int | None:
    """Endpoint for the certificate-bearing channel probe (None when no secured endpoint exists)."""
    if session_index is not None and endpoints[session_index].security_mode is not MessageSecurityMode.NONE:
        return session_index
    secured = [
        (i, ep)
        for i, ep in local_endpoints(endpoints, target)
        if ep.security_mode is not MessageSecurityMode.NONE and _implementable(ep)
    ]
    if not secured:
        return None
    return min(secured, key=_security_order)[0]


def _anonymous_policy_id(ep: EndpointDescription) -> str:
    for tok in ep.user_identity_tokens:
        if tok.token_type is UserTokenType.ANONYMOUS:
            return str(tok.policy_id or "")
    return ""


# --- phases --------------------------------------------------------------------


class _Probe:
    """Mutable scratchpad that becomes an immutable ProbeResult."""

    def __init__(self, target: Target, tracker: BudgetTracker, config: ProbeConfig):
        self.target = target
        self.tracker = tracker
        self.config = config
        self.fields: dict = {"target": target}
        self.errors: list[PhaseError] = []

    def fail(self, phase: str, kind, exc: BaseException | str = "", status: int | None = None) -> None:
        self.errors.append(PhaseError(phase, kind, str(exc), status))

    def result(self) -> ProbeResult:
        return ProbeResult(
            **self.fields,
            errors=tuple(self.errors),
            bytes_sent=self.tracker.bytes_sent,
            requests=self.tracker.requests,
            duration=self.tracker.elapsed(),
            budget_tripped=self.tracker.tripped,
        )


def _url(target: Target) -> str:
    return f"opc.tcp://{target}"


def _classify_transport(exc: BaseException) -> ProbeError:
    if isinstance(exc, BudgetExceeded):
        return ProbeError.BUDGET_EXCEEDED
    if isinstance(exc, UnknownKind):
        return ProbeError.NOT_OPC_UA
    return ProbeError.TRANSPORT_ERROR


def probe_endpoints(target: Target, tracker: BudgetTracker, config: ProbeConfig, state: _Probe | None = None):
    """Endpoints phase.  Returns ``(state, connection)``; the connection is None on failure."""
    state = state or _Probe(target, tracker, config)
    try:
        tracker.check()
        conn = Connection(target, tracker, config, _url(target))
    except BudgetExceeded as exc:
        state.fail("endpoints", ProbeError.BUDGET_EXCEEDED, exc)
        return state, None
    except socket.timeout as exc:
        state.fail("endpoints", ProbeError.CONNECT_TIMEOUT, exc or "connect timed out")
        return state, None
    except ConnectionRefusedError as exc:
        state.fail("endpoints", ProbeError.CONNECT_REFUSED, exc)
        return state, None
    except OSError as exc:
        state.fail("endpoints", ProbeError.TRANSPORT_ERROR, exc)
        return state, None
    try:
        ack = conn.hello()
        # a TCP listener that does not answer Hello with ACK is not an OPC UA host
        state.fields["reached"] = True
        state.fields["server_protocol_version"] = ack.protocol_version
        conn.open_channel()
        resp = conn.call(
            Service.GET_ENDPOINTS, lambda h: GetEndpointsRequest(request_header=h, endpoint_url=_url(target))
        )
    except (ErrorReceived, ServiceFault) as exc:
        state.fail("endpoints", ProbeError.TRANSPORT_ERROR, exc, getattr(exc, "status", None))
        conn.close()
        return state, None
    except (BudgetExceeded, CodecError, ConnectionClosed, OSError) as exc:
        state.fail("endpoints", _classify_transport(exc), exc)
        conn.close()
        return state, None
    endpoints = tuple(resp.endpoints)
    state.fields["endpoints"] = endpoints
    local = local_endpoints(endpoints, target) or list(enumerate(endpoints))
    for _, ep in local:
        if ep.server_certificate and "server_certificate" not in state.fields:
            state.fields["server_certificate"] = bytes(ep.server_certificate)
        if ep.server.application_uri and "application_uri" not in state.fields:
            state.fields["application_uri"] = str(ep.server.application_uri)
    return state, conn


def probe_secure_channel(
    target: Target, endpoint: EndpointDescription, tracker: BudgetTracker, config: ProbeConfig
) -> tuple[ChannelProbe, int | None, Connection | None, PhaseError | None]:
    """Open a channel presenting the self-signed client certificate.

    Returns the verdict, the raw status (if any), the open connection when
    accepted, and an error record for non-verdict failures.
    """
    if endpoint.security_mode is MessageSecurityMode.NONE or config.identity is None:
        return ChannelProbe.NOT_ATTEMPTED, None, None, None
    policy = policy_from_uri(endpoint.security_policy_uri)
    if crypto.algorithms_for(policy) is None:
        return ChannelProbe.NOT_ATTEMPTED, None, None, PhaseError("channel", ProbeError.TRANSPORT_ERROR, "unsupported policy")
    conn = None
    try:
        conn = Connection(target, tracker, config, str(endpoint.endpoint_url))
        conn.hello()
    except (BudgetExceeded, CodecError, ConnectionClosed, ErrorReceived, OSError) as exc:
        if conn is not None:
            conn.close()
        status = getattr(exc, "status", None)
        return ChannelProbe.ERROR, status, None, PhaseError("channel", _classify_transport(exc), str(exc), status)
    try:
        conn.open_channel(policy, endpoint.security_mode, bytes(endpoint.server_certificate))
        return ChannelProbe.ACCEPTED, sc.GOOD, conn, None
    except (ErrorReceived, ServiceFault) as exc:
        conn.close()
        if sc.is_security_rejection(exc.status):
            return ChannelProbe.CERTIFICATE_REJECTED, exc.status, None, None
        return ChannelProbe.ERROR, exc.status, None, PhaseError("channel", ProbeError.TRANSPORT_ERROR, str(exc), exc.status)
    except ConnectionClosed:
        # servers commonly drop the socket on an untrusted certificate
        conn.close()
        return ChannelProbe.CERTIFICATE_REJECTED, None, None, None
    except (BudgetExceeded, CodecError, OSError) as exc:
        conn.close()
        return ChannelProbe.ERROR, None, None, PhaseError("channel", _classify_transport(exc), str(exc))


def probe_anonymous_session(conn: Connection, endpoint: EndpointDescription, config: ProbeConfig):
    """CreateSession + ActivateSession with an Anonymous token on an open channel.

    Returns ``(verdict, status, error)``.
    """
    identity = config.identity
    secured = conn.conv.secured
    client_nonce = crypto.nonce(32) if secured else b""
    try:
        created = conn.call(
            Service.CREATE_SESSION,
            lambda h: CreateSessionRequest(
                request_header=h,
                client_description=identity.description() if identity else ApplicationDescription(
                    application_uri="urn:uasurvey:scanner", application_type=ApplicationType.CLIENT
                ),
                server_uri=str(endpoint.server.application_uri or ""),
                endpoint_url=str(endpoint.endpoint_url),
                session_name="uasurvey",
                client_nonce=client_nonce,
                client_certificate=identity.certificate if (secured and identity) else None,
                requested_session_timeout=config.session_timeout_ms,
                max_response_message_size=MAX_MESSAGE,
            ),
        )
        conn.auth_token = created.authentication_token
        signature = SignatureData()
        if secured:
            server_cert = bytes(created.server_certificate or endpoint.server_certificate or b"")
            data = server_cert + bytes(created.server_nonce or b"")
            signature = SignatureData(
                conn.conv.alg.signature_uri, crypto.rsa_sign(conn.conv.alg, identity.key, data)
            )
        conn.call(
            Service.ACTIVATE_SESSION,
            lambda h: ActivateSessionRequest(
                request_header=h,
                client_signature=signature,
                locale_ids=["en"],
                user_identity_token=anonymous_identity_token(_anonymous_policy_id(endpoint)),
            ),
        )
    except BudgetExceeded as exc:
        return SessionProbe.NOT_ATTEMPTED, None, PhaseError("session", ProbeError.BUDGET_EXCEEDED, str(exc))
    except (ServiceFault, ErrorReceived) as exc:
        return SessionProbe.INVALID_CONFIGURATION, exc.status, PhaseError(
            "session", "Fault", str(exc), exc.status
        )
    except (CodecError, ConnectionClosed, OSError) as exc:
        return SessionProbe.INVALID_CONFIGURATION, None, PhaseError("session", ProbeError.TRANSPORT_ERROR, str(exc))
    return SessionProbe.ANONYMOUS_ACCEPTED, sc.GOOD, None


def read_server_facts(conn: Connection) -> tuple[list[str], str | None]:
    """NamespaceArray and SoftwareVersion, both optional."""
    resp = conn.call(
        Service.READ,
        lambda h: ReadRequest(
            request_header=h,
            nodes_to_read=[ReadValueId(NAMESPACE_ARRAY, ATTR_VALUE), ReadValueId(SOFTWARE_VERSION, ATTR_VALUE)],
        ),
    )
    namespaces: list[str] = []
    version = None
    results = list(resp.results)
    if results and not sc.is_bad(results[0].status or 0) and results[0].value is not None:
        value = results[0].value.value
        if isinstance(value, list):
            namespaces = [str(v) for v in value if isinstance(v, str)]
    if len(results) > 1 and not sc.is_bad(results[1].status or 0) and results[1].value is not None:
        value = results[1].value.value
        if isinstance(value, str):
            version = str(value)
    return namespaces, version


def traverse_address_space(
    conn: Connection,
    config: ProbeConfig,
    namespace_array: list[str] | None = None,
    errors: list[PhaseError] | None = None,
) -> AddressSpaceSnapshot:
    """Breadth-first browse from the root folder, reading access rights in batches.

    The traversal stops early (``truncated=True``) when a budget trips or the
    connection dies; whatever was gathered is returned.
    """
    errors = errors if errors is not None else []
    snap = AddressSpaceSnapshot(namespace_array=list(namespace_array or []))
    ref_type = HIERARCHICAL_REFERENCES if config.references == "hierarchical" else NodeId()
    frontier: deque[NodeId] = deque([ROOT_FOLDER])
    snap.add(NodeRecord(ROOT_FOLDER, "Root", NodeClass.OBJECT))
    pending: list[NodeId] = []

    def flush(limit: int) -> None:
        while len(pending) >= limit and pending:
            batch, pending[:] = pending[: config.read_batch], pending[config.read_batch :]
            _read_access(conn, snap, batch, errors)

    def visit(refs) -> None:
        for ref in refs:
            target = ref.node_id
            if target.server_index or target.namespace_uri:
                continue  # lives on another server or needs uri mapping we do not trust
            node_id = NodeId(target.node_id.identifier, target.node_id.namespace)
            cls = ref.node_class
            record = NodeRecord(node_id, str(ref.browse_name.name or ""), cls)
            if snap.add(record):
                frontier.append(node_id)
                if cls in (NodeClass.VARIABLE, NodeClass.METHOD):
                    pending.append(node_id)

    try:
        while frontier:
            batch = [frontier.popleft() for _ in range(min(config.browse_batch, len(frontier)))]
            try:
                resp = conn.call(
                    Service.BROWSE,
                    lambda h: BrowseRequest(
                        request_header=h,
                        requested_max_references_per_node=config.max_references_per_node,
                        nodes_to_browse=[
                            BrowseDescription(n, BrowseDirection.FORWARD, ref_type, True, 0, 0x3F) for n in batch
                        ],
                    ),
                )
            except ServiceFault as exc:
                snap.browse_faults += 1
                errors.append(PhaseError("traversal", ProbeError.BROWSE_FAULT, str(exc), exc.status))
                continue
            continuations = []
            for result in resp.results:
                if sc.is_bad(result.status_code):
                    snap.browse_faults += 1
                    continue
                visit(result.references)
                if result.continuation_point:
                    continuations.append(bytes(result.continuation_point))
            while continuations:
                cps = continuations
                try:
                    nxt = conn.call(
                        Service.BROWSE_NEXT,
                        lambda h: BrowseNextRequest(
                            request_header=h, release_continuation_points=False, continuation_points=cps
                        ),
                    )
                except ServiceFault as exc:
                    snap.browse_faults += 1
                    errors.append(PhaseError("traversal", ProbeError.BROWSE_FAULT, str(exc), exc.status))
                    break
                continuations = []
                for result in nxt.results:
                    if sc.is_bad(result.status_code):
                        snap.browse_faults += 1
                        continue
                    visit(result.references)
                    if result.continuation_point:
                        continuations.append(bytes(result.continuation_point))
            flush(config.read_batch)
        flush(1)
    except BudgetExceeded as exc:
        snap.truncated = True
        errors.append(PhaseError("traversal", ProbeError.BUDGET_EXCEEDED, str(exc)))
    except (ErrorReceived, CodecError, ConnectionClosed, OSError) as exc:
        snap.truncated = True
        errors.append(PhaseError("traversal", ProbeError.TRANSPORT_ERROR, str(exc), getattr(exc, "status", None)))
    return snap


def _read_access(conn: Connection, snap: AddressSpaceSnapshot, batch: list[NodeId], errors: list) -> None:
    attrs = [
        ATTR_USER_EXECUTABLE if snap.nodes[n].node_class == NodeClass.METHOD else ATTR_USER_ACCESS_LEVEL
        for n in batch
    ]
    try:
        resp = conn.call(
            Service.READ,
            lambda h: ReadRequest(
                request_header=h, nodes_to_read=[ReadValueId(n, a) for n, a in zip(batch, attrs)]
            ),
        )
    except ServiceFault as exc:
        errors.append(PhaseError("traversal", "ReadFault", str(exc), exc.status))
        return
    for node_id, attr, dv in zip(batch, attrs, resp.results):
        if sc.is_bad(dv.status or 0) or dv.value is None:
            continue
        value = dv.value.value
        record = snap.nodes[node_id]
        if attr == ATTR_USER_EXECUTABLE and isinstance(value, bool):
            snap.nodes[node_id] = dataclasses.replace(record, executable=value)
        elif attr == ATTR_USER_ACCESS_LEVEL and isinstance(value, int) and not isinstance(value, bool):
            snap.nodes[node_id] = dataclasses.replace(record, access_level=AccessLevel(value & 0xFF))


# --- full probe ----------------------------------------------------------------


def probe(target: Target, budget: ScanBudget | None = None, config: ProbeConfig | None = None, tracker=None) -> ProbeResult:
    """Run every phase against ``target``; never raises for target-side failures."""
    config = config or ProbeConfig()
    tracker = tracker or BudgetTracker(budget or ScanBudget())
    state = _Probe(target, tracker, config)
    state.fields["started_at"] = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    state, conn = probe_endpoints(target, tracker, config, state)
    if conn is None:
        return state.result()
    endpoints = state.fields["endpoints"]
    session_index = choose_session_endpoint(endpoints, target)
    channel_index = choose_channel_endpoint(endpoints, target, session_index)
    session_conn = None
    try:
        if channel_index is None:
            session_conn, conn = conn, None
        else:
            conn.close()
            conn = None
            verdict, status, channel_conn, err = probe_secure_channel(
                target, endpoints[channel_index], tracker, config
            )
            state.fields.update(channel_probe=verdict, channel_status=status, channel_endpoint=channel_index)
            if err is not None:
                state.errors.append(err)
            if channel_conn is not None:
                if channel_index == session_index:
                    session_conn = channel_conn
                else:
                    channel_conn.close()
        _session_phase(state, session_conn, session_index, channel_index)
    finally:
        for c in (conn, session_conn):
            if c is not None:
                c.close()
    return state.result()


def _session_phase(state: _Probe, session_conn, session_index, channel_index) -> None:
    target, tracker, config = state.target, state.tracker, state.config
    endpoints = state.fields["endpoints"]
    if session_index is None:
        local = local_endpoints(endpoints, target)
        if any(UserTokenType.ANONYMOUS in ep.token_types() for _, ep in local):
            return  # anonymous offered only over a channel we cannot implement
        if local:
            state.fields["session_probe"] = SessionProbe.AUTHENTICATION_REJECTED
        return
    endpoint = endpoints[session_index]
    state.fields["session_endpoint"] = session_index
    if endpoint.security_mode is not MessageSecurityMode.NONE:
        verdict = state.fields.get("channel_probe")
        if verdict is ChannelProbe.CERTIFICATE_REJECTED:
            state.fields["session_probe"] = SessionProbe.SECURE_CHANNEL_REJECTED
            state.fields["session_status"] = state.fields.get("channel_status")
            return
        if session_conn is None:
            return
    if session_conn is None:
        try:
            session_conn = Connection(target, tracker, config, str(endpoint.endpoint_url))
            session_conn.hello()
            session_conn.open_channel()
        except (BudgetExceeded, CodecError, ConnectionClosed, ErrorReceived, ServiceFault, OSError) as exc:
            if session_conn is not None:
                session_conn.close()
            state.fail("session", _classify_transport(exc), exc, getattr(exc, "status", None))
            return
    try:
        verdict, status, err = probe_anonymous_session(session_conn, endpoint, config)
        state.fields.update(session_probe=verdict, session_status=status)
        if err is not None:
            state.errors.append(err)
        if verdict is not SessionProbe.ANONYMOUS_ACCEPTED:
            return
        snapshot = AddressSpaceSnapshot()
        try:
            namespaces, version = read_server_facts(session_conn)
            state.fields["software_version"] = version
            snapshot.namespace_array = namespaces
        except ServiceFault as exc:
            state.fail("traversal", "ReadFault", exc, exc.status)
            namespaces = []
        if config.traverse:
            snapshot = traverse_address_space(session_conn, config, namespaces, state.errors)
        state.fields["address_space"] = snapshot
    except BudgetExceeded as exc:
        state.fail("traversal", ProbeError.BUDGET_EXCEEDED, exc)
        state.fields["address_space"] = AddressSpaceSnapshot(truncated=True)
    except (ErrorReceived, CodecError, ConnectionClosed, OSError) as exc:
        state.fail("traversal", ProbeError.TRANSPORT_ERROR, exc, getattr(exc, "status", None))
        state.fields["address_space"] = AddressSpaceSnapshot(truncated=True)
    finally:
        session_conn.close()
