"""Secure-conversation layer: chunking plus per-policy message security.

:class:`SecureConversation` is role-agnostic; the scanner and the fixture
server each hold one per connection.  OpenSecureChannel chunks use the
asymmetric algorithms (always signed *and* encrypted once a policy other
than None is in force); MSG/CLO chunks use the derived symmetric keys and
honour the security mode.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric import rsa

from uasurvey import crypto
from uasurvey.policies import NONE, SecurityPolicy, policy_from_uri
from uasurvey.wire.binary import Reader, Writer
from uasurvey.wire.errors import MalformedResponse, OversizedMessage, Truncated
from uasurvey.wire.structs import AsymmetricSecurityHeader, ErrorMessage, MessageSecurityMode
from uasurvey.wire.transport import (
    HEADER_SIZE,
    ChunkType,
    MessageKind,
    SequenceHeader,
    TransportMessage,
    decode_header,
    encode_header,
)


class ErrorReceived(Exception):
    """The peer sent an ERR frame (or aborted) instead of an answer."""

    def __init__(self, status: int, reason: str = ""):
        from uasurvey.wire.status import status_name

        super().__init__(f"peer error {status_name(status)} (0x{status:08X}) {reason}".rstrip())
        self.status = status
        self.reason = reason


class ConnectionClosed(Exception):
    """The socket closed before a complete frame arrived."""


class FramedSocket:
    """Blocking frame I/O over a TCP socket with a per-frame size ceiling.

    ``on_send`` is called with the byte count before every write, which is
    where the scanner's byte budget hooks in.
    """

    def __init__(self, sock: socket.socket, max_frame: int = 65535, timeout: float | None = 10.0):
        self.sock = sock
        self.max_frame = max_frame
        self.bytes_sent = 0
        self.bytes_received = 0
        self.on_send = None
        if timeout is not None:
            sock.settimeout(timeout)

    def send(self, data: bytes) -> None:
        if self.on_send is not None:
            self.on_send(len(data))
        self.sock.sendall(data)
        self.bytes_sent += len(data)

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            part = self.sock.recv(n - len(buf))
            if not part:
                raise ConnectionClosed(f"connection closed after {len(buf)} of {n} bytes")
            buf += part
        self.bytes_received += n
        return bytes(buf)

    def recv_frame(self) -> tuple[TransportMessage, bytes]:
        """Read one frame; returns the message and its raw bytes."""
        head = self._recv_exact(HEADER_SIZE)
        kind, chunk, size = decode_header(head)
        if size > self.max_frame:
            raise OversizedMessage(f"frame of {size} bytes exceeds the negotiated {self.max_frame}")
        body = self._recv_exact(size - HEADER_SIZE)
        return TransportMessage(kind, chunk, body), head + body

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


@dataclass(frozen=True)
class OpenedChunk:
    kind: MessageKind
    chunk_type: ChunkType
    request_id: int
    sequence_number: int
    body: bytes
    security_header: AsymmetricSecurityHeader | None = None


def encode_error(status: int, reason: str = "") -> bytes:
    payload = ErrorMessage(status, reason).encode()
    return encode_header(MessageKind.ERR, ChunkType.FINAL, HEADER_SIZE + len(payload)) + payload


def decode_error(msg: TransportMessage) -> ErrorReceived:
    try:
        err = ErrorMessage.decode(msg.payload)
        return ErrorReceived(err.error, str(err.reason))
    except (Truncated, MalformedResponse):
        return ErrorReceived(0x80010000, "undecodable ERR frame")


def _strip_padding(plain: bytes, extra: bool) -> bytes:
    if not plain:
        raise crypto.SecurityCheckFailed("empty plaintext")
    if extra:
        if len(plain) < 2:
            raise crypto.SecurityCheckFailed("padding underflow")
        pad = plain[-2] | (plain[-1] << 8)
        total = pad + 2
    else:
        pad = plain[-1]
        total = pad + 1
    if total > len(plain):
        raise crypto.SecurityCheckFailed("padding longer than the message")
    return plain[:-total]


def _padding(length: int, block: int, extra: bool) -> bytes:
    """Padding so that ``length`` plus the padding is a multiple of ``block``."""
    overhead = 2 if extra else 1
    pad = (-(length + overhead)) % block
    out = bytes([pad & 0xFF]) * (pad + 1)
    if extra:
        out += bytes([pad >> 8])
    return out


class SecureConversation:
    """Message security state for one secure channel, from one side's viewpoint."""

    def __init__(
        self,
        policy: SecurityPolicy = NONE,
        mode: MessageSecurityMode = MessageSecurityMode.NONE,
        local_certificate: bytes | None = None,
        local_key: rsa.RSAPrivateKey | None = None,
        remote_certificate: bytes | None = None,
    ):
        self.policy = policy
        self.mode = mode
        self.alg = crypto.algorithms_for(policy)
        self.local_certificate = local_certificate
        self.local_key = local_key
        self.remote_certificate = remote_certificate
        self.remote_key = crypto.load_public_key(remote_certificate) if remote_certificate and self.alg else None
        self.channel_id = 0
        self.token_id = 0
        self.send_sequence = 1
        self.local_nonce = b""
        self.remote_nonce = b""
        self.local_keys: crypto.SymmetricKeys | None = None
        self.remote_keys: crypto.SymmetricKeys | None = None

    @property
    def secured(self) -> bool:
        return self.alg is not None

    def set_remote_certificate(self, der: bytes) -> None:
        self.remote_certificate = der
        self.remote_key = crypto.load_public_key(der) if self.alg else None

    def make_nonce(self) -> bytes:
        self.local_nonce = crypto.nonce(self.alg.nonce_length) if self.alg else b""
        return self.local_nonce

    def derive(self, remote_nonce: bytes) -> None:
        """Derive symmetric keys once both nonces are known."""
        self.remote_nonce = bytes(remote_nonce)
        if not self.alg or self.mode is MessageSecurityMode.NONE:
            return
        if len(self.remote_nonce) < self.alg.nonce_length:
            raise crypto.SecurityCheckFailed("peer nonce too short")
        self.local_keys = crypto.derive_keys(self.alg, self.remote_nonce, self.local_nonce)
        self.remote_keys = crypto.derive_keys(self.alg, self.local_nonce, self.remote_nonce)

    def _next_sequence(self) -> int:
        seq = self.send_sequence
        self.send_sequence = 1 if seq >= 0xFFFFFBFF else seq + 1
        return seq

    # --- sending -----------------------------------------------------------

    def _asym_header(self) -> AsymmetricSecurityHeader:
        if not self.alg:
            return AsymmetricSecurityHeader(NONE.uri, None, None)
        return AsymmetricSecurityHeader(
            self.policy.uri, self.local_certificate, crypto.thumbprint(self.remote_certificate)
        )

    def _asym_sizes(self) -> tuple[int, int, int, bool]:
        """(signature size, plain block, cipher block, extra padding)."""
        sig = self.local_key.key_size // 8
        cipher_block = self.remote_key.key_size // 8
        plain_block = cipher_block - self.alg.encryption_overhead
        return sig, plain_block, cipher_block, cipher_block > 256

    def body_capacity(self, kind: MessageKind, max_chunk: int) -> int:
        """Largest body slice that fits one chunk of ``max_chunk`` bytes."""
        if kind is MessageKind.OPN:
            prefix = HEADER_SIZE + 4 + len(self._asym_header().encode())
            if not self.alg:
                return max_chunk - prefix - 8
            sig, plain_block, cipher_block, extra = self._asym_sizes()
            blocks = (max_chunk - prefix) // cipher_block
            return blocks * plain_block - 8 - sig - 1 - int(extra)
        prefix = HEADER_SIZE + 8
        if not self.alg or self.mode is MessageSecurityMode.NONE:
            return max_chunk - prefix - 8
        sig = self.alg.symmetric_signature_size
        if self.mode is MessageSecurityMode.SIGN:
            return max_chunk - prefix - 8 - sig
        space = ((max_chunk - prefix) // crypto.SYMMETRIC_BLOCK) * crypto.SYMMETRIC_BLOCK
        return space - 8 - sig - 1

    def seal(self, kind: MessageKind, body: bytes, request_id: int, max_chunk: int = 65535) -> list[bytes]:
        """Split ``body`` into chunks and secure each one."""
        cap = self.body_capacity(kind, max_chunk)
        if cap <= 0:
            raise OversizedMessage(f"chunk size {max_chunk} cannot carry any body")
        pieces = [body[i : i + cap] for i in range(0, len(body), cap)] or [b""]
        frames = []
        for i, piece in enumerate(pieces):
            chunk = ChunkType.FINAL if i == len(pieces) - 1 else ChunkType.INTERMEDIATE
            seq = SequenceHeader(self._next_sequence(), request_id).encode()
            if kind is MessageKind.OPN:
                frames.append(self._seal_asymmetric(chunk, seq + piece))
            else:
                frames.append(self._seal_symmetric(kind, chunk, seq + piece))
        return frames

    def _seal_asymmetric(self, chunk: ChunkType, plain: bytes) -> bytes:
        w = Writer()
        w.uint32(self.channel_id)
        self._asym_header().encode_into(w)
        prefix = w.getvalue()
        if not self.alg:
            return encode_header(MessageKind.OPN, chunk, HEADER_SIZE + len(prefix) + len(plain)) + prefix + plain
        sig_size, plain_block, cipher_block, extra = self._asym_sizes()
        plain += _padding(len(plain) + sig_size, plain_block, extra)
        n_blocks = (len(plain) + sig_size) // plain_block
        size = HEADER_SIZE + len(prefix) + n_blocks * cipher_block
        header = encode_header(MessageKind.OPN, chunk, size)
        signature = crypto.rsa_sign(self.alg, self.local_key, header + prefix + plain)
        return header + prefix + crypto.rsa_encrypt(self.alg, self.remote_key, plain + signature)

    def _seal_symmetric(self, kind: MessageKind, chunk: ChunkType, plain: bytes) -> bytes:
        w = Writer()
        w.uint32(self.channel_id)
        w.uint32(self.token_id)
        prefix = w.getvalue()
        if not self.alg or self.mode is MessageSecurityMode.NONE:
            return encode_header(kind, chunk, HEADER_SIZE + len(prefix) + len(plain)) + prefix + plain
        sig_size = self.alg.symmetric_signature_size
        if self.mode is MessageSecurityMode.SIGN:
            header = encode_header(kind, chunk, HEADER_SIZE + len(prefix) + len(plain) + sig_size)
            signature = crypto.hmac_sign(self.alg, self.local_keys.signing, header + prefix + plain)
            return header + prefix + plain + signature
        plain += _padding(len(plain) + sig_size, crypto.SYMMETRIC_BLOCK, False)
        header = encode_header(kind, chunk, HEADER_SIZE + len(prefix) + len(plain) + sig_size)
        signature = crypto.hmac_sign(self.alg, self.local_keys.signing, header + prefix + plain)
        return header + prefix + crypto.aes_encrypt(self.local_keys, plain + signature)

    # --- receiving ---------------------------------------------------------

    def open(self, msg: TransportMessage, raw: bytes) -> OpenedChunk:
        """Verify/decrypt one received chunk."""
        if msg.kind is MessageKind.OPN:
            return self._open_asymmetric(msg, raw)
        if msg.kind in (MessageKind.MSG, MessageKind.CLO):
            return self._open_symmetric(msg, raw)
        raise MalformedResponse(f"{msg.kind.value} is not a secure-conversation message")

    def _open_asymmetric(self, msg: TransportMessage, raw: bytes) -> OpenedChunk:
        r = Reader(msg.payload)
        channel_id = r.uint32()
        header = AsymmetricSecurityHeader.decode_from(r)
        offset = HEADER_SIZE + r.pos
        policy = policy_from_uri(header.security_policy_uri)
        if policy.id is not self.policy.id:
            raise crypto.SecurityCheckFailed(f"peer answered with policy {header.security_policy_uri!r}")
        if self.alg:
            if header.sender_certificate:
                self.set_remote_certificate(bytes(header.sender_certificate))
            if self.remote_key is None:
                raise crypto.SecurityCheckFailed("no peer certificate to verify against")
            plain = crypto.rsa_decrypt(self.alg, self.local_key, raw[offset:])
            sig_size = self.remote_key.key_size // 8
            if len(plain) < sig_size + 8:
                raise crypto.SecurityCheckFailed("decrypted chunk shorter than its signature")
            body, signature = plain[:-sig_size], plain[-sig_size:]
            crypto.rsa_verify(self.alg, self.remote_key, signature, raw[:offset] + body)
            # padding is sized by the key that encrypted the chunk, which is ours
            body = _strip_padding(body, self.local_key.key_size // 8 > 256)
        else:
            body = raw[offset:]
        rs = Reader(body)
        seq = SequenceHeader.read(rs)
        if self.channel_id == 0:
            self.channel_id = channel_id
        return OpenedChunk(msg.kind, msg.chunk_type, seq.request_id, seq.sequence_number, rs.rest(), header)

    def _open_symmetric(self, msg: TransportMessage, raw: bytes) -> OpenedChunk:
        r = Reader(msg.payload)
        r.uint32()  # channel id
        token_id = r.uint32()
        offset = HEADER_SIZE + r.pos
        if self.alg and self.mode is not MessageSecurityMode.NONE:
            if self.remote_keys is None:
                raise crypto.SecurityCheckFailed("symmetric keys not established")
            if token_id != self.token_id:
                raise crypto.SecurityCheckFailed(f"unknown security token {token_id}")
            sig_size = self.alg.symmetric_signature_size
            if self.mode is MessageSecurityMode.SIGN_AND_ENCRYPT:
                plain = crypto.aes_decrypt(self.remote_keys, raw[offset:])
            else:
                plain = raw[offset:]
            if len(plain) < sig_size + 8:
                raise crypto.SecurityCheckFailed("chunk shorter than its signature")
            body, signature = plain[:-sig_size], plain[-sig_size:]
            crypto.hmac_verify(self.alg, self.remote_keys.signing, signature, raw[:offset] + body)
            if self.mode is MessageSecurityMode.SIGN_AND_ENCRYPT:
                body = _strip_padding(body, False)
        else:
            body = raw[offset:]
        rs = Reader(body)
        seq = SequenceHeader.read(rs)
        return OpenedChunk(msg.kind, msg.chunk_type, seq.request_id, seq.sequence_number, rs.rest())


def connect(host: str, port: int, timeout: float) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock

