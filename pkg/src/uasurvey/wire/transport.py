"""Transport framing: the 8-byte header and the secure-conversation prefixes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from uasurvey.wire.binary import Reader, Writer
from uasurvey.wire.errors import MalformedResponse, OversizedMessage, Truncated, UnknownKind
from uasurvey.wire.structs import AsymmetricSecurityHeader

HEADER_SIZE = 8
MAX_FRAME = 0xFFFFFFFF
DEFAULT_ASSEMBLY_CAP = 4 * 1024 * 1024


class MessageKind(str, Enum):
    HEL = "HEL"
    ACK = "ACK"
    OPN = "OPN"
    MSG = "MSG"
    ERR = "ERR"
    CLO = "CLO"
    # Reverse Hello exists in later protocol revisions; treated as unknown here.


class ChunkType(str, Enum):
    FINAL = "F"
    INTERMEDIATE = "C"
    ABORT = "A"


_KINDS = {k.value.encode(): k for k in MessageKind}
_CHUNKS = {c.value.encode(): c for c in ChunkType}


@dataclass(frozen=True)
class TransportMessage:
    kind: MessageKind
    chunk_type: ChunkType = ChunkType.FINAL
    payload: bytes = b""

    @property
    def secured(self) -> bool:
        return self.kind in (MessageKind.OPN, MessageKind.MSG, MessageKind.CLO)


def encode_header(kind: MessageKind, chunk_type: ChunkType, total_size: int) -> bytes:
    if total_size > MAX_FRAME:
        raise OversizedMessage(f"frame of {total_size} bytes does not fit a 32-bit length")
    w = Writer()
    w.raw(kind.value.encode("ascii"))
    w.raw(chunk_type.value.encode("ascii"))
    w.uint32(total_size)
    return w.getvalue()


def encode_transport(msg: TransportMessage) -> bytes:
    return encode_header(msg.kind, msg.chunk_type, HEADER_SIZE + len(msg.payload)) + bytes(msg.payload)


def decode_header(data: bytes) -> tuple[MessageKind, ChunkType, int]:
    """Parse and validate the fixed header; returns ``(kind, chunk, total_size)``."""
    if len(data) < HEADER_SIZE:
        raise Truncated(f"transport header needs 8 bytes, got {len(data)}")
    raw_kind = bytes(data[:3])
    kind = _KINDS.get(raw_kind)
    if kind is None:
        raise UnknownKind(raw_kind)
    chunk = _CHUNKS.get(bytes(data[3:4]))
    if chunk is None:
        raise MalformedResponse(f"unknown chunk type {bytes(data[3:4])!r}")
    size = Reader(bytes(data[4:8])).uint32()
    if size < HEADER_SIZE:
        raise MalformedResponse(f"declared length {size} shorter than the header")
    return kind, chunk, size


def decode_transport(data: bytes) -> TransportMessage:
    """Decode exactly one frame from the start of ``data``.

    Trailing bytes past the declared length are ignored; use
    :func:`split_frames` to walk a stream.
    """
    kind, chunk, size = decode_header(data)
    if size > len(data):
        raise Truncated(f"declared length {size} exceeds the {len(data)} bytes available")
    return TransportMessage(kind, chunk, bytes(data[HEADER_SIZE:size]))


def split_frames(data: bytes) -> tuple[list[TransportMessage], bytes]:
    """Cut a byte stream into whole frames; returns the frames and the unconsumed tail."""
    frames = []
    pos = 0
    while len(data) - pos >= HEADER_SIZE:
        _, _, size = decode_header(data[pos : pos + HEADER_SIZE])
        if pos + size > len(data):
            break
        frames.append(decode_transport(data[pos : pos + size]))
        pos += size
    return frames, data[pos:]


# --- secure conversation prefixes --------------------------------------------


@dataclass(frozen=True)
class SequenceHeader:
    sequence_number: int
    request_id: int

    def encode(self) -> bytes:
        w = Writer()
        w.uint32(self.sequence_number)
        w.uint32(self.request_id)
        return w.getvalue()

    @classmethod
    def read(cls, r: Reader) -> "SequenceHeader":
        return cls(r.uint32(), r.uint32())


def read_asymmetric_prefix(payload: bytes) -> tuple[int, AsymmetricSecurityHeader, int]:
    """Channel id, security header and the offset where the secured part starts."""
    r = Reader(payload)
    channel_id = r.uint32()
    header = AsymmetricSecurityHeader.decode_from(r)
    return channel_id, header, r.pos


def read_symmetric_prefix(payload: bytes) -> tuple[int, int, int]:
    """Channel id, token id and the offset where the secured part starts."""
    r = Reader(payload)
    return r.uint32(), r.uint32(), r.pos


class ChunkAssembler:
    """Collects message bodies of intermediate chunks until the final one.

    ``cap`` bounds the assembled size; crossing it raises
    :class:`OversizedMessage` so a server cannot stream us into the ground.
    """

    def __init__(self, cap: int = DEFAULT_ASSEMBLY_CAP, max_chunks: int = 0):
        self.cap = cap
        self.max_chunks = max_chunks
        self._parts: list[bytes] = []
        self._size = 0

    def add(self, chunk_type: ChunkType, body: bytes) -> bytes | None:
        """Add one chunk body; returns the assembled body on the final chunk."""
        if chunk_type is ChunkType.ABORT:
            self.reset()
            raise MalformedResponse("peer aborted the message")
        self._size += len(body)
        if self._size > self.cap:
            self.reset()
            raise OversizedMessage(f"assembled message exceeds {self.cap} bytes")
        self._parts.append(body)
        if self.max_chunks and len(self._parts) > self.max_chunks:
            self.reset()
            raise OversizedMessage(f"more than {self.max_chunks} chunks")
        if chunk_type is ChunkType.INTERMEDIATE:
            return None
        out = b"".join(self._parts)
        self.reset()
        return out

    def reset(self) -> None:
        self._parts = []
        self._size = 0
