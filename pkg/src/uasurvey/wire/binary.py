"""OPC UA binary encoding of the built-in types (little-endian throughout).

:class:`Reader` and :class:`Writer` are the two cursors everything else is
built on.  The reader never trusts a length prefix: array counts and string
lengths are checked against the bytes actually remaining before anything is
allocated, so a hostile length cannot make it allocate more than the message
itself occupies.
"""

from __future__ import annotations

import struct
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import IntEnum
from typing import Any, Callable, TypeVar

from uasurvey.wire.errors import CodecError, MalformedResponse, Truncated

T = TypeVar("T")

MAX_NESTING = 64

_U8 = struct.Struct("<B")
_I8 = struct.Struct("<b")
_U16 = struct.Struct("<H")
_I16 = struct.Struct("<h")
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F32 = struct.Struct("<f")
_F64 = struct.Struct("<d")


class _NullString(str):
    is_null = True

    def __repr__(self) -> str:
        return "NULL_STRING"

    def __reduce__(self):
        return (_null_string, ())


class _NullBytes(bytes):
    is_null = True

    def __repr__(self) -> str:
        return "NULL_BYTES"

    def __reduce__(self):
        return (_null_bytes, ())


class NullArray(list):
    """An array that arrived as length -1.  Compares equal to ``[]``."""

    is_null = True


NULL_STRING = _NullString("")
NULL_BYTES = _NullBytes(b"")


def _null_string() -> str:
    return NULL_STRING


def _null_bytes() -> bytes:
    return NULL_BYTES


def is_null(value: Any) -> bool:
    """True for ``None`` and for the decoded null markers."""
    return value is None or getattr(value, "is_null", False)


# --- DateTime ---------------------------------------------------------------

EPOCH_1601 = datetime(1601, 1, 1, tzinfo=timezone.utc)
_TICKS_PER_SECOND = 10_000_000


def datetime_to_ticks(value: datetime) -> int:
    """Convert to 100 ns ticks since 1601-01-01 UTC (naive values are UTC)."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    delta = value - EPOCH_1601
    return (delta.days * 86400 + delta.seconds) * _TICKS_PER_SECOND + delta.microseconds * 10


def ticks_to_datetime(ticks: int) -> datetime | None:
    """Inverse of :func:`datetime_to_ticks`; ``None`` for 0 (the null DateTime)."""
    if ticks <= 0:
        return None
    try:
        return EPOCH_1601 + timedelta(microseconds=ticks // 10)
    except OverflowError:
        return datetime.max.replace(tzinfo=timezone.utc)


def now_ticks() -> int:
    return datetime_to_ticks(datetime.now(timezone.utc))


# --- Cursors -----------------------------------------------------------------


class Reader:
    """Bounds-checked cursor over a byte buffer."""

    __slots__ = ("_buf", "pos", "depth")

    def __init__(self, data: bytes | bytearray | memoryview, pos: int = 0):
        self._buf = memoryview(data).cast("B") if not isinstance(data, bytes) else data
        self.pos = pos
        self.depth = 0

    @property
    def remaining(self) -> int:
        return len(self._buf) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0:
            raise MalformedResponse(f"negative length {n}")
        end = self.pos + n
        if end > len(self._buf):
            raise Truncated(f"need {n} bytes at offset {self.pos}, have {self.remaining}")
        out = bytes(self._buf[self.pos : end])
        self.pos = end
        return out

    def rest(self) -> bytes:
        return self.take(self.remaining)

    def _unpack(self, st: struct.Struct):
        end = self.pos + st.size
        if end > len(self._buf):
            raise Truncated(f"need {st.size} bytes at offset {self.pos}, have {self.remaining}")
        (value,) = st.unpack_from(self._buf, self.pos)
        self.pos = end
        return value

    def boolean(self) -> bool:
        return self._unpack(_U8) != 0

    def sbyte(self) -> int:
        return self._unpack(_I8)

    def byte(self) -> int:
        return self._unpack(_U8)

    def int16(self) -> int:
        return self._unpack(_I16)

    def uint16(self) -> int:
        return self._unpack(_U16)

    def int32(self) -> int:
        return self._unpack(_I32)

    def uint32(self) -> int:
        return self._unpack(_U32)

    def int64(self) -> int:
        return self._unpack(_I64)

    def uint64(self) -> int:
        return self._unpack(_U64)

    def float(self) -> float:
        return self._unpack(_F32)

    def double(self) -> float:
        return self._unpack(_F64)

    def datetime(self) -> int:
        return self._unpack(_I64)

    def status(self) -> int:
        return self._unpack(_U32)

    def string(self) -> str:
        n = self.int32()
        if n == -1:
            return NULL_STRING
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedResponse(f"invalid UTF-8 in string at offset {self.pos - n}") from exc

    def bytestring(self) -> bytes:
        n = self.int32()
        if n == -1:
            return NULL_BYTES
        return self.take(n)

    def guid(self) -> uuid.UUID:
        return uuid.UUID(bytes_le=self.take(16))

    def array(self, item: Callable[["Reader"], T]) -> list[T]:
        n = self.int32()
        if n == -1:
            return NullArray()
        if n < -1:
            raise MalformedResponse(f"negative array length {n}")
        # every encoded element occupies at least one byte
        if n > self.remaining:
            raise Truncated(f"array of {n} elements but only {self.remaining} bytes left")
        return [item(self) for _ in range(n)]

    def nested(self):
        return _Nesting(self)


class _Nesting:
    __slots__ = ("reader",)

    def __init__(self, reader: Reader):
        self.reader = reader

    def __enter__(self):
        self.reader.depth += 1
        if self.reader.depth > MAX_NESTING:
            raise MalformedResponse("nesting too deep")

    def __exit__(self, *exc):
        self.reader.depth -= 1


class Writer:
    """Append-only little-endian encoder."""

    __slots__ = ("buf",)

    def __init__(self):
        self.buf = bytearray()

    def getvalue(self) -> bytes:
        return bytes(self.buf)

    def raw(self, data: bytes) -> None:
        self.buf += data

    def _pack(self, st: struct.Struct, value) -> None:
        try:
            self.buf += st.pack(value)
        except struct.error as exc:
            raise CodecError(f"value {value!r} out of range for {st.format}") from exc

    def boolean(self, v: bool) -> None:
        self._pack(_U8, 1 if v else 0)

    def sbyte(self, v: int) -> None:
        self._pack(_I8, v)

    def byte(self, v: int) -> None:
        self._pack(_U8, v)

    def int16(self, v: int) -> None:
        self._pack(_I16, v)

    def uint16(self, v: int) -> None:
        self._pack(_U16, v)

    def int32(self, v: int) -> None:
        self._pack(_I32, v)

    def uint32(self, v: int) -> None:
        self._pack(_U32, v)

    def int64(self, v: int) -> None:
        self._pack(_I64, v)

    def uint64(self, v: int) -> None:
        self._pack(_U64, v)

    def float(self, v: float) -> None:
        self._pack(_F32, v)

    def double(self, v: float) -> None:
        self._pack(_F64, v)

    def datetime(self, v: int) -> None:
        self._pack(_I64, v)

    def status(self, v: int) -> None:
        self._pack(_U32, v)

    def string(self, v: str | None) -> None:
        if is_null(v):
            self.int32(-1)
            return
        data = v.encode("utf-8")
        self.int32(len(data))
        self.buf += data

    def bytestring(self, v: bytes | None) -> None:
        if is_null(v):
            self.int32(-1)
            return
        self.int32(len(v))
        self.buf += v

    def guid(self, v: uuid.UUID) -> None:
        self.buf += v.bytes_le

    def array(self, items: list | None, item: Callable[["Writer", Any], None]) -> None:
        if is_null(items):
            self.int32(-1)
            return
        self.int32(len(items))
        for x in items:
            item(self, x)


# --- NodeId ------------------------------------------------------------------


class NodeIdType(IntEnum):
    TWO_BYTE = 0
    FOUR_BYTE = 1
    NUMERIC = 2
    STRING = 3
    GUID = 4
    BYTESTRING = 5


@dataclass(frozen=True)
class NodeId:
    """Namespace index plus a numeric, string, GUID or opaque identifier.

    ``form`` remembers which wire encoding was seen so re-encoding is
    byte-identical; it takes no part in equality.
    """

    identifier: int | str | uuid.UUID | bytes = 0
    namespace: int = 0
    form: NodeIdType | None = field(default=None, compare=False, repr=False)

    @property
    def is_null(self) -> bool:
        return self.namespace == 0 and self.identifier in (0, "", b"")

    def kind(self) -> NodeIdType:
        ident = self.identifier
        if isinstance(ident, bool):
            raise CodecError("boolean is not a NodeId identifier")
        if isinstance(ident, int):
            return NodeIdType.NUMERIC
        if isinstance(ident, str):
            return NodeIdType.STRING
        if isinstance(ident, uuid.UUID):
            return NodeIdType.GUID
        if isinstance(ident, (bytes, bytearray)):
            return NodeIdType.BYTESTRING
        raise CodecError(f"unsupported NodeId identifier {ident!r}")

    def wire_form(self) -> NodeIdType:
        kind = self.kind()
        if kind is not NodeIdType.NUMERIC:
            return kind
        ident, ns = self.identifier, self.namespace
        if self.form is not None and self.form <= NodeIdType.NUMERIC:
            if self.form is NodeIdType.TWO_BYTE and ns == 0 and ident < 256:
                return self.form
            if self.form is NodeIdType.FOUR_BYTE and ns < 256 and ident < 65536:
                return self.form
            if self.form is NodeIdType.NUMERIC:
                return self.form
        if ns == 0 and 0 <= ident < 256:
            return NodeIdType.TWO_BYTE
        if 0 <= ns < 256 and 0 <= ident < 65536:
            return NodeIdType.FOUR_BYTE
        return NodeIdType.NUMERIC

    def __str__(self) -> str:
        prefix = f"ns={self.namespace};" if self.namespace else ""
        kind = self.kind()
        if kind is NodeIdType.NUMERIC:
            return f"{prefix}i={self.identifier}"
        if kind is NodeIdType.STRING:
            return f"{prefix}s={self.identifier}"
        if kind is NodeIdType.GUID:
            return f"{prefix}g={self.identifier}"
        return f"{prefix}b={bytes(self.identifier).hex()}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        """Parse the ``ns=1;s=Name`` notation (``b=`` carries hex)."""
        ns = 0
        rest = text
        if text.startswith("ns="):
            head, _, rest = text.partition(";")
            ns = int(head[3:])
        tag, _, value = rest.partition("=")
        if tag == "i":
            return cls(int(value), ns)
        if tag == "s":
            return cls(value, ns)
        if tag == "g":
            return cls(uuid.UUID(value), ns)
        if tag == "b":
            return cls(bytes.fromhex(value), ns)
        raise ValueError(f"not a NodeId: {text!r}")


def read_nodeid_body(r: Reader, form: int) -> NodeId:
    if form == NodeIdType.TWO_BYTE:
        return NodeId(r.byte(), 0, NodeIdType.TWO_BYTE)
    if form == NodeIdType.FOUR_BYTE:
        ns = r.byte()
        return NodeId(r.uint16(), ns, NodeIdType.FOUR_BYTE)
    if form == NodeIdType.NUMERIC:
        ns = r.uint16()
        return NodeId(r.uint32(), ns, NodeIdType.NUMERIC)
    if form == NodeIdType.STRING:
        ns = r.uint16()
        return NodeId(r.string(), ns, NodeIdType.STRING)
    if form == NodeIdType.GUID:
        ns = r.uint16()
        return NodeId(r.guid(), ns, NodeIdType.GUID)
    if form == NodeIdType.BYTESTRING:
        ns = r.uint16()
        return NodeId(r.bytestring(), ns, NodeIdType.BYTESTRING)
    raise MalformedResponse(f"unknown NodeId encoding 0x{form:02X}")


def read_nodeid(r: Reader) -> NodeId:
    return read_nodeid_body(r, r.byte())


def write_nodeid(w: Writer, n: NodeId, flags: int = 0) -> None:
    form = n.wire_form()
    w.byte(int(form) | flags)
    if form is NodeIdType.TWO_BYTE:
        w.byte(n.identifier)
    elif form is NodeIdType.FOUR_BYTE:
        w.byte(n.namespace)
        w.uint16(n.identifier)
    elif form is NodeIdType.NUMERIC:
        w.uint16(n.namespace)
        w.uint32(n.identifier)
    elif form is NodeIdType.STRING:
        w.uint16(n.namespace)
        w.string(n.identifier)
    elif form is NodeIdType.GUID:
        w.uint16(n.namespace)
        w.guid(n.identifier)
    else:
        w.uint16(n.namespace)
        w.bytestring(bytes(n.identifier))


@dataclass(frozen=True)
class ExpandedNodeId:
    node_id: NodeId = NodeId()
    namespace_uri: str | None = None
    server_index: int = 0


def read_expanded_nodeid(r: Reader) -> ExpandedNodeId:
    head = r.byte()
    node = read_nodeid_body(r, head & 0x3F)
    uri = r.string() if head & 0x80 else None
    server = r.uint32() if head & 0x40 else 0
    return ExpandedNodeId(node, uri, server)


def write_expanded_nodeid(w: Writer, x: ExpandedNodeId) -> None:
    flags = (0x80 if x.namespace_uri is not None else 0) | (0x40 if x.server_index else 0)
    write_nodeid(w, x.node_id, flags)
    if x.namespace_uri is not None:
        w.string(x.namespace_uri)
    if x.server_index:
        w.uint32(x.server_index)


# --- small composites --------------------------------------------------------


@dataclass(frozen=True)
class QualifiedName:
    name: str = ""
    namespace: int = 0

    def __str__(self) -> str:
        return f"{self.namespace}:{self.name}" if self.namespace else str(self.name)


def read_qualified_name(r: Reader) -> QualifiedName:
    ns = r.uint16()
    return QualifiedName(r.string(), ns)


def write_qualified_name(w: Writer, q: QualifiedName) -> None:
    w.uint16(q.namespace)
    w.string(q.name)


@dataclass(frozen=True)
class LocalizedText:
    text: str | None = None
    locale: str | None = None


def read_localized_text(r: Reader) -> LocalizedText:
    mask = r.byte()
    locale = r.string() if mask & 0x01 else None
    text = r.string() if mask & 0x02 else None
    return LocalizedText(text, locale)


def write_localized_text(w: Writer, t: LocalizedText) -> None:
    mask = (0x01 if t.locale is not None else 0) | (0x02 if t.text is not None else 0)
    w.byte(mask)
    if t.locale is not None:
        w.string(t.locale)
    if t.text is not None:
        w.string(t.text)


@dataclass(frozen=True)
class ExtensionObject:
    """Opaque typed body; ``encoding`` 0 = none, 1 = binary, 2 = XML."""

    type_id: NodeId = NodeId()
    body: bytes = b""
    encoding: int = 0


def read_extension_object(r: Reader) -> ExtensionObject:
    type_id = read_nodeid(r)
    enc = r.byte()
    if enc == 0:
        return ExtensionObject(type_id, b"", 0)
    if enc in (1, 2):
        return ExtensionObject(type_id, r.bytestring(), enc)
    raise MalformedResponse(f"unknown ExtensionObject encoding {enc}")


def write_extension_object(w: Writer, x: ExtensionObject) -> None:
    write_nodeid(w, x.type_id)
    w.byte(x.encoding)
    if x.encoding:
        w.bytestring(x.body)


@dataclass(frozen=True)
class DiagnosticInfo:
    symbolic_id: int | None = None
    namespace_uri: int | None = None
    localized_text: int | None = None
    locale: int | None = None
    additional_info: str | None = None
    inner_status: int | None = None
    inner: "DiagnosticInfo | None" = None


def read_diagnostic_info(r: Reader) -> DiagnosticInfo:
    with r.nested():
        mask = r.byte()
        symbolic = r.int32() if mask & 0x01 else None
        ns_uri = r.int32() if mask & 0x02 else None
        locale = r.int32() if mask & 0x08 else None
        text = r.int32() if mask & 0x04 else None
        info = r.string() if mask & 0x10 else None
        inner_status = r.status() if mask & 0x20 else None
        inner = read_diagnostic_info(r) if mask & 0x40 else None
    return DiagnosticInfo(symbolic, ns_uri, text, locale, info, inner_status, inner)


def write_diagnostic_info(w: Writer, d: DiagnosticInfo | None) -> None:
    if d is None:
        w.byte(0)
        return
    mask = 0
    for bit, value in (
        (0x01, d.symbolic_id),
        (0x02, d.namespace_uri),
        (0x04, d.localized_text),
        (0x08, d.locale),
        (0x10, d.additional_info),
        (0x20, d.inner_status),
        (0x40, d.inner),
    ):
        if value is not None:
            mask |= bit
    w.byte(mask)
    if d.symbolic_id is not None:
        w.int32(d.symbolic_id)
    if d.namespace_uri is not None:
        w.int32(d.namespace_uri)
    if d.locale is not None:
        w.int32(d.locale)
    if d.localized_text is not None:
        w.int32(d.localized_text)
    if d.additional_info is not None:
        w.string(d.additional_info)
    if d.inner_status is not None:
        w.status(d.inner_status)
    if d.inner is not None:
        write_diagnostic_info(w, d.inner)


# --- Variant / DataValue -----------------------------------------------------


class VariantType(IntEnum):
    Null = 0
    Boolean = 1
    SByte = 2
    Byte = 3
    Int16 = 4
    UInt16 = 5
    Int32 = 6
    UInt32 = 7
    Int64 = 8
    UInt64 = 9
    Float = 10
    Double = 11
    String = 12
    DateTime = 13
    Guid = 14
    ByteString = 15
    XmlElement = 16
    NodeId = 17
    ExpandedNodeId = 18
    StatusCode = 19
    QualifiedName = 20
    LocalizedText = 21
    ExtensionObject = 22
    DataValue = 23
    Variant = 24
    DiagnosticInfo = 25


@dataclass(frozen=True)
class Variant:
    """A typed scalar or array.  Arrays carry a ``list`` (or ``NullArray``) as value."""

    value: Any = None
    type: VariantType = VariantType.Null
    is_array: bool = False
    dimensions: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DataValue:
    value: Variant | None = None
    status: int | None = None
    source_timestamp: int | None = None
    server_timestamp: int | None = None
    source_picoseconds: int | None = None
    server_picoseconds: int | None = None


def _scalar_codecs() -> dict[VariantType, tuple[Callable, Callable]]:
    return {
        VariantType.Boolean: (Reader.boolean, Writer.boolean),
        VariantType.SByte: (Reader.sbyte, Writer.sbyte),
        VariantType.Byte: (Reader.byte, Writer.byte),
        VariantType.Int16: (Reader.int16, Writer.int16),
        VariantType.UInt16: (Reader.uint16, Writer.uint16),
        VariantType.Int32: (Reader.int32, Writer.int32),
        VariantType.UInt32: (Reader.uint32, Writer.uint32),
        VariantType.Int64: (Reader.int64, Writer.int64),
        VariantType.UInt64: (Reader.uint64, Writer.uint64),
        VariantType.Float: (Reader.float, Writer.float),
        VariantType.Double: (Reader.double, Writer.double),
        VariantType.String: (Reader.string, Writer.string),
        VariantType.DateTime: (Reader.datetime, Writer.datetime),
        VariantType.Guid: (Reader.guid, Writer.guid),
        VariantType.ByteString: (Reader.bytestring, Writer.bytestring),
        VariantType.XmlElement: (Reader.string, Writer.string),
        VariantType.NodeId: (read_nodeid, write_nodeid),
        VariantType.ExpandedNodeId: (read_expanded_nodeid, write_expanded_nodeid),
        VariantType.StatusCode: (Reader.status, Writer.status),
        VariantType.QualifiedName: (read_qualified_name, write_qualified_name),
        VariantType.LocalizedText: (read_localized_text, write_localized_text),
        VariantType.ExtensionObject: (read_extension_object, write_extension_object),
        VariantType.DataValue: (lambda r: read_data_value(r), lambda w, v: write_data_value(w, v)),
        VariantType.Variant: (lambda r: read_variant(r), lambda w, v: write_variant(w, v)),
        VariantType.DiagnosticInfo: (read_diagnostic_info, write_diagnostic_info),
    }


_CODECS: dict[VariantType, tuple[Callable, Callable]] = {}


def _codec(t: VariantType) -> tuple[Callable, Callable]:
    if not _CODECS:
        _CODECS.update(_scalar_codecs())
    return _CODECS[t]


def read_variant(r: Reader) -> Variant:
    with r.nested():
        head = r.byte()
        type_id = head & 0x3F
        if type_id > 25:
            raise MalformedResponse(f"unknown Variant type {type_id}")
        vtype = VariantType(type_id)
        is_array = bool(head & 0x80)
        if vtype is VariantType.Null:
            if head & 0xC0:
                raise MalformedResponse("array flags on a null Variant")
            return Variant()
        reader = _codec(vtype)[0]
        dims = None
        if is_array:
            value = r.array(reader)
            if head & 0x40:
                dims = tuple(r.array(Reader.int32))
        else:
            if head & 0x40:
                raise MalformedResponse("dimensions on a scalar Variant")
            value = reader(r)
    return Variant(value, vtype, is_array, dims)


def write_variant(w: Writer, v: Variant) -> None:
    if v.type is VariantType.Null:
        w.byte(0)
        return
    head = int(v.type)
    if v.is_array:
        head |= 0x80
        if v.dimensions is not None:
            head |= 0x40
    w.byte(head)
    writer = _codec(v.type)[1]
    if v.is_array:
        w.array(v.value, writer)
        if v.dimensions is not None:
            w.array(list(v.dimensions), Writer.int32)
    else:
        writer(w, v.value)


def read_data_value(r: Reader) -> DataValue:
    with r.nested():
        mask = r.byte()
        value = read_variant(r) if mask & 0x01 else None
        status = r.status() if mask & 0x02 else None
        src = r.datetime() if mask & 0x04 else None
        srv = r.datetime() if mask & 0x08 else None
        src_ps = r.uint16() if mask & 0x10 else None
        srv_ps = r.uint16() if mask & 0x20 else None
    return DataValue(value, status, src, srv, src_ps, srv_ps)


def write_data_value(w: Writer, d: DataValue) -> None:
    fields = (d.value, d.status, d.source_timestamp, d.server_timestamp, d.source_picoseconds, d.server_picoseconds)
    mask = 0
    for i, value in enumerate(fields):
        if value is not None:
            mask |= 1 << i
    w.byte(mask)
    if d.value is not None:
        write_variant(w, d.value)
    if d.status is not None:
        w.status(d.status)
    if d.source_timestamp is not None:
        w.datetime(d.source_timestamp)
    if d.server_timestamp is not None:
        w.datetime(d.server_timestamp)
    if d.source_picoseconds is not None:
        w.uint16(d.source_picoseconds)
    if d.server_picoseconds is not None:
        w.uint16(d.server_picoseconds)
