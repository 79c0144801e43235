"""Node records and address-space snapshots gathered by traversal."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntFlag

from uasurvey.wire.binary import NodeId
from uasurvey.wire.structs import NodeClass

STANDARD_NAMESPACE = "http://opcfoundation.org/UA/"

# well-known ns=0 node ids
ROOT_FOLDER = NodeId(84)
OBJECTS_FOLDER = NodeId(85)
SERVER_OBJECT = NodeId(2253)
NAMESPACE_ARRAY = NodeId(2255)
SOFTWARE_VERSION = NodeId(2264)
HIERARCHICAL_REFERENCES = NodeId(33)
ORGANIZES = NodeId(35)
HAS_COMPONENT = NodeId(47)
HAS_PROPERTY = NodeId(46)

# attribute ids
ATTR_VALUE = 13
ATTR_ACCESS_LEVEL = 17
ATTR_USER_ACCESS_LEVEL = 18
ATTR_EXECUTABLE = 21
ATTR_USER_EXECUTABLE = 22


class AccessLevel(IntFlag):
    NONE = 0
    CURRENT_READ = 0x01
    CURRENT_WRITE = 0x02
    HISTORY_READ = 0x04
    HISTORY_WRITE = 0x08
    SEMANTIC_CHANGE = 0x10
    STATUS_WRITE = 0x20
    TIMESTAMP_WRITE = 0x40


@dataclass(frozen=True)
class NodeRecord:
    """One traversed node.

    ``access_level`` is set only for Variables and ``executable`` only for
    Methods; either stays ``None`` if the server refused the attribute read.
    """

    node_id: NodeId
    browse_name: str = ""
    node_class: NodeClass | int = NodeClass.OBJECT
    access_level: AccessLevel | None = None
    executable: bool | None = None

    @property
    def namespace_index(self) -> int:
        return self.node_id.namespace

    @property
    def readable(self) -> bool:
        return self.access_level is not None and bool(self.access_level & AccessLevel.CURRENT_READ)

    @property
    def writable(self) -> bool:
        return self.access_level is not None and bool(self.access_level & AccessLevel.CURRENT_WRITE)


@dataclass
class AddressSpaceSnapshot:
    nodes: dict[NodeId, NodeRecord] = field(default_factory=dict)
    namespace_array: list[str] = field(default_factory=list)
    truncated: bool = False
    browse_faults: int = 0

    def add(self, record: NodeRecord) -> bool:
        if record.node_id in self.nodes:
            return False
        self.nodes[record.node_id] = record
        return True

    def of_class(self, node_class: NodeClass) -> list[NodeRecord]:
        return [n for n in self.nodes.values() if n.node_class == node_class]
