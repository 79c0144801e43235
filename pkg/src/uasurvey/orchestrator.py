"""Scan campaigns: target ingestion, blocklisting, scheduling, snapshots, diffs."""

from __future__ import annotations

import base64
import dataclasses
import datetime as dt
import ipaddress
import json
import logging
import os
import socket
import threading
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from uasurvey.addressspace import AccessLevel, AddressSpaceSnapshot, NodeRecord
from uasurvey.assessment import HostAssessment, assess_fleet
from uasurvey.budget import ScanBudget
from uasurvey.client import (
    ChannelProbe,
    PhaseError,
    ProbeConfig,
    ProbeError,
    ProbeResult,
    SessionProbe,
    create_client_identity,
    probe,
)
from uasurvey.policies import HashAlgorithm
from uasurvey.targets import DEFAULT_PORT, Target, normalize_host, parse_endpoint_url
from uasurvey.wire.binary import NodeId
from uasurvey.wire.structs import EndpointDescription, NodeClass

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

__all__ = [
    "Blocklist",
    "CertificateRenewed",
    "FindingsChanged",
    "NewHost",
    "ScanBudget",
    "Snapshot",
    "SnapshotDiff",
    "SnapshotRecord",
    "SoftwareVersionChanged",
    "VanishedHost",
    "diff_snapshots",
    "load_snapshot",
    "load_targets",
    "run_campaign",
]


# --- inputs --------------------------------------------------------------------


def load_targets(source, default_port: int = DEFAULT_PORT) -> list[tuple[Target, str | None]]:
    """Parse ``host[:port] [AS-label]`` lines; ``#`` starts a comment."""
    lines = Path(source).read_text().splitlines() if isinstance(source, (str, os.PathLike)) else source
    out, seen = [], set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) > 2:
            raise ValueError(f"target line {lineno}: expected 'host[:port] [AS-label]', got {raw!r}")
        target = Target.parse(parts[0], default_port)
        if target.key in seen:
            continue
        seen.add(target.key)
        out.append((target, parts[1] if len(parts) > 1 else None))
    return out


class Blocklist:
    """CIDR networks whose addresses must never be contacted.

    Hostnames are resolved before the check; a name is blocked if any of its
    addresses is.
    """

    def __init__(self, networks=(), resolver=None):
        self.networks = [ipaddress.ip_network(n, strict=False) for n in networks]
        self._resolve = resolver or _resolve

    @classmethod
    def load(cls, source) -> "Blocklist":
        lines = Path(source).read_text().splitlines() if isinstance(source, (str, os.PathLike)) else source
        nets = []
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                nets.append(ipaddress.ip_network(line, strict=False))
            except ValueError as exc:
                raise ValueError(f"blocklist line {lineno}: {exc}") from exc
        return cls(nets)

    def __len__(self) -> int:
        return len(self.networks)

    def blocks(self, target: Target) -> bool:
        if not self.networks:
            return False
        for addr in self._resolve(target.host):
            if any(addr.version == n.version and addr in n for n in self.networks):
                return True
        return False


def _resolve(host: str) -> list:
    host = normalize_host(host)
    try:
        return [ipaddress.ip_address(host)]
    except ValueError:
        pass
    try:
        infos = socket.getaddrinfo(host, None, proto=socket.IPPROTO_TCP)
    except OSError:
        return []
    return [ipaddress.ip_address(info[4][0].split("%", 1)[0]) for info in infos]


# --- probe (de)serialization ---------------------------------------------------


def _b64(data) -> str | None:
    return None if data is None else base64.b64encode(bytes(data)).decode()


def _unb64(text) -> bytes | None:
    return None if text is None else base64.b64decode(text)


def probe_to_dict(p: ProbeResult) -> dict:
    snap = p.address_space
    return {
        "target": str(p.target),
        "reached": p.reached,
        "endpoints": [_b64(ep.encode()) for ep in p.endpoints],
        "server_certificate": _b64(p.server_certificate),
        "channel_probe": p.channel_probe.value,
        "channel_status": p.channel_status,
        "channel_endpoint": p.channel_endpoint,
        "session_probe": p.session_probe.value,
        "session_status": p.session_status,
        "session_endpoint": p.session_endpoint,
        "software_version": p.software_version,
        "application_uri": p.application_uri,
        "address_space": None
        if snap is None
        else {
            "namespace_array": list(snap.namespace_array),
            "truncated": snap.truncated,
            "browse_faults": snap.browse_faults,
            "nodes": [
                [
                    str(n.node_id),
                    n.browse_name,
                    int(n.node_class),
                    None if n.access_level is None else int(n.access_level),
                    n.executable,
                ]
                for n in snap.nodes.values()
            ],
        },
        "server_protocol_version": p.server_protocol_version,
        "errors": [
            {"phase": e.phase, "kind": getattr(e.kind, "value", e.kind), "detail": e.detail, "status": e.status}
            for e in p.errors
        ],
        "bytes_sent": p.bytes_sent,
        "requests": p.requests,
        "duration": p.duration,
        "budget_tripped": p.budget_tripped,
        "started_at": p.started_at,
    }


def probe_from_dict(d: dict) -> ProbeResult:
    snap = None
    if d.get("address_space") is not None:
        a = d["address_space"]
        snap = AddressSpaceSnapshot(
            namespace_array=list(a["namespace_array"]), truncated=a["truncated"], browse_faults=a["browse_faults"]
        )
        for node_id, name, cls, access, executable in a["nodes"]:
            try:
                node_class = NodeClass(cls)
            except ValueError:
                node_class = cls
            snap.add(
                NodeRecord(
                    NodeId.parse(node_id),
                    name,
                    node_class,
                    None if access is None else AccessLevel(access),
                    executable,
                )
            )

    def kind(value):
        try:
            return ProbeError(value)
        except ValueError:
            return value

    return ProbeResult(
        target=Target.parse(d["target"]),
        reached=d["reached"],
        endpoints=tuple(EndpointDescription.decode(_unb64(e)) for e in d["endpoints"]),
        server_certificate=_unb64(d["server_certificate"]),
        channel_probe=ChannelProbe(d["channel_probe"]),
        channel_status=d["channel_status"],
        channel_endpoint=d["channel_endpoint"],
        session_probe=SessionProbe(d["session_probe"]),
        session_status=d["session_status"],
        session_endpoint=d["session_endpoint"],
        software_version=d["software_version"],
        application_uri=d["application_uri"],
        address_space=snap,
        server_protocol_version=d["server_protocol_version"],
        errors=tuple(PhaseError(e["phase"], kind(e["kind"]), e["detail"], e["status"]) for e in d["errors"]),
        bytes_sent=d["bytes_sent"],
        requests=d["requests"],
        duration=d["duration"],
        budget_tripped=d["budget_tripped"],
        started_at=d["started_at"],
    )


# --- snapshots -----------------------------------------------------------------


@dataclass
class SnapshotRecord:
    probe: ProbeResult
    assessment: HostAssessment | None = None
    as_label: str | None = None
    referred_by: str | None = None

    @property
    def target(self) -> str:
        return str(self.probe.target)


@dataclass
class Snapshot:
    snapshot_id: str
    records: list[SnapshotRecord] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    blocked: list[str] = field(default_factory=list)

    def by_target(self) -> dict[str, SnapshotRecord]:
        return {r.target: r for r in self.records}

    def assessments(self) -> list[HostAssessment]:
        return [r.assessment for r in self.records if r.assessment is not None]

    def assess(self, **kwargs) -> None:
        """(Re)compute every assessment; reuse is judged across this snapshot."""
        labels = {r.target: r.as_label for r in self.records if r.as_label}
        assessed, _ = assess_fleet([r.probe for r in self.records], labels, **kwargs)
        by_target = {a.target: a for a in assessed}
        for r in self.records:
            r.assessment = by_target.get(r.target)

    def dump(self, path) -> None:
        writer = SnapshotWriter(path, self.snapshot_id, self.started_at, mode="w")
        for r in self.records:
            writer.probe(r)
        writer.finish(self)


class SnapshotWriter:
    """Append-only JSON Lines writer; the only place snapshot files are mutated."""

    def __init__(self, path, snapshot_id: str, started_at: str, mode: str = "a"):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = self.path.open(mode, encoding="utf-8")
        self._write(
            {"type": "snapshot", "schema_version": SCHEMA_VERSION, "snapshot_id": snapshot_id, "started_at": started_at}
        )

    def _write(self, obj: dict) -> None:
        with self._lock:
            self._fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
            self._fh.flush()

    def probe(self, record: SnapshotRecord) -> None:
        self._write(
            {
                "type": "probe",
                "as_label": record.as_label,
                "referred_by": record.referred_by,
                "probe": probe_to_dict(record.probe),
            }
        )

    def blocked(self, target: str) -> None:
        self._write({"type": "blocked", "target": target})

    def finish(self, snapshot: Snapshot) -> None:
        for r in snapshot.records:
            if r.assessment is not None:
                self._write({"type": "assessment", "assessment": r.assessment.to_dict()})
        self._write({"type": "end", "finished_at": snapshot.finished_at, "records": len(snapshot.records)})
        self._fh.close()


def load_snapshot(path) -> Snapshot:
    """Read a snapshot file; a crashed campaign (no assessments) is re-assessed."""
    snap = None
    assessments = {}
    complete = False
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            log.warning("%s:%d: skipping unreadable line", path, lineno)
            continue
        kind = obj.get("type")
        if kind == "snapshot":
            if obj.get("schema_version") != SCHEMA_VERSION:
                raise ValueError(f"unsupported snapshot schema {obj.get('schema_version')!r}")
            snap = Snapshot(obj["snapshot_id"], started_at=obj.get("started_at", ""))
        elif snap is None:
            raise ValueError(f"{path}: missing snapshot header")
        elif kind == "probe":
            snap.records.append(
                SnapshotRecord(probe_from_dict(obj["probe"]), as_label=obj.get("as_label"), referred_by=obj.get("referred_by"))
            )
        elif kind == "blocked":
            snap.blocked.append(obj["target"])
        elif kind == "assessment":
            a = HostAssessment.from_dict(obj["assessment"])
            assessments[a.target] = a
        elif kind == "end":
            snap.finished_at = obj.get("finished_at", "")
            complete = True
    if snap is None:
        raise ValueError(f"{path}: empty snapshot")
    snap.records.sort(key=lambda r: r.probe.target)
    if complete and assessments:
        for r in snap.records:
            r.assessment = assessments.get(r.target)
    else:
        snap.assess()
    return snap


# --- campaigns -----------------------------------------------------------------


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def referral_targets(p: ProbeResult) -> list[Target]:
    """Endpoint URLs of ``p`` that name another host/port."""
    out, seen = [], {p.target.key}
    for ep in p.endpoints:
        t = parse_endpoint_url(str(ep.endpoint_url or ""))
        if t is not None and t.key not in seen:
            seen.add(t.key)
            out.append(t)
    return out


def run_campaign(
    targets,
    blocklist: Blocklist | None = None,
    budget: ScanBudget | None = None,
    config: ProbeConfig | None = None,
    *,
    follow_referrals: bool = True,
    out_path=None,
    snapshot_id: str | None = None,
    probe_fn=probe,
    assess_kwargs: dict | None = None,
) -> Snapshot:
    """Probe every non-blocked target once, following endpoint referrals.

    ``targets`` holds :class:`Target` objects or ``(Target, as_label)``
    pairs.  Without a client identity in ``config`` a fresh self-signed one
    is generated for the campaign.  Blocked targets are dropped before any socket is opened.  Each
    probe gets its own budget tracker; at most ``budget.global_concurrency``
    probes run at a time.
    """
    budget = budget or ScanBudget()
    blocklist = blocklist or Blocklist()
    config = config or ProbeConfig()
    if config.identity is None:
        config = dataclasses.replace(config, identity=create_client_identity())
    started = _now()
    snap = Snapshot(snapshot_id or dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ"), started_at=started)
    writer = SnapshotWriter(out_path, snap.snapshot_id, started) if out_path else None

    seen: set = set()
    queue: list[tuple[Target, str | None, str | None]] = []

    def enqueue(target: Target, as_label, referred_by) -> None:
        if target.key in seen:
            return
        seen.add(target.key)
        if blocklist.blocks(target):
            log.info("skipping blocklisted %s", target)
            snap.blocked.append(str(target))
            if writer:
                writer.blocked(str(target))
            return
        queue.append((target, as_label, referred_by))

    for item in targets:
        target, as_label = item if isinstance(item, tuple) else (item, None)
        enqueue(target, as_label, None)

    with ThreadPoolExecutor(max_workers=budget.global_concurrency, thread_name_prefix="probe") as pool:
        running = {}
        while queue or running:
            while queue and len(running) < budget.global_concurrency:
                target, as_label, referred_by = queue.pop(0)
                fut = pool.submit(probe_fn, target, budget, config)
                running[fut] = (target, as_label, referred_by)
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                target, as_label, referred_by = running.pop(fut)
                try:
                    result = fut.result()
                except Exception as exc:  # a bug in one probe must not end the campaign
                    log.exception("probe of %s crashed", target)
                    result = ProbeResult(
                        target, errors=(PhaseError("endpoints", ProbeError.TRANSPORT_ERROR, repr(exc)),)
                    )
                record = SnapshotRecord(result, as_label=as_label, referred_by=referred_by)
                snap.records.append(record)
                if writer:
                    writer.probe(record)
                if follow_referrals and result.reached:
                    for ref in referral_targets(result):
                        enqueue(ref, None, str(target))

    snap.records.sort(key=lambda r: r.probe.target)
    snap.assess(**(assess_kwargs or {}))
    snap.finished_at = _now()
    if writer:
        writer.finish(snap)
    return snap


# --- diffs ---------------------------------------------------------------------


class HashChange:
    UPGRADE = "Upgrade"
    DOWNGRADE = "Downgrade"
    SAME = "Same"


@dataclass(frozen=True)
class CertificateRenewed:
    target: str
    old_fingerprint: str
    new_fingerprint: str
    hash_change: str
    with_software_update: bool = False


@dataclass(frozen=True)
class SoftwareVersionChanged:
    target: str
    old: str | None
    new: str | None


@dataclass(frozen=True)
class NewHost:
    target: str


@dataclass(frozen=True)
class VanishedHost:
    target: str


@dataclass(frozen=True)
class FindingsChanged:
    target: str
    added: tuple[str, ...]
    removed: tuple[str, ...]


@dataclass
class SnapshotDiff:
    old_id: str
    new_id: str
    events: list = field(default_factory=list)

    def of_type(self, cls) -> list:
        return [e for e in self.events if isinstance(e, cls)]

    def for_target(self, target: str) -> list:
        return [e for e in self.events if e.target == target]

    def to_dicts(self) -> list[dict]:
        out = []
        for e in self.events:
            d = {"event": type(e).__name__}
            d.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in e.__dict__.items()})
            out.append(d)
        return out


def _hash_rank(a: HostAssessment) -> int | None:
    if a.certificate is None:
        return None
    try:
        return HashAlgorithm(a.certificate.signature_hash).rank
    except ValueError:
        return None


def diff_snapshots(old: Snapshot, new: Snapshot, identity: dict | None = None) -> SnapshotDiff:
    """Per-target change events between two snapshots.

    Targets are matched by ``host:port``; ``identity`` may map target strings
    to another key (e.g. a device id) for churn studies.
    """
    identity = identity or {}

    def index(snap: Snapshot) -> dict:
        return {identity.get(r.target, r.target): r.assessment for r in snap.records if r.assessment is not None}

    before, after = index(old), index(new)
    diff = SnapshotDiff(old.snapshot_id, new.snapshot_id)
    for key in sorted(set(before) | set(after)):
        a, b = before.get(key), after.get(key)
        if a is None:
            diff.events.append(NewHost(key))
            continue
        if b is None:
            diff.events.append(VanishedHost(key))
            continue
        version_changed = a.software_version != b.software_version
        if version_changed:
            diff.events.append(SoftwareVersionChanged(key, a.software_version, b.software_version))
        fa = a.certificate.fingerprint if a.certificate else None
        fb = b.certificate.fingerprint if b.certificate else None
        if fa and fb and fa != fb:
            ra, rb = _hash_rank(a), _hash_rank(b)
            if ra is None or rb is None or ra == rb:
                change = HashChange.SAME
            else:
                change = HashChange.UPGRADE if rb > ra else HashChange.DOWNGRADE
            diff.events.append(CertificateRenewed(key, fa, fb, change, version_changed))
        ka = {f.kind.value for f in a.findings}
        kb = {f.kind.value for f in b.findings}
        if ka != kb:
            diff.events.append(FindingsChanged(key, tuple(sorted(kb - ka)), tuple(sorted(ka - kb))))
    return diff
