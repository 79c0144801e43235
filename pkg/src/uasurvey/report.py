"""Anonymized host records and fleet-level tables (JSONL, CSV, text)."""

from __future__ import annotations

import csv
import io
import ipaddress
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from uasurvey.assessment import (
    ACCESSIBLE_OUTCOMES,
    REJECTED_OUTCOMES,
    DeficitKind,
    FleetAggregate,
    HostAssessment,
    Outcome,
    aggregate_fleet,
)
from uasurvey.orchestrator import Snapshot, SnapshotRecord
from uasurvey.policies import PolicyId
from uasurvey.targets import parse_endpoint_url
from uasurvey.wire.structs import MessageSecurityMode

SCHEMA_VERSION = 1
REDACTED = "[redacted]"
FORMATS = ("jsonl", "csv", "text")

_IPV4 = re.compile(r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d.])")
_HOST_ALIAS = re.compile(r"^host-\d+$")
_AS_ALIAS = re.compile(r"^AS-\d+$")


class UnsupportedFormat(ValueError):
    pass


# --- anonymization -------------------------------------------------------------


@dataclass
class AnonymizationMap:
    """Target -> ``host-N`` and AS label -> ``AS-N``, numbered in first-seen order.

    Persisted as two tab-separated columns (original, alias) so a rerun with
    the same file reproduces the same aliases.
    """

    targets: dict[str, str] = field(default_factory=dict)
    ases: dict[str, str] = field(default_factory=dict)

    def target(self, value: str) -> str:
        if _HOST_ALIAS.match(value):
            return value
        if value not in self.targets:
            self.targets[value] = f"host-{len(self.targets) + 1}"
        return self.targets[value]

    def as_label(self, value: str | None) -> str | None:
        if value is None or _AS_ALIAS.match(value):
            return value
        if value not in self.ases:
            self.ases[value] = f"AS-{len(self.ases) + 1}"
        return self.ases[value]

    def dump(self, path) -> None:
        lines = [f"{k}\t{v}" for k, v in self.targets.items()] + [f"{k}\t{v}" for k, v in self.ases.items()]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AnonymizationMap":
        m = cls()
        p = Path(path)
        if not p.exists():
            return m
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                original, alias = line.split("\t")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: expected 'original<TAB>alias'") from exc
            if _HOST_ALIAS.match(alias):
                m.targets[original] = alias
            elif _AS_ALIAS.match(alias):
                m.ases[original] = alias
            else:
                raise ValueError(f"{path}:{lineno}: unknown alias {alias!r}")
        return m


def _host_part(target: str) -> str:
    t = parse_endpoint_url(f"opc.tcp://{target}")
    return t.host if t else target


def _cert_identifiers(cert) -> set[str]:
    """Host-like strings in a certificate's subject/issuer CN and SAN."""
    out = set()
    for cn in _rdn_values(cert.subject, "CN") + _rdn_values(cert.issuer, "CN"):
        if _looks_like_host(cn):
            out.add(cn)
    for san in cert.san:
        if _looks_like_host(san):
            out.add(san)
        else:
            u = parse_endpoint_url(san) if "://" in san else None
            if u is not None:
                out.add(u.host)
    return out


def _rdn_values(name: str, attr: str) -> list[str]:
    return [part.split("=", 1)[1] for part in re.split(r"(?<!\\),", name) if part.startswith(attr + "=")]


def _looks_like_host(value: str) -> bool:
    value = value.strip()
    try:
        ipaddress.ip_address(value.strip("[]"))
        return True
    except ValueError:
        pass
    return "." in value and " " not in value and re.fullmatch(r"[A-Za-z0-9.\-_*]+", value) is not None


def identifying_strings(snapshot: Snapshot) -> set[str]:
    """Every address and host name the snapshot reveals, for scrubbing."""
    out = set()
    for r in snapshot.records:
        out.add(str(r.probe.target))
        out.add(_host_part(str(r.probe.target)))
        if r.referred_by:
            out.add(_host_part(r.referred_by))
        for ep in r.probe.endpoints:
            t = parse_endpoint_url(str(ep.endpoint_url or ""))
            if t is not None:
                out.add(t.host)
        if r.assessment and r.assessment.certificate:
            out |= _cert_identifiers(r.assessment.certificate)
    return {s for s in out if s}


class _Scrubber:
    def __init__(self, secrets):
        ordered = sorted({s for s in secrets if len(s) >= 2}, key=len, reverse=True)
        self._pattern = re.compile("|".join(re.escape(s) for s in ordered), re.IGNORECASE) if ordered else None

    def __call__(self, text):
        if not isinstance(text, str) or not text:
            return text
        if self._pattern is not None:
            text = self._pattern.sub(REDACTED, text)
        text = _IPV4.sub(REDACTED, text)
        return text


def _blacken_name(name: str, scrub: _Scrubber) -> str:
    parts = re.split(r"(?<!\\),", name) if name else []
    out = []
    for part in parts:
        attr, sep, value = part.partition("=")
        if not sep:
            out.append(scrub(part))
        elif attr == "CN" and _looks_like_host(value):
            out.append(f"{attr}={REDACTED}")
        else:
            out.append(f"{attr}={scrub(value)}")
    return ",".join(out)


def host_record(record: SnapshotRecord, snapshot: Snapshot) -> dict:
    """One JSONL report record (raw, not yet anonymized)."""
    p, a = record.probe, record.assessment
    return {
        "schema_version": SCHEMA_VERSION,
        "snapshot_id": snapshot.snapshot_id,
        "target": str(p.target),
        "as_label": record.as_label,
        "referred_by": record.referred_by,
        "started_at": p.started_at,
        "duration_s": round(p.duration, 3),
        "bytes_sent": p.bytes_sent,
        "requests": p.requests,
        "reached": p.reached,
        "errors": [f"{e.phase}:{getattr(e.kind, 'value', e.kind)}" for e in p.errors],
        "budget_tripped": p.budget_tripped,
        "endpoints": [
            {
                "url": str(ep.endpoint_url or ""),
                "mode": ep.security_mode.label if isinstance(ep.security_mode, MessageSecurityMode) else int(ep.security_mode),
                "policy": str(ep.security_policy_uri or ""),
                "tokens": sorted(t.label for t in ep.token_types()),
            }
            for ep in p.endpoints
        ],
        "channel_probe": p.channel_probe.value,
        "session_probe": p.session_probe.value,
        "assessment": a.to_dict() if a else None,
        "nodes": (
            [
                {
                    "name": n.browse_name,
                    "class": int(n.node_class),
                    "access_level": None if n.access_level is None else int(n.access_level),
                    "executable": n.executable,
                }
                for n in p.address_space.nodes.values()
            ]
            if p.address_space
            else []
        ),
    }


def anonymize(snapshot: Snapshot, mapping: AnonymizationMap | None = None) -> list[dict]:
    """Host records with targets and AS labels replaced and host-like strings blackened.

    Certificate subject/issuer CNs and SAN entries that look like host names
    or addresses are blackened; every other string field is scrubbed of the
    addresses and names this snapshot reveals, plus any IPv4 literal.
    Node values are never part of a record.
    """
    mapping = mapping if mapping is not None else AnonymizationMap()
    scrub = _Scrubber(identifying_strings(snapshot))
    out = []
    for r in snapshot.records:
        out.append(anonymize_record(host_record(r, snapshot), mapping, scrub))
    return out


def anonymize_record(rec: dict, mapping: AnonymizationMap, scrub: _Scrubber | None = None) -> dict:
    scrub = scrub or _Scrubber(())
    rec = json.loads(json.dumps(rec))  # deep copy
    rec["target"] = mapping.target(rec["target"])
    rec["as_label"] = mapping.as_label(rec.get("as_label"))
    if rec.get("referred_by"):
        rec["referred_by"] = mapping.target(rec["referred_by"])
    for ep in rec.get("endpoints", ()):
        ep["url"] = _anonymize_url(ep["url"], mapping)
    rec["errors"] = [scrub(e) for e in rec.get("errors", ())]
    for node in rec.get("nodes", ()):
        node["name"] = scrub(node["name"])
    a = rec.get("assessment")
    if a:
        a["target"] = rec["target"]
        a["as_label"] = rec["as_label"]
        for key in ("application_uri", "software_version", "manufacturer"):
            a[key] = scrub(a.get(key))
        cert = a.get("certificate")
        if cert:
            cert["subject"] = _blacken_name(cert["subject"], scrub)
            cert["issuer"] = _blacken_name(cert["issuer"], scrub)
            cert["san"] = [REDACTED if _looks_like_host(s) or "://" in s else scrub(s) for s in cert["san"]]
    return rec


def _anonymize_url(url: str, mapping: AnonymizationMap) -> str:
    t = parse_endpoint_url(url)
    if t is None:
        return REDACTED if url else url
    if _HOST_ALIAS.match(t.host):
        return url
    return f"opc.tcp://{mapping.target(str(t))}"


def anonymized_assessments(snapshot: Snapshot, mapping: AnonymizationMap) -> list[HostAssessment]:
    return [HostAssessment.from_dict(r["assessment"]) for r in anonymize(snapshot, mapping) if r["assessment"]]


def render_host_records(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


# --- fleet tables --------------------------------------------------------------

MODE_ROWS = ("None", "Sign", "SignAndEncrypt")
POLICY_ROWS = tuple(p.value for p in PolicyId)
TABLE2_COLUMNS = tuple(o.value for o in (*ACCESSIBLE_OUTCOMES, *REJECTED_OUTCOMES, Outcome.UNPROBED))
DEFICIT_ROWS = tuple(k.value for k in DeficitKind)


def format_pct(count: int, total: int) -> str:
    """Percentage in the style of published survey tables: one decimal below 10%, whole numbers above."""
    if not total:
        return "n/a"
    p = 100.0 * count / total
    if p < 10:
        return f"{p:.1f}%"
    return f"{math.floor(p)}%"


def _pct(count: int, total: int) -> float | None:
    return round(100.0 * count / total, 1) if total else None


@dataclass(frozen=True)
class Row:
    table: str
    row: str
    column: str
    count: int
    pct: float | None  # of full servers, 0.1 granularity


def fleet_rows(agg: FleetAggregate) -> list[Row]:
    """All report numbers in long form: one row per table cell."""
    n = agg.full_server_count
    rows: list[Row] = []

    def add(table, row, column, count):
        rows.append(Row(table, row, column, count, _pct(count, n)))

    for name, supported, least, most, keys in (
        ("mode", agg.mode_supported, agg.mode_least, agg.mode_most, MODE_ROWS),
        ("policy", agg.policy_supported, agg.policy_least, agg.policy_most, POLICY_ROWS),
    ):
        extra = sorted(set(supported) - set(keys))
        for key in (*keys, *extra):
            if supported.get(key, 0) or least.get(key, 0) or most.get(key, 0):
                add(name, key, "supported", supported.get(key, 0))
                add(name, key, "least", least.get(key, 0))
                add(name, key, "most", most.get(key, 0))

    for kind in DEFICIT_ROWS:
        if agg.deficits.get(kind):
            add("deficit", kind, "hosts", agg.deficits[kind])
    for (kind, label), count in sorted(agg.deficits_by_manufacturer.items()):
        add("deficit_by_manufacturer", kind, label, count)
    for (kind, label), count in sorted(agg.deficits_by_as.items()):
        add("deficit_by_as", kind, label, count)

    combos = sorted({combo for combo, _ in agg.auth_outcome}, key=_combo_order)
    for combo in combos:
        total = 0
        for col in TABLE2_COLUMNS:
            c = agg.auth_outcome.get((combo, col), 0)
            total += c
            add("auth_outcome", combo, col, c)
        add("auth_outcome", combo, "Total", total)
    if combos:
        for col in TABLE2_COLUMNS:
            add("auth_outcome", "Total", col, sum(agg.auth_outcome.get((c, col), 0) for c in combos))
        add("auth_outcome", "Total", "Total", n)

    add("summary", "hosts", "count", agg.host_count)
    add("summary", "full_servers", "count", n)
    add("summary", "discovery_servers", "count", agg.discovery_count)
    add("summary", "deficient", "count", agg.deficient_count)
    return rows


def _combo_order(combo: str):
    order = ("Anonymous", "Username", "Certificate", "IssuedToken")
    parts = combo.split("+") if combo != "(none)" else []
    return (len(parts), [order.index(p) if p in order else 9 for p in parts])


def render_fleet_report(agg: FleetAggregate, fmt: str = "text") -> str:
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
    rows = fleet_rows(agg) if agg.host_count else []
    if fmt == "jsonl":
        header = {
            "schema_version": SCHEMA_VERSION,
            "type": "header",
            "fields": ["table", "row", "column", "count", "pct"],
            "deficit_rate": agg.deficit_rate,
        }
        lines = [header] + [
            {"type": "cell", "table": r.table, "row": r.row, "column": r.column, "count": r.count, "pct": r.pct}
            for r in rows
        ]
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in lines)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["table", "row", "column", "count", "pct"])
        for r in rows:
            w.writerow([r.table, r.row, r.column, r.count, "" if r.pct is None else f"{r.pct:.1f}"])
        return buf.getvalue()
    return _render_text(agg, rows)


def _table(title: str, header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)] if body else [len(h) for h in header]
    fmt_row = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    lines = [title, fmt_row(header), fmt_row(["-" * w for w in widths])]
    lines += [fmt_row(r) for r in body]
    return "\n".join(lines) + "\n"


def _render_text(agg: FleetAggregate, rows: list[Row]) -> str:
    n = agg.full_server_count
    cell = lambda c: f"{c} ({format_pct(c, n)})"  # noqa: E731
    by = {}
    for r in rows:
        by.setdefault(r.table, {}).setdefault(r.row, {})[r.column] = r.count
    out = []
    rate = "undefined" if agg.deficit_rate is None else f"{agg.deficit_rate:.2f}"
    out.append(
        f"hosts: {agg.host_count}  full servers: {n}  discovery servers: {agg.discovery_count}  "
        f"deficient: {agg.deficient_count}  deficit rate: {rate}\n"
    )
    for table, title in (("mode", "Security modes"), ("policy", "Security policies")):
        body = [[k, cell(v["supported"]), cell(v["least"]), cell(v["most"])] for k, v in by.get(table, {}).items()]
        out.append(_table(title, [table, "supported", "least secure", "most secure"], body))
    body = [[k, cell(v["hosts"])] for k, v in by.get("deficit", {}).items()]
    out.append(_table("Configuration deficits", ["deficit", "hosts"], body))
    for table, title, label in (
        ("deficit_by_manufacturer", "Deficits by manufacturer", "manufacturer"),
        ("deficit_by_as", "Deficits by autonomous system", "AS"),
    ):
        body = [[k, col, str(c)] for k, cols in by.get(table, {}).items() for col, c in cols.items()]
        out.append(_table(title, ["deficit", label, "hosts"], body))
    header = ["authentication", *TABLE2_COLUMNS, "Total"]
    body = [[k, *(cell(v.get(c, 0)) for c in (*TABLE2_COLUMNS, "Total"))] for k, v in by.get("auth_outcome", {}).items()]
    out.append(_table("Authentication types by access outcome", header, body))
    return "\n".join(out)


def fleet_report_for(snapshot: Snapshot, anonymize_with: AnonymizationMap | None = None) -> FleetAggregate:
    if anonymize_with is not None:
        return aggregate_fleet(anonymized_assessments(snapshot, anonymize_with))
    return aggregate_fleet(snapshot.assessments())
