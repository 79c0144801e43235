"""Command line: ``uasurvey scan|diff|report``."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import re
import sys
from pathlib import Path

from uasurvey.assessment import RuleSet, load_namespace_rules
from uasurvey.budget import ScanBudget
from uasurvey.client import ProbeConfig, create_client_identity
from uasurvey.orchestrator import Blocklist, diff_snapshots, load_snapshot, load_targets, run_campaign
from uasurvey.report import (
    FORMATS,
    AnonymizationMap,
    anonymize,
    fleet_report_for,
    host_record,
    render_fleet_report,
    render_host_records,
)

_DURATION_UNITS = {"ms": 0.001, "s": 1, "min": 60, "m": 60, "h": 3600}
_SIZE_UNITS = {"b": 1, "kb": 1000, "mb": 1000**2, "gb": 1000**3, "kib": 1024, "mib": 1024**2, "gib": 1024**3}


def parse_duration(text: str) -> float:
    """``500ms``, ``3600s``, ``60min``, ``1h``; a bare number is seconds."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in ("", *_DURATION_UNITS):
        raise argparse.ArgumentTypeError(f"bad duration {text!r}")
    return float(m.group(1)) * _DURATION_UNITS.get(m.group(2).lower(), 1)


def parse_size(text: str) -> int:
    """``50MB``, ``100KB``, ``1MiB``; a bare number is bytes."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in ("", *_SIZE_UNITS):
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return int(float(m.group(1)) * _SIZE_UNITS.get(m.group(2).lower(), 1))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uasurvey", description="OPC UA security-configuration survey scanner")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="probe a target list and write a snapshot")
    s.add_argument("--targets", required=True, type=Path, help="one 'host[:port] [AS-label]' per line")
    s.add_argument("--blocklist", type=Path, help="one CIDR per line; matching hosts are never contacted")
    s.add_argument("--out", required=True, type=Path, help="directory for the snapshot file")
    s.add_argument("--port", type=int, default=4840, help="default port for targets without one")
    s.add_argument("--delay-ms", type=float, default=500.0, help="pause between requests to one host")
    s.add_argument("--host-time-limit", type=parse_duration, default=3600.0)
    s.add_argument("--host-byte-limit", type=parse_size, default=50_000_000)
    s.add_argument("--concurrency", type=int, default=16)
    s.add_argument("--follow-referrals", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--references", choices=("hierarchical", "all"), default="hierarchical")
    s.add_argument("--no-traverse", action="store_true", help="skip the address-space walk")
    s.add_argument("--contact", default="", help="contact string embedded in the client certificate")
    s.add_argument("--snapshot-id")
    s.add_argument("--manufacturer-rules", type=Path)
    s.add_argument("--namespace-rules", type=Path)

    d = sub.add_parser("diff", help="compare two snapshots")
    d.add_argument("--old", required=True, type=Path)
    d.add_argument("--new", required=True, type=Path)
    d.add_argument("--identity", type=Path, help="two-column 'target<TAB>identity' override file")

    r = sub.add_parser("report", help="render a snapshot")
    r.add_argument("--snapshot", required=True, type=Path)
    r.add_argument("--anonymize", action="store_true")
    r.add_argument("--map", type=Path, help="anonymization mapping file, reused and extended")
    r.add_argument("--format", choices=FORMATS, default="text")
    r.add_argument("--records", type=Path, help="also write per-host JSON Lines records here")
    return p


def _cmd_scan(args) -> int:
    targets = load_targets(args.targets, args.port)
    blocklist = Blocklist.load(args.blocklist) if args.blocklist else Blocklist()
    budget = ScanBudget(
        inter_request_delay=args.delay_ms / 1000.0,
        max_duration_per_host=args.host_time_limit,
        max_bytes_per_host=args.host_byte_limit,
        global_concurrency=args.concurrency,
    )
    config = ProbeConfig(
        identity=create_client_identity(args.contact),
        references=args.references,
        traverse=not args.no_traverse,
    )
    assess_kwargs = {}
    if args.manufacturer_rules:
        assess_kwargs["manufacturer_rules"] = RuleSet.load(args.manufacturer_rules)
    if args.namespace_rules:
        assess_kwargs["namespace_rules"] = load_namespace_rules(args.namespace_rules)
    args.out.mkdir(parents=True, exist_ok=True)
    snap_id = args.snapshot_id or dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    out = args.out / f"snapshot-{snap_id}.jsonl"
    snap = run_campaign(
        targets,
        blocklist,
        budget,
        config,
        follow_referrals=args.follow_referrals,
        out_path=out,
        snapshot_id=snap_id,
        assess_kwargs=assess_kwargs,
    )
    reached = sum(r.probe.reached for r in snap.records)
    print(f"{out}: {len(snap.records)} records, {reached} reached, {len(snap.blocked)} blocklisted")
    return 0


def _cmd_diff(args) -> int:
    identity = None
    if args.identity:
        identity = dict(
            line.split("\t", 1) for line in args.identity.read_text().splitlines() if line.strip() and "\t" in line
        )
    diff = diff_snapshots(load_snapshot(args.old), load_snapshot(args.new), identity)
    for event in diff.to_dicts():
        print(json.dumps(event, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    snap = load_snapshot(args.snapshot)
    mapping = None
    if args.anonymize:
        mapping = AnonymizationMap.load(args.map) if args.map else AnonymizationMap()
        records = anonymize(snap, mapping)
    else:
        records = [host_record(r, snap) for r in snap.records]
    if args.records:
        args.records.write_text(render_host_records(records), encoding="utf-8")
    sys.stdout.write(render_fleet_report(fleet_report_for(snap, mapping), args.format))
    if mapping is not None and args.map:
        mapping.dump(args.map)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    handler = {"scan": _cmd_scan, "diff": _cmd_diff, "report": _cmd_report}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
