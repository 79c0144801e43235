"""Acceptance suite: the nine release criteria at their stated tolerances.

Each test records a PASS/FAIL line (see ``conftest.pytest_terminal_summary``)
before asserting, so a run always ends with the full scorecard.

Expected values are derived from fixture configs or hand-written tables,
never from an earlier run of the scanner.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time

import pytest
from cryptography.hazmat.primitives import serialization

import strategies as S
from conftest import ACCEPTANCE, DATA
from helpers import brute_force_pairs, toy_moduli, toy_primes
from randgen import Gen
from test_certs import KEYS, TRUTH, TRUTH_CASES, record
from uasurvey.assessment import AccessSummary, DeficitFinding, DeficitKind, EndpointConformance, Role, aggregate_fleet
from uasurvey.batchgcd import find_shared_primes
from uasurvey.budget import BudgetTracker, ScanBudget
from uasurvey.certs import Reason, Verdict, check_conformance
from uasurvey.cli import main as cli_main
from uasurvey.client import ProbeConfig, create_client_identity, probe
from uasurvey.mock.config import CertSpec, EndpointSpec, FixtureConfig, NodeSpec
from uasurvey.mock.server import ALLOWED_SCANNER_SERVICES, fleet, serve, stop_all
from uasurvey.orchestrator import (
    CertificateRenewed,
    FindingsChanged,
    HashChange,
    SoftwareVersionChanged,
    diff_snapshots,
    run_campaign,
)
from uasurvey.policies import policy_by_name
from uasurvey.targets import Target
from uasurvey.wire.binary import Reader, Writer, read_data_value, read_variant, write_data_value, write_variant
from uasurvey.wire.services import (
    REQUEST_TYPES,
    RESPONSE_TYPES,
    Service,
    decode_service_message,
    encode_service_request,
    encode_service_response,
)
from uasurvey.wire.transport import decode_transport, encode_transport

pytestmark = pytest.mark.slow

FAST = ScanBudget(inter_request_delay=0.0, max_duration_per_host=60, global_concurrency=8)
PER_TYPE = 10_000
FUZZ_DIR = DATA / "fuzz_corpus"

# every mock service log touched by a campaign in this module, for criterion 7
CAMPAIGN_LOGS: dict[str, list] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def scanner():
    return ProbeConfig(identity=create_client_identity(), connect_timeout=2, io_timeout=10)


# --- 1: codec round-trip and fuzzing -----------------------------------------------


def _roundtrip_failures(make, encode, decode, n=PER_TYPE):
    bad = 0
    first = None
    for _ in range(n):
        x = make()
        data = encode(x)
        y = decode(data)
        if y != x or encode(y) != data:
            bad += 1
            first = first or repr(x)[:200]
    return bad, first


def _variant_bytes(v):
    w = Writer()
    write_variant(w, v)
    return w.getvalue()


def _data_value_bytes(v):
    w = Writer()
    write_data_value(w, v)
    return w.getvalue()


def codec_cases(g: Gen):
    for cls in S.STRUCT_TYPES:
        yield cls.__name__, lambda c=cls: g.struct(c), lambda x: x.encode(), lambda d, c=cls: c.decode(d)
    yield "Variant", g.variant, _variant_bytes, lambda d: read_variant(Reader(d))
    yield "DataValue", g.data_value, _data_value_bytes, lambda d: read_data_value(Reader(d))
    yield "TransportMessage", g.transport_message, encode_transport, decode_transport
    for svc, cls in REQUEST_TYPES.items():
        if svc is Service.CLOSE_SECURE_CHANNEL:
            continue  # its body is the bare header, covered by the struct itself
        yield (
            f"{svc.value}Request envelope",
            lambda c=cls: g.struct(c),
            lambda x, s=svc: encode_service_request(s, x),
            lambda d: decode_service_message(d).body,
        )
    for svc, cls in RESPONSE_TYPES.items():
        yield (
            f"{svc.value}Response envelope",
            lambda c=cls: g.struct(c),
            lambda x, s=svc: encode_service_response(s, x),
            lambda d: decode_service_message(d).body,
        )


def test_1_codec_roundtrip_and_fuzz():
    from fuzz_harness import replay

    g = Gen(20_260_101)
    failures = {}
    types = 0
    for name, make, encode, decode in codec_cases(g):
        types += 1
        bad, first = _roundtrip_failures(make, encode, decode)
        if bad:
            failures[name] = (bad, first)

    meta_path = FUZZ_DIR / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        fuzz_ok = meta["duration_s"] >= 3600 and meta["crashes"] == 0
        replayed = replay(FUZZ_DIR)
        fuzz = f"fuzz {meta['duration_s']:.0f}s/{meta['iterations']} inputs/{meta['crashes']} crashes, replay untyped={len(replayed)}"
        fuzz_ok = fuzz_ok and not replayed
    else:
        fuzz_ok, fuzz = False, "no fuzz campaign record (run tests/fuzz_harness.py --seconds 3600)"
    ok = not failures and fuzz_ok
    detail = f"{types} types x {PER_TYPE} round-trips, {len(failures)} failing; {fuzz}"
    if failures:
        detail += f"; e.g. {next(iter(failures.items()))}"
    verdict(1, ok, detail)


# --- 2: conformance truth table -----------------------------------------------------


def test_2_conformance_truth_table():
    wrong = []
    for policy, hash_name, bits, want, reasons in TRUTH_CASES:
        got = check_conformance(policy, record(hash_name, bits))
        if got.verdict is not want or got.reasons != reasons:
            wrong.append(f"{policy.id.value}/{hash_name}/{bits}")
    named = (
        check_conformance(policy_by_name("S2"), record("SHA1", 2048)).verdict is Verdict.WEAKER
        and check_conformance(policy_by_name("D1"), record("SHA256", 2048)).verdict is Verdict.STRONGER
    )
    ok = len(TRUTH_CASES) == 90 and not wrong and named
    verdict(2, ok, f"{len(TRUTH_CASES)} cells, {len(wrong)} mismatches {wrong[:5]}, S2/SHA1=Weaker and D1/SHA256=Stronger: {named}")


# --- 3: shared-prime oracle -----------------------------------------------------------


def test_3_shared_prime_oracle():
    toy_primes()  # sieve outside the timed region
    discrepancies = 0
    planted = 0
    spent = 0.0
    for seed in range(100):
        mods = toy_moduli(seed, 200, 5)
        t0 = time.perf_counter()
        found = find_shared_primes(mods)
        spent += time.perf_counter() - t0
        got = {(f.fingerprint_a, f.fingerprint_b, f.shared_factor) for f in found}
        want = brute_force_pairs(mods)
        discrepancies += len(got ^ want)
        planted += len(want) == 5
    ok = discrepancies == 0 and planted == 100 and spent < 10.0
    verdict(3, ok, f"100 seeds x 200 moduli, {discrepancies} discrepancies, {planted}/100 seeds with 5 pairs, {spent:.2f}s")


# --- 4: fixture matrix ------------------------------------------------------------------

MODES = ("None", "Sign", "SignAndEncrypt")
POLICIES = ("None", "D1", "D2", "S1", "S2", "S3")
NAMESPACES = ([], ["urn:freeopcua:python:server"], ["http://PLCopen.org/OpcUa/IEC61131-3/"])
NAMESPACE_CLASS = ("Unclassified", "Test", "Production")
APP_URIS = (("urn:beckhoff:plc:{i}", "Beckhoff"), ("urn:example:device:{i}", None), ("urn:wago:controller:{i}", "WAGO"))
MATRIX_NODES = [
    NodeSpec("ns=1;s=Cell", "Cell", "Object"),
    NodeSpec("ns=1;s=Speed", "Speed", parent="ns=1;s=Cell", access_level=1, value=3.5),
    NodeSpec("ns=1;s=Setpoint", "Setpoint", parent="ns=1;s=Cell", access_level=3, value=7),
    NodeSpec("ns=1;s=Home", "Home", "Method", parent="ns=1;s=Cell"),
]
# every server also exposes NamespaceArray and SoftwareVersion, both CurrentRead only
SKELETON_LEVELS = (1, 1)


def matrix_configs():
    out = []
    i = 0
    for mode in MODES:
        for policy in POLICIES:
            for anonymous in (True, False):
                for accept in (True, False):
                    for fault in (False, True):
                        uri, _ = APP_URIS[i % 3]
                        out.append(
                            FixtureConfig(
                                endpoints=[EndpointSpec(mode, policy, ["Anonymous"] if anonymous else ["Username"])],
                                certificate=CertSpec(
                                    hash=("SHA1", "SHA256")[i % 2], common_name=f"matrix-{i}", key_slot=3000 + i % 4
                                ),
                                accept_client_cert=accept,
                                anonymous_session_behavior="FaultOnActivate" if fault else "Accept",
                                address_space=list(MATRIX_NODES),
                                namespaces=list(NAMESPACES[i % 3]),
                                software_version=f"3.{i}",
                                application_uri=uri.format(i=i),
                            )
                        )
                        i += 1
    return out


def expected_assessment(i: int, cfg: FixtureConfig, target: str, as_label: str, cert_der: bytes) -> dict:
    """Every HostAssessment field, worked out from the fixture config alone."""
    (ep,) = cfg.endpoints
    mode, policy = ep.mode, ep.policy
    pid = "N" if policy == "None" else policy
    anonymous = "Anonymous" in ep.tokens
    secured = mode != "None"
    consistent = (mode == "None") == (policy == "None")
    hash_name = cfg.certificate.hash

    # which probe verdict the scanner must reach
    if not consistent:
        outcome = "Unprobed" if anonymous else "Authentication"
        accepted = False
    elif secured and not cfg.accept_client_cert:
        outcome, accepted = "SecureChannel", False
    elif not anonymous:
        outcome, accepted = "Authentication", False
    elif cfg.anonymous_session_behavior == "FaultOnActivate":
        outcome, accepted = "Authentication", False
    else:
        outcome, accepted = NAMESPACE_CLASS[i % 3], True

    conformance = ()
    kinds = set()
    if pid != "N":
        letter, _, reasons = TRUTH[pid][hash_name].split()[KEYS.index(2048)].partition(":")
        v = {"C": Verdict.CONFORMANT, "W": Verdict.WEAKER, "S": Verdict.STRONGER}[letter]
        names = {"HB": Reason.HASH_BELOW, "HA": Reason.HASH_ABOVE, "KB": Reason.KEY_BELOW, "KA": Reason.KEY_ABOVE}
        conformance = (EndpointConformance(0, pid, v, tuple(sorted(names[r].value for r in reasons.split(",") if r))),)
        if v is Verdict.WEAKER:
            kinds.add(DeficitKind.CERT_WEAKER)
        if v is Verdict.STRONGER:
            kinds.add(DeficitKind.CERT_STRONGER)
    if mode == "None":
        kinds.add(DeficitKind.NO_SECURITY_ONLY)
    if pid in ("D1", "D2"):
        kinds |= {DeficitKind.DEPRECATED_MOST_SECURE, DeficitKind.DEPRECATED_OFFERED}
    if anonymous:
        kinds.add(DeficitKind.ANONYMOUS_ACCESS)
        if secured:
            kinds.add(DeficitKind.ANONYMOUS_DESPITE_SECURITY)

    notes = ()
    if secured and policy == "None":
        notes = ("PolicyNoneWithSecuredMode",)
    elif not secured and policy != "None":
        notes = ("SecuredPolicyWithModeNone",)

    access = None
    if accepted:
        levels = [n.access_level for n in cfg.address_space if n.node_class == "Variable"] + list(SKELETON_LEVELS)
        methods = [n for n in cfg.address_space if n.node_class == "Method"]
        access = AccessSummary(
            readable_fraction=sum(bool(lv & 1) for lv in levels) / len(levels),
            writable_fraction=sum(bool(lv & 2) for lv in levels) / len(levels),
            executable_fraction=1.0,
            node_count=len(levels),
            method_count=len(methods),
        )

    return {
        "target": target,
        "role": Role.FULL_SERVER,
        "least_mode": mode,
        "most_mode": mode,
        "least_policy": pid,
        "most_policy": pid,
        "modes": (mode,),
        "policies": (pid,),
        "auth_combination": ("Anonymous",) if anonymous else ("Username",),
        "findings": tuple(sorted(DeficitFinding(k, ("endpoint:0",)) for k in kinds)),
        "system_class": NAMESPACE_CLASS[i % 3] if accepted else None,
        "outcome": outcome,
        "access": access,
        "manufacturer": APP_URIS[i % 3][1],
        "as_label": as_label,
        "certificate": {
            "fingerprint": hashlib.sha256(cert_der).hexdigest(),
            "signature_hash": hash_name,
            "key_algorithm": "RSA",
            "key_length_bits": 2048,
            "common_name": cfg.certificate.common_name,
            "self_signed": True,
            "not_before": cfg.certificate.not_before_dt.isoformat(),
        },
        "conformance": conformance,
        "software_version": cfg.software_version if accepted else None,
        "application_uri": cfg.application_uri,
        "data_quality": notes,
    }


def observed(a) -> dict:
    c = a.certificate
    return {
        "target": a.target,
        "role": a.role,
        "least_mode": a.least_mode,
        "most_mode": a.most_mode,
        "least_policy": a.least_policy,
        "most_policy": a.most_policy,
        "modes": a.modes,
        "policies": a.policies,
        "auth_combination": a.auth_combination,
        "findings": a.findings,
        "system_class": a.system_class.value if a.system_class else None,
        "outcome": a.outcome.value if a.outcome else None,
        "access": a.access,
        "manufacturer": a.manufacturer,
        "as_label": a.as_label,
        "certificate": c
        and {
            "fingerprint": c.fingerprint,
            "signature_hash": c.signature_hash,
            "key_algorithm": c.key_algorithm,
            "key_length_bits": c.key_length_bits,
            "common_name": c.subject.split("CN=", 1)[1].split(",", 1)[0] if "CN=" in c.subject else c.subject,
            "self_signed": c.self_signed,
            "not_before": c.not_before,
        },
        "conformance": a.conformance,
        "software_version": a.software_version,
        "application_uri": a.application_uri,
        "data_quality": a.data_quality,
    }


@pytest.fixture(scope="module")
def matrix_run(scanner):
    configs = matrix_configs()
    servers = fleet(configs)
    try:
        targets = [(Target(s.host, s.port), f"AS{64500 + i % 3}") for i, s in enumerate(servers)]
        snap = run_campaign(targets, budget=FAST, config=scanner, follow_referrals=False, snapshot_id="matrix")
        for s in servers:
            s.log.settle()
    finally:
        stop_all(servers)
    CAMPAIGN_LOGS["matrix"] = [s.log for s in servers]
    return configs, servers, snap


def test_4_fixture_matrix(matrix_run):
    configs, servers, snap = matrix_run
    by_target = {r.target: r.assessment for r in snap.records}
    mismatches = []
    for i, (cfg, server) in enumerate(zip(configs, servers)):
        target = f"{server.host}:{server.port}"
        want = expected_assessment(i, cfg, target, f"AS{64500 + i % 3}", server.identity.certificate)
        a = by_target.get(target)
        if a is None:
            mismatches.append((i, "missing"))
            continue
        got = observed(a)
        for key in want:
            if got[key] != want[key]:
                mismatches.append((i, key, got[key], want[key]))
    ok = len(configs) == 144 and len(by_target) == 144 and not mismatches
    detail = f"{len(configs)} fixtures x 20 fields, {len(mismatches)} mismatches"
    if mismatches:
        detail += f"; first {mismatches[0]}"
    verdict(4, ok, detail)


# --- 5: planted fleet --------------------------------------------------------------------


def planted_configs():
    """24 None-only, 25 deprecated-only, 35 S2 with SHA1 certs, 8 anonymous on good
    security, 8 clean; 12 hosts of each of the first three groups also allow Anonymous."""
    groups = (
        [("none", i < 12) for i in range(24)]
        + [("deprecated", i < 12) for i in range(25)]
        + [("weakcert", i < 12) for i in range(35)]
        + [("anon", True)] * 8
        + [("clean", False)] * 8
    )
    out = []
    for i, (group, anonymous) in enumerate(groups):
        tokens = ["Anonymous", "Username"] if anonymous else ["Username"]
        hash_name = "SHA1" if group in ("deprecated", "weakcert") else "SHA256"
        if group == "none":
            endpoints = [EndpointSpec("None", "None", tokens)]
        elif group == "deprecated":
            endpoints = [EndpointSpec("Sign", "D1", tokens), EndpointSpec("SignAndEncrypt", "D2", tokens)]
        else:
            endpoints = [EndpointSpec("SignAndEncrypt", "S2", tokens)]
        cert = CertSpec(hash=hash_name, common_name=f"fleet-{i}", key_slot=4000 + i % 5)
        out.append(FixtureConfig(endpoints=endpoints, certificate=cert, address_space=list(MATRIX_NODES)))
    return out


@pytest.fixture(scope="module")
def planted_run(scanner):
    configs = planted_configs()
    servers = fleet(configs)
    try:
        t0 = time.monotonic()
        snap = run_campaign([Target(s.host, s.port) for s in servers], budget=FAST, config=scanner, snapshot_id="planted")
        elapsed = time.monotonic() - t0
        for s in servers:
            s.log.settle()
    finally:
        stop_all(servers)
    CAMPAIGN_LOGS["planted"] = [s.log for s in servers]
    return snap, elapsed


def test_5_planted_fleet(planted_run):
    snap, elapsed = planted_run
    agg = aggregate_fleet(snap.assessments())
    counts = tuple(
        agg.deficits.get(k.value, 0)
        for k in (DeficitKind.NO_SECURITY_ONLY, DeficitKind.DEPRECATED_MOST_SECURE, DeficitKind.CERT_WEAKER, DeficitKind.ANONYMOUS_ACCESS)
    )
    reuse = agg.deficits.get(DeficitKind.CERTIFICATE_REUSE.value, 0)
    ok = counts == (24, 25, 35, 44) and agg.full_server_count == 100 and agg.deficit_rate == 0.92 and reuse == 0 and elapsed < 120
    verdict(5, ok, f"counts {counts}, {agg.full_server_count} servers, rate {agg.deficit_rate}, reuse {reuse}, {elapsed:.1f}s")


# --- 6: budgets -------------------------------------------------------------------------

SCALED = ScanBudget(inter_request_delay=0.05, max_duration_per_host=5.0, max_bytes_per_host=100_000)


class RecordingTracker(BudgetTracker):
    """Remembers the byte count at the start of every admitted request."""

    def __init__(self, budget):
        super().__init__(budget)
        self.bytes_at_start: list[int] = []

    def before_request(self):
        super().before_request()
        self.bytes_at_start.append(self.bytes_sent)


def deep_chain(depth=200):
    nodes, parent = [], "i=85"
    for i in range(depth):
        nodes.append(NodeSpec(f"ns=1;s=Stage{i}", f"Stage{i}", "Object", parent=parent))
        parent = f"ns=1;s=Stage{i}"
    return nodes


def wide_long_ids(count=600):
    return [NodeSpec(f"ns=1;s={'x' * 190}{i:06d}", f"Tag{i}", value=i) for i in range(count)]


def budget_probe(nodes, scanner):
    tracker = RecordingTracker(SCALED)
    with serve(FixtureConfig(address_space=nodes)) as server:
        result = probe(Target(server.host, server.port), SCALED, scanner, tracker=tracker)
        settled = server.log.settle(timeout=1.0)
        entries = server.log.entries()
    CAMPAIGN_LOGS.setdefault("budget", []).append(server.log)
    return result, tracker, entries, settled


@pytest.fixture(scope="module")
def budget_runs(scanner):
    return budget_probe(deep_chain(), scanner), budget_probe(wide_long_ids(), scanner)


def test_6_budget_enforcement(budget_runs):
    (rt, tt, et, st), (rb, tb, eb, sb) = budget_runs
    problems = []
    gaps = [b.time - a.time for entries in (et, eb) for a, b in zip(entries, entries[1:])]
    short = [g for g in gaps if g < SCALED.inter_request_delay]
    if short:
        problems.append(f"{len(short)} gaps under 50 ms, min {min(short) * 1000:.1f} ms")

    deadline = tt.started + SCALED.max_duration_per_host
    if rt.budget_tripped != "time":
        problems.append(f"time run tripped {rt.budget_tripped!r}")
    late_starts = [t for t in tt.request_times if t >= deadline]
    late_logged = [e for e in et if e.time >= deadline]
    if late_starts or len(late_logged) > 1 or not st:
        problems.append(f"time: {len(late_starts)} sends after deadline, {len(late_logged)} logged after, settled={st}")

    ceiling = SCALED.max_bytes_per_host
    if rb.budget_tripped != "bytes":
        problems.append(f"byte run tripped {rb.budget_tripped!r}")
    over = [b for b in tb.bytes_at_start if b >= ceiling]
    if over or len(eb) > tb.requests or not sb:
        problems.append(f"bytes: {len(over)} sends at/over ceiling, {len(eb)} logged vs {tb.requests} sent, settled={sb}")

    detail = (
        f"{len(gaps)} gaps, min {min(gaps) * 1000:.1f} ms; time trip after {tt.requests} requests "
        f"({len(late_logged)} logged past deadline); byte trip at {rb.bytes_sent} B after {tb.requests} requests"
    )
    verdict(6, not problems and len(gaps) > 100, detail + ("; " + "; ".join(problems) if problems else ""))


# --- 8: snapshot diff ----------------------------------------------------------------------


def _fixed_cert(common_name, hash_name, slot, not_before="2020-01-01T00:00:00+00:00"):
    """A certificate frozen to bytes so a restarted fixture presents the identical one."""
    from uasurvey.mock.certgen import build_certificate, rsa_key
    import datetime as dt

    key = rsa_key(2048, slot)
    der = build_certificate(key, common_name, hash_name, not_before=dt.datetime.fromisoformat(not_before))
    pem = key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption())
    return CertSpec(hash=hash_name, der_b64=base64.b64encode(der).decode(), key_pem=pem.decode()), der


def _renewal_fixture(cert, version):
    eps = [EndpointSpec("None", "None", ["Anonymous"]), EndpointSpec("SignAndEncrypt", "S2", ["Username"])]
    return FixtureConfig(endpoints=eps, certificate=cert, software_version=version)


@pytest.fixture(scope="module")
def renewal_run(scanner):
    a_old, a_old_der = _fixed_cert("renew-a", "SHA256", 5000)
    a_new, a_new_der = _fixed_cert("renew-a", "SHA1", 5001)
    b, b_der = _fixed_cert("steady-b", "SHA256", 5002)
    c_old, c_old_der = _fixed_cert("renew-c", "SHA256", 5003)
    c_new, c_new_der = _fixed_cert("renew-c", "SHA256", 5004, "2024-06-01T00:00:00+00:00")
    before = [_renewal_fixture(a_old, "2.0.1"), _renewal_fixture(b, "7.1"), _renewal_fixture(c_old, "5.5")]
    after = [_renewal_fixture(a_new, "2.1.0"), _renewal_fixture(b, "7.1"), _renewal_fixture(c_new, "5.5")]
    snaps = []
    identity = {}
    for label, configs in (("before", before), ("after", after)):
        servers = fleet(configs)
        try:
            snaps.append(run_campaign([Target(s.host, s.port) for s in servers], budget=FAST, config=scanner, snapshot_id=label))
            for s in servers:
                s.log.settle()
        finally:
            stop_all(servers)
        CAMPAIGN_LOGS[f"renewal-{label}"] = [s.log for s in servers]
        # ports may differ between the two fleets; key hosts by their role instead
        identity.update({f"{s.host}:{s.port}": name for s, name in zip(servers, "ABC")})
    fps = {"A": (a_old_der, a_new_der), "C": (c_old_der, c_new_der)}
    return snaps, identity, fps


def test_8_snapshot_diff(renewal_run):
    (old, new), identity, fps = renewal_run
    diff = diff_snapshots(old, new, identity)
    fp = lambda der: hashlib.sha256(der).hexdigest()  # noqa: E731
    want = {
        SoftwareVersionChanged("A", "2.0.1", "2.1.0"),
        CertificateRenewed("A", fp(fps["A"][0]), fp(fps["A"][1]), HashChange.DOWNGRADE, True),
        FindingsChanged("A", (DeficitKind.CERT_WEAKER.value,), ()),
        CertificateRenewed("C", fp(fps["C"][0]), fp(fps["C"][1]), HashChange.SAME, False),
    }
    got = set(diff.events)
    false_b = diff.for_target("B")
    ok = got == want and not false_b and len(diff.events) == len(want)
    detail = f"{len(diff.events)} events, expected {len(want)}; missing {len(want - got)}, spurious {len(got - want)}, events on unchanged host {len(false_b)}"
    if got != want:
        detail += f"; spurious {sorted(map(repr, got - want))[:2]}"
    verdict(8, ok, detail)


# --- 9: anonymization -------------------------------------------------------------------------

FQDNS = ("plc7.line2.plant.example", "hmi.north.factory.example", "historian.corp.example")


@pytest.fixture(scope="module")
def anonymization_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("anon")
    configs = []
    for i, name in enumerate(FQDNS):
        configs.append(
            FixtureConfig(
                endpoints=[EndpointSpec("None", "None", ["Anonymous"]), EndpointSpec("Sign", "S2", ["Username"])],
                certificate=CertSpec(common_name=name, dns_names=[name, f"alt-{name}"], organization=f"{name} Ltd", key_slot=5100 + i),
                application_uri=f"urn:{name}:opcua:server",
                application_name=f"Server on {name}",
                address_space=list(MATRIX_NODES),
            )
        )
    servers = fleet(configs)
    try:
        targets = tmp / "targets.txt"
        targets.write_text("".join(f"{s.address} AS6450{i}\n" for i, s in enumerate(servers)))
        code = cli_main(["scan", "--targets", str(targets), "--out", str(tmp), "--delay-ms", "0", "--snapshot-id", "anon"])
        for s in servers:
            s.log.settle()
    finally:
        stop_all(servers)
    CAMPAIGN_LOGS["anonymization"] = [s.log for s in servers]
    assert code == 0
    return tmp, tmp / "snapshot-anon.jsonl", servers


def _report(snap, mapping, out_dir, fmt, capsys):
    records = out_dir / f"records-{fmt}.jsonl"
    capsys.readouterr()
    code = cli_main(["report", "--snapshot", str(snap), "--anonymize", "--map", str(mapping), "--records", str(records), "--format", fmt])
    return code, capsys.readouterr().out.encode() + records.read_bytes()


def test_9_anonymization(anonymization_run, capsys):
    tmp, snap, servers = anonymization_run
    mapping = tmp / "map.tsv"
    needles = {s.host.encode() for s in servers} | {s.address.encode() for s in servers}
    needles |= {n.encode() for n in FQDNS} | {f"alt-{n}".encode() for n in FQDNS}

    runs = []
    for attempt in range(2):
        out_dir = tmp / f"run{attempt}"
        out_dir.mkdir()
        blobs = b""
        for fmt in ("text", "csv", "jsonl"):
            code, blob = _report(snap, mapping, out_dir, fmt, capsys)
            assert code == 0
            blobs += blob
        runs.append((blobs, mapping.read_bytes()))
    leaks = sorted(n.decode() for n in needles if n in runs[0][0] or n in runs[1][0])
    stable = runs[0] == runs[1]
    source_has_them = all(n in snap.read_bytes() for n in (FQDNS[0].encode(), servers[0].host.encode()))
    ok = not leaks and stable and source_has_them and len(runs[0][0]) > 0
    verdict(9, ok, f"{len(needles)} identifiers scanned in {len(runs[0][0])} output bytes, leaks {leaks}, stable across reruns: {stable}")


# --- 7: ethics invariant (runs last: it inspects every campaign above) ------------------------------


def test_7_no_write_or_call(matrix_run, planted_run, budget_runs, renewal_run, anonymization_run):
    forbidden = []
    foreign = set()
    total = 0
    for name, logs in CAMPAIGN_LOGS.items():
        for log in logs:
            for service in log.services():
                total += 1
                if service in ("Write", "Call"):
                    forbidden.append((name, service))
                if service not in ALLOWED_SCANNER_SERVICES:
                    foreign.add(service)
    ok = total > 0 and not forbidden and not foreign
    verdict(7, ok, f"{total} logged requests over {sum(map(len, CAMPAIGN_LOGS.values()))} fixtures, {len(forbidden)} Write/Call, other services {sorted(foreign)}")
