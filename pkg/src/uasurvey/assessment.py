"""Per-host findings and fleet aggregates derived from probe results.

Everything here is a pure function of its inputs: assessing the same
:class:`~uasurvey.client.ProbeResult` with the same reuse clusters and rule
files always yields an identical :class:`HostAssessment`, which is what makes
stored snapshots auditable.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from uasurvey.addressspace import STANDARD_NAMESPACE, AddressSpaceSnapshot
from uasurvey.certs import (
    CertificateRecord,
    MalformedCertificate,
    ReuseCluster,
    Verdict,
    check_conformance,
    cluster_reuse,
    parse_certificate,
)
from uasurvey.client import ChannelProbe, ProbeResult, SessionProbe, local_endpoints
from uasurvey.policies import NONE as POLICY_NONE
from uasurvey.policies import SecurityPolicy, policy_from_uri
from uasurvey.wire.structs import MessageSecurityMode, NodeClass, UserTokenType

# --- enums ---------------------------------------------------------------------


class Role(str, Enum):
    DISCOVERY_SERVER = "DiscoveryServer"
    FULL_SERVER = "FullServer"


class DeficitKind(str, Enum):
    NO_SECURITY_ONLY = "NoSecurityOnly"
    DEPRECATED_MOST_SECURE = "DeprecatedMostSecure"
    DEPRECATED_OFFERED = "DeprecatedOffered"
    CERT_WEAKER = "CertWeakerThanPolicy"
    CERT_STRONGER = "CertStrongerThanPolicy"
    CERTIFICATE_REUSE = "CertificateReuse"
    ANONYMOUS_ACCESS = "AnonymousAccess"
    ANONYMOUS_DESPITE_SECURITY = "AnonymousDespiteSecurity"


# The classes that make a host "deficient" for the fleet-wide rate.  Offering a
# deprecated policy next to a secure one, or a certificate stronger than its
# policy, is reported but does not count.
DEFICIT_KINDS = frozenset(
    {
        DeficitKind.NO_SECURITY_ONLY,
        DeficitKind.DEPRECATED_MOST_SECURE,
        DeficitKind.CERT_WEAKER,
        DeficitKind.CERTIFICATE_REUSE,
        DeficitKind.ANONYMOUS_ACCESS,
        DeficitKind.ANONYMOUS_DESPITE_SECURITY,
    }
)


class SystemClass(str, Enum):
    PRODUCTION = "Production"
    TEST = "Test"
    UNCLASSIFIED = "Unclassified"


class Outcome(str, Enum):
    """Column of the auth-combination matrix a full server falls into."""

    PRODUCTION = "Production"
    TEST = "Test"
    UNCLASSIFIED = "Unclassified"
    AUTHENTICATION = "Authentication"
    SECURE_CHANNEL = "SecureChannel"
    UNPROBED = "Unprobed"


ACCESSIBLE_OUTCOMES = (Outcome.PRODUCTION, Outcome.TEST, Outcome.UNCLASSIFIED)
REJECTED_OUTCOMES = (Outcome.AUTHENTICATION, Outcome.SECURE_CHANNEL)

AUTH_ORDER = (UserTokenType.ANONYMOUS, UserTokenType.USERNAME, UserTokenType.CERTIFICATE, UserTokenType.ISSUED_TOKEN)
MODE_ORDER = ("None", "Sign", "SignAndEncrypt")

NOTE_EMPTY_ENDPOINTS = "EmptyEndpointList"
NOTE_MALFORMED_CERT = "MalformedCertificate"
NOTE_POLICY_MODE_MISMATCH = "PolicyNoneWithSecuredMode"
NOTE_SECURED_POLICY_NONE_MODE = "SecuredPolicyWithModeNone"


class EmptyEndpointList(ValueError):
    pass


class MalformedRuleFile(ValueError):
    pass


# --- rule files ----------------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    pattern: str
    label: str
    regex: re.Pattern | None = None

    def matches(self, text: str) -> bool:
        if self.regex is not None:
            return self.regex.search(text) is not None
        return self.pattern.lower() in text.lower()


@dataclass(frozen=True)
class RuleSet:
    """Ordered ``pattern<TAB>label`` rules; ``re:`` marks a regex pattern."""

    rules: tuple[Rule, ...] = ()

    def match(self, text: str | None) -> str | None:
        if not text:
            return None
        for rule in self.rules:
            if rule.matches(text):
                return rule.label
        return None

    def labels(self) -> set[str]:
        return {r.label for r in self.rules}

    @classmethod
    def parse(cls, text: str, allowed_labels=None) -> "RuleSet":
        rules = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise MalformedRuleFile(f"line {lineno}: expected 'pattern<TAB>label', got {raw!r}")
            pattern, label = parts[0], parts[1].strip()
            if allowed_labels is not None and label not in allowed_labels:
                raise MalformedRuleFile(f"line {lineno}: label {label!r} not in {sorted(allowed_labels)}")
            regex = None
            if pattern.startswith("re:"):
                try:
                    regex = re.compile(pattern[3:], re.IGNORECASE)
                except re.error as exc:
                    raise MalformedRuleFile(f"line {lineno}: bad regex {pattern[3:]!r}: {exc}") from exc
            rules.append(Rule(pattern, label, regex))
        return cls(tuple(rules))

    @classmethod
    def load(cls, path, allowed_labels=None) -> "RuleSet":
        return cls.parse(Path(path).read_text(encoding="utf-8"), allowed_labels)


def _bundled(name: str) -> str:
    return resources.files("uasurvey").joinpath("data", name).read_text(encoding="utf-8")


def default_manufacturer_rules() -> RuleSet:
    return RuleSet.parse(_bundled("manufacturers.tsv"))


def default_namespace_rules() -> RuleSet:
    return RuleSet.parse(_bundled("namespaces.tsv"), {SystemClass.TEST.value, SystemClass.PRODUCTION.value})


def load_namespace_rules(path) -> RuleSet:
    return RuleSet.load(path, {SystemClass.TEST.value, SystemClass.PRODUCTION.value})


# --- per-host records ----------------------------------------------------------


def mode_label(mode) -> str:
    if isinstance(mode, MessageSecurityMode):
        return mode.label
    return f"Unknown({int(mode)})"


def mode_rank(mode) -> int:
    """None < Sign < SignAndEncrypt; Invalid and undecodable values sort below None."""
    try:
        return MODE_ORDER.index(mode_label(mode))
    except ValueError:
        return -1


@dataclass(frozen=True)
class SecuritySummary:
    least_mode: str
    most_mode: str
    least_policy: SecurityPolicy
    most_policy: SecurityPolicy
    modes: tuple[str, ...]
    policies: tuple[str, ...]


def summarize_security(endpoints) -> SecuritySummary:
    """Least and most secure mode and policy, each ranked independently."""
    endpoints = list(endpoints)
    if not endpoints:
        raise EmptyEndpointList("no endpoints to summarize")
    modes = sorted({mode_label(ep.security_mode) for ep in endpoints}, key=lambda m: (_label_rank(m), m))
    policies = sorted({policy_from_uri(ep.security_policy_uri) for ep in endpoints}, key=lambda p: p.rank)
    return SecuritySummary(
        least_mode=modes[0],
        most_mode=modes[-1],
        least_policy=policies[0],
        most_policy=policies[-1],
        modes=tuple(modes),
        policies=tuple(p.id.value for p in policies),
    )


def _label_rank(label: str) -> int:
    return MODE_ORDER.index(label) if label in MODE_ORDER else -1


@dataclass(frozen=True, order=True)
class DeficitFinding:
    kind: DeficitKind
    evidence: tuple[str, ...] = ()  # e.g. "endpoint:2", "certificate:<sha256>", "cluster:<sha256>"


@dataclass(frozen=True)
class EndpointConformance:
    endpoint: int
    policy: str
    verdict: Verdict
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class AccessSummary:
    readable_fraction: float | None
    writable_fraction: float | None
    executable_fraction: float | None
    node_count: int  # Variables
    method_count: int
    lower_bound: bool = False  # traversal truncated or attributes unreadable


@dataclass(frozen=True)
class CertificateFacts:
    fingerprint: str
    signature_hash: str
    key_algorithm: str
    key_length_bits: int
    subject: str
    issuer: str
    san: tuple[str, ...]
    not_before: str
    not_after: str
    self_signed: bool

    @classmethod
    def of(cls, rec: CertificateRecord) -> "CertificateFacts":
        return cls(
            rec.fingerprint,
            rec.signature_hash.value,
            rec.key_algorithm,
            rec.key_length_bits,
            rec.subject,
            rec.issuer,
            tuple(rec.san),
            rec.not_before.isoformat(),
            rec.not_after.isoformat(),
            rec.self_signed,
        )


@dataclass(frozen=True)
class HostAssessment:
    target: str
    role: Role
    least_mode: str | None = None
    most_mode: str | None = None
    least_policy: str | None = None
    most_policy: str | None = None
    modes: tuple[str, ...] = ()
    policies: tuple[str, ...] = ()
    auth_combination: tuple[str, ...] = ()
    findings: tuple[DeficitFinding, ...] = ()
    system_class: SystemClass | None = None  # only for hosts that granted anonymous access
    outcome: Outcome | None = None  # full servers only
    access: AccessSummary | None = None
    manufacturer: str | None = None
    as_label: str | None = None
    certificate: CertificateFacts | None = None
    conformance: tuple[EndpointConformance, ...] = ()
    software_version: str | None = None
    application_uri: str | None = None
    data_quality: tuple[str, ...] = ()

    @property
    def kinds(self) -> frozenset[DeficitKind]:
        return frozenset(f.kind for f in self.findings)

    @property
    def deficient(self) -> bool:
        return bool(self.kinds & DEFICIT_KINDS)

    @property
    def auth_label(self) -> str:
        return auth_label(self.auth_combination)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "role": self.role.value,
            "least_mode": self.least_mode,
            "most_mode": self.most_mode,
            "least_policy": self.least_policy,
            "most_policy": self.most_policy,
            "modes": list(self.modes),
            "policies": list(self.policies),
            "auth_combination": list(self.auth_combination),
            "findings": [{"kind": f.kind.value, "evidence": list(f.evidence)} for f in self.findings],
            "system_class": self.system_class.value if self.system_class else None,
            "outcome": self.outcome.value if self.outcome else None,
            "access": _access_dict(self.access),
            "manufacturer": self.manufacturer,
            "as_label": self.as_label,
            "certificate": _cert_dict(self.certificate),
            "conformance": [
                {"endpoint": c.endpoint, "policy": c.policy, "verdict": c.verdict.value, "reasons": list(c.reasons)}
                for c in self.conformance
            ],
            "software_version": self.software_version,
            "application_uri": self.application_uri,
            "data_quality": list(self.data_quality),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "HostAssessment":
        access = d.get("access")
        cert = d.get("certificate")
        return cls(
            target=d["target"],
            role=Role(d["role"]),
            least_mode=d.get("least_mode"),
            most_mode=d.get("most_mode"),
            least_policy=d.get("least_policy"),
            most_policy=d.get("most_policy"),
            modes=tuple(d.get("modes", ())),
            policies=tuple(d.get("policies", ())),
            auth_combination=tuple(d.get("auth_combination", ())),
            findings=tuple(DeficitFinding(DeficitKind(f["kind"]), tuple(f["evidence"])) for f in d.get("findings", ())),
            system_class=SystemClass(d["system_class"]) if d.get("system_class") else None,
            outcome=Outcome(d["outcome"]) if d.get("outcome") else None,
            access=AccessSummary(**access) if access else None,
            manufacturer=d.get("manufacturer"),
            as_label=d.get("as_label"),
            certificate=CertificateFacts(**{**cert, "san": tuple(cert["san"])}) if cert else None,
            conformance=tuple(
                EndpointConformance(c["endpoint"], c["policy"], Verdict(c["verdict"]), tuple(c["reasons"]))
                for c in d.get("conformance", ())
            ),
            software_version=d.get("software_version"),
            application_uri=d.get("application_uri"),
            data_quality=tuple(d.get("data_quality", ())),
        )


def _access_dict(a: AccessSummary | None):
    if a is None:
        return None
    return {
        "readable_fraction": a.readable_fraction,
        "writable_fraction": a.writable_fraction,
        "executable_fraction": a.executable_fraction,
        "node_count": a.node_count,
        "method_count": a.method_count,
        "lower_bound": a.lower_bound,
    }


def _cert_dict(c: CertificateFacts | None):
    if c is None:
        return None
    return {
        "fingerprint": c.fingerprint,
        "signature_hash": c.signature_hash,
        "key_algorithm": c.key_algorithm,
        "key_length_bits": c.key_length_bits,
        "subject": c.subject,
        "issuer": c.issuer,
        "san": list(c.san),
        "not_before": c.not_before,
        "not_after": c.not_after,
        "self_signed": c.self_signed,
    }


def auth_label(combination) -> str:
    return "+".join(combination) if combination else "(none)"


# --- operations ----------------------------------------------------------------


def classify_role(probe: ProbeResult) -> tuple[Role, tuple[str, ...]]:
    """FullServer unless every advertised endpoint lives on another host/port.

    Returns the role plus data-quality notes (an empty endpoint list is kept
    as a FullServer so broken servers still aggregate).
    """
    if not probe.endpoints:
        return Role.FULL_SERVER, (NOTE_EMPTY_ENDPOINTS,)
    if local_endpoints(probe.endpoints, probe.target):
        return Role.FULL_SERVER, ()
    return Role.DISCOVERY_SERVER, ()


def conformance_verdicts(probe: ProbeResult, notes: list | None = None) -> tuple[EndpointConformance, ...]:
    """Check each local secured endpoint's certificate against that endpoint's policy."""
    out = []
    parsed: dict[bytes, CertificateRecord | None] = {}
    for i, ep in local_endpoints(probe.endpoints, probe.target):
        policy = policy_from_uri(ep.security_policy_uri)
        der = ep.server_certificate or probe.server_certificate
        if policy.key_range is None or not der:
            continue
        der = bytes(der)
        if der not in parsed:
            try:
                parsed[der] = parse_certificate(der)
            except MalformedCertificate:
                parsed[der] = None
                if notes is not None and NOTE_MALFORMED_CERT not in notes:
                    notes.append(NOTE_MALFORMED_CERT)
        rec = parsed[der]
        if rec is None:
            continue
        v = check_conformance(policy, rec)
        out.append(EndpointConformance(i, policy.id.value, v.verdict, tuple(sorted(r.value for r in v.reasons))))
    return tuple(out)


def host_certificate(probe: ProbeResult) -> CertificateRecord | None:
    """The certificate the host presents on its own endpoints (first one that parses)."""
    candidates = [ep.server_certificate for _, ep in local_endpoints(probe.endpoints, probe.target)]
    candidates.append(probe.server_certificate)
    for der in candidates:
        if not der:
            continue
        try:
            return parse_certificate(bytes(der))
        except MalformedCertificate:
            continue
    return None


def derive_findings(
    probe: ProbeResult,
    summary: SecuritySummary | None,
    verdicts=(),
    clusters=(),
) -> frozenset[DeficitFinding]:
    """Apply the deficit rules to one host's local endpoints."""
    local = local_endpoints(probe.endpoints, probe.target)
    if summary is None or not local:
        return frozenset()
    out = set()
    idx = lambda pred: tuple(f"endpoint:{i}" for i, ep in local if pred(ep))  # noqa: E731

    if summary.most_mode == "None":
        out.add(DeficitFinding(DeficitKind.NO_SECURITY_ONLY, idx(lambda ep: True)))
    if summary.most_policy.deprecated:
        out.add(
            DeficitFinding(
                DeficitKind.DEPRECATED_MOST_SECURE,
                idx(lambda ep: policy_from_uri(ep.security_policy_uri) is summary.most_policy),
            )
        )
    deprecated = idx(lambda ep: policy_from_uri(ep.security_policy_uri).deprecated)
    if deprecated:
        out.add(DeficitFinding(DeficitKind.DEPRECATED_OFFERED, deprecated))

    for verdict, kind in ((Verdict.WEAKER, DeficitKind.CERT_WEAKER), (Verdict.STRONGER, DeficitKind.CERT_STRONGER)):
        hits = tuple(f"endpoint:{c.endpoint}" for c in verdicts if c.verdict is verdict)
        if hits:
            out.add(DeficitFinding(kind, hits))

    cert = host_certificate(probe)
    if cert is not None:
        me = str(probe.target)
        for cluster in clusters:
            if cluster.confirmed and cluster.fingerprint == cert.fingerprint and me in cluster.hosts:
                out.add(DeficitFinding(DeficitKind.CERTIFICATE_REUSE, (f"cluster:{cluster.fingerprint}",)))
                break

    anon = idx(lambda ep: UserTokenType.ANONYMOUS in ep.token_types())
    if anon:
        out.add(DeficitFinding(DeficitKind.ANONYMOUS_ACCESS, anon))
        if summary.least_mode != "None":
            out.add(DeficitFinding(DeficitKind.ANONYMOUS_DESPITE_SECURITY, anon))
    return frozenset(out)


def classify_system(namespace_array, rules: RuleSet | None = None) -> SystemClass:
    """Production/Test from namespace URIs; Test wins when both match."""
    rules = rules if rules is not None else default_namespace_rules()
    labels = {rules.match(ns) for ns in namespace_array if ns and ns != STANDARD_NAMESPACE}
    if SystemClass.TEST.value in labels:
        return SystemClass.TEST
    if SystemClass.PRODUCTION.value in labels:
        return SystemClass.PRODUCTION
    return SystemClass.UNCLASSIFIED


def summarize_access(snapshot: AddressSpaceSnapshot) -> AccessSummary:
    """Fractions over Variables (read/write) and Methods (execute).

    Nodes whose access attribute could not be read count as neither readable
    nor writable, so such fractions (and those of truncated traversals) are
    lower bounds.
    """
    variables = snapshot.of_class(NodeClass.VARIABLE)
    methods = snapshot.of_class(NodeClass.METHOD)
    unknown = any(v.access_level is None for v in variables) or any(m.executable is None for m in methods)
    nv, nm = len(variables), len(methods)
    return AccessSummary(
        readable_fraction=sum(v.readable for v in variables) / nv if nv else None,
        writable_fraction=sum(v.writable for v in variables) / nv if nv else None,
        executable_fraction=sum(bool(m.executable) for m in methods) / nm if nm else None,
        node_count=nv,
        method_count=nm,
        lower_bound=snapshot.truncated or unknown,
    )


def attribute_manufacturer(application_uri: str | None, rules: RuleSet | None = None) -> str | None:
    rules = rules if rules is not None else default_manufacturer_rules()
    return rules.match(application_uri)


def access_outcome(probe: ProbeResult, system_class: SystemClass | None) -> Outcome:
    if probe.session_probe is SessionProbe.ANONYMOUS_ACCEPTED:
        return Outcome(system_class.value if system_class else SystemClass.UNCLASSIFIED.value)
    if (
        probe.channel_probe is ChannelProbe.CERTIFICATE_REJECTED
        or probe.session_probe is SessionProbe.SECURE_CHANNEL_REJECTED
    ):
        return Outcome.SECURE_CHANNEL
    if probe.session_probe in (SessionProbe.AUTHENTICATION_REJECTED, SessionProbe.INVALID_CONFIGURATION):
        return Outcome.AUTHENTICATION
    return Outcome.UNPROBED


def assess_host(
    probe: ProbeResult,
    clusters=(),
    manufacturer_rules: RuleSet | None = None,
    namespace_rules: RuleSet | None = None,
    as_label: str | None = None,
) -> HostAssessment:
    """Full assessment of one reached host."""
    role, notes = classify_role(probe)
    notes = list(notes)
    manufacturer_rules = manufacturer_rules if manufacturer_rules is not None else default_manufacturer_rules()
    manufacturer = attribute_manufacturer(probe.application_uri, manufacturer_rules)
    base = dict(
        target=str(probe.target),
        role=role,
        manufacturer=manufacturer,
        as_label=as_label,
        software_version=probe.software_version,
        application_uri=probe.application_uri,
    )
    if role is Role.DISCOVERY_SERVER:
        return HostAssessment(**base, data_quality=tuple(notes))

    local = [ep for _, ep in local_endpoints(probe.endpoints, probe.target)]
    summary = summarize_security(local) if local else None
    for ep in local:
        policy = policy_from_uri(ep.security_policy_uri)
        secured = ep.security_mode in (MessageSecurityMode.SIGN, MessageSecurityMode.SIGN_AND_ENCRYPT)
        if policy is POLICY_NONE and secured and NOTE_POLICY_MODE_MISMATCH not in notes:
            notes.append(NOTE_POLICY_MODE_MISMATCH)
        if policy is not POLICY_NONE and ep.security_mode is MessageSecurityMode.NONE:
            if NOTE_SECURED_POLICY_NONE_MODE not in notes:
                notes.append(NOTE_SECURED_POLICY_NONE_MODE)
    verdicts = conformance_verdicts(probe, notes)
    findings = derive_findings(probe, summary, verdicts, clusters)
    tokens = set()
    for ep in local:
        tokens |= ep.token_types()
    combo = tuple(t.label for t in AUTH_ORDER if t in tokens)

    system_class = access = None
    if probe.session_probe is SessionProbe.ANONYMOUS_ACCEPTED:
        snap = probe.address_space
        namespace_rules = namespace_rules if namespace_rules is not None else default_namespace_rules()
        system_class = classify_system(snap.namespace_array if snap else [], namespace_rules)
        if snap is not None:
            access = summarize_access(snap)
    cert = host_certificate(probe)
    return HostAssessment(
        **base,
        least_mode=summary.least_mode if summary else None,
        most_mode=summary.most_mode if summary else None,
        least_policy=summary.least_policy.id.value if summary else None,
        most_policy=summary.most_policy.id.value if summary else None,
        modes=summary.modes if summary else (),
        policies=summary.policies if summary else (),
        auth_combination=combo,
        findings=tuple(sorted(findings)),
        system_class=system_class,
        outcome=access_outcome(probe, system_class),
        access=access,
        certificate=CertificateFacts.of(cert) if cert else None,
        conformance=verdicts,
        data_quality=tuple(notes),
    )


def reuse_observations(probes, as_labels=None):
    """(target, fingerprint, subject, as_label) for every full server presenting a certificate."""
    as_labels = as_labels or {}
    for p in probes:
        if not p.reached or classify_role(p)[0] is not Role.FULL_SERVER:
            continue
        cert = host_certificate(p)
        if cert is not None:
            yield (str(p.target), cert.fingerprint, cert.subject, as_labels.get(str(p.target)))


def assess_fleet(
    probes,
    as_labels: dict | None = None,
    manufacturer_rules: RuleSet | None = None,
    namespace_rules: RuleSet | None = None,
) -> tuple[list[HostAssessment], list[ReuseCluster]]:
    """Assess every reached probe of one snapshot; reuse is judged across the whole set."""
    probes = [p for p in probes if p.reached]
    as_labels = as_labels or {}
    manufacturer_rules = manufacturer_rules if manufacturer_rules is not None else default_manufacturer_rules()
    namespace_rules = namespace_rules if namespace_rules is not None else default_namespace_rules()
    clusters = cluster_reuse(reuse_observations(probes, as_labels))
    out = [
        assess_host(p, clusters, manufacturer_rules, namespace_rules, as_labels.get(str(p.target))) for p in probes
    ]
    return out, clusters


# --- aggregation ---------------------------------------------------------------

UNATTRIBUTED = "(unattributed)"


@dataclass
class FleetAggregate:
    """Counts over one snapshot.  ``merge`` is associative and commutative."""

    host_count: int = 0
    full_server_count: int = 0
    discovery_count: int = 0
    deficient_count: int = 0
    mode_supported: Counter = field(default_factory=Counter)
    mode_least: Counter = field(default_factory=Counter)
    mode_most: Counter = field(default_factory=Counter)
    policy_supported: Counter = field(default_factory=Counter)
    policy_least: Counter = field(default_factory=Counter)
    policy_most: Counter = field(default_factory=Counter)
    deficits: Counter = field(default_factory=Counter)
    deficits_by_manufacturer: Counter = field(default_factory=Counter)  # (kind, manufacturer)
    deficits_by_as: Counter = field(default_factory=Counter)  # (kind, AS label)
    auth_outcome: Counter = field(default_factory=Counter)  # (auth label, outcome)
    read_fractions: tuple[float, ...] = ()
    write_fractions: tuple[float, ...] = ()
    execute_fractions: tuple[float, ...] = ()

    _COUNTERS = (
        "mode_supported",
        "mode_least",
        "mode_most",
        "policy_supported",
        "policy_least",
        "policy_most",
        "deficits",
        "deficits_by_manufacturer",
        "deficits_by_as",
        "auth_outcome",
    )
    _SCALARS = ("host_count", "full_server_count", "discovery_count", "deficient_count")
    _SERIES = ("read_fractions", "write_fractions", "execute_fractions")

    @property
    def deficit_rate(self) -> float | None:
        if not self.full_server_count:
            return None
        return self.deficient_count / self.full_server_count

    def merge(self, other: "FleetAggregate") -> "FleetAggregate":
        out = FleetAggregate()
        for name in self._SCALARS:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        for name in self._COUNTERS:
            c = Counter(getattr(self, name))
            c.update(getattr(other, name))
            setattr(out, name, +c)
        for name in self._SERIES:
            setattr(out, name, tuple(sorted(getattr(self, name) + getattr(other, name))))
        return out

    @classmethod
    def of_host(cls, a: HostAssessment) -> "FleetAggregate":
        agg = cls(host_count=1)
        if a.role is Role.DISCOVERY_SERVER:
            agg.discovery_count = 1
            return agg
        agg.full_server_count = 1
        agg.deficient_count = int(a.deficient)
        agg.mode_supported.update(a.modes)
        agg.policy_supported.update(a.policies)
        if a.least_mode is not None:
            agg.mode_least[a.least_mode] += 1
            agg.mode_most[a.most_mode] += 1
            agg.policy_least[a.least_policy] += 1
            agg.policy_most[a.most_policy] += 1
        for kind in a.kinds:
            agg.deficits[kind.value] += 1
            agg.deficits_by_manufacturer[(kind.value, a.manufacturer or UNATTRIBUTED)] += 1
            agg.deficits_by_as[(kind.value, a.as_label or UNATTRIBUTED)] += 1
        agg.auth_outcome[(a.auth_label, (a.outcome or Outcome.UNPROBED).value)] += 1
        if a.access is not None:
            if a.access.readable_fraction is not None:
                agg.read_fractions = (a.access.readable_fraction,)
            if a.access.writable_fraction is not None:
                agg.write_fractions = (a.access.writable_fraction,)
            if a.access.executable_fraction is not None:
                agg.execute_fractions = (a.access.executable_fraction,)
        return agg

    def to_dict(self) -> dict:
        def flat(c: Counter) -> dict:
            return {("|".join(k) if isinstance(k, tuple) else k): v for k, v in sorted(c.items())}

        d = {name: getattr(self, name) for name in self._SCALARS}
        d.update({name: flat(getattr(self, name)) for name in self._COUNTERS})
        d.update({name: list(getattr(self, name)) for name in self._SERIES})
        d["deficit_rate"] = self.deficit_rate
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FleetAggregate":
        agg = cls(**{name: d.get(name, 0) for name in cls._SCALARS})
        for name in cls._COUNTERS:
            c = Counter()
            for k, v in d.get(name, {}).items():
                c[tuple(k.split("|")) if "|" in k else k] = v
            setattr(agg, name, c)
        for name in cls._SERIES:
            setattr(agg, name, tuple(d.get(name, ())))
        return agg

    def __eq__(self, other) -> bool:
        if not isinstance(other, FleetAggregate):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def aggregate_fleet(assessments) -> FleetAggregate:
    out = FleetAggregate()
    for a in assessments:
        out = out.merge(FleetAggregate.of_host(a))
    return out
