"""Server certificate facts and the checks run over them."""

from __future__ import annotations

import datetime as dt
import hashlib
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

from cryptography import x509
from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.x509.oid import NameOID

from uasurvey.policies import HashAlgorithm, SecurityPolicy

REUSE_THRESHOLD = 3
DEFAULT_DEPRECATION = dt.datetime(2017, 1, 1, tzinfo=dt.timezone.utc)

_HASH_NAMES = {
    "md5": HashAlgorithm.MD5,
    "sha1": HashAlgorithm.SHA1,
    "sha256": HashAlgorithm.SHA256,
    "sha384": HashAlgorithm.SHA384,
    "sha512": HashAlgorithm.SHA512,
}


class MalformedCertificate(ValueError):
    pass


@dataclass(frozen=True)
class CertificateRecord:
    fingerprint: str  # SHA-256 of the DER bytes, lowercase hex
    signature_hash: HashAlgorithm
    key_algorithm: str  # "RSA" | "Other"
    key_length_bits: int
    modulus: int | None
    subject: str
    issuer: str
    self_signed: bool
    not_before: dt.datetime
    not_after: dt.datetime
    subject_cn: str = ""
    issuer_cn: str = ""
    san: tuple[str, ...] = ()
    serial: int = 0

    def valid_at(self, when: dt.datetime) -> bool:
        return self.not_before <= when <= self.not_after


def fingerprint(der: bytes) -> str:
    return hashlib.sha256(der).hexdigest()


def _cn(name: x509.Name) -> str:
    attrs = name.get_attributes_for_oid(NameOID.COMMON_NAME)
    return str(attrs[0].value) if attrs else ""


def _san(cert: x509.Certificate) -> tuple[str, ...]:
    try:
        ext = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
    except (x509.ExtensionNotFound, ValueError):
        return ()
    out = []
    for gn in ext:
        value = gn.value
        out.append(str(value) if not isinstance(value, bytes) else value.hex())
    return tuple(out)


def _signature_hash(cert: x509.Certificate) -> HashAlgorithm:
    try:
        alg = cert.signature_hash_algorithm
    except UnsupportedAlgorithm:
        return HashAlgorithm.OTHER
    if alg is None:
        return HashAlgorithm.OTHER
    return _HASH_NAMES.get(alg.name, HashAlgorithm.OTHER)


def _verifies_under_own_key(cert: x509.Certificate) -> bool:
    try:
        key = cert.public_key()
        alg = cert.signature_hash_algorithm
    except (UnsupportedAlgorithm, ValueError):
        return False
    try:
        if isinstance(key, rsa.RSAPublicKey) and alg is not None:
            if isinstance(cert.signature_algorithm_parameters, padding.PSS):
                key.verify(cert.signature, cert.tbs_certificate_bytes, cert.signature_algorithm_parameters, alg)
            else:
                key.verify(cert.signature, cert.tbs_certificate_bytes, padding.PKCS1v15(), alg)
            return True
        if isinstance(key, ec.EllipticCurvePublicKey) and alg is not None:
            key.verify(cert.signature, cert.tbs_certificate_bytes, ec.ECDSA(alg))
            return True
    except (InvalidSignature, ValueError, TypeError):
        return False
    return False


def parse_certificate(der: bytes) -> CertificateRecord:
    """Extract hash, key and identity facts from DER bytes."""
    if not der:
        raise MalformedCertificate("empty certificate")
    try:
        cert = x509.load_der_x509_certificate(bytes(der))
        subject, issuer = cert.subject, cert.issuer
        subject_str, issuer_str = subject.rfc4514_string(), issuer.rfc4514_string()
        not_before, not_after = cert.not_valid_before_utc, cert.not_valid_after_utc
        serial = cert.serial_number
    except (ValueError, TypeError) as exc:
        raise MalformedCertificate(str(exc)) from exc
    try:
        key = cert.public_key()
    except (UnsupportedAlgorithm, ValueError):
        key = None
    if isinstance(key, rsa.RSAPublicKey):
        key_alg, bits, modulus = "RSA", key.key_size, key.public_numbers().n
    else:
        key_alg, modulus = "Other", None
        bits = getattr(key, "key_size", 0) or 0
    self_signed = subject == issuer and _verifies_under_own_key(cert)
    return CertificateRecord(
        fingerprint=fingerprint(der),
        signature_hash=_signature_hash(cert),
        key_algorithm=key_alg,
        key_length_bits=bits,
        modulus=modulus,
        subject=subject_str,
        issuer=issuer_str,
        self_signed=self_signed,
        not_before=not_before,
        not_after=not_after,
        subject_cn=_cn(subject),
        issuer_cn=_cn(issuer),
        san=_san(cert),
        serial=serial,
    )


# --- policy conformance --------------------------------------------------------


class Verdict(str, Enum):
    CONFORMANT = "Conformant"
    WEAKER = "WeakerThanPolicy"
    STRONGER = "StrongerThanPolicy"
    NOT_APPLICABLE = "NotApplicable"


class Reason(str, Enum):
    HASH_BELOW = "HashBelowPolicy"
    HASH_ABOVE = "HashAbovePolicy"
    KEY_BELOW = "KeyBelowRange"
    KEY_ABOVE = "KeyAboveRange"
    NON_RSA = "NonRsaKey"


@dataclass(frozen=True)
class ConformanceVerdict:
    verdict: Verdict
    reasons: frozenset[Reason] = frozenset()


def check_conformance(policy: SecurityPolicy, cert: CertificateRecord) -> ConformanceVerdict:
    """Compare a certificate's hash and key length with what ``policy`` prescribes.

    Any shortfall makes the verdict Weaker, even if another primitive
    exceeds the policy.  A hash the table does not rank (``Other``) counts as
    a shortfall: nothing vouches for it.
    """
    if policy.key_range is None or not policy.cert_hashes:
        return ConformanceVerdict(Verdict.NOT_APPLICABLE)
    reasons = set()
    if cert.key_algorithm != "RSA":
        reasons.add(Reason.NON_RSA)
    if cert.signature_hash not in policy.cert_hashes:
        rank = cert.signature_hash.rank
        allowed = [h.rank for h in policy.cert_hashes]
        if rank is None or rank < min(allowed):
            reasons.add(Reason.HASH_BELOW)
        elif rank > max(allowed):
            reasons.add(Reason.HASH_ABOVE)
        else:
            # between allowed hashes but not listed; no defined policy has such a gap
            reasons.add(Reason.HASH_BELOW)
    lo, hi = policy.key_range
    if cert.key_algorithm == "RSA":
        if cert.key_length_bits < lo:
            reasons.add(Reason.KEY_BELOW)
        elif cert.key_length_bits > hi:
            reasons.add(Reason.KEY_ABOVE)
    if reasons & {Reason.NON_RSA, Reason.HASH_BELOW, Reason.KEY_BELOW}:
        return ConformanceVerdict(Verdict.WEAKER, frozenset(reasons))
    if reasons:
        return ConformanceVerdict(Verdict.STRONGER, frozenset(reasons))
    return ConformanceVerdict(Verdict.CONFORMANT)


# --- reuse ---------------------------------------------------------------------


@dataclass(frozen=True)
class ReuseCluster:
    fingerprint: str
    hosts: frozenset[str]
    autonomous_systems: frozenset[str]
    subject: str

    @property
    def confirmed(self) -> bool:
        return len(self.hosts) >= REUSE_THRESHOLD


def cluster_reuse(observations) -> list[ReuseCluster]:
    """Group ``(target, fingerprint, subject[, as_label])`` observations by fingerprint.

    Every fingerprint seen on two or more distinct targets yields a cluster;
    :attr:`ReuseCluster.confirmed` applies the three-host threshold.
    """
    hosts: dict[str, set[str]] = defaultdict(set)
    ases: dict[str, set[str]] = defaultdict(set)
    subjects: dict[str, str] = {}
    for obs in observations:
        target, fp, subject = str(obs[0]), obs[1], obs[2]
        as_label = obs[3] if len(obs) > 3 else None
        if not fp:
            continue
        hosts[fp].add(target)
        if as_label:
            ases[fp].add(str(as_label))
        subjects.setdefault(fp, subject)
    clusters = [
        ReuseCluster(fp, frozenset(h), frozenset(ases.get(fp, ())), subjects[fp]) for fp, h in hosts.items() if len(h) >= 2
    ]
    return sorted(clusters, key=lambda c: (-len(c.hosts), c.fingerprint))


# --- timeline ------------------------------------------------------------------


class TimelineFlag(str, Enum):
    GENERATED_AFTER_DEPRECATION = "GeneratedAfterDeprecation"
    EXPIRED_AT_OBSERVATION = "ExpiredAtObservation"


def timeline_facts(
    cert: CertificateRecord,
    deprecation_date: dt.datetime = DEFAULT_DEPRECATION,
    observed_at: dt.datetime | None = None,
) -> frozenset[TimelineFlag]:
    flags = set()
    if cert.signature_hash in (HashAlgorithm.SHA1, HashAlgorithm.MD5) and cert.not_before > _aware(deprecation_date):
        flags.add(TimelineFlag.GENERATED_AFTER_DEPRECATION)
    if observed_at is not None and _aware(observed_at) > cert.not_after:
        flags.add(TimelineFlag.EXPIRED_AT_OBSERVATION)
    return frozenset(flags)


def is_valid(cert: CertificateRecord, at: dt.datetime) -> bool:
    """Self-signed with a verifying signature and inside its validity window at ``at``."""
    return cert.self_signed and cert.valid_at(_aware(at))


def _aware(when: dt.datetime) -> dt.datetime:
    return when if when.tzinfo else when.replace(tzinfo=dt.timezone.utc)


__all__ = [
    "CertificateRecord",
    "ConformanceVerdict",
    "MalformedCertificate",
    "Reason",
    "ReuseCluster",
    "TimelineFlag",
    "Verdict",
    "check_conformance",
    "cluster_reuse",
    "fingerprint",
    "is_valid",
    "parse_certificate",
    "timeline_facts",
]
