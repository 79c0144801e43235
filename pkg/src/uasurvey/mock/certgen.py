"""Fixture certificates, including MD5/SHA-1 signed ones.

``cryptography`` refuses to *issue* certificates with legacy hashes, so the
TBS structure is assembled with asn1crypto and signed with a raw RSA
operation.  Parsing on the scanner side is unaffected.
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass

from asn1crypto import keys as asn1_keys
from asn1crypto import x509 as asn1_x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa

_HASHES = {
    "MD5": (hashes.MD5, "md5_rsa"),
    "SHA1": (hashes.SHA1, "sha1_rsa"),
    "SHA256": (hashes.SHA256, "sha256_rsa"),
    "SHA384": (hashes.SHA384, "sha384_rsa"),
    "SHA512": (hashes.SHA512, "sha512_rsa"),
}

# Key generation dominates fixture start-up; identical specs share a key.
_KEY_CACHE: dict[tuple[int, int], rsa.RSAPrivateKey] = {}


@dataclass(frozen=True)
class Identity:
    certificate: bytes  # DER
    key: rsa.RSAPrivateKey

    def key_pem(self) -> bytes:
        return self.key.private_bytes(
            serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
        )


def rsa_key(bits: int = 2048, slot: int | None = None) -> rsa.RSAPrivateKey:
    """A fresh key, or a cached one when ``slot`` is given."""
    if slot is None:
        return rsa.generate_private_key(public_exponent=65537, key_size=bits)
    k = (bits, slot)
    if k not in _KEY_CACHE:
        _KEY_CACHE[k] = rsa.generate_private_key(public_exponent=65537, key_size=bits)
    return _KEY_CACHE[k]


def _name(common_name: str, organization: str | None) -> asn1_x509.Name:
    attrs = {"common_name": common_name}
    if organization:
        attrs["organization_name"] = organization
    return asn1_x509.Name.build(attrs)


def _time(value: dt.datetime) -> asn1_x509.Time:
    # RFC 5280: UTCTime through 2049, GeneralizedTime afterwards
    name = "utc_time" if value.year < 2050 else "general_time"
    return asn1_x509.Time(name=name, value=value)


def build_certificate(
    key: rsa.RSAPrivateKey,
    common_name: str,
    hash_name: str = "SHA256",
    application_uri: str | None = None,
    dns_names: tuple[str, ...] = (),
    organization: str | None = None,
    not_before: dt.datetime | None = None,
    lifetime_days: int = 3650,
    issuer_key: rsa.RSAPrivateKey | None = None,
    issuer_name: str | None = None,
    serial: int | None = None,
) -> bytes:
    """Return DER bytes of an X.509 v3 certificate (self-signed unless an issuer is given)."""
    hash_cls, sig_name = _HASHES[hash_name]
    not_before = not_before or dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc)
    if not_before.tzinfo is None:
        not_before = not_before.replace(tzinfo=dt.timezone.utc)
    not_after = not_before + dt.timedelta(days=lifetime_days)
    spki_der = key.public_key().public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )
    subject = _name(common_name, organization)
    issuer = _name(issuer_name, None) if issuer_name else subject
    if serial is None:
        serial = int.from_bytes(hashlib.sha256(spki_der + common_name.encode()).digest()[:8], "big") | 1

    extensions = [
        {"extn_id": "basic_constraints", "critical": True, "extn_value": {"ca": issuer_key is None}},
        {
            "extn_id": "key_usage",
            "critical": True,
            "extn_value": {"digital_signature", "non_repudiation", "key_encipherment", "data_encipherment"},
        },
    ]
    alt = [asn1_x509.GeneralName(name="dns_name", value=d) for d in dns_names]
    if application_uri:
        alt.insert(0, asn1_x509.GeneralName(name="uniform_resource_identifier", value=application_uri))
    if alt:
        extensions.append({"extn_id": "subject_alt_name", "critical": False, "extn_value": alt})

    tbs = asn1_x509.TbsCertificate(
        {
            "version": "v3",
            "serial_number": serial,
            "signature": {"algorithm": sig_name},
            "issuer": issuer,
            "validity": {
                "not_before": _time(not_before),
                "not_after": _time(not_after),
            },
            "subject": subject,
            "subject_public_key_info": asn1_keys.PublicKeyInfo.load(spki_der),
            "extensions": extensions,
        }
    )
    signer = issuer_key or key
    signature = signer.sign(tbs.dump(), padding.PKCS1v15(), hash_cls())
    cert = asn1_x509.Certificate(
        {"tbs_certificate": tbs, "signature_algorithm": {"algorithm": sig_name}, "signature_value": signature}
    )
    return cert.dump()


def make_identity(
    common_name: str,
    hash_name: str = "SHA256",
    key_bits: int = 2048,
    key_slot: int | None = None,
    **kwargs,
) -> Identity:
    key = rsa_key(key_bits, key_slot)
    return Identity(build_certificate(key, common_name, hash_name, **kwargs), key)
