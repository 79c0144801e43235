import dataclasses
import datetime as dt
import hashlib
import subprocess

import pytest
from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.x509.oid import NameOID
from hypothesis import given, settings
from hypothesis import strategies as st

from uasurvey.certs import (
    CertificateRecord,
    MalformedCertificate,
    Reason,
    TimelineFlag,
    Verdict,
    check_conformance,
    cluster_reuse,
    is_valid,
    parse_certificate,
    timeline_facts,
)
from uasurvey.mock.certgen import build_certificate, rsa_key
from uasurvey.policies import (
    ALL_POLICIES,
    BASIC128RSA15,
    BASIC256SHA256,
    AES256_SHA256_RSAPSS,
    NONE,
    UNKNOWN,
    HashAlgorithm,
)

UTC = dt.timezone.utc


def record(hash_name="SHA256", bits=2048, key_algorithm="RSA", not_before=dt.datetime(2020, 1, 1, tzinfo=UTC)):
    return CertificateRecord(
        fingerprint="0" * 64,
        signature_hash=HashAlgorithm(hash_name),
        key_algorithm=key_algorithm,
        key_length_bits=bits,
        modulus=None,
        subject="CN=x",
        issuer="CN=x",
        self_signed=True,
        not_before=not_before,
        not_after=not_before + dt.timedelta(days=365),
    )


@pytest.fixture(scope="module")
def key2048():
    return rsa_key(2048, slot=900)


class TestParse:
    def test_rsa2048_sha256_self_signed(self, key2048):
        der = build_certificate(key2048, "plc.example.com", "SHA256", application_uri="urn:plc", dns_names=("plc.example.com",))
        rec = parse_certificate(der)
        assert rec.key_length_bits == 2048
        assert rec.signature_hash is HashAlgorithm.SHA256
        assert rec.self_signed
        assert rec.key_algorithm == "RSA"
        assert rec.modulus.bit_length() == 2048
        assert rec.fingerprint == hashlib.sha256(der).hexdigest()
        assert rec.subject_cn == "plc.example.com"
        assert rec.san == ("urn:plc", "plc.example.com")

    def test_fields_agree_with_openssl(self, key2048, tmp_path):
        der = build_certificate(key2048, "dump-check", "SHA1")
        path = tmp_path / "c.der"
        path.write_bytes(der)
        try:
            text = subprocess.run(
                ["openssl", "x509", "-inform", "DER", "-in", str(path), "-noout", "-text"],
                capture_output=True, text=True, check=True,
            ).stdout
        except (FileNotFoundError, subprocess.CalledProcessError):
            pytest.skip("openssl command line tool not available")
        rec = parse_certificate(der)
        assert "sha1WithRSAEncryption" in text and rec.signature_hash is HashAlgorithm.SHA1
        assert "(2048 bit)" in text and rec.key_length_bits == 2048

    @pytest.mark.parametrize("hash_name", ["MD5", "SHA1", "SHA256", "SHA384", "SHA512"])
    def test_legacy_hashes_parse(self, key2048, hash_name):
        rec = parse_certificate(build_certificate(key2048, "h", hash_name))
        assert rec.signature_hash is HashAlgorithm(hash_name)
        assert rec.self_signed

    def test_deterministic_fingerprint(self, key2048):
        der = build_certificate(key2048, "same", "SHA256")
        assert parse_certificate(der).fingerprint == parse_certificate(der).fingerprint

    def test_truncated_der(self, key2048):
        der = build_certificate(key2048, "t", "SHA256")
        with pytest.raises(MalformedCertificate):
            parse_certificate(der[: len(der) // 2])

    def test_empty(self):
        with pytest.raises(MalformedCertificate):
            parse_certificate(b"")

    def test_ca_signed_is_not_self_signed(self, key2048):
        leaf_key = rsa_key(2048, slot=901)
        der = build_certificate(leaf_key, "leaf", "SHA256", issuer_key=key2048, issuer_name="Some CA")
        rec = parse_certificate(der)
        assert not rec.self_signed
        assert rec.issuer_cn == "Some CA"

    def test_same_name_but_foreign_signature_is_not_self_signed(self, key2048):
        other = rsa_key(2048, slot=902)
        der = build_certificate(other, "twin", "SHA256", issuer_key=key2048, issuer_name="twin")
        assert not parse_certificate(der).self_signed

    def test_ec_key_maps_to_other(self):
        key = ec.generate_private_key(ec.SECP256R1())
        name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "ec")])
        cert = (
            x509.CertificateBuilder()
            .subject_name(name)
            .issuer_name(name)
            .public_key(key.public_key())
            .serial_number(1)
            .not_valid_before(dt.datetime(2020, 1, 1))
            .not_valid_after(dt.datetime(2030, 1, 1))
            .sign(key, hashes.SHA256())
        )
        rec = parse_certificate(cert.public_bytes(serialization.Encoding.DER))
        assert rec.key_algorithm == "Other" and rec.modulus is None
        assert rec.self_signed
        v = check_conformance(BASIC256SHA256, rec)
        assert v.verdict is Verdict.WEAKER and Reason.NON_RSA in v.reasons

    def test_fingerprints_injective_over_corpus(self, key2048):
        ders = {build_certificate(key2048, f"host-{i}", h) for i in range(5) for h in ("SHA1", "SHA256")}
        assert len({parse_certificate(d).fingerprint for d in ders}) == len(ders)


# Verdict per (policy, hash, key bits), written out by hand from the policy table:
#   D1 wants SHA1, D2 SHA1 or SHA256, S1-S3 SHA256; D keys 1024-2048, S keys 2048-4096.
# Cells: C Conformant, W Weaker, S Stronger, N NotApplicable; letters after ':' are reasons
# (HB/HA hash below/above, KB/KA key below/above).
KEYS = (1024, 2048, 3072, 4096, 8192)
TRUTH = {
    "N": {h: "N N N N N" for h in ("MD5", "SHA1", "SHA256")},
    "D1": {
        "MD5": "W:HB W:HB W:HB,KA W:HB,KA W:HB,KA",
        "SHA1": "C C S:KA S:KA S:KA",
        "SHA256": "S:HA S:HA S:HA,KA S:HA,KA S:HA,KA",
    },
    "D2": {
        "MD5": "W:HB W:HB W:HB,KA W:HB,KA W:HB,KA",
        "SHA1": "C C S:KA S:KA S:KA",
        "SHA256": "C C S:KA S:KA S:KA",
    },
    **{
        pid: {
            "MD5": "W:HB,KB W:HB W:HB W:HB W:HB,KA",
            "SHA1": "W:HB,KB W:HB W:HB W:HB W:HB,KA",
            "SHA256": "W:KB C C C S:KA",
        }
        for pid in ("S1", "S2", "S3")
    },
}
_VERDICTS = {"C": Verdict.CONFORMANT, "W": Verdict.WEAKER, "S": Verdict.STRONGER, "N": Verdict.NOT_APPLICABLE}
_REASONS = {"HB": Reason.HASH_BELOW, "HA": Reason.HASH_ABOVE, "KB": Reason.KEY_BELOW, "KA": Reason.KEY_ABOVE}


def truth_cases():
    for policy in ALL_POLICIES:
        for hash_name, row in TRUTH[policy.id.value].items():
            for bits, cell in zip(KEYS, row.split()):
                letter, _, reasons = cell.partition(":")
                expected = frozenset(_REASONS[r] for r in reasons.split(",") if r)
                yield policy, hash_name, bits, _VERDICTS[letter], expected


TRUTH_CASES = list(truth_cases())


class TestConformance:
    def test_table_covers_every_cell(self):
        assert len(TRUTH_CASES) == 6 * 3 * 5

    @pytest.mark.parametrize(
        "policy, hash_name, bits, verdict, reasons",
        TRUTH_CASES,
        ids=[f"{p.id.value}-{h}-{b}" for p, h, b, *_ in TRUTH_CASES],
    )
    def test_truth_table(self, policy, hash_name, bits, verdict, reasons):
        got = check_conformance(policy, record(hash_name, bits))
        assert got.verdict is verdict
        assert got.reasons == reasons

    def test_named_examples(self):
        assert check_conformance(BASIC256SHA256, record("SHA1", 2048)).reasons == {Reason.HASH_BELOW}
        assert check_conformance(BASIC128RSA15, record("SHA256", 2048)).reasons == {Reason.HASH_ABOVE}
        assert check_conformance(BASIC256SHA256, record("SHA256", 2048)).verdict is Verdict.CONFORMANT
        assert check_conformance(AES256_SHA256_RSAPSS, record("SHA256", 1024)).reasons == {Reason.KEY_BELOW}

    def test_unknown_policy_not_applicable(self):
        assert check_conformance(UNKNOWN, record()).verdict is Verdict.NOT_APPLICABLE
        assert check_conformance(NONE, record("MD5", 512)).verdict is Verdict.NOT_APPLICABLE

    def test_other_hash_is_weaker(self):
        assert check_conformance(BASIC256SHA256, record("Other", 2048)).reasons == {Reason.HASH_BELOW}

    @settings(max_examples=400, deadline=None)
    @given(
        st.sampled_from(ALL_POLICIES),
        st.sampled_from(["MD5", "SHA1", "SHA256", "SHA384", "SHA512"]),
        st.integers(512, 16384),
        st.integers(0, 4),
        st.integers(0, 8192),
    )
    def test_monotone_in_strength(self, policy, hash_name, bits, hash_steps, extra_bits):
        ranked = ["MD5", "SHA1", "SHA256", "SHA384", "SHA512"]
        stronger = ranked[min(4, ranked.index(hash_name) + hash_steps)]
        before = check_conformance(policy, record(hash_name, bits)).verdict
        after = check_conformance(policy, record(stronger, bits + extra_bits)).verdict
        if before in (Verdict.CONFORMANT, Verdict.STRONGER):
            assert after is not Verdict.WEAKER


class TestReuse:
    def test_large_cluster(self):
        obs = [(f"10.0.{i // 250}.{i % 250}:4840", "fp-shared", "CN=Vendor", f"AS{i % 24}") for i in range(385)]
        (cluster,) = cluster_reuse(obs)
        assert len(cluster.hosts) == 385
        assert len(cluster.autonomous_systems) == 24
        assert cluster.confirmed

    def test_all_distinct(self):
        assert cluster_reuse([(f"h{i}", f"fp{i}", "CN=x") for i in range(10)]) == []

    def test_pair_not_confirmed(self):
        (cluster,) = cluster_reuse([("a", "fp", "CN=x"), ("b", "fp", "CN=x")])
        assert not cluster.confirmed

    def test_same_host_twice_is_one_host(self):
        assert cluster_reuse([("a", "fp", "CN=x"), ("a", "fp", "CN=x")]) == []


class TestTimeline:
    def test_sha1_after_deprecation(self):
        rec = record("SHA1", not_before=dt.datetime(2019, 3, 1, tzinfo=UTC))
        assert TimelineFlag.GENERATED_AFTER_DEPRECATION in timeline_facts(rec)

    def test_sha256_never_flagged(self):
        rec = record("SHA256", not_before=dt.datetime(2019, 3, 1, tzinfo=UTC))
        assert timeline_facts(rec) == frozenset()

    def test_sha1_before_deprecation(self):
        rec = record("SHA1", not_before=dt.datetime(2015, 6, 1, tzinfo=UTC))
        assert timeline_facts(rec) == frozenset()

    def test_expired_at_observation(self):
        rec = record("SHA256", not_before=dt.datetime(2015, 6, 1, tzinfo=UTC))
        assert timeline_facts(rec, observed_at=dt.datetime(2020, 1, 1)) == {TimelineFlag.EXPIRED_AT_OBSERVATION}

    def test_validity(self):
        rec = record()
        assert is_valid(rec, dt.datetime(2020, 6, 1))
        assert not is_valid(rec, dt.datetime(2022, 6, 1))
        assert not is_valid(dataclasses.replace(rec, self_signed=False), dt.datetime(2020, 6, 1))
