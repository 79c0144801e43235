"""Security policy metadata: primitives, key ranges and ranking.

The table mirrors the OPC UA policy definitions a scanner meets in the wild:

===========================  =========  ==============  ============  ====
policy                       sig. hash  cert. hash      key [bit]     abbr
===========================  =========  ==============  ============  ====
None                         --         --              --            N
Basic128Rsa15                SHA1       SHA1            [1024; 2048]  D1
Basic256                     SHA1       SHA1, SHA256    [1024; 2048]  D2
Aes128_Sha256_RsaOaep        SHA256     SHA256          [2048; 4096]  S1
Basic256Sha256               SHA256     SHA256          [2048; 4096]  S2
Aes256_Sha256_RsaPss         SHA256     SHA256          [2048; 4096]  S3
===========================  =========  ==============  ============  ====

D1 and D2 are deprecated.  Policy URIs that are not in the table map to
:data:`UNKNOWN`, which ranks just above None and is never considered secure.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

URI_PREFIX = "http://opcfoundation.org/UA/SecurityPolicy#"


class HashAlgorithm(str, Enum):
    MD5 = "MD5"
    SHA1 = "SHA1"
    SHA256 = "SHA256"
    SHA384 = "SHA384"
    SHA512 = "SHA512"
    OTHER = "Other"

    @property
    def rank(self) -> int | None:
        """Strength order MD5 < SHA1 < SHA256 < SHA384 < SHA512; ``None`` for Other."""
        return _HASH_RANK.get(self)


_HASH_RANK = {
    HashAlgorithm.MD5: 0,
    HashAlgorithm.SHA1: 1,
    HashAlgorithm.SHA256: 2,
    HashAlgorithm.SHA384: 3,
    HashAlgorithm.SHA512: 4,
}


class PolicyId(str, Enum):
    NONE = "N"
    UNKNOWN = "Unknown"
    BASIC128RSA15 = "D1"
    BASIC256 = "D2"
    AES128_SHA256_RSAOAEP = "S1"
    BASIC256SHA256 = "S2"
    AES256_SHA256_RSAPSS = "S3"


@dataclass(frozen=True)
class SecurityPolicy:
    id: PolicyId
    name: str
    signature_hash: HashAlgorithm | None
    cert_hashes: frozenset[HashAlgorithm]
    key_range: tuple[int, int] | None
    rank: int
    deprecated: bool = False
    uri: str | None = None

    @property
    def abbreviation(self) -> str:
        return self.id.value

    @property
    def is_none(self) -> bool:
        return self.id is PolicyId.NONE

    @property
    def is_secure(self) -> bool:
        """Recommended policies only (S1-S3)."""
        return self.id in (PolicyId.AES128_SHA256_RSAOAEP, PolicyId.BASIC256SHA256, PolicyId.AES256_SHA256_RSAPSS)

    def __lt__(self, other: "SecurityPolicy") -> bool:
        return self.rank < other.rank


def _policy(pid, name, sig, certs, keys, rank, deprecated=False):
    return SecurityPolicy(
        pid, name, sig, frozenset(certs), keys, rank, deprecated, URI_PREFIX + name if name != "Unknown" else None
    )


NONE = _policy(PolicyId.NONE, "None", None, (), None, 0)
UNKNOWN = _policy(PolicyId.UNKNOWN, "Unknown", None, (), None, 1)
BASIC128RSA15 = _policy(
    PolicyId.BASIC128RSA15, "Basic128Rsa15", HashAlgorithm.SHA1, (HashAlgorithm.SHA1,), (1024, 2048), 2, True
)
BASIC256 = _policy(
    PolicyId.BASIC256,
    "Basic256",
    HashAlgorithm.SHA1,
    (HashAlgorithm.SHA1, HashAlgorithm.SHA256),
    (1024, 2048),
    3,
    True,
)
AES128_SHA256_RSAOAEP = _policy(
    PolicyId.AES128_SHA256_RSAOAEP,
    "Aes128_Sha256_RsaOaep",
    HashAlgorithm.SHA256,
    (HashAlgorithm.SHA256,),
    (2048, 4096),
    4,
)
BASIC256SHA256 = _policy(
    PolicyId.BASIC256SHA256, "Basic256Sha256", HashAlgorithm.SHA256, (HashAlgorithm.SHA256,), (2048, 4096), 5
)
AES256_SHA256_RSAPSS = _policy(
    PolicyId.AES256_SHA256_RSAPSS,
    "Aes256_Sha256_RsaPss",
    HashAlgorithm.SHA256,
    (HashAlgorithm.SHA256,),
    (2048, 4096),
    6,
)

ALL_POLICIES = (NONE, BASIC128RSA15, BASIC256, AES128_SHA256_RSAOAEP, BASIC256SHA256, AES256_SHA256_RSAPSS)
BY_ID = {p.id: p for p in (*ALL_POLICIES, UNKNOWN)}
BY_URI = {p.uri: p for p in ALL_POLICIES}


def policy_from_uri(uri: str | None) -> SecurityPolicy:
    """Exact URI lookup; anything unrecognised (including empty) is UNKNOWN."""
    if not uri:
        return UNKNOWN
    return BY_URI.get(uri, UNKNOWN)


def policy_by_name(name: str) -> SecurityPolicy:
    """Lookup by id (``"S2"``), short name (``"Basic256Sha256"``) or full URI."""
    for p in (*ALL_POLICIES, UNKNOWN):
        if name in (p.id.value, p.name, p.uri):
            return p
    raise KeyError(name)
