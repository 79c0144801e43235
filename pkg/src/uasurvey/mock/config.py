"""Fixture configuration: what a mock server advertises and how it behaves.

Configs are plain dataclasses that round-trip through JSON, e.g.::

    {
      "endpoints": [{"mode": "None", "policy": "None", "tokens": ["Anonymous"]}],
      "certificate": {"hash": "SHA1", "key_bits": 2048},
      "accept_client_cert": true,
      "anonymous_session_behavior": "Accept",
      "address_space": [{"node_id": "ns=1;s=Pump", "browse_name": "Pump", "node_class": "Object"}],
      "software_version": "3.1"
    }
"""

from __future__ import annotations

import base64
import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

from uasurvey.policies import policy_by_name
from uasurvey.wire.structs import MessageSecurityMode, NodeClass, UserTokenType

SESSION_BEHAVIORS = ("Accept", "FaultOnActivate", "FaultOnCreate")
MODES = {
    "None": MessageSecurityMode.NONE,
    "Sign": MessageSecurityMode.SIGN,
    "SignAndEncrypt": MessageSecurityMode.SIGN_AND_ENCRYPT,
}
TOKENS = {
    "Anonymous": UserTokenType.ANONYMOUS,
    "Username": UserTokenType.USERNAME,
    "Certificate": UserTokenType.CERTIFICATE,
    "IssuedToken": UserTokenType.ISSUED_TOKEN,
}
NODE_CLASSES = {"Object": NodeClass.OBJECT, "Variable": NodeClass.VARIABLE, "Method": NodeClass.METHOD}


class ConfigError(ValueError):
    pass


@dataclass
class EndpointSpec:
    mode: str = "None"
    policy: str = "None"  # id ("S2"), name ("Basic256Sha256") or any URI, kept verbatim if unknown
    tokens: list[str] = field(default_factory=lambda: ["Anonymous"])
    url: str | None = None  # None: the fixture's own address
    security_level: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown security mode {self.mode!r}")
        bad = [t for t in self.tokens if t not in TOKENS]
        if bad:
            raise ConfigError(f"unknown token types {bad}")

    @property
    def security_mode(self) -> MessageSecurityMode:
        return MODES[self.mode]

    @property
    def policy_uri(self) -> str:
        try:
            return policy_by_name(self.policy).uri or self.policy
        except KeyError:
            return self.policy


@dataclass
class CertSpec:
    hash: str = "SHA256"
    key_bits: int = 2048
    common_name: str | None = None
    dns_names: list[str] = field(default_factory=list)
    organization: str | None = None
    not_before: str = "2020-01-01T00:00:00+00:00"
    lifetime_days: int = 3650
    key_slot: int | None = None  # share a key (and thus the certificate) between fixtures
    der_b64: str | None = None
    key_pem: str | None = None

    @property
    def not_before_dt(self) -> dt.datetime:
        return dt.datetime.fromisoformat(self.not_before)


@dataclass
class NodeSpec:
    node_id: str
    browse_name: str = ""
    node_class: str = "Variable"
    parent: str = "i=85"
    access_level: int = 1
    user_access_level: int | None = None
    executable: bool = True
    user_executable: bool | None = None
    value: object = 0
    references: list[str] = field(default_factory=list)  # extra forward Organizes targets

    def __post_init__(self):
        if self.node_class not in NODE_CLASSES:
            raise ConfigError(f"unknown node class {self.node_class!r}")


@dataclass
class FixtureConfig:
    endpoints: list[EndpointSpec] = field(default_factory=lambda: [EndpointSpec()])
    certificate: CertSpec = field(default_factory=CertSpec)
    accept_client_cert: bool = True
    reject_with: str = "error"  # "error" (ERR frame) or "close" (drop the socket)
    anonymous_session_behavior: str = "Accept"
    session_fault_status: int | None = None
    address_space: list[NodeSpec] = field(default_factory=list)
    referral_endpoints: list = field(default_factory=list)  # URLs or EndpointSpec dicts
    namespaces: list[str] = field(default_factory=list)
    software_version: str = "1.0.0"
    application_uri: str = "urn:example:mock"
    product_uri: str = "urn:example:mock:product"
    application_name: str = "Mock Server"
    protocol_version: int = 0
    max_chunk_size: int = 65535
    browse_page_size: int = 0  # 0: no server-side paging cap
    advertised_host: str | None = None

    def __post_init__(self):
        self.endpoints = [e if isinstance(e, EndpointSpec) else EndpointSpec(**e) for e in self.endpoints]
        if isinstance(self.certificate, dict):
            self.certificate = CertSpec(**self.certificate)
        self.address_space = [n if isinstance(n, NodeSpec) else NodeSpec(**n) for n in self.address_space]
        refs = []
        for r in self.referral_endpoints:
            if isinstance(r, str):
                refs.append(EndpointSpec(url=r))
            elif isinstance(r, EndpointSpec):
                refs.append(r)
            else:
                refs.append(EndpointSpec(**r))
        self.referral_endpoints = refs
        if not self.endpoints and not self.referral_endpoints:
            raise ConfigError("a fixture needs at least one endpoint or referral")
        if self.anonymous_session_behavior not in SESSION_BEHAVIORS:
            raise ConfigError(f"unknown session behaviour {self.anonymous_session_behavior!r}")
        if self.reject_with not in ("error", "close"):
            raise ConfigError("reject_with must be 'error' or 'close'")
        ids = [n.node_id for n in self.address_space]
        if len(ids) != len(set(ids)):
            raise ConfigError("address-space node ids must be unique")

    # --- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FixtureConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown fixture keys {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "FixtureConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(self.to_json())


def cert_spec_from_der(der: bytes, key_pem: bytes) -> CertSpec:
    return CertSpec(der_b64=base64.b64encode(der).decode(), key_pem=key_pem.decode())


def offered_policies(config: FixtureConfig) -> set[str]:
    return {e.policy_uri for e in config.endpoints}

