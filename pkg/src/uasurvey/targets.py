"""Scan targets and endpoint-URL handling."""

from __future__ import annotations

from dataclasses import dataclass
from urllib.parse import urlsplit

DEFAULT_PORT = 4840


@dataclass(frozen=True, order=True)
class Target:
    host: str
    port: int = DEFAULT_PORT

    def __str__(self) -> str:
        host = f"[{self.host}]" if ":" in self.host else self.host
        return f"{host}:{self.port}"

    @property
    def key(self) -> tuple[str, int]:
        return normalize_host(self.host), self.port

    @classmethod
    def parse(cls, text: str, default_port: int = DEFAULT_PORT) -> "Target":
        """``host``, ``host:port``, ``[v6]:port`` or an ``opc.tcp://`` URL."""
        text = text.strip()
        if not text:
            raise ValueError("empty target")
        if "://" in text:
            parsed = parse_endpoint_url(text)
            if parsed is None:
                raise ValueError(f"unparseable target URL {text!r}")
            return parsed
        if text.startswith("["):
            host, _, rest = text[1:].partition("]")
            port = rest.lstrip(":")
            return cls(host, int(port) if port else default_port)
        if text.count(":") == 1:
            host, port = text.split(":")
            return cls(host, _port(port))
        return cls(text, default_port)

    def same_endpoint(self, other: "Target") -> bool:
        return self.key == other.key


def _port(text: str) -> int:
    port = int(text)
    if not 0 < port < 65536:
        raise ValueError(f"port out of range: {port}")
    return port


def normalize_host(host: str) -> str:
    return host.strip().strip("[]").rstrip(".").lower()


def parse_endpoint_url(url: str) -> Target | None:
    """Host and port of an ``opc.tcp://host[:port][/path]`` URL, or None if it has no host."""
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname
        port = parts.port
    except ValueError:
        return None
    if not host:
        return None
    return Target(host, port or DEFAULT_PORT)


def url_points_to(url: str, target: Target) -> bool:
    parsed = parse_endpoint_url(url)
    return parsed is not None and parsed.same_endpoint(target)
