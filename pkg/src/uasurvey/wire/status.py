"""The handful of OPC UA status codes the scanner and the fixture exchange."""

from __future__ import annotations

GOOD = 0x00000000

BAD_UNEXPECTED_ERROR = 0x80010000
BAD_INTERNAL_ERROR = 0x80020000
BAD_COMMUNICATION_ERROR = 0x80050000
BAD_DECODING_ERROR = 0x80070000
BAD_ENCODING_LIMITS_EXCEEDED = 0x80080000
BAD_TIMEOUT = 0x800A0000
BAD_SERVICE_UNSUPPORTED = 0x800B0000
BAD_NOTHING_TO_DO = 0x800F0000
BAD_TOO_MANY_OPERATIONS = 0x80100000
BAD_CERTIFICATE_INVALID = 0x80120000
BAD_SECURITY_CHECKS_FAILED = 0x80130000
BAD_CERTIFICATE_TIME_INVALID = 0x80140000
BAD_CERTIFICATE_USE_NOT_ALLOWED = 0x80180000
BAD_CERTIFICATE_UNTRUSTED = 0x801A0000
BAD_USER_ACCESS_DENIED = 0x801F0000
BAD_IDENTITY_TOKEN_INVALID = 0x80200000
BAD_IDENTITY_TOKEN_REJECTED = 0x80210000
BAD_SECURE_CHANNEL_ID_INVALID = 0x80220000
BAD_NONCE_INVALID = 0x80240000
BAD_SESSION_ID_INVALID = 0x80250000
BAD_SESSION_CLOSED = 0x80260000
BAD_SESSION_NOT_ACTIVATED = 0x80270000
BAD_NODE_ID_UNKNOWN = 0x80340000
BAD_ATTRIBUTE_ID_INVALID = 0x80350000
BAD_NOT_READABLE = 0x803A0000
BAD_NOT_WRITABLE = 0x803B0000
BAD_CONTINUATION_POINT_INVALID = 0x804A0000
BAD_SECURITY_MODE_REJECTED = 0x80540000
BAD_SECURITY_POLICY_REJECTED = 0x80550000
BAD_TOO_MANY_SESSIONS = 0x80560000
BAD_APPLICATION_SIGNATURE_INVALID = 0x80580000
BAD_TCP_MESSAGE_TYPE_INVALID = 0x807E0000
BAD_TCP_MESSAGE_TOO_LARGE = 0x80800000
BAD_TCP_ENDPOINT_URL_INVALID = 0x80830000
BAD_REQUEST_TOO_LARGE = 0x80B80000
BAD_RESPONSE_TOO_LARGE = 0x80B90000
BAD_PROTOCOL_VERSION_UNSUPPORTED = 0x80BE0000
BAD_NOT_EXECUTABLE = 0x81110000

_NAMES = {
    value: "".join(part.capitalize() for part in name.split("_"))
    for name, value in dict(globals()).items()
    if name.isupper() and isinstance(value, int)
}

# Faults that an OpenSecureChannel with an untrusted certificate typically provokes.
SECURITY_REJECTIONS = frozenset(
    {
        BAD_SECURITY_CHECKS_FAILED,
        BAD_CERTIFICATE_INVALID,
        BAD_CERTIFICATE_TIME_INVALID,
        BAD_CERTIFICATE_USE_NOT_ALLOWED,
        BAD_CERTIFICATE_UNTRUSTED,
        BAD_SECURITY_MODE_REJECTED,
        BAD_SECURITY_POLICY_REJECTED,
    }
)


def is_bad(code: int) -> bool:
    return bool(code & 0x80000000)


def is_security_rejection(code: int) -> bool:
    """True for faults in the certificate/security family (subcodes ignored)."""
    if code & 0xFFFF0000 in SECURITY_REJECTIONS:
        return True
    # BadCertificate* occupies 0x8012..0x801A
    return 0x80120000 <= (code & 0xFFFF0000) <= 0x801A0000


def status_name(code: int) -> str:
    return _NAMES.get(code & 0xFFFF0000, f"0x{code:08X}")
