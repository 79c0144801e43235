"""Cryptographic primitives of the secure-channel layer, per security policy."""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.x509 import load_der_x509_certificate

from uasurvey.policies import PolicyId, SecurityPolicy
from uasurvey.wire.errors import CodecError

RSA_SHA1_URI = "http://www.w3.org/2000/09/xmldsig#rsa-sha1"
RSA_SHA256_URI = "http://www.w3.org/2001/04/xmldsig-more#rsa-sha256"
RSA_PSS_SHA256_URI = "http://opcfoundation.org/UA/security/rsa-pss-sha2-256"

SYMMETRIC_BLOCK = 16


class SecurityCheckFailed(CodecError):
    """Signature mismatch, undecryptable block or bad padding."""


@dataclass(frozen=True)
class Algorithms:
    asym_signature: str  # "pkcs1-sha1" | "pkcs1-sha256" | "pss-sha256"
    asym_encryption: str  # "pkcs1" | "oaep-sha1" | "oaep-sha256"
    symmetric_hash: str  # "sha1" | "sha256"
    signing_key_length: int
    encryption_key_length: int
    nonce_length: int

    @property
    def signature_uri(self) -> str:
        return {
            "pkcs1-sha1": RSA_SHA1_URI,
            "pkcs1-sha256": RSA_SHA256_URI,
            "pss-sha256": RSA_PSS_SHA256_URI,
        }[self.asym_signature]

    @property
    def encryption_overhead(self) -> int:
        return {"pkcs1": 11, "oaep-sha1": 42, "oaep-sha256": 66}[self.asym_encryption]

    @property
    def symmetric_signature_size(self) -> int:
        return 20 if self.symmetric_hash == "sha1" else 32


ALGORITHMS: dict[PolicyId, Algorithms] = {
    PolicyId.BASIC128RSA15: Algorithms("pkcs1-sha1", "pkcs1", "sha1", 16, 16, 16),
    PolicyId.BASIC256: Algorithms("pkcs1-sha1", "oaep-sha1", "sha1", 24, 32, 32),
    PolicyId.BASIC256SHA256: Algorithms("pkcs1-sha256", "oaep-sha1", "sha256", 32, 32, 32),
    PolicyId.AES128_SHA256_RSAOAEP: Algorithms("pkcs1-sha256", "oaep-sha1", "sha256", 32, 16, 32),
    PolicyId.AES256_SHA256_RSAPSS: Algorithms("pss-sha256", "oaep-sha256", "sha256", 32, 32, 32),
}


def algorithms_for(policy: SecurityPolicy) -> Algorithms | None:
    return ALGORITHMS.get(policy.id)


# --- RSA ---------------------------------------------------------------------


def load_public_key(cert_der: bytes) -> rsa.RSAPublicKey:
    try:
        key = load_der_x509_certificate(cert_der).public_key()
    except Exception as exc:  # cryptography raises ValueError and friends
        raise SecurityCheckFailed(f"unusable peer certificate: {exc}") from exc
    if not isinstance(key, rsa.RSAPublicKey):
        raise SecurityCheckFailed("peer certificate does not carry an RSA key")
    return key


def _sign_params(alg: Algorithms, verifying: bool = False):
    if alg.asym_signature == "pkcs1-sha1":
        return padding.PKCS1v15(), hashes.SHA1()
    if alg.asym_signature == "pkcs1-sha256":
        return padding.PKCS1v15(), hashes.SHA256()
    # peers differ in the salt length they pick; accept any when verifying
    salt = padding.PSS.AUTO if verifying else 32
    return padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=salt), hashes.SHA256()


def _encrypt_padding(alg: Algorithms):
    if alg.asym_encryption == "pkcs1":
        return padding.PKCS1v15()
    h = hashes.SHA1() if alg.asym_encryption == "oaep-sha1" else hashes.SHA256()
    return padding.OAEP(mgf=padding.MGF1(h), algorithm=h, label=None)


def rsa_sign(alg: Algorithms, key: rsa.RSAPrivateKey, data: bytes) -> bytes:
    pad, h = _sign_params(alg)
    return key.sign(data, pad, h)


def rsa_verify(alg: Algorithms, key: rsa.RSAPublicKey, signature: bytes, data: bytes) -> None:
    pad, h = _sign_params(alg, verifying=True)
    try:
        key.verify(signature, data, pad, h)
    except Exception as exc:
        raise SecurityCheckFailed("asymmetric signature does not verify") from exc


def rsa_encrypt(alg: Algorithms, key: rsa.RSAPublicKey, data: bytes) -> bytes:
    """Encrypt ``data`` block by block; ``data`` must be a multiple of the plain block size."""
    size = key.key_size // 8
    plain_block = size - alg.encryption_overhead
    pad = _encrypt_padding(alg)
    return b"".join(key.encrypt(data[i : i + plain_block], pad) for i in range(0, len(data), plain_block))


def rsa_decrypt(alg: Algorithms, key: rsa.RSAPrivateKey, data: bytes) -> bytes:
    size = key.key_size // 8
    if len(data) % size:
        raise SecurityCheckFailed(f"ciphertext length {len(data)} is not a multiple of {size}")
    pad = _encrypt_padding(alg)
    out = bytearray()
    try:
        for i in range(0, len(data), size):
            out += key.decrypt(data[i : i + size], pad)
    except Exception as exc:
        raise SecurityCheckFailed("asymmetric decryption failed") from exc
    return bytes(out)


# --- symmetric ---------------------------------------------------------------


def p_hash(hash_name: str, secret: bytes, seed: bytes, length: int) -> bytes:
    """TLS-style P_hash expansion used for channel key derivation."""
    out = bytearray()
    a = seed
    while len(out) < length:
        a = hmac.new(secret, a, hash_name).digest()
        out += hmac.new(secret, a + seed, hash_name).digest()
    return bytes(out[:length])


@dataclass(frozen=True)
class SymmetricKeys:
    signing: bytes
    encryption: bytes
    iv: bytes


def derive_keys(alg: Algorithms, secret: bytes, seed: bytes) -> SymmetricKeys:
    sizes = (alg.signing_key_length, alg.encryption_key_length, SYMMETRIC_BLOCK)
    material = p_hash(alg.symmetric_hash, secret, seed, sum(sizes))
    a, b = sizes[0], sizes[0] + sizes[1]
    return SymmetricKeys(material[:a], material[a:b], material[b:])


def hmac_sign(alg: Algorithms, key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, alg.symmetric_hash).digest()


def hmac_verify(alg: Algorithms, key: bytes, signature: bytes, data: bytes) -> None:
    if not hmac.compare_digest(hmac_sign(alg, key, data), signature):
        raise SecurityCheckFailed("symmetric signature does not verify")


def aes_encrypt(keys: SymmetricKeys, data: bytes) -> bytes:
    enc = Cipher(algorithms.AES(keys.encryption), modes.CBC(keys.iv)).encryptor()
    return enc.update(data) + enc.finalize()


def aes_decrypt(keys: SymmetricKeys, data: bytes) -> bytes:
    if len(data) % SYMMETRIC_BLOCK:
        raise SecurityCheckFailed("ciphertext is not block aligned")
    dec = Cipher(algorithms.AES(keys.encryption), modes.CBC(keys.iv)).decryptor()
    return dec.update(data) + dec.finalize()


def nonce(length: int) -> bytes:
    return os.urandom(length)


def thumbprint(cert_der: bytes) -> bytes:
    return hashlib.sha1(cert_der).digest()


def private_key_from_pem(pem: bytes) -> rsa.RSAPrivateKey:
    key = serialization.load_pem_private_key(pem, password=None)
    if not isinstance(key, rsa.RSAPrivateKey):
        raise ValueError("not an RSA private key")
    return key
