"""Key pairs, hybrid encryption, signatures, wire codecs and the shuffler.

A user key pair bundles an X25519 key (encryption) and an Ed25519 key
(signatures); its 64-byte public half doubles as the user's pseudonym.

Wire formats (all integers big-endian):

* report:   ``0x01 | u16 pk_len | pk | u16 dim | dim * f64``
* payload:  ``0x01 | u16 count | count * (u32 len | report)``
* envelope: ``0x01 | u32 ct_len | ct``
* ciphertext: ``0x01 | ephemeral X25519 public key (32) | ChaCha20-Poly1305 output``
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

FORMAT_VERSION = 0x01
MAX_PLAINTEXT = 64 * 1024
PUBLIC_KEY_SIZE = 64
_HKDF_INFO = b"pic-shuffle/envelope/v1"
_ZERO_NONCE = bytes(12)
_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class DecryptionError(Exception):
    """Ciphertext rejected: wrong key, tampering, or bad framing."""


class CodecError(ValueError):
    """Malformed wire bytes; ``position`` is the byte offset of the problem."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at byte {position})")
        self.position = position


class Entropy:
    """Randomness for keys and encryption.

    ``Entropy()`` reads the OS source; ``Entropy(seed)`` is a deterministic
    stream for reproducible test traces and must not be used in deployment.
    """

    def __init__(self, seed: int | None = None):
        self.deterministic = seed is not None
        self._rng = np.random.default_rng(seed) if seed is not None else None

    def bytes(self, n: int) -> bytes:
        if self._rng is None:
            return os.urandom(n)
        return self._rng.bytes(n)


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes = field(repr=False)

    @property
    def encryption_public(self) -> bytes:
        return self.public_key[:32]


def keygen(entropy: Entropy) -> KeyPair:
    x_seed = entropy.bytes(32)
    s_seed = entropy.bytes(32)
    x_pub = X25519PrivateKey.from_private_bytes(x_seed).public_key().public_bytes(_RAW, _RAW_PUB)
    s_pub = Ed25519PrivateKey.from_private_bytes(s_seed).public_key().public_bytes(_RAW, _RAW_PUB)
    return KeyPair(x_pub + s_pub, x_seed + s_seed)


def _derive_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_HKDF_INFO + eph_pub + recipient_pub)
    return hkdf.derive(shared)


def ciphertext_size(plaintext_len: int) -> int:
    return 1 + 32 + plaintext_len + 16


def encrypt(public_key: bytes, plaintext: bytes, entropy: Entropy) -> bytes:
    """Encrypt to a user or server public key (X25519 + HKDF + ChaCha20-Poly1305)."""
    if len(plaintext) > MAX_PLAINTEXT:
        raise ValueError(f"plaintext of {len(plaintext)} bytes exceeds the {MAX_PLAINTEXT}-byte bound")
    recipient = public_key[:32]
    eph = X25519PrivateKey.from_private_bytes(entropy.bytes(32))
    eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient))
    # A fresh ephemeral key per message makes the derived key single-use.
    key = _derive_key(shared, eph_pub, recipient)
    body = ChaCha20Poly1305(key).encrypt(_ZERO_NONCE, bytes(plaintext), None)
    return bytes([FORMAT_VERSION]) + eph_pub + body


def decrypt(secret_key: bytes, ciphertext: bytes) -> bytes:
    """Inverse of :func:`encrypt`; raises :class:`DecryptionError` on any failure."""
    if len(ciphertext) < 1 + 32 + 16 or ciphertext[0] != FORMAT_VERSION:
        raise DecryptionError("malformed ciphertext")
    priv = X25519PrivateKey.from_private_bytes(secret_key[:32])
    recipient = priv.public_key().public_bytes(_RAW, _RAW_PUB)
    eph_pub = ciphertext[1:33]
    try:
        shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        key = _derive_key(shared, eph_pub, recipient)
        return ChaCha20Poly1305(key).decrypt(_ZERO_NONCE, ciphertext[33:], None)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionError("decryption failed") from exc


def sign(secret_key: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(secret_key[32:64]).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Ed25519 verification; malformed inputs verify as ``False``."""
    try:
        Ed25519PublicKey.from_public_bytes(public_key[32:64]).verify(signature, message)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# ---------------------------------------------------------------- codecs


def encode_report(public_key: bytes, report) -> bytes:
    vec = np.asarray(report, dtype=float).reshape(-1)
    if not np.all(np.isfinite(vec)):
        raise ValueError("report has non-finite coordinates")
    if len(public_key) > 0xFFFF or len(vec) > 0xFFFF:
        raise ValueError("public key or dimension too large for the wire format")
    return (
        struct.pack(">BH", FORMAT_VERSION, len(public_key))
        + bytes(public_key)
        + struct.pack(">H", len(vec))
        + vec.astype(">f8").tobytes()
    )


def _need(buf: bytes, pos: int, n: int, what: str) -> None:
    if pos + n > len(buf):
        raise CodecError(f"truncated buffer reading {what}", pos)


def _decode_report_at(buf: bytes, pos: int) -> tuple[bytes, np.ndarray, int]:
    _need(buf, pos, 3, "header")
    version, pk_len = struct.unpack_from(">BH", buf, pos)
    if version != FORMAT_VERSION:
        raise CodecError(f"unsupported format version {version}", pos)
    pos += 3
    _need(buf, pos, pk_len, "public key")
    pk = bytes(buf[pos:pos + pk_len])
    pos += pk_len
    _need(buf, pos, 2, "dimension")
    (dim,) = struct.unpack_from(">H", buf, pos)
    pos += 2
    _need(buf, pos, 8 * dim, "coordinates")
    vec = np.frombuffer(buf, dtype=">f8", count=dim, offset=pos).astype(float)
    bad = np.flatnonzero(~np.isfinite(vec))
    if bad.size:
        raise CodecError("non-finite coordinate", pos + 8 * int(bad[0]))
    return pk, vec, pos + 8 * dim


def decode_report(buf: bytes) -> tuple[bytes, np.ndarray]:
    pk, vec, end = _decode_report_at(bytes(buf), 0)
    if end != len(buf):
        raise CodecError("trailing bytes after report", end)
    return pk, vec


def encode_payload(entries: Iterable[tuple[bytes, np.ndarray]]) -> bytes:
    """Task output: a list of (public key, vector) entries."""
    parts = [encode_report(pk, vec) for pk, vec in entries]
    if len(parts) > 0xFFFF:
        raise ValueError("too many payload entries")
    out = [struct.pack(">BH", FORMAT_VERSION, len(parts))]
    for p in parts:
        out.append(struct.pack(">I", len(p)))
        out.append(p)
    return b"".join(out)


def decode_payload(buf: bytes) -> list[tuple[bytes, np.ndarray]]:
    buf = bytes(buf)
    _need(buf, 0, 3, "payload header")
    version, count = struct.unpack_from(">BH", buf, 0)
    if version != FORMAT_VERSION:
        raise CodecError(f"unsupported format version {version}", 0)
    pos = 3
    entries = []
    for _ in range(count):
        _need(buf, pos, 4, "entry length")
        (length,) = struct.unpack_from(">I", buf, pos)
        pos += 4
        _need(buf, pos, length, "entry")
        pk, vec, end = _decode_report_at(buf, pos)
        if end != pos + length:
            raise CodecError("entry length mismatch", pos)
        entries.append((pk, vec))
        pos = end
    if pos != len(buf):
        raise CodecError("trailing bytes after payload", pos)
    return entries


def frame(ciphertext: bytes) -> bytes:
    return struct.pack(">BI", FORMAT_VERSION, len(ciphertext)) + ciphertext


def unframe(buf: bytes, pos: int = 0) -> tuple[bytes, int]:
    _need(buf, pos, 5, "frame header")
    version, length = struct.unpack_from(">BI", buf, pos)
    if version != FORMAT_VERSION:
        raise CodecError(f"unsupported format version {version}", pos)
    _need(buf, pos + 5, length, "frame body")
    return bytes(buf[pos + 5:pos + 5 + length]), pos + 5 + length


@dataclass(frozen=True)
class Envelope:
    """Encrypted ``(one-time public key | sanitized report)`` addressed to the server."""

    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return frame(self.ciphertext)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Envelope":
        ct, end = unframe(buf)
        if end != len(buf):
            raise CodecError("trailing bytes after envelope", end)
        return cls(ct)


def seal_report(server_public_key: bytes, user_public_key: bytes, report, entropy: Entropy) -> Envelope:
    return Envelope(encrypt(server_public_key, encode_report(user_public_key, report), entropy))


def open_report(server_secret_key: bytes, envelope: Envelope) -> tuple[bytes, np.ndarray]:
    return decode_report(decrypt(server_secret_key, envelope.ciphertext))


# ---------------------------------------------------------------- shuffle


@dataclass(frozen=True)
class ShuffleResult:
    """Shuffled items plus ``(original_index, shuffled_index)`` for corrupted senders."""

    permuted: list
    leakage: frozenset


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    """Uniform permutation; entry ``k`` is the original index placed at position ``k``."""
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle(items: Sequence, corrupted: Iterable[int], rng: np.random.Generator) -> ShuffleResult:
    n = len(items)
    if n == 0:
        raise ValueError("cannot shuffle an empty batch")
    corrupted = set(int(c) for c in corrupted)
    if any(c < 0 or c >= n for c in corrupted):
        raise ValueError("corrupted index out of range")
    perm = fisher_yates(n, rng)
    position = [0] * n
    for k, orig in enumerate(perm):
        position[orig] = k
    leakage = frozenset((c, position[c]) for c in corrupted)
    return ShuffleResult([items[orig] for orig in perm], leakage)


def is_finite_report(report) -> bool:
    return all(math.isfinite(float(c)) for c in np.asarray(report).reshape(-1))
