"""Sealed transaction payloads.

Models the enclave confidentiality guarantee: a sensitive payload appears on
the ledger only as authenticated ciphertext, decryptable by holders of the
simulated processor key. The cipher is AES-256-GCM (12-byte nonce, 16-byte
tag), fixed project-wide. Nonces come from a per-key counter so uniqueness
is provable under deterministic simulation seeds.

Wire layout of a sealed payload:

    key_id u32 || nonce 12B || ciphertext_len u64 || ciphertext || auth_tag 16B
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .rng import Stream

NONCE_LEN = 12
TAG_LEN = 16
KEY_LEN = 32
NONCE_LIMIT = 1 << (8 * NONCE_LEN)


class SealingError(Exception):
    pass


class NonceExhausted(SealingError):
    """The per-key nonce counter has no values left."""


class AuthFailure(SealingError):
    """Ciphertext, tag, nonce, or associated data failed authentication."""


class UnknownKey(SealingError):
    """No key with the requested key_id."""


class DecodeError(SealingError):
    """Bytes do not parse as a sealed payload."""


@dataclass
class SealKey:
    key_id: int
    key_bytes: bytes
    nonce_counter: int = field(default=0, repr=False)

    def __post_init__(self):
        if len(self.key_bytes) != KEY_LEN:
            raise ValueError("key must be 32 bytes")
        if not 0 <= self.key_id < 1 << 32:
            raise ValueError("key_id out of u32 range")


@dataclass(frozen=True)
class SealedPayload:
    key_id: int
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes

    def encode(self) -> bytes:
        return b"".join(
            (
                struct.pack(">I", self.key_id),
                self.nonce,
                struct.pack(">Q", len(self.ciphertext)),
                self.ciphertext,
                self.auth_tag,
            )
        )

    @classmethod
    def decode(cls, data: bytes) -> "SealedPayload":
        head = 4 + NONCE_LEN + 8
        if len(data) < head + TAG_LEN:
            raise DecodeError("sealed payload too short")
        (key_id,) = struct.unpack_from(">I", data, 0)
        nonce = data[4 : 4 + NONCE_LEN]
        (clen,) = struct.unpack_from(">Q", data, 4 + NONCE_LEN)
        if len(data) != head + clen + TAG_LEN:
            raise DecodeError("sealed payload length mismatch")
        ciphertext = data[head : head + clen]
        tag = data[head + clen :]
        return cls(key_id, nonce, ciphertext, tag)


def generate_key(key_id: int, stream: Stream) -> SealKey:
    """Draw a fresh 32-byte key from a deterministic stream."""
    return SealKey(key_id, stream.next_bytes(KEY_LEN))


def seal(key: SealKey, plaintext: bytes, associated_data: bytes) -> SealedPayload:
    if key.nonce_counter >= NONCE_LIMIT:
        raise NonceExhausted(f"key {key.key_id} has no nonces left")
    nonce = key.nonce_counter.to_bytes(NONCE_LEN, "big")
    key.nonce_counter += 1
    ct_tag = AESGCM(key.key_bytes).encrypt(nonce, plaintext, associated_data)
    return SealedPayload(key.key_id, nonce, ct_tag[:-TAG_LEN], ct_tag[-TAG_LEN:])


def unseal(key: SealKey, sealed: SealedPayload, associated_data: bytes) -> bytes:
    if sealed.key_id != key.key_id:
        raise UnknownKey(f"sealed with key {sealed.key_id}, not {key.key_id}")
    try:
        return AESGCM(key.key_bytes).decrypt(
            sealed.nonce, sealed.ciphertext + sealed.auth_tag, associated_data
        )
    except InvalidTag as exc:
        raise AuthFailure("authentication failed") from exc


class KeyDirectory:
    """Static in-simulation key directory shared by all honest verifiers.

    Stands in for hardware sealing and attestation, which are out of scope.
    """

    def __init__(self):
        self._keys: dict[int, SealKey] = {}

    @classmethod
    def generate(cls, count: int, stream: Stream) -> "KeyDirectory":
        directory = cls()
        for key_id in range(count):
            directory.add(generate_key(key_id, stream))
        return directory

    def add(self, key: SealKey) -> None:
        if key.key_id in self._keys:
            raise ValueError(f"duplicate key_id {key.key_id}")
        self._keys[key.key_id] = key

    def get(self, key_id: int) -> SealKey:
        try:
            return self._keys[key_id]
        except KeyError:
            raise UnknownKey(f"no key with id {key_id}") from None

    def unseal(self, sealed: SealedPayload, associated_data: bytes) -> bytes:
        return unseal(self.get(sealed.key_id), sealed, associated_data)
