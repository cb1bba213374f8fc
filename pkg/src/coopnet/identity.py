"""Peer identities: keypairs, deterministic signing and verification.

Two signature schemes share one contract (32-byte public key, 64-byte
signature, deterministic signing):

* ``ED25519`` - real Ed25519 via :mod:`cryptography`.
* ``NULL`` - a keyed BLAKE2b digest, for fast tests and large simulations.
  It offers no security: anyone who knows the public key can forge.

The scheme is chosen when a keypair (or a certificate store) is built and is
never global state.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache, total_ordering

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64

ED25519 = "ed25519"
NULL = "null"
SCHEMES = (ED25519, NULL)

_U64 = (1 << 64) - 1


@total_ordering
@dataclass(frozen=True, eq=False)
class PeerId:
    """A peer's public key. Ordered lexicographically by bytes."""

    public_key: bytes

    def __post_init__(self):
        if not isinstance(self.public_key, bytes) or len(self.public_key) != PUBLIC_KEY_SIZE:
            raise ValueError(f"PeerId must be {PUBLIC_KEY_SIZE} bytes")

    def __eq__(self, other) -> bool:
        if not isinstance(other, PeerId):
            return NotImplemented
        return self.public_key == other.public_key

    def __hash__(self) -> int:
        return hash(self.public_key)

    def __lt__(self, other: "PeerId") -> bool:
        if not isinstance(other, PeerId):
            return NotImplemented
        return self.public_key < other.public_key

    def __bytes__(self) -> bytes:
        return self.public_key

    def short(self) -> str:
        return self.public_key[:4].hex()

    def __repr__(self) -> str:
        return f"PeerId({self.short()})"


@dataclass(frozen=True)
class Keypair:
    peer_id: PeerId
    secret: bytes = field(repr=False)
    scheme: str = ED25519


def _seed_material(seed: int) -> bytes:
    return hashlib.sha256(b"coopnet-key/" + (seed & _U64).to_bytes(8, "big")).digest()


def _null_tag(public_key: bytes, message: bytes) -> bytes:
    return hashlib.blake2b(message, key=public_key, digest_size=SIGNATURE_SIZE).digest()


def generate_keypair(seed: int, scheme: str = ED25519) -> Keypair:
    """Derive a keypair deterministically from a 64-bit seed."""
    material = _seed_material(seed)
    if scheme == ED25519:
        private = Ed25519PrivateKey.from_private_bytes(material)
        public = private.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
    elif scheme == NULL:
        public = hashlib.sha256(b"coopnet-null-pk/" + material).digest()
    else:
        raise ValueError(f"unknown signature scheme {scheme!r}")
    return Keypair(PeerId(public), material, scheme)


@lru_cache(maxsize=1 << 14)
def _private_key(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


def sign(keypair: Keypair, message: bytes) -> bytes:
    if not message:
        raise ValueError("refusing to sign an empty message")
    if keypair.scheme == ED25519:
        return _private_key(keypair.secret).sign(message)
    return _null_tag(keypair.peer_id.public_key, message)


def verify(peer: PeerId, message: bytes, sig: bytes, scheme: str = ED25519) -> bool:
    """True iff ``sig`` is ``peer``'s signature over exactly ``message``.

    Malformed input of any kind yields ``False``.
    """
    try:
        pk = peer.public_key
        if len(pk) != PUBLIC_KEY_SIZE or len(sig) != SIGNATURE_SIZE:
            return False
        if scheme == ED25519:
            Ed25519PublicKey.from_public_bytes(pk).verify(bytes(sig), bytes(message))
            return True
        if scheme == NULL:
            return _null_tag(pk, bytes(message)) == bytes(sig)
    except (InvalidSignature, ValueError, TypeError, AttributeError):
        return False
    return False
