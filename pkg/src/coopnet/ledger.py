"""Contribution certificates, their wire format, and the certificate store.

A certificate ``(issuer, subject, weight, round, signature)`` says that
``subject`` has so far provided ``weight`` units of cumulative utility to
``issuer``. A store keeps only the latest certificate per ordered pair and
materializes the contribution graph used for ranking.

Wire layout (big-endian, 145 bytes)::

    version(1) | issuer(32) | subject(32) | weight u64(8) | round u64(8) | signature(64)

``weight`` is fixed point with 32 fractional bits.
"""
from __future__ import annotations

import bisect
import enum
import hashlib
import random
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Mapping

from .identity import (
    ED25519,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    Keypair,
    PeerId,
    sign,
    verify,
)

VERSION = 0x01
FIXED_POINT_SHIFT = 32
FIXED_POINT_ONE = 1 << FIXED_POINT_SHIFT
_U64_MAX = (1 << 64) - 1

_BODY = struct.Struct(f">B{PUBLIC_KEY_SIZE}s{PUBLIC_KEY_SIZE}sQQ")
CERTIFICATE_SIZE = _BODY.size + SIGNATURE_SIZE
assert CERTIFICATE_SIZE == 145

_LEN = struct.Struct(">I")
_ITEM_LEN = struct.Struct(">H")


class LedgerError(Exception):
    pass


class SelfCertificateError(LedgerError):
    """A peer tried to certify utility it provided to itself."""


class MalformedCertificate(LedgerError):
    pass


def to_fixed(value: float | int) -> int:
    if value < 0:
        raise ValueError("utility must be non-negative")
    raw = round(value * FIXED_POINT_ONE)
    if raw > _U64_MAX:
        raise ValueError("utility exceeds fixed-point range")
    return raw


def from_fixed(raw: int) -> float:
    return raw / FIXED_POINT_ONE


@dataclass(frozen=True)
class ContributionCertificate:
    issuer: PeerId
    subject: PeerId
    weight_raw: int
    round: int
    signature: bytes = field(repr=False)

    @property
    def weight(self) -> float:
        return from_fixed(self.weight_raw)

    @property
    def pair(self) -> tuple[PeerId, PeerId]:
        return (self.issuer, self.subject)

    def body(self) -> bytes:
        return self._body

    @cached_property
    def _body(self) -> bytes:
        return signed_body(self.issuer, self.subject, self.weight_raw, self.round)

    def precedence(self) -> tuple[int, bytes]:
        """Ordering key for latest-wins merging."""
        return self._precedence

    @cached_property
    def _precedence(self) -> tuple[int, bytes]:
        return (self.round, hashlib.sha256(self.signature).digest())


def signed_body(issuer: PeerId, subject: PeerId, weight_raw: int, round_: int) -> bytes:
    return _BODY.pack(VERSION, issuer.public_key, subject.public_key, weight_raw, round_)


def record_utility(accumulator: dict, subject, delta: float) -> dict:
    """Add ``delta`` units of utility credited to ``subject``; mutates and returns."""
    if delta < 0:
        raise ValueError("utility delta must be non-negative")
    accumulator[subject] = accumulator.get(subject, 0) + delta
    return accumulator


def create_certificate(
    issuer: Keypair, subject: PeerId, cumulative_weight: float | int, round: int
) -> ContributionCertificate:
    if issuer.peer_id == subject:
        raise SelfCertificateError("issuer and subject are the same peer")
    if not 0 <= round <= _U64_MAX:
        raise ValueError("round out of range")
    raw = to_fixed(cumulative_weight)
    body = signed_body(issuer.peer_id, subject, raw, round)
    return ContributionCertificate(issuer.peer_id, subject, raw, round, sign(issuer, body))


def encode_certificate(cert: ContributionCertificate) -> bytes:
    return cert.body() + cert.signature


def decode_certificate(data: bytes) -> ContributionCertificate:
    if len(data) != CERTIFICATE_SIZE:
        raise MalformedCertificate(f"expected {CERTIFICATE_SIZE} bytes, got {len(data)}")
    version, issuer, subject, weight_raw, round_ = _BODY.unpack_from(data)
    if version != VERSION:
        raise MalformedCertificate(f"unsupported version {version}")
    return ContributionCertificate(
        PeerId(issuer), PeerId(subject), weight_raw, round_, bytes(data[_BODY.size:])
    )


@lru_cache(maxsize=1 << 18)
def _verify_encoded(scheme: str, body: bytes, signature: bytes) -> bool:
    # body[1:33] is the issuer key
    return verify(PeerId(body[1 : 1 + PUBLIC_KEY_SIZE]), body, signature, scheme)


def verify_certificate(cert: ContributionCertificate, scheme: str = ED25519) -> bool:
    memo = cert.__dict__.setdefault("_verified", {})  # certificates are immutable
    result = memo.get(scheme)
    if result is None:
        result = (
            cert.issuer != cert.subject
            and cert.weight_raw >= 0
            and len(cert.signature) == SIGNATURE_SIZE
            and _verify_encoded(scheme, cert.body(), cert.signature)
        )
        memo[scheme] = result
    return result


class IngestResult(enum.Enum):
    INSERTED = "inserted"
    REPLACED = "replaced"
    STALE_IGNORED = "stale_ignored"
    INVALID = "invalid"


@dataclass
class ContributionGraph:
    """Directed graph, edge ``i -> j`` meaning ``j`` helped ``i``."""

    nodes: set = field(default_factory=set)
    edges: dict = field(default_factory=dict)

    def add_edge(self, src, dst, weight: float) -> None:
        if weight <= 0:
            raise ValueError("edge weights must be strictly positive")
        self.nodes.add(src)
        self.nodes.add(dst)
        self.edges[(src, dst)] = weight

    def out_edges(self, node) -> dict:
        return {dst: w for (src, dst), w in self.edges.items() if src == node}

    def copy(self) -> "ContributionGraph":
        return ContributionGraph(set(self.nodes), dict(self.edges))


class CertificateStore:
    """Latest certificate per (issuer, subject) pair. Single writer."""

    def __init__(self, scheme: str = ED25519):
        self.scheme = scheme
        self.latest: dict[tuple[PeerId, PeerId], ContributionCertificate] = {}
        self.byte_counter = 0
        self.accepted = 0
        self._pairs: list = []  # kept sorted by _pair_key
        self._keys: list = []
        # raw-key mirror of graph_view, maintained on ingest
        self._edge_weights: dict[tuple[bytes, bytes], float] = {}
        self._node_keys: set[bytes] = set()

    def __len__(self) -> int:
        return len(self.latest)

    def __iter__(self):
        return iter(self.latest.values())

    def sorted_pairs(self) -> list:
        return self._pairs

    def key_graph(self, local_keys=()) -> ContributionGraph:
        """Like :func:`graph_view` but with raw public keys as nodes."""
        nodes = set(self._node_keys)
        nodes.update(local_keys)
        return ContributionGraph(nodes, dict(self._edge_weights))

    def get(self, issuer: PeerId, subject: PeerId) -> ContributionCertificate | None:
        return self.latest.get((issuer, subject))

    def ingest(self, cert: ContributionCertificate) -> IngestResult:
        return ingest_certificate(self, cert)

    def dump(self) -> bytes:
        """Length-prefixed concatenation of certificates in pair order."""
        parts = [_LEN.pack(len(self.latest))]
        for pair in self.sorted_pairs():
            blob = encode_certificate(self.latest[pair])
            parts.append(_ITEM_LEN.pack(len(blob)))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def load(cls, data: bytes, scheme: str = ED25519) -> "CertificateStore":
        store = cls(scheme)
        if len(data) < _LEN.size:
            raise MalformedCertificate("truncated store dump")
        (count,) = _LEN.unpack_from(data)
        pos = _LEN.size
        for _ in range(count):
            if pos + _ITEM_LEN.size > len(data):
                raise MalformedCertificate("truncated store dump")
            (size,) = _ITEM_LEN.unpack_from(data, pos)
            pos += _ITEM_LEN.size
            blob = data[pos : pos + size]
            pos += size
            store.ingest(decode_certificate(blob))
        if pos != len(data):
            raise MalformedCertificate("trailing bytes in store dump")
        return store


def _pair_key(pair):
    return (pair[0].public_key, pair[1].public_key)


def ingest_certificate(store: CertificateStore, cert: ContributionCertificate) -> IngestResult:
    current = store.latest.get((cert.issuer, cert.subject))
    if current is cert:
        return IngestResult.STALE_IGNORED  # already verified when first stored
    if not verify_certificate(cert, store.scheme):
        return IngestResult.INVALID
    if current is not None and cert.precedence() <= current.precedence():
        return IngestResult.STALE_IGNORED
    store.latest[cert.pair] = cert
    ik, sk = cert.issuer.public_key, cert.subject.public_key
    if cert.weight_raw > 0:
        store._edge_weights[(ik, sk)] = cert.weight_raw / FIXED_POINT_ONE
    else:
        store._edge_weights.pop((ik, sk), None)
    store._node_keys.add(ik)
    store._node_keys.add(sk)
    if current is None:
        key = _pair_key(cert.pair)
        at = bisect.bisect(store._keys, key)
        store._keys.insert(at, key)
        store._pairs.insert(at, cert.pair)
    store.byte_counter += CERTIFICATE_SIZE
    store.accepted += 1
    return IngestResult.INSERTED if current is None else IngestResult.REPLACED


def graph_view(store: CertificateStore | Iterable[ContributionCertificate], local_peers=()) -> ContributionGraph:
    nodes = set(local_peers)
    edges = {}
    certs = store.latest.values() if isinstance(store, CertificateStore) else store
    for cert in certs:
        issuer, subject = cert.issuer, cert.subject
        nodes.add(issuer)
        nodes.add(subject)
        if cert.weight_raw > 0:
            edges[(issuer, subject)] = cert.weight_raw / FIXED_POINT_ONE
    return ContributionGraph(nodes, edges)


def select_gossip_batch(store: CertificateStore, k: int, rng: random.Random) -> list[ContributionCertificate]:
    """Uniform sample of at most ``k`` stored certificates, without replacement."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0 or not store.latest:
        return []
    # dict order follows arrival order; sample from the sorted view so equal stores agree
    pairs = store.sorted_pairs()
    picked = rng.sample(pairs, min(k, len(pairs)))
    return [store.latest[p] for p in picked]


def certificates_from_weights(
    keypairs: Mapping[PeerId, Keypair], weights: Mapping[tuple[PeerId, PeerId], float], round: int = 0
) -> list[ContributionCertificate]:
    """Issue one certificate per weighted edge, signed by the edge's source."""
    return [create_certificate(keypairs[i], j, w, round) for (i, j), w in sorted(weights.items())]
