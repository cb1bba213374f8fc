"""Sybil-region injection.

Sybils are extra identities that do no work. A passive Sybil only vouches for
its attacker; active Sybils also vouch for each other and are vouched for by
the attacker, which is what lets walks reach them.

Injected certificates are placed directly in every active peer's store, as if
the crawler had already spread them everywhere. That is the attacker's best
case and makes the effect independent of crawl timing.
"""
from __future__ import annotations

import random

from ..ledger import ContributionCertificate, create_certificate
from .world import SimPeer, World

DENSE = "dense"
RING = "ring"


def default_sybil_weight(world: World) -> float:
    """Ten times the mean cumulative weight honest work has earned so far."""
    weights = [w for p in world.peers if p.active for w in p.cumulative.values() if w > 0]
    mean = sum(weights) / len(weights) if weights else 1.0
    return 10.0 * mean


def spread(world: World, certs: list[ContributionCertificate]) -> None:
    for peer in world.active_peers:
        for cert in certs:
            peer.store.ingest(cert)


def _resolve(world: World, attacker) -> SimPeer:
    if isinstance(attacker, SimPeer):
        return attacker
    if isinstance(attacker, int):
        return world.peers[attacker]
    return world.peers[world.index_of[attacker]]


def inject_passive_sybils(world: World, attacker, count: int, rng: random.Random | None = None,
                          weight: float | None = None) -> list[SimPeer]:
    """Add ``count`` Sybils, each certifying the attacker once."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    target = _resolve(world, attacker)
    w = default_sybil_weight(world) if not weight else weight
    sybils = [world.add_sybil() for _ in range(count)]
    certs = [create_certificate(s.keypair, target.peer_id, w, world.round) for s in sybils]
    spread(world, certs)
    return sybils


def inject_active_sybils(world: World, attacker, count: int, rng: random.Random | None = None,
                         topology: str = DENSE, weight: float | None = None) -> list[SimPeer]:
    """Add ``count`` Sybils that certify each other and trade certificates with the attacker."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if topology not in (DENSE, RING):
        raise ValueError(f"unknown Sybil topology {topology!r}")
    if count == 0:
        return []
    target = _resolve(world, attacker)
    w = default_sybil_weight(world) if not weight else weight
    r = world.round
    sybils = [world.add_sybil() for _ in range(count)]
    if rng is not None:
        rng.shuffle(sybils)  # only affects ring order
    certs = []
    for s in sybils:
        certs.append(create_certificate(s.keypair, target.peer_id, w, r))
        certs.append(create_certificate(target.keypair, s.peer_id, w, r))
    if topology == DENSE:
        pairs = [(a, b) for a in sybils for b in sybils if a is not b]
    elif count > 1:
        ring = list(zip(sybils, sybils[1:] + sybils[:1]))
        pairs = ring + [(b, a) for a, b in ring] if count > 2 else ring
    else:
        pairs = []
    certs += [create_certificate(a.keypair, b.peer_id, w, r) for a, b in pairs]
    spread(world, certs)
    return sybils
