"""Discrete-event simulation of a Bitcoin-like gossip network running the
cooperation protocol.

Peers relay transactions and blocks over the connections chosen by their slot
tables, credit the sender of every useful first-seen message, turn those
credits into certificates once per round, crawl certificates from neighbors,
rank peers with random walks and use the ranking to choose next round's
connections.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from ..identity import Keypair, PeerId, generate_keypair
from ..ledger import (
    CERTIFICATE_SIZE,
    CertificateStore,
    create_certificate,
    select_gossip_batch,
)
from ..meritrank import RankingTable, compute_scores
from ..selection import (
    BootstrapSchedule,
    advance_round,
    handle_push_request,
    new_slot_table,
    plan_pull_requests,
)
from .config import SimConfig
from .events import EventQueue, derive_seed, stream
from .latency import build_latency_model, sample_latency
from .workload import generate_workload

HONEST = "honest"
SELFISH = "selfish"
SYBIL = "sybil"

TX = "tx"
BLOCK = "block"
CERT_BATCH = "cert_batch"
CRAWL_REQUEST = "crawl_request"
SLOT_REQUEST = "slot_request"
SLOT_REPLY = "slot_reply"

TX_SIZE = 250
BLOCK_HEADER_SIZE = 80
TXID_SIZE = 32
CONTROL_SIZE = 64


@dataclass(frozen=True)
class Block:
    block_id: int
    height: int
    parent: int  # 0 is genesis
    miner: int
    txs: tuple = ()


@dataclass(frozen=True)
class Message:
    kind: str
    src: int
    dst: int
    payload: object = None
    size_bytes: int = 0


def message_size(kind: str, payload=None) -> int:
    if kind == TX:
        return TX_SIZE
    if kind == BLOCK:
        return BLOCK_HEADER_SIZE + TXID_SIZE * len(payload.txs)
    if kind == CERT_BATCH:
        return CERTIFICATE_SIZE * len(payload)
    return CONTROL_SIZE


class SimPeer:
    def __init__(self, index: int, keypair: Keypair, behavior: str, share_ratio: float, store: CertificateStore, rng):
        self.index = index
        self.keypair = keypair
        self.peer_id: PeerId = keypair.peer_id
        self.behavior = behavior
        self.share_ratio = share_ratio
        self.store = store
        self.rng = rng
        self.seen_tx: set[int] = set()
        self.mempool: set[int] = set()
        self.shared_tx: list[int] = []
        self.blocks: dict[int, Block] = {}
        self.shared_blocks: list[Block] = []
        self.tip_height = 0
        self.tip_id = 0
        self.share_decision: dict = {}
        self.accumulator: dict[int, float] = {}
        self.cumulative: dict[int, float] = {}
        self.slots = None
        self.neighbors: list[int] = []
        self.pull_neighbors: list[int] = []
        self.push_neighbors: list[int] = []
        self.ranking: RankingTable | None = None
        self.gossip_phase = 0.0
        self.cert_bytes_in = 0
        self.rounds_ticked = 0
        self.credits_given = 0
        self.certs_issued = 0

    @property
    def active(self) -> bool:
        return self.behavior != SYBIL

    def decides_to_share(self, key) -> bool:
        """Relay decision for a message, drawn once and then fixed."""
        if self.behavior == HONEST:
            return True
        decision = self.share_decision.get(key)
        if decision is None:
            decision = self.behavior == SELFISH and self.rng.random() < self.share_ratio
            self.share_decision[key] = decision
        return decision

    def __repr__(self) -> str:
        return f"SimPeer({self.index}, {self.behavior})"


class World:
    def __init__(self, config: SimConfig):
        self.config = cfg = config.validate()
        seed = cfg.master_seed
        self.queue = EventQueue()
        self.trace: list | None = [] if cfg.trace else None
        self._latency_rng = stream(seed, "latency")
        self._loss_rng = stream(seed, "loss")
        self._topology_rng = stream(seed, "topology")
        self.latency = build_latency_model(cfg.latency)
        self.latency.assign_regions(cfg.n_peers, stream(seed, "regions"))
        self.schedule = BootstrapSchedule(cfg.selection.bootstrap_rounds, cfg.selection.final_gamma)
        self.round = 0

        self.peers: list[SimPeer] = []
        self.index_of: dict[PeerId, int] = {}
        self.id_of_key: dict[bytes, PeerId] = {}
        n_selfish = cfg.n_selfish
        for i in range(cfg.n_peers):
            behavior = SELFISH if i < n_selfish else HONEST
            self._add_peer(behavior, cfg.share_ratio if behavior == SELFISH else 1.0, "peer", i)
        self.known_ids: list[PeerId] = [p.peer_id for p in self.peers]

        self.tx_created: dict[int, float] = {}
        self.tx_fee: dict[int, int] = {}
        self.tx_origin: dict[int, int] = {}
        self.tx_honest_times: dict[int, list[float]] = {}
        self.block_count = 0
        self.credit_events = 0
        self.messages_sent = 0

        txs, blocks = generate_workload(cfg, stream(seed, "workload"))
        for ev in txs:
            self.queue.schedule_at(ev.time, self._create_tx, ev.tx_id, ev.origin, ev.fee)
        for ev in blocks:
            self.queue.schedule_at(ev.time, self._create_block, ev.block_id, ev.miner)
        for p in self.peers:
            p.gossip_phase = p.rng.uniform(0, cfg.gossip_period)
            self.queue.schedule_at(p.rng.uniform(0, cfg.crawl_period), self.crawl_tick, p.index)
        for k in range(1, cfg.rounds + 1):
            self.queue.schedule_at(k * cfg.round_length, self._round_tick, k)
        self._negotiate()

    # -- membership -------------------------------------------------------

    def _add_peer(self, behavior: str, share_ratio: float, *key_label) -> SimPeer:
        cfg = self.config
        index = len(self.peers)
        keypair = generate_keypair(derive_seed(cfg.master_seed, "key", *key_label), cfg.crypto)
        sel = cfg.selection
        peer = SimPeer(index, keypair, behavior, share_ratio, CertificateStore(cfg.crypto),
                       stream(cfg.master_seed, "peer", *key_label))
        peer.slots = new_slot_table(sel.n, self.schedule, keypair.peer_id, peer.rng,
                                    sel.selection_mode, sel.push_policy)
        self.peers.append(peer)
        self.index_of[peer.peer_id] = index
        self.id_of_key[peer.peer_id.public_key] = peer.peer_id
        return peer

    def add_sybil(self) -> SimPeer:
        label = sum(1 for p in self.peers if p.behavior == SYBIL)
        peer = self._add_peer(SYBIL, 0.0, "sybil", label)
        self.known_ids.append(peer.peer_id)
        return peer

    @property
    def active_peers(self) -> list[SimPeer]:
        return [p for p in self.peers if p.active]

    @property
    def honest(self) -> list[int]:
        return [p.index for p in self.peers if p.behavior == HONEST]

    @property
    def selfish(self) -> list[int]:
        return [p.index for p in self.peers if p.behavior == SELFISH]

    @property
    def sybils(self) -> list[int]:
        return [p.index for p in self.peers if p.behavior == SYBIL]

    # -- transport --------------------------------------------------------

    def _record(self, kind: str, src, dst, ident) -> None:
        if self.trace is not None:
            self.trace.append((round(self.queue.now, 9), kind, src, dst, ident))

    def _next_gossip_tick(self, peer: SimPeer) -> float:
        period = self.config.gossip_period
        now = self.queue.now
        if period <= 0:
            return now
        k = math.ceil((now - peer.gossip_phase) / period - 1e-12)
        return max(now, peer.gossip_phase + k * period)

    def lost(self) -> bool:
        p = self.config.loss_probability
        return p > 0 and self._loss_rng.random() < p

    def send(self, msg: Message, depart: float | None = None) -> None:
        """Put ``msg`` on the wire; it may be dropped."""
        self.messages_sent += 1
        if self.lost():
            return
        at = self.queue.now if depart is None else depart
        delay = sample_latency(self.latency, msg.src, msg.dst, self._latency_rng)
        self.queue.schedule_at(at + delay, self._deliver, msg)

    def _deliver(self, msg: Message) -> None:
        self._record(msg.kind, msg.src, msg.dst, _ident(msg))
        peer = self.peers[msg.dst]
        if msg.kind in (TX, BLOCK):
            sends = self.relay(peer, msg)
            if sends:
                depart = self._next_gossip_tick(peer)
                for _, out in sends:
                    self.send(out, depart)
        elif msg.kind == CRAWL_REQUEST:
            self._on_crawl_request(peer, msg.src)
        elif msg.kind == CERT_BATCH:
            self.on_crawl_reply(peer, msg.payload)

    # -- data plane -------------------------------------------------------

    def _targets(self, peer: SimPeer, exclude: int) -> list[int]:
        fanout = self.config.fanout
        if self.config.selection.relay_targets == "pull":
            first = [j for j in peer.pull_neighbors if j != exclude]
            if len(first) >= fanout:
                return peer.rng.sample(first, fanout)
            rest = [j for j in peer.push_neighbors if j != exclude]
            return first + peer.rng.sample(rest, min(fanout - len(first), len(rest)))
        pool = [j for j in peer.neighbors if j != exclude]
        if len(pool) <= fanout:
            return pool
        return peer.rng.sample(pool, fanout)

    def _fan_out(self, peer: SimPeer, msg_kind: str, payload, exclude: int) -> list[tuple[int, Message]]:
        size = message_size(msg_kind, payload)
        return [(j, Message(msg_kind, peer.index, j, payload, size)) for j in self._targets(peer, exclude)]

    def relay(self, peer: SimPeer, msg: Message) -> list[tuple[int, Message]]:
        """Handle a delivered transaction or block; return the resulting sends."""
        if not peer.active:
            return []
        if msg.kind == TX:
            tx_id = msg.payload
            if tx_id in peer.seen_tx:
                return []
            peer.seen_tx.add(tx_id)
            if self.tx_fee[tx_id] == 0:
                return []
            self._credit(peer, msg.src, self.config.tx_credit)
            peer.mempool.add(tx_id)
            if peer.behavior == HONEST:
                self.tx_honest_times[tx_id].append(self.queue.now)
            if not peer.decides_to_share((TX, tx_id)):
                return []
            peer.shared_tx.append(tx_id)
            return self._fan_out(peer, TX, tx_id, msg.src)

        block: Block = msg.payload
        if block.block_id in peer.blocks:
            return []
        if block.parent and block.parent not in peer.blocks:
            return []  # orphan: parent unknown, not stored
        peer.blocks[block.block_id] = block
        if block.height <= peer.tip_height:
            return []  # stale
        peer.tip_height, peer.tip_id = block.height, block.block_id
        peer.mempool.difference_update(block.txs)
        self._credit(peer, msg.src, self.config.block_credit)
        if not peer.decides_to_share((BLOCK, block.block_id)):
            return []
        peer.shared_blocks.append(block)
        return self._fan_out(peer, BLOCK, block, msg.src)

    def _credit(self, peer: SimPeer, src: int, amount: float) -> None:
        peer.accumulator[src] = peer.accumulator.get(src, 0.0) + amount
        peer.credits_given += 1
        self.credit_events += 1

    def _create_tx(self, tx_id: int, origin: int, fee: int) -> None:
        now = self.queue.now
        self.tx_created[tx_id] = now
        self.tx_fee[tx_id] = fee
        self.tx_origin[tx_id] = origin
        self.tx_honest_times[tx_id] = []
        peer = self.peers[origin]
        peer.seen_tx.add(tx_id)
        self._record("tx_create", origin, origin, tx_id)
        if fee == 0:
            return
        peer.mempool.add(tx_id)
        if peer.behavior == HONEST:
            self.tx_honest_times[tx_id].append(now)
        # originators always announce their own transactions
        peer.shared_tx.append(tx_id)
        depart = self._next_gossip_tick(peer)
        for _, out in self._fan_out(peer, TX, tx_id, -1):
            self.send(out, depart)

    def _create_block(self, block_id: int, miner: int) -> None:
        peer = self.peers[miner]
        block = Block(block_id, peer.tip_height + 1, peer.tip_id, miner, tuple(sorted(peer.mempool)))
        self.block_count += 1
        peer.blocks[block_id] = block
        peer.tip_height, peer.tip_id = block.height, block_id
        peer.mempool.clear()
        peer.shared_blocks.append(block)
        self._record("block_create", miner, miner, block_id)
        depart = self._next_gossip_tick(peer)
        for _, out in self._fan_out(peer, BLOCK, block, -1):
            self.send(out, depart)

    def _sync(self, src: SimPeer, dst: SimPeer) -> None:
        """Inventory exchange on a new connection: offer what ``dst`` lacks."""
        for block in src.shared_blocks:
            if block.block_id not in dst.blocks:
                self.send(Message(BLOCK, src.index, dst.index, block, message_size(BLOCK, block)))
        seen = dst.seen_tx
        for tx_id in src.shared_tx:
            if tx_id not in seen:
                self.send(Message(TX, src.index, dst.index, tx_id, TX_SIZE))

    # -- certificate gossip -----------------------------------------------

    def crawl_tick(self, index: int) -> None:
        peer = self.peers[index]
        self.queue.schedule(self.config.crawl_period, self.crawl_tick, index)
        if not peer.neighbors:
            return
        target = peer.rng.choice(peer.neighbors)
        self.send(Message(CRAWL_REQUEST, index, target, None, CONTROL_SIZE))

    def _on_crawl_request(self, peer: SimPeer, requester: int) -> None:
        if not peer.active:
            return
        batch = select_gossip_batch(peer.store, self.config.crawl_batch, peer.rng)
        if batch:
            self.send(Message(CERT_BATCH, peer.index, requester, batch, message_size(CERT_BATCH, batch)))

    def on_crawl_reply(self, peer: SimPeer, batch) -> None:
        peer.cert_bytes_in += CERTIFICATE_SIZE * len(batch)
        for cert in batch:
            peer.store.ingest(cert)

    # -- rounds -----------------------------------------------------------

    def issue_certificates(self, peer: SimPeer, round_: int) -> list:
        certs = []
        for subject in sorted(peer.accumulator):
            total = peer.cumulative.get(subject, 0.0) + peer.accumulator[subject]
            peer.cumulative[subject] = total
            cert = create_certificate(peer.keypair, self.peers[subject].peer_id, total, round_)
            peer.store.ingest(cert)
            certs.append(cert)
        peer.certs_issued += len(certs)
        peer.accumulator = {}
        return certs

    def rank(self, peer: SimPeer, round_: int) -> RankingTable:
        rk = self.config.ranking
        me = peer.peer_id.public_key
        graph = peer.store.key_graph((me,))
        key = derive_seed(self.config.master_seed, "walks", peer.index, round_)
        raw = compute_scores(graph, me, rk.alpha, rk.walks, key)
        ids = self.id_of_key
        peer.ranking = RankingTable(peer.peer_id, {ids[k]: v for k, v in raw.scores.items()}, raw.walk_count, raw.alpha)
        return peer.ranking

    def round_tick(self, index: int, round_: int) -> None:
        """End ``round_ - 1`` for one peer: certify, re-rank, reshuffle slots."""
        peer = self.peers[index]
        self.issue_certificates(peer, round_ - 1)
        self.rank(peer, round_)
        peer.slots = advance_round(peer.slots, peer.rng)
        peer.rounds_ticked += 1

    def _round_tick(self, k: int) -> None:
        self._record("round", -1, -1, k)
        self.round = k
        for peer in self.active_peers:
            self.round_tick(peer.index, k)
        self._negotiate()

    def _negotiate(self) -> None:
        """Fill pull slots by request; targets seat requesters in push slots."""
        active = [p.index for p in self.peers if p.active]
        order = self._topology_rng.sample(active, len(active))
        for i in order:
            peer = self.peers[i]
            for pid, slot in plan_pull_requests(peer.slots, peer.ranking, self.known_ids, peer.rng):
                j = self.index_of[pid]
                target = self.peers[j]
                self._record(SLOT_REQUEST, i, j, slot)
                if not target.active or self.lost():
                    continue
                score = target.ranking.score(peer.peer_id) if target.ranking else 0.0
                if handle_push_request(target.slots, peer.peer_id, score) is None:
                    self._record(SLOT_REPLY, j, i, "reject")
                    continue
                self._record(SLOT_REPLY, j, i, "accept")
                peer.slots.assign_pull(pid, slot)
        for i in active:
            peer = self.peers[i]
            peer.pull_neighbors = sorted(self.index_of[p] for p in peer.slots.pull_assignments.values())
            peer.push_neighbors = sorted(self.index_of[p] for p in peer.slots.push_occupancy.values())
            peer.neighbors = sorted(set(peer.pull_neighbors) | set(peer.push_neighbors))
        for i in active:
            peer = self.peers[i]
            for j in peer.pull_neighbors:
                self._sync(peer, self.peers[j])
                self._sync(self.peers[j], peer)

    # -- driver -----------------------------------------------------------

    def run(self, until: float | None = None) -> "World":
        self.queue.run(self.config.sim_duration if until is None else until)
        return self

    @property
    def rankings(self) -> dict[int, RankingTable]:
        return {p.index: p.ranking for p in self.active_peers if p.ranking is not None}

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for rec in self.trace or ():
            h.update(repr(rec).encode())
        return h.hexdigest()

    def dump_trace(self, path) -> None:
        with open(path, "w") as fh:
            for t, kind, src, dst, ident in self.trace or ():
                fh.write(f"{t:.9f}\t{kind}\t{src}\t{dst}\t{ident}\n")


def _ident(msg: Message):
    if msg.kind == TX:
        return msg.payload
    if msg.kind == BLOCK:
        return msg.payload.block_id
    if msg.kind == CERT_BATCH:
        return len(msg.payload)
    return ""


def simulate(config: SimConfig) -> World:
    return World(config).run()
