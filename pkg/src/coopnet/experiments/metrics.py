"""Metrics computed from finished simulation worlds."""
from __future__ import annotations

import math
import random
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from ..ledger import CERTIFICATE_SIZE, ContributionGraph
from ..meritrank import RankingTable, compute_scores, exact_scores, ranking_loss
from ..simnet.world import World

BITCOIN_PEERS = 7518
MEGABYTE = 1 << 20


# -- rankings -------------------------------------------------------------------

def evaluators(world: World, exclude=()) -> list[int]:
    skip = set(exclude)
    return [i for i in world.honest if i not in skip]


def rerank(world: World, peers: list[int]) -> dict[int, RankingTable]:
    """Fresh Monte Carlo rankings from the current stores, keyed like the last round."""
    return {i: world.rank(world.peers[i], world.round) for i in peers}


def exact_rankings(world: World, peers: list[int]) -> dict[int, RankingTable]:
    """Exact-oracle rankings over raw public keys, one per evaluator."""
    out = {}
    alpha = world.config.ranking.alpha
    for i in peers:
        me = world.peers[i].peer_id.public_key
        graph = world.peers[i].store.key_graph((me,))
        out[i] = exact_scores(graph, me, alpha, max_nodes=max(200, len(graph.nodes)))
    return out


def world_ranking_loss(world: World) -> float:
    ids = lambda idx: {world.peers[i].peer_id for i in idx}
    tables = [world.peers[i].ranking for i in world.honest if world.peers[i].ranking is not None]
    return ranking_loss(tables, ids(world.selfish), ids(world.honest))


def heatmap(world: World) -> np.ndarray:
    """Entry (i, j): score of j in i's final ranking; the diagonal is NaN."""
    n = len(world.peers)
    m = np.zeros((n, n))
    for i, peer in enumerate(world.peers):
        if peer.ranking is None:
            continue
        for j, other in enumerate(world.peers):
            m[i, j] = peer.ranking.score(other.peer_id)
    np.fill_diagonal(m, np.nan)
    return m


def heatmap_summary(m: np.ndarray, selfish: list[int], honest: list[int]) -> dict:
    rows = m[np.ix_(honest, selfish)]
    cols = m[np.ix_(honest, honest)]
    s, h = float(np.nanmean(rows)), float(np.nanmean(cols))
    return {"selfish_mean": s, "honest_mean": h, "ratio": s / h if h else math.nan}


# -- convergence ----------------------------------------------------------------

@dataclass
class Convergence:
    mean_delay: float
    counted: int
    unfinished: int
    delays: list = field(default_factory=list, repr=False)


def convergence_metric(world: World, coverage: float = 0.99, start: float | None = None,
                       end: float | None = None) -> Convergence:
    """Mean time from creation until ``coverage`` of honest peers hold a transaction.

    Only useful transactions created in ``[start, end)`` count; by default the
    window opens once the connection ramp is complete. Transactions that never
    reach coverage are charged until the end of the simulation.
    """
    cfg = world.config
    honest = len(world.honest)
    if start is None:
        start = 2 * cfg.selection.bootstrap_rounds * cfg.round_length
    if end is None:
        end = cfg.sim_duration - cfg.quiet_period
    need = max(1, math.ceil(coverage * honest - 1e-9))
    delays, unfinished = [], 0
    for tx_id, created in world.tx_created.items():
        if not world.tx_fee[tx_id] or not start <= created < end:
            continue
        times = world.tx_honest_times[tx_id]
        if len(times) >= need:
            delays.append(sorted(times)[need - 1] - created)
        else:
            delays.append(cfg.sim_duration - created)
            unfinished += 1
    mean = statistics.fmean(delays) if delays else 0.0
    return Convergence(mean, len(delays), unfinished, delays)


# -- Sybil attacks ----------------------------------------------------------------

def sybil_gain(base: dict, attacked: dict, attacker, sybils) -> float:
    """Percent by which attacker plus Sybils outscore the attacker's no-attack score.

    ``base`` and ``attacked`` map evaluator to ranking table, same evaluators.
    """
    deserved = sum(t.score(attacker) for t in base.values())
    got = sum(t.score(attacker) + sum(t.score(s) for s in sybils) for t in attacked.values())
    if deserved == 0:
        return 0.0 if got == 0 else math.inf
    return 100.0 * (got - deserved) / deserved


def mean_scores(tables: dict, nodes) -> dict:
    """Average score of each node over evaluators other than itself."""
    out = {}
    for k in nodes:
        vals = [t.score(k) for t in tables.values() if t.seed != k]
        out[k] = statistics.fmean(vals) if vals else 0.0
    return out


@dataclass
class MisreportReport:
    tau: float
    tau_prime: float
    gap: float
    mismatches: int
    punished: int
    epsilon: float

    @property
    def ok(self) -> bool:
        return self.gap <= self.epsilon


def misreport_resistance_check(before: dict, after: dict, tau: float, epsilon: float = 0.05) -> MisreportReport:
    """Closest threshold on ``after`` that reproduces the punishment set of ``before``.

    ``before`` and ``after`` map each original node to its score. The
    punishment set is ``{k : before[k] < tau}``. Among thresholds that
    mismatch the fewest nodes, the one nearest ``tau`` is reported.
    """
    nodes = sorted(before, key=lambda k: (after[k], before[k]))
    punished = {k for k in nodes if before[k] < tau}
    values = [after[k] for k in nodes]
    # candidate cut c: the first c nodes (by after-score) fall below the threshold
    best = None
    wrong_if_cut = sum(1 for k in nodes if k in punished)  # cut 0: punished ones are missed
    for c in range(len(nodes) + 1):
        if c > 0:
            k = nodes[c - 1]
            wrong_if_cut += -1 if k in punished else 1
        if c < len(nodes) and c > 0 and values[c] == values[c - 1]:
            continue  # thresholds cannot split equal scores
        lo = values[c - 1] if c > 0 else -math.inf
        hi = values[c] if c < len(nodes) else math.inf
        # tau' in (lo, hi] realises this cut
        t = min(max(tau, lo), hi)
        cand = (wrong_if_cut, abs(tau - t), t)
        if best is None or cand < best:
            best = cand
    mismatches, gap, tau_prime = best
    return MisreportReport(tau, tau_prime, gap, mismatches, len(punished), epsilon)


# -- overhead -------------------------------------------------------------------

def synthetic_graph(n: int, degree: int, rng: random.Random) -> ContributionGraph:
    g = ContributionGraph(nodes=set(range(n)))
    for i in range(n):
        for j in rng.sample(range(n - 1), degree):
            j = j + 1 if j >= i else j
            g.edges[(i, j)] = rng.uniform(1, 100)
    return g


def ranking_time_ms(n: int = BITCOIN_PEERS, walks: int = 2000, degree: int = 16, seed: int = 0,
                    repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time of one compute_scores call on a random graph."""
    g = synthetic_graph(n, degree, random.Random(seed))
    best = math.inf
    for r in range(repeats):
        t = time.perf_counter()
        compute_scores(g, 0, walks=walks, rng=r)
        best = min(best, time.perf_counter() - t)
    return best * 1000


def overhead_report(world: World, target_peers: int = BITCOIN_PEERS) -> dict:
    """Per-peer certificate bytes and their extrapolation to ``target_peers`` peers.

    A store only grows through what its owner issues and what it crawls, so
    per-peer bytes are bounded by issued plus crawled volume regardless of
    network size. The extrapolation scales the measured volume linearly in N
    and caps it by that bound.
    """
    cfg = world.config
    peers = world.active_peers
    ingested = [p.store.byte_counter for p in peers]
    stored = [len(p.store) * CERTIFICATE_SIZE for p in peers]
    exchanged = [p.cert_bytes_in for p in peers]
    issued_max = max(p.certs_issued for p in peers) * CERTIFICATE_SIZE
    crawls = math.ceil(cfg.sim_duration / cfg.crawl_period)
    capacity = crawls * cfg.crawl_batch * CERTIFICATE_SIZE + issued_max
    per_peer = max(ingested)
    linear = per_peer * target_peers / len(peers)
    return {
        "certificate_size": CERTIFICATE_SIZE,
        "rounds": cfg.rounds,
        "peers": len(peers),
        "cert_count_mean": statistics.fmean(len(p.store) for p in peers),
        "stored_bytes_mean": statistics.fmean(stored),
        "ingested_bytes_mean": statistics.fmean(ingested),
        "ingested_bytes_max": per_peer,
        "exchanged_bytes_mean": statistics.fmean(exchanged),
        "capacity_bytes": capacity,
        "extrapolated_linear_bytes": linear,
        "extrapolated_bytes": min(linear, capacity),
    }
