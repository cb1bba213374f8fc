"""Personalized cooperation scores from alpha-terminating random walks.

The score of ``j`` seen from ``seed`` is the fraction of walks from ``seed``
that visit ``j`` at least once. At every node a walk stops with probability
``alpha`` (or when the node has no out-edges); otherwise it follows an
out-edge chosen proportionally to its weight.

Randomness is counter based: the uniforms used by walk ``k`` at step ``t`` are
a hash of ``(key, k, t)``. A walk's trajectory therefore depends only on the
key, its index and the out-edge lists it traverses, never on how many walks
run, in which order, or how the rest of the graph is indexed.

:func:`exact_scores` is an independent first-passage solver used to check the
Monte Carlo estimate on small graphs.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .ledger import ContributionGraph

DEFAULT_ALPHA = 0.2
DEFAULT_WALKS = 2000
EXACT_MAX_NODES = 200

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STEP = 0xD6E8FEB86659FD93


class RankingError(ValueError):
    pass


@dataclass
class RankingTable:
    seed: object
    scores: dict = field(default_factory=dict)
    walk_count: int = 0
    alpha: float = DEFAULT_ALPHA

    def score(self, peer) -> float:
        return self.scores.get(peer, 0.0)

    def ranked(self) -> list:
        """Peers by descending score; ties broken by peer ordering."""
        return sorted(self.scores, key=lambda p: (-self.scores[p], p))


# -- counter-based uniforms ---------------------------------------------------

def _splitmix(x: int) -> int:
    z = (x + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * _MIX1) & _M64
    z = ((z ^ (z >> 27)) * _MIX2) & _M64
    return z ^ (z >> 31)


_INV32 = 1.0 / (1 << 32)


def _walk_base(key: int, walk: int) -> int:
    return _splitmix(key ^ ((walk * _GOLDEN) & _M64))


def _step_uniforms(base: int, step: int) -> tuple[float, float]:
    """(stop, choose) uniforms for one step, from the two halves of one hash."""
    h = _splitmix(base ^ (((step + 1) * _STEP) & _M64))
    return (h >> 32) * _INV32, (h & 0xFFFFFFFF) * _INV32


def _splitmix_np(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _walk_base_np(key: int, walks: np.ndarray) -> np.ndarray:
    return _splitmix_np(np.uint64(key) ^ (walks.astype(np.uint64) * np.uint64(_GOLDEN)))


def _step_uniforms_np(base: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
    h = _splitmix_np(base ^ np.uint64(((step + 1) * _STEP) & _M64))
    stop = (h >> np.uint64(32)).astype(np.float64) * _INV32
    choose = (h & np.uint64(0xFFFFFFFF)).astype(np.float64) * _INV32
    return stop, choose


def walk_key(rng) -> int:
    """Turn an int seed or a generator into a 64-bit walk key."""
    if isinstance(rng, (int, np.integer)):
        return int(rng) & _M64
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 1 << 64, dtype=np.uint64))
    if isinstance(rng, random.Random):
        return rng.getrandbits(64)
    raise TypeError(f"cannot derive a walk key from {type(rng).__name__}")


# -- graph compilation --------------------------------------------------------

class CompiledGraph:
    """CSR form of a contribution graph, nodes and out-edges in peer order."""

    def __init__(self, graph: ContributionGraph):
        self.nodes = sorted(graph.nodes, key=node_key)
        index = self.index = {n: i for i, n in enumerate(self.nodes)}
        rows: list[list[tuple]] = [[] for _ in self.nodes]
        for (src, dst), w in graph.edges.items():
            if w > 0:
                rows[index[src]].append((index[dst], w))
        indptr = [0]
        targets: list[int] = []
        cum: list[float] = []
        totals: list[float] = []
        for row in rows:
            row.sort()
            acc = 0.0
            for dst, w in row:
                acc += w
                targets.append(dst)
                cum.append(acc)
            totals.append(acc)
            indptr.append(len(targets))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.cum = np.asarray(cum, dtype=np.float64)
        self.totals = np.asarray(totals, dtype=np.float64)
        self.degree = np.diff(self.indptr)
        self.max_degree = int(self.degree.max()) if len(self.degree) else 0


def node_key(node):
    """Sort key equivalent to the nodes' own ordering, cheaper for peer ids."""
    return getattr(node, "public_key", node)


def compile_graph(graph) -> CompiledGraph:
    return graph if isinstance(graph, CompiledGraph) else CompiledGraph(graph)


# -- walks --------------------------------------------------------------------

def random_walk(graph: ContributionGraph, start, alpha: float, rng, walk_index: int = 0) -> list:
    """Trace one alpha-terminating walk (scalar reference implementation)."""
    if not 0 < alpha < 1:
        raise RankingError("alpha must lie in (0, 1)")
    if start not in graph.nodes:
        raise RankingError(f"{start!r} is not in the graph")
    key = walk_key(rng)
    out: dict = {}
    for (src, dst), w in graph.edges.items():
        if w > 0:
            out.setdefault(src, []).append((dst, w))
    for row in out.values():
        row.sort(key=lambda e: e[0])
    base = _walk_base(key, walk_index)
    trace = [start]
    node, step = start, 0
    while True:
        row = out.get(node)
        u_stop, u_choose = _step_uniforms(base, step)
        if not row or u_stop < alpha:
            return trace
        total = 0.0
        cum = []
        for _, w in row:
            total += w
            cum.append(total)
        target = u_choose * total
        # first edge whose cumulative weight exceeds the target
        chosen = len(row) - 1
        for i, c in enumerate(cum):
            if target < c:
                chosen = i
                break
        node = row[chosen][0]
        trace.append(node)
        step += 1


def _walk_visits(cg: CompiledGraph, start: int, alpha: float, key: int, walks: int):
    """Run ``walks`` walks in lock-step; return (walk ids, node ids) of every visit."""
    walk_ids = np.arange(walks, dtype=np.int64)
    base = _walk_base_np(key, walk_ids)
    pos = np.full(walks, start, dtype=np.int64)
    seen_w = [walk_ids]
    seen_n = [pos]
    step = 0
    while len(walk_ids):
        u_stop, u_choose = _step_uniforms_np(base, step)
        alive = (cg.degree[pos] > 0) & (u_stop >= alpha)
        walk_ids, pos, base, u_choose = walk_ids[alive], pos[alive], base[alive], u_choose[alive]
        if not len(walk_ids):
            break
        target = u_choose * cg.totals[pos]
        lo = cg.indptr[pos]
        hi = cg.indptr[pos + 1] - 1
        # smallest index in [lo, hi] with cum > target
        while True:
            open_ = lo < hi
            if not open_.any():
                break
            mid = (lo + hi) >> 1
            go_right = open_ & (cg.cum[mid] <= target)
            go_left = open_ & ~go_right
            lo = np.where(go_right, mid + 1, lo)
            hi = np.where(go_left, mid, hi)
        pos = cg.targets[lo]
        seen_w.append(walk_ids)
        seen_n.append(pos)
        step += 1
    return np.concatenate(seen_w), np.concatenate(seen_n)


def walk_traces(graph, start, alpha: float, walks: int, rng) -> list[list]:
    """Traces of walks ``0..walks-1`` as produced by the vectorized engine."""
    cg = compile_graph(graph)
    key = walk_key(rng)
    w, n = _walk_visits(cg, cg.index[start], alpha, key, walks)
    order = np.argsort(w, kind="stable")
    traces: list[list] = [[] for _ in range(walks)]
    for wi, ni in zip(w[order].tolist(), n[order].tolist()):
        traces[wi].append(cg.nodes[ni])
    return traces


def compute_scores(graph, seed, alpha: float = DEFAULT_ALPHA, walks: int = DEFAULT_WALKS, rng=0) -> RankingTable:
    """Monte Carlo scores: share of ``walks`` walks from ``seed`` visiting each peer.

    Peers never visited are absent from the table.
    """
    if not 0 < alpha < 1:
        raise RankingError("alpha must lie in (0, 1)")
    if walks < 1:
        raise RankingError("need at least one walk")
    cg = compile_graph(graph)
    if seed not in cg.index:
        raise RankingError(f"seed {seed!r} is not in the graph")
    s = cg.index[seed]
    w, n = _walk_visits(cg, s, alpha, walk_key(rng), walks)
    mask = n != s
    n_nodes = len(cg.nodes)
    # binary counting: each walk counts once per node
    pairs = np.unique(w[mask] * n_nodes + n[mask])
    counts = np.bincount(pairs % n_nodes, minlength=n_nodes)
    hit = np.nonzero(counts)[0]
    scores = {cg.nodes[i]: int(counts[i]) / walks for i in hit.tolist()}
    return RankingTable(seed, scores, walks, alpha)


# -- exact oracle -------------------------------------------------------------

def _reachable(graph: ContributionGraph, seed) -> list:
    out: dict = {}
    for (src, dst), w in graph.edges.items():
        if w > 0:
            out.setdefault(src, []).append(dst)
    seen = {seed}
    stack = [seed]
    while stack:
        u = stack.pop()
        for v in out.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return sorted(seen)


def _transition(graph: ContributionGraph, nodes: list) -> np.ndarray:
    index = {n: i for i, n in enumerate(nodes)}
    P = np.zeros((len(nodes), len(nodes)))
    for (src, dst), w in graph.edges.items():
        if w > 0 and src in index:
            P[index[src], index[dst]] = w
    rows = P.sum(axis=1)
    nz = rows > 0
    P[nz] /= rows[nz, None]
    return P


def _check_exact_inputs(graph: ContributionGraph, seed, alpha: float, max_nodes: int) -> None:
    if not 0 < alpha < 1:
        raise RankingError("alpha must lie in (0, 1)")
    if seed not in graph.nodes:
        raise RankingError(f"seed {seed!r} is not in the graph")
    if len(graph.nodes) > max_nodes:
        raise RankingError(f"exact oracle limited to {max_nodes} nodes, graph has {len(graph.nodes)}")


def _hit_probability(P: np.ndarray, alpha: float, s: int, targets: np.ndarray) -> float:
    """P(walk from ``s`` ever steps onto a node flagged in ``targets``)."""
    A = (1.0 - alpha) * P
    b = A[:, targets].sum(axis=1)
    M = np.eye(len(P)) - A
    M[:, targets] += A[:, targets]  # drop continuation through absorbing targets
    h = np.linalg.solve(M, b)
    return float(b[s] + A[s, ~targets] @ h[~targets])


def exact_scores(graph: ContributionGraph, seed, alpha: float = DEFAULT_ALPHA, max_nodes: int = EXACT_MAX_NODES) -> RankingTable:
    """Exact visit probabilities by first-passage analysis (desk-scale oracle).

    Only the part of the graph reachable from ``seed`` enters the linear
    systems, so unreachable structure cannot perturb the result even by
    rounding. Unreachable peers score exactly 0.
    """
    _check_exact_inputs(graph, seed, alpha, max_nodes)
    nodes = _reachable(graph, seed)
    P = _transition(graph, nodes)
    s = nodes.index(seed)
    scores = {n: 0.0 for n in graph.nodes if n != seed}
    for j, node in enumerate(nodes):
        if node == seed:
            continue
        flag = np.zeros(len(nodes), dtype=bool)
        flag[j] = True
        scores[node] = _hit_probability(P, alpha, s, flag)
    return RankingTable(seed, scores, 0, alpha)


def exact_set_score(graph: ContributionGraph, seed, targets: Iterable, alpha: float = DEFAULT_ALPHA,
                    max_nodes: int = EXACT_MAX_NODES) -> float:
    """Exact probability that a walk from ``seed`` visits any node of ``targets``."""
    _check_exact_inputs(graph, seed, alpha, max_nodes)
    nodes = _reachable(graph, seed)
    wanted = set(targets) - {seed}
    flag = np.array([n in wanted for n in nodes], dtype=bool)
    if not flag.any():
        return 0.0
    return _hit_probability(_transition(graph, nodes), alpha, nodes.index(seed), flag)


# -- metrics ------------------------------------------------------------------

def ranking_loss(tables: Iterable[RankingTable] | Mapping, selfish: Iterable, honest: Iterable) -> float:
    """Mean selfish-peer score over mean honest-peer score, across evaluators.

    ``tables`` are the honest evaluators' ranking tables. An evaluator's own
    entry is never counted. Returns ``nan`` when honest peers score nothing.
    """
    selfish, honest = set(selfish), set(honest)
    if not honest:
        raise RankingError("honest set must be non-empty")
    if not selfish:
        raise RankingError("selfish set must be non-empty")
    if selfish & honest:
        raise RankingError("selfish and honest sets overlap")
    if isinstance(tables, Mapping):
        tables = tables.values()
    s_sum = s_n = h_sum = h_n = 0
    for table in tables:
        for peer in selfish:
            if peer != table.seed:
                s_sum += table.score(peer)
                s_n += 1
        for peer in honest:
            if peer != table.seed:
                h_sum += table.score(peer)
                h_n += 1
    if not s_n or not h_n or h_sum == 0:
        return float("nan")
    return (s_sum / s_n) / (h_sum / h_n)
