"""Self-contained invariant and oracle checks behind ``coopnet verify``."""
from __future__ import annotations

import itertools
import random
from typing import Callable

from ..identity import NULL, generate_keypair, sign, verify
from ..ledger import (
    CERTIFICATE_SIZE,
    CertificateStore,
    ContributionGraph,
    create_certificate,
    decode_certificate,
    encode_certificate,
)
from ..meritrank import compute_scores, exact_scores, exact_set_score
from ..selection import BootstrapSchedule, effective_gamma
from ..simnet.config import desk_config
from ..simnet.world import World


def _random_graph(rng: random.Random, n: int, p: float = 0.3) -> ContributionGraph:
    g = ContributionGraph(nodes=set(range(n)))
    for a, b in itertools.permutations(range(n), 2):
        if rng.random() < p:
            g.add_edge(a, b, rng.uniform(0.1, 10))
    return g


def check_signatures() -> bool:
    kp = generate_keypair(1)
    sig = sign(kp, b"payload")
    return verify(kp.peer_id, b"payload", sig) and not verify(kp.peer_id, b"payloaD", sig)


def check_certificate_format() -> bool:
    a, b = generate_keypair(1), generate_keypair(2)
    cert = create_certificate(a, b.peer_id, 25, 2)
    blob = encode_certificate(cert)
    return CERTIFICATE_SIZE == 145 <= 220 and len(blob) == 145 and decode_certificate(blob) == cert


def check_merge_order() -> bool:
    keys = [generate_keypair(i, NULL) for i in range(5)]
    rng = random.Random(3)
    certs = [create_certificate(keys[i], keys[j].peer_id, rng.randint(0, 9), rng.randint(0, 3))
             for i, j in itertools.permutations(range(5), 2) for _ in range(2)]
    dumps = set()
    for _ in range(5):
        rng.shuffle(certs)
        store = CertificateStore(NULL)
        for c in certs + certs[:7]:
            store.ingest(c)
        dumps.add(store.dump())
    return len(dumps) == 1


def check_oracle_values() -> bool:
    g = ContributionGraph()
    g.add_edge("s", "b", 1)
    g.add_edge("b", "c", 1)
    t = exact_scores(g, "s")
    tri = ContributionGraph()
    tri.add_edge("s", "b", 1)
    tri.add_edge("b", "s", 1)
    return (abs(t.score("b") - 0.8) < 1e-12 and abs(t.score("c") - 0.64) < 1e-12
            and abs(exact_scores(tri, "s").score("b") - 0.8) < 1e-12)


def check_monte_carlo(graphs: int = 20, walks: int = 20_000) -> bool:
    rng = random.Random(11)
    ok = total = 0
    for k in range(graphs):
        g = _random_graph(rng, rng.randint(2, 20))
        ex, mc = exact_scores(g, 0), compute_scores(g, 0, walks=walks, rng=k)
        for node in g.nodes - {0}:
            total += 1
            ok += abs(ex.score(node) - mc.score(node)) <= 0.02
    return ok >= 0.99 * total


def check_sybil_isolation_and_bound() -> bool:
    rng = random.Random(5)
    g = _random_graph(rng, 15)
    g.add_edge(0, 1, 1.0)
    before = exact_scores(g, 0).scores
    passive = g.copy()
    for s in range(100, 110):
        passive.add_edge(s, 1, 50.0)
    if any(exact_scores(passive, 0).scores[k] != v for k, v in before.items()):
        return False
    active = g.copy()
    sybils = list(range(100, 110))
    for s in sybils:
        active.add_edge(1, s, 50.0)
        active.add_edge(s, 1, 50.0)
        for t in sybils:
            if s != t:
                active.add_edge(s, t, 50.0)
    t = exact_scores(active, 0)
    return exact_set_score(active, 0, sybils) <= t.score(1) + 1e-12


def check_ramp() -> bool:
    s = BootstrapSchedule(5, 100)
    ramp = [effective_gamma(s, r) for r in range(15)]
    return ramp[:5] == [0] * 5 and ramp[5] > 0 and ramp[10:] == [100] * 5 and ramp == sorted(ramp)


def check_simulation_determinism() -> bool:
    cfg = desk_config(n_peers=20, sim_duration=180.0, crypto="null", trace=True)
    return World(cfg).run().trace_digest() == World(cfg).run().trace_digest()


CHECKS: list[tuple[str, Callable[[], bool]]] = [
    ("signatures", check_signatures),
    ("certificate format", check_certificate_format),
    ("merge order independence", check_merge_order),
    ("oracle reference values", check_oracle_values),
    ("monte carlo vs oracle", check_monte_carlo),
    ("sybil isolation and bottleneck", check_sybil_isolation_and_bound),
    ("bootstrap ramp", check_ramp),
    ("simulation determinism", check_simulation_determinism),
]


def run_checks(report: Callable[[str, bool], None] | None = None) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception:  # a crash is a failed check
            ok = False
        all_ok &= ok
        if report:
            report(name, ok)
    return all_ok
