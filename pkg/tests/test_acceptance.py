"""End-to-end acceptance checks, one test per criterion.

Each test records a ``CRITERION k: PASS|FAIL`` line. The heavy experiments
run once per session and are shared between criteria.
"""
import itertools
import math
import random
import statistics
import time
from pathlib import Path

import pytest

from coopnet.ledger import CERTIFICATE_SIZE, ContributionGraph
from coopnet.meritrank import compute_scores, exact_scores
from coopnet.experiments.metrics import MEGABYTE
from coopnet.experiments.runner import run_experiment, summarize
from coopnet.experiments.spec import load_spec
from coopnet.simnet.config import desk_config
from coopnet.simnet.world import World

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"

pytestmark = pytest.mark.slow


def verdict(report, k, ok, detail):
    report(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


class Timed:
    def __init__(self, name, tmp):
        self.spec = load_spec(EXPERIMENTS / f"{name}.toml")
        t = time.perf_counter()
        self.results = run_experiment(self.spec, out_dir=tmp)
        self.seconds = time.perf_counter() - t
        self.csv = (Path(tmp) / f"{self.spec.name}.csv").read_bytes()
        self.summary = summarize(self.results)

    def mean(self, value, metric):
        return self.summary[value][metric]["mean"]

    def values(self, value, metric):
        return [r.metrics[metric] for r in self.results if r.value == value]


@pytest.fixture(scope="session")
def experiment(tmp_path_factory):
    cache = {}

    def get(name, run=0):
        if (name, run) not in cache:
            cache[name, run] = Timed(name, tmp_path_factory.mktemp(f"{name}-{run}"))
        return cache[name, run]
    return get


def random_graph(rng, n):
    g = ContributionGraph(nodes=set(range(n)))
    p = rng.uniform(0.1, 0.5)
    for a, b in itertools.permutations(range(n), 2):
        if rng.random() < p:
            g.add_edge(a, b, rng.uniform(0.1, 10.0))
    return g


def test_criterion_1_monte_carlo_matches_exact(report):
    rng = random.Random(2024)
    t = time.perf_counter()
    good = total = 0
    for k in range(100):
        g = random_graph(rng, rng.randint(2, 20))
        ex = exact_scores(g, 0, 0.2)
        mc = compute_scores(g, 0, 0.2, 20_000, rng=k)
        for node in sorted(g.nodes - {0}):
            total += 1
            good += abs(ex.score(node) - mc.score(node)) <= 0.02
    elapsed = time.perf_counter() - t
    share = good / total
    ok = share >= 0.99 and elapsed < 60
    assert verdict(report, 1, ok, f"{good}/{total} pairs within 0.02 ({share:.2%}), {elapsed:.1f} s")


def test_criterion_2_passive_sybils_gain_nothing(report, experiment):
    e = experiment("sybil_passive")
    counts = e.spec.points
    worst_exact = max(max(e.values(c, "exact_max_change")) for c in counts)
    worst_gain = max(max(e.values(c, "sybil_gain")) for c in counts)
    ok = max(counts) >= 67 and worst_exact == 0.0 and worst_gain < 1.0
    assert verdict(report, 2, ok, f"counts {counts}: max exact change {worst_exact!r}, "
                                  f"max MC gain {worst_gain:.4f}%")


def test_criterion_3_active_gain_is_bounded_and_plateaus(report, experiment):
    e = experiment("sybil_active")
    gains = {c: e.mean(c, "sybil_gain") for c in e.spec.points}
    bound = all(v == 1 for c in e.spec.points for v in e.values(c, "bottleneck_ok"))
    ok = all(g > 0 for g in gains.values()) and bound and gains[67] <= 1.5 * gains[33]
    series = ", ".join(f"{c}:{g:.1f}%" for c, g in gains.items())
    assert verdict(report, 3, ok, f"gain {series}; bottleneck {'holds' if bound else 'violated'}; "
                                  f"g67/g33 = {gains[67] / gains[33]:.3f}")


def test_criterion_4_ranking_loss(report, experiment):
    e = experiment("ranking_loss")
    ratios = e.spec.points
    means = [e.mean(r, "ranking_loss") for r in ratios]
    s = e.summary[0.9]["ranking_loss"]
    monotone = all(a >= b for a, b in zip(means, means[1:]))
    below = s["mean"] < 1 - 2 * s["sem"]
    ok = below and monotone and e.seconds < 600
    per_run = "below" if s["mean"] < 1 - 2 * s["std"] else "not below"
    series = ", ".join(f"{r}:{m:.3f}" for r, m in zip(ratios, means))
    assert verdict(report, 4, ok, f"loss {series}; at 0.9 mean {s['mean']:.3f}, 1-2*sem "
                                  f"{1 - 2 * s['sem']:.3f} (1-2*sd {1 - 2 * s['std']:.3f}: {per_run}); "
                                  f"{e.seconds:.0f} s")


def test_criterion_5_heatmap(report, experiment):
    e = experiment("heatmap")
    sel = e.mean(None, "heatmap_selfish_mean")
    hon = e.mean(None, "heatmap_honest_mean")
    ok = len(e.results) == 5 and sel < 0.5 * hon
    assert verdict(report, 5, ok, f"selfish {sel:.4f} vs honest {hon:.4f} (ratio {sel / hon:.3f})")


def test_criterion_6_selection_cuts_delay_penalty(report, experiment):
    e = experiment("convergence")
    off, on = e.spec.points
    p_off, p_on = e.values(off, "delay_penalty"), e.values(on, "delay_penalty")
    m_off, m_on = statistics.fmean(p_off), statistics.fmean(p_on)
    ratio = m_off / m_on if m_on > 0 else math.inf
    ok = ratio >= 5
    seeds = ", ".join(f"{a:.2f}/{b:.2f}" for a, b in zip(p_off, p_on))
    assert verdict(report, 6, ok, f"penalty gamma={off} {m_off:.2f} s vs gamma={on} {m_on:.2f} s "
                                  f"({ratio:.1f}x); per seed {seeds}")


def test_criterion_7_overhead(report, experiment):
    e = experiment("overhead")
    (r,) = e.results
    m = r.metrics
    mb = m["extrapolated_bytes"] / MEGABYTE
    ms = r.info["ranking_ms"]
    ok = CERTIFICATE_SIZE <= 220 and m["rounds"] == 30 and mb <= 10 and ms <= 1000
    assert verdict(report, 7, ok, f"cert {CERTIFICATE_SIZE} B; {m['rounds']} rounds, "
                                  f"{mb:.2f} MB/peer at 7518 (linear {m['extrapolated_linear_bytes'] / MEGABYTE:.1f} MB); "
                                  f"ranking {ms:.0f} ms")


def test_criterion_8_misreport_gap(report, experiment):
    passive = experiment("sybil_passive")
    active = experiment("sybil_active")
    gp = max(r.metrics["misreport_gap"] for r in passive.results)
    ga = max(r.metrics["misreport_gap"] for r in active.results)
    ok = gp == 0.0 and ga <= 0.05
    assert verdict(report, 8, ok, f"passive max gap {gp!r}, active max gap {ga:.5f}")


def test_criterion_9_reproducible_csv(report, experiment):
    same = {}
    for name in ("ranking_loss", "convergence"):
        same[name] = experiment(name).csv == experiment(name, run=1).csv
    ok = all(same.values())
    assert verdict(report, 9, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))


def test_criterion_10_liveness(report):
    cfg = desk_config(n_peers=50, crypto="null", loss_probability=0.0, selfish_fraction=0.0,
                      spam_probability=0.0, quiet_period=180.0, crawl_period=2.0, crawl_batch=512)
    w = World(cfg).run()
    txs = [t for t, fee in w.tx_fee.items() if fee]
    reached = sum(all(t in p.seen_tx for p in w.peers) for t in txs)
    dumps = {p.store.dump() for p in w.peers}
    ok = txs and reached == len(txs) and len(dumps) == 1
    assert verdict(report, 10, ok, f"{reached}/{len(txs)} tx at 100% of peers; "
                                   f"{len(dumps)} distinct store state(s)")
