import random

import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from coopnet.meritrank import RankingTable
from coopnet.selection import (
    FULLNESS,
    TOP_K,
    BootstrapSchedule,
    advance_round,
    effective_gamma,
    handle_push_request,
    new_slot_table,
    plan_pull_requests,
)

SCHED = BootstrapSchedule(5, 100)


def test_ramp_values():
    assert effective_gamma(SCHED, 3) == 0
    assert effective_gamma(SCHED, 10) == 100
    # floor(100 * 3 / 6)
    assert effective_gamma(SCHED, 7) == 50
    assert effective_gamma(SCHED, 5) > 0


def test_ramp_enumeration_monotone():
    for b in range(0, 8):
        for final in (0, 1, 7, 13, 100):
            s = BootstrapSchedule(b, final)
            values = [effective_gamma(s, r) for r in range(3 * b + 3)]
            assert values[:b] == [0] * b
            assert all(x <= y for x, y in zip(values, values[1:]))
            assert values[-1] == final
            assert s.ramp()[-1] == final


def test_ramp_rejects_negative():
    with pytest.raises(ValueError):
        effective_gamma(SCHED, -1)
    with pytest.raises(ValueError):
        BootstrapSchedule(-1, 3)


def table(n=8, b=0, final=4, rng_seed=0, **kw):
    return new_slot_table(n, BootstrapSchedule(b, final), owner="me", rng=random.Random(rng_seed), **kw)


def test_partition_invariants():
    t = table(10, 0, 6)
    slots = t.pull_slots + t.push_slots
    assert sorted(slots) == list(range(10))
    assert t.gamma == 6 and t.beta == 4
    assert len(t.reputable_pull) == 3 and len(t.stranger_pull) == 2


def test_stranger_floor():
    t = table(4, 0, 10)
    assert t.beta == 1 and t.gamma == 3


def test_all_zero_scores_fill_only_strangers():
    t = table(8, 0, 4)
    ranking = RankingTable("me", {})
    plan = plan_pull_requests(t, ranking, ["a", "b", "c", "d", "e"], random.Random(1))
    assert {slot for _, slot in plan} <= set(t.stranger_pull)
    assert len(plan) == len(t.stranger_pull)


def test_sole_scored_peer_gets_reputable_slot():
    t = table(8, 0, 2)
    assert len(t.reputable_pull) == 1
    ranking = RankingTable("me", {"star": 1.0})
    for seed in range(20):
        plan = plan_pull_requests(t, ranking, ["star", "x", "y", "z"], random.Random(seed))
        assert ("star", t.reputable_pull[0]) in plan


def test_proportional_frequencies():
    t = table(2, 0, 1)
    assert len(t.reputable_pull) == 1
    ranking = RankingTable("me", {"B": 0.6, "C": 0.3, "D": 0.1})
    counts = {"B": 0, "C": 0, "D": 0}
    rng = random.Random(77)
    for _ in range(10_000):
        for peer, slot in plan_pull_requests(t, ranking, ["B", "C", "D"], rng):
            if slot in t.reputable_pull:
                counts[peer] += 1
    _, p = chisquare([counts["B"], counts["C"], counts["D"]], [6000, 3000, 1000])
    assert p > 0.001


def test_top_k_picks_best():
    t = table(8, 0, 4, mode=TOP_K)
    ranking = RankingTable("me", {"a": 0.1, "b": 0.5, "c": 0.4})
    plan = plan_pull_requests(t, ranking, ["a", "b", "c"], random.Random(0))
    rep = {p for p, s in plan if s in t.reputable_pull}
    assert rep == {"b", "c"}


def test_stranger_fallback_uses_known_peers():
    t = table(8, 0, 0)
    ranking = RankingTable("me", {p: 0.2 for p in "abcdef"})
    plan = plan_pull_requests(t, ranking, list("abcdef"), random.Random(0))
    assert len(plan) == len(t.stranger_pull)


def test_plan_never_selects_self_or_duplicates():
    t = table(12, 0, 6)
    ranking = RankingTable("me", {"a": 0.5, "b": 0.2})
    for seed in range(30):
        plan = plan_pull_requests(t, ranking, ["me", "a", "b", "c", "d", "e", "f"], random.Random(seed))
        peers = [p for p, _ in plan]
        assert "me" not in peers and len(peers) == len(set(peers))


def test_plan_is_deterministic():
    t = table(12, 0, 6)
    ranking = RankingTable("me", {"a": 0.5, "b": 0.2, "c": 0.1})
    known = list("abcdefgh")
    assert plan_pull_requests(t, ranking, known, random.Random(4)) == plan_pull_requests(
        t, ranking, known, random.Random(4)
    )


def test_bootstrap_ignores_ranking():
    t = table(8, 3, 4)
    known = list("abcdefgh")
    a = plan_pull_requests(t, RankingTable("me", {"a": 0.9}), known, random.Random(2))
    b = plan_pull_requests(t, RankingTable("me", {"h": 0.1, "c": 0.5}), known, random.Random(2))
    c = plan_pull_requests(t, None, known, random.Random(2))
    assert a == b == c


def test_push_accept_and_reject():
    t = table(4, 0, 2)
    assert len(t.stranger_push) == 1 and len(t.reputable_push) == 1
    assert handle_push_request(t, "x", 0.0) == t.stranger_push[0]
    assert handle_push_request(t, "x", 0.0) is None  # second request same round
    assert handle_push_request(t, "y", 0.0) is None  # stranger push full
    assert handle_push_request(t, "z", 0.4) == t.reputable_push[0]
    assert handle_push_request(t, "w", 0.4) is None
    with pytest.raises(ValueError):
        handle_push_request(t, "me", 0.0)


def test_push_cross_class_only_without_own_class():
    t = table(4, 0, 0)  # no reputable slots at all
    assert handle_push_request(t, "z", 0.4) in t.stranger_push


def test_fullness_policy_ignores_score():
    t = table(4, 0, 2, push_policy=FULLNESS)
    assert handle_push_request(t, "a", 0.0) is not None
    assert handle_push_request(t, "b", 0.0) is not None
    assert handle_push_request(t, "c", 0.9) is None


def test_advance_round():
    t = table(8, 2, 4)
    handle_push_request(t, "x", 0.0)
    t.assign_pull("y", t.pull_slots[0])
    a, b = advance_round(t, random.Random(5)), advance_round(t, random.Random(5))
    assert a == b
    assert a.round == 1 and not a.pull_assignments and not a.push_occupancy
    assert t.round == 0 and t.push_occupancy  # original untouched
    assert a.gamma == 0
    c = advance_round(a, random.Random(6))
    assert c.round == 2 and c.gamma == effective_gamma(c.schedule, 2) > 0


def test_assign_pull_guards():
    t = table(8, 0, 4)
    s = t.pull_slots
    t.assign_pull("a", s[0])
    with pytest.raises(ValueError):
        t.assign_pull("a", s[1])
    with pytest.raises(ValueError):
        t.assign_pull("b", s[0])
    with pytest.raises(ValueError):
        t.assign_pull("me", s[1])
    with pytest.raises(ValueError):
        t.assign_pull("b", t.push_slots[0])


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 24),
    b=st.integers(0, 5),
    final=st.integers(0, 30),
    rounds=st.integers(0, 12),
    seed=st.integers(0, 2**32),
)
def test_slot_invariants_property(n, b, final, rounds, seed):
    rng = random.Random(seed)
    t = new_slot_table(n, BootstrapSchedule(b, final), owner=0, rng=rng)
    peers = list(range(1, 40))
    for _ in range(rounds + 1):
        assert t.gamma + t.beta == n and t.beta >= 1
        assert sorted(t.pull_slots + t.push_slots) == list(range(n))
        if t.round < b:
            assert t.gamma == 0
        ranking = RankingTable(0, {p: rng.random() for p in peers if rng.random() < 0.5})
        for peer, slot in plan_pull_requests(t, ranking, peers, rng):
            t.assign_pull(peer, slot)
        for p in rng.sample(peers, 10):
            handle_push_request(t, p, ranking.score(p))
        taken = list(t.pull_assignments.values()) + list(t.push_occupancy.values())
        assert len(taken) == len(set(taken)) and 0 not in taken
        t = advance_round(t, rng)
