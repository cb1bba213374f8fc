"""Slot-based peer selection.

Each peer owns ``n`` slots per round: ``gamma`` for reputable peers and
``beta = n - gamma`` for strangers (peers it scores 0). Each class is split
into pull slots, filled by the owner's own requests, and push slots, filled
by other peers' requests. Slot roles are reshuffled every round.

During the first ``bootstrap_rounds`` rounds ``gamma`` is 0 and rankings are
ignored; afterwards ``gamma`` ramps linearly to its final value.
"""
from __future__ import annotations

import copy
import random
from dataclasses import dataclass, field
from typing import Iterable

from .meritrank import RankingTable

PROPORTIONAL = "proportional"
TOP_K = "top-k"
SELECTION_MODES = (PROPORTIONAL, TOP_K)

BY_CLASS = "class"
FULLNESS = "fullness"
PUSH_POLICIES = (BY_CLASS, FULLNESS)


@dataclass(frozen=True)
class BootstrapSchedule:
    bootstrap_rounds: int = 0
    final_gamma: int = 0

    def __post_init__(self):
        if self.bootstrap_rounds < 0 or self.final_gamma < 0:
            raise ValueError("bootstrap_rounds and final_gamma must be non-negative")

    def ramp(self) -> list[int]:
        """Gamma for every round until it reaches ``final_gamma``."""
        return [effective_gamma(self, r) for r in range(2 * self.bootstrap_rounds + 1)]


def effective_gamma(schedule: BootstrapSchedule, round: int) -> int:
    if round < 0:
        raise ValueError("round must be non-negative")
    b, final = schedule.bootstrap_rounds, schedule.final_gamma
    if round < b:
        return 0
    if round >= 2 * b:
        return final
    return final * (round - b + 1) // (b + 1)


def _split(slots: list[int]) -> tuple[list[int], list[int]]:
    half = (len(slots) + 1) // 2  # pull-heavy rounding
    return slots[:half], slots[half:]


@dataclass
class SlotTable:
    n: int
    schedule: BootstrapSchedule
    owner: object = None
    round: int = 0
    mode: str = PROPORTIONAL
    push_policy: str = BY_CLASS
    reputable_pull: list = field(default_factory=list)
    reputable_push: list = field(default_factory=list)
    stranger_pull: list = field(default_factory=list)
    stranger_push: list = field(default_factory=list)
    pull_assignments: dict = field(default_factory=dict)
    push_occupancy: dict = field(default_factory=dict)

    @property
    def gamma(self) -> int:
        return len(self.reputable_pull) + len(self.reputable_push)

    @property
    def beta(self) -> int:
        return len(self.stranger_pull) + len(self.stranger_push)

    @property
    def bootstrapping(self) -> bool:
        return self.round < self.schedule.bootstrap_rounds

    @property
    def pull_slots(self) -> list[int]:
        return self.reputable_pull + self.stranger_pull

    @property
    def push_slots(self) -> list[int]:
        return self.reputable_push + self.stranger_push

    def occupants(self) -> set:
        return set(self.pull_assignments.values()) | set(self.push_occupancy.values())

    def assign_pull(self, peer, slot: int) -> None:
        if slot not in self.pull_slots:
            raise ValueError(f"slot {slot} is not a pull slot")
        if slot in self.pull_assignments:
            raise ValueError(f"pull slot {slot} already assigned")
        if peer == self.owner or peer in self.occupants():
            raise ValueError(f"{peer!r} cannot take another slot")
        self.pull_assignments[slot] = peer

    def release_pull(self, slot: int) -> None:
        self.pull_assignments.pop(slot, None)


def _partition(table: SlotTable, rng: random.Random) -> None:
    n = table.n
    gamma = effective_gamma(table.schedule, table.round)
    if n >= 1:
        gamma = min(gamma, n - 1)  # keep at least one stranger slot
    order = rng.sample(range(n), n)
    table.reputable_pull, table.reputable_push = _split(order[:gamma])
    table.stranger_pull, table.stranger_push = _split(order[gamma:])


def new_slot_table(n: int, schedule: BootstrapSchedule, owner=None, rng: random.Random | None = None,
                   mode: str = PROPORTIONAL, push_policy: str = BY_CLASS) -> SlotTable:
    if n < 0:
        raise ValueError("slot count must be non-negative")
    if mode not in SELECTION_MODES:
        raise ValueError(f"unknown selection mode {mode!r}")
    if push_policy not in PUSH_POLICIES:
        raise ValueError(f"unknown push policy {push_policy!r}")
    table = SlotTable(n, schedule, owner, 0, mode, push_policy)
    _partition(table, rng or random.Random(0))
    return table


def advance_round(table: SlotTable, rng: random.Random) -> SlotTable:
    """Next round's table: occupancy cleared and slot roles reshuffled."""
    nxt = copy.copy(table)
    nxt.round = table.round + 1
    nxt.pull_assignments = {}
    nxt.push_occupancy = {}
    _partition(nxt, rng)
    return nxt


def _weighted_sample(peers: list, weights: list[float], k: int, rng: random.Random) -> list:
    peers, weights = list(peers), list(weights)
    picked = []
    while peers and len(picked) < k:
        (i,) = rng.choices(range(len(peers)), weights=weights)
        picked.append(peers.pop(i))
        weights.pop(i)
    return picked


def plan_pull_requests(table: SlotTable, ranking: RankingTable | None, known_peers: Iterable,
                       rng: random.Random) -> list[tuple[object, int]]:
    """Choose whom to ask for each free pull slot.

    Reputable pull slots draw from positively scored peers (proportionally to
    score, or the best ones in top-k mode). Stranger pull slots draw uniformly
    from peers scored 0; if there are too few of those, the remainder is drawn
    uniformly from the other known peers. During bootstrap the ranking is
    ignored and every known peer counts as a stranger.
    """
    taken = table.occupants()
    candidates = sorted(p for p in set(known_peers) if p != table.owner and p not in taken)
    free_rep = [s for s in table.reputable_pull if s not in table.pull_assignments]
    free_str = [s for s in table.stranger_pull if s not in table.pull_assignments]

    if table.bootstrapping or ranking is None:
        positive: list = []
        strangers = candidates
    else:
        positive = [p for p in candidates if ranking.score(p) > 0]
        strangers = [p for p in candidates if ranking.score(p) <= 0]

    plan: list[tuple[object, int]] = []
    chosen: set = set()
    if free_rep and positive:
        if table.mode == TOP_K:
            best = sorted(positive, key=lambda p: (-ranking.score(p), p))[: len(free_rep)]
        else:
            best = _weighted_sample(positive, [ranking.score(p) for p in positive], len(free_rep), rng)
        plan.extend(zip(best, free_rep))
        chosen.update(best)

    if free_str:
        picks = rng.sample(strangers, min(len(free_str), len(strangers)))
        short = len(free_str) - len(picks)
        if short > 0:
            used = chosen | set(picks)
            rest = [p for p in candidates if p not in used]
            picks += rng.sample(rest, min(short, len(rest)))
        plan.extend(zip(picks, free_str))
    return plan


def handle_push_request(table: SlotTable, requester, requester_score: float) -> int | None:
    """Try to seat ``requester`` in a push slot; return the slot or ``None`` if rejected.

    Scored requesters go to reputable push slots and strangers to stranger
    push slots. Either may use the other class only when the table has no
    slot of its own class at all.
    """
    if requester == table.owner:
        raise ValueError("a peer cannot connect to itself")
    if requester in table.occupants():
        return None
    if table.push_policy == FULLNESS:
        classes = [table.push_slots]
    elif requester_score > 0 and not table.bootstrapping:
        classes = [table.reputable_push] if table.reputable_push else [table.stranger_push]
    else:
        classes = [table.stranger_push] if table.stranger_push else [table.reputable_push]
    for slots in classes:
        for slot in slots:
            if slot not in table.push_occupancy:
                table.push_occupancy[slot] = requester
                return slot
    return None
