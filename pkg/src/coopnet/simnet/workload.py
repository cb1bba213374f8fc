"""Transaction and block arrival processes."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .config import SimConfig


@dataclass(frozen=True)
class TxEvent:
    time: float
    tx_id: int
    origin: int
    fee: int


@dataclass(frozen=True)
class BlockEvent:
    time: float
    block_id: int
    miner: int


def generate_workload(config: SimConfig, rng: random.Random, n_origins: int | None = None) -> tuple[list[TxEvent], list[BlockEvent]]:
    """Poisson transactions and exponential block intervals up to the quiet period."""
    n = n_origins if n_origins is not None else config.n_peers
    end = config.sim_duration - config.quiet_period
    tx_rng = random.Random(rng.getrandbits(64))
    block_rng = random.Random(rng.getrandbits(64))
    txs: list[TxEvent] = []
    if config.tx_rate > 0:
        t = tx_rng.expovariate(config.tx_rate)
        while t < end:
            fee = 0 if tx_rng.random() < config.spam_probability else 1 + tx_rng.randrange(100)
            txs.append(TxEvent(t, len(txs) + 1, tx_rng.randrange(n), fee))
            t += tx_rng.expovariate(config.tx_rate)
    blocks: list[BlockEvent] = []
    t = block_rng.expovariate(1.0 / config.block_interval_mean)
    while t < end:
        blocks.append(BlockEvent(t, len(blocks) + 1, block_rng.randrange(n)))
        t += block_rng.expovariate(1.0 / config.block_interval_mean)
    return txs, blocks
