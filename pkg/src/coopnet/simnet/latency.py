"""Link latency models."""
from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field

from .config import ConfigError, LatencyParams


@dataclass
class LatencyModel:
    median: float = 0.120
    sigma: float = 0.6
    table: dict = field(default_factory=dict)  # (src_region, dst_region) -> seconds
    regions: list = field(default_factory=list)
    jitter: float = 0.0
    peer_region: dict = field(default_factory=dict)

    @property
    def empirical(self) -> bool:
        return bool(self.table)

    def assign_regions(self, n_peers: int, rng: random.Random) -> None:
        if self.empirical:
            self.peer_region = {i: rng.choice(self.regions) for i in range(n_peers)}


def load_latency_table(path: str) -> tuple[dict, list]:
    """Read a ``src_region,dst_region,latency_ms`` CSV."""
    table: dict = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"src_region", "dst_region", "latency_ms"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: expected columns src_region,dst_region,latency_ms")
            for lineno, row in enumerate(reader, start=2):
                try:
                    ms = float(row["latency_ms"])
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}:{lineno}: bad latency_ms {row['latency_ms']!r}") from None
                if not ms > 0 or not row["src_region"] or not row["dst_region"]:
                    raise ConfigError(f"{path}:{lineno}: malformed row")
                table[(row["src_region"], row["dst_region"])] = ms / 1000.0
    except OSError as exc:
        raise ConfigError(f"cannot read latency table: {exc}") from exc
    if not table:
        raise ConfigError(f"{path}: empty latency table")
    regions = sorted({r for pair in table for r in pair})
    return table, regions


def build_latency_model(params: LatencyParams) -> LatencyModel:
    if params.model == "empirical":
        table, regions = load_latency_table(params.table)
        return LatencyModel(table=table, regions=regions, jitter=params.jitter)
    return LatencyModel(median=params.median_ms / 1000.0, sigma=params.sigma, jitter=params.jitter)


def sample_latency(model: LatencyModel, src, dst, rng: random.Random) -> float:
    """One-way delay in seconds for a message from ``src`` to ``dst``."""
    if src == dst:
        raise ValueError("no latency for a self link")
    if model.empirical:
        a = model.peer_region.get(src, model.regions[0])
        b = model.peer_region.get(dst, model.regions[0])
        base = model.table.get((a, b)) or model.table.get((b, a))
        if base is None:
            base = sum(model.table.values()) / len(model.table)
    else:
        base = model.median * math.exp(model.sigma * rng.gauss(0.0, 1.0)) if model.sigma else model.median
    if model.jitter:
        base *= 1.0 + rng.uniform(-model.jitter, model.jitter)
    return base
