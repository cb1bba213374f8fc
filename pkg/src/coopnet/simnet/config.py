"""Simulation configuration.

Configs are TOML documents whose keys map one-to-one onto :class:`SimConfig`;
nested tables map onto the nested parameter blocks. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli

from ..identity import SCHEMES
from ..selection import PUSH_POLICIES, SELECTION_MODES

DAY = 86400.0


class ConfigError(ValueError):
    pass


@dataclass
class SelectionParams:
    n: int = 16
    final_gamma: int = 13
    bootstrap_rounds: int = 2
    selection_mode: str = "proportional"
    push_policy: str = "class"
    # honest relays go to own pull picks first ("pull") or to any neighbor ("any")
    relay_targets: str = "any"


@dataclass
class RankingParams:
    alpha: float = 0.2
    walks: int = 2000


@dataclass
class LatencyParams:
    model: str = "lognormal"
    median_ms: float = 120.0
    sigma: float = 0.6
    table: str = ""
    jitter: float = 0.0


@dataclass
class SybilParams:
    mode: str = "none"  # none | passive | active
    count: int = 0
    attacker: int = 0  # peer index
    topology: str = "dense"  # dense | ring
    weight: float = 0.0  # 0 selects 10x the mean honest edge weight


@dataclass
class SimConfig:
    n_peers: int = 200
    sim_duration: float = 600.0
    round_length: float = 60.0
    tx_rate: float = 0.5
    block_interval_mean: float = 60.0
    spam_probability: float = 0.01
    quiet_period: float = 0.0
    fanout: int = 8
    gossip_period: float = 0.5
    crawl_period: float = 10.0
    crawl_batch: int = 32
    loss_probability: float = 0.01
    selfish_fraction: float = 0.0
    share_ratio: float = 1.0
    tx_credit: float = 1.0
    block_credit: float = 10.0
    crypto: str = "ed25519"
    master_seed: int = 1
    trace: bool = False
    selection: SelectionParams = field(default_factory=SelectionParams)
    ranking: RankingParams = field(default_factory=RankingParams)
    latency: LatencyParams = field(default_factory=LatencyParams)
    sybil: SybilParams = field(default_factory=SybilParams)

    @property
    def rounds(self) -> int:
        # no round ends inside the trailing quiet period
        return int((self.sim_duration - self.quiet_period) // self.round_length + 1e-9)

    @property
    def n_selfish(self) -> int:
        return int(round(self.selfish_fraction * self.n_peers))

    def validate(self) -> "SimConfig":
        positive = ("sim_duration", "round_length", "block_interval_mean", "crawl_period")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_peers < 1:
            raise ConfigError("n_peers must be at least 1")
        if self.tx_rate < 0 or self.gossip_period < 0 or self.quiet_period < 0:
            raise ConfigError("rates and periods must be non-negative")
        if self.quiet_period >= self.sim_duration:
            raise ConfigError("quiet_period must be shorter than sim_duration")
        if not 0 <= self.loss_probability <= 1:
            raise ConfigError("loss_probability must lie in [0, 1]")
        for name in ("share_ratio", "selfish_fraction", "spam_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.fanout < 1 or self.crawl_batch < 0:
            raise ConfigError("fanout must be >= 1 and crawl_batch >= 0")
        if self.crypto not in SCHEMES:
            raise ConfigError(f"crypto must be one of {SCHEMES}")
        sel = self.selection
        if sel.n < 1 or not 0 <= sel.final_gamma <= sel.n or sel.bootstrap_rounds < 0:
            raise ConfigError("selection needs n >= 1, 0 <= final_gamma <= n, bootstrap_rounds >= 0")
        if sel.selection_mode not in SELECTION_MODES:
            raise ConfigError(f"selection_mode must be one of {SELECTION_MODES}")
        if sel.push_policy not in PUSH_POLICIES:
            raise ConfigError(f"push_policy must be one of {PUSH_POLICIES}")
        if sel.relay_targets not in ("any", "pull"):
            raise ConfigError("relay_targets must be 'any' or 'pull'")
        if not 0 < self.ranking.alpha < 1 or self.ranking.walks < 1:
            raise ConfigError("ranking needs 0 < alpha < 1 and walks >= 1")
        lat = self.latency
        if lat.model not in ("lognormal", "empirical"):
            raise ConfigError("latency.model must be 'lognormal' or 'empirical'")
        if lat.model == "empirical" and not lat.table:
            raise ConfigError("latency.table is required for the empirical model")
        if lat.median_ms <= 0 or lat.sigma < 0 or not 0 <= lat.jitter < 1:
            raise ConfigError("latency needs median_ms > 0, sigma >= 0, 0 <= jitter < 1")
        syb = self.sybil
        if syb.mode not in ("none", "passive", "active"):
            raise ConfigError("sybil.mode must be none, passive or active")
        if syb.topology not in ("dense", "ring"):
            raise ConfigError("sybil.topology must be dense or ring")
        if syb.count < 0 or syb.weight < 0 or not 0 <= syb.attacker < self.n_peers:
            raise ConfigError("sybil needs count >= 0, weight >= 0 and a valid attacker index")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        data = self.to_dict()
        data.pop("master_seed")
        data.pop("trace")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "SimConfig":
        """Copy with dotted-path overrides, e.g. ``{"selection.n": 8}``."""
        cfg = from_dict(self.to_dict())
        for path, value in changes.items():
            set_path(cfg, path, value)
        return cfg


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else fields[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}{name}.")
        else:
            kwargs[name] = _coerce(default, value, where + name)
    return cls(**kwargs)


def _coerce(default, value, name: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def from_dict(data: dict) -> SimConfig:
    return _build(SimConfig, data, "")


def set_path(cfg: SimConfig, path: str, value) -> None:
    *parents, leaf = path.split(".")
    target = cfg
    for part in parents:
        if not hasattr(target, part) or not dataclasses.is_dataclass(getattr(target, part)):
            raise ConfigError(f"unknown config key {path!r}")
        target = getattr(target, part)
    if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigError(f"unknown config key {path!r}")
    setattr(target, leaf, _coerce(getattr(target, leaf), value, path))


def has_path(path: str) -> bool:
    """True if ``path`` names a settable leaf of SimConfig."""
    try:
        if dataclasses.is_dataclass(getattr_path(SimConfig(), path)):
            return False
        set_path(SimConfig(), path, getattr_path(SimConfig(), path))
    except (ConfigError, AttributeError):
        return False
    return True


def getattr_path(cfg, path: str):
    for part in path.split("."):
        cfg = getattr(cfg, part)
    return cfg


def load_config(path: str | Path) -> SimConfig:
    with open(path, "rb") as fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data).validate()


def desk_config(**overrides) -> SimConfig:
    """Desk-scale defaults: 200 peers, ten one-minute rounds."""
    return SimConfig().replace(**overrides).validate()


def paper_config(**overrides) -> SimConfig:
    """The full Bitcoin-scale setting. Long running."""
    base = SimConfig(
        n_peers=7518,
        sim_duration=30 * DAY,
        round_length=DAY,
        tx_rate=2.5,
        block_interval_mean=600.0,
        crawl_period=600.0,
        crawl_batch=16,
        selection=SelectionParams(n=125, final_gamma=100, bootstrap_rounds=2),
    )
    return base.replace(**overrides).validate()
