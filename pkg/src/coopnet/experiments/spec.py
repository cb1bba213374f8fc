"""Experiment specification files.

An experiment file is TOML::

    name = "ranking-loss"
    repetitions = 10
    outputs = ["ranking_loss"]

    [base]            # any SimConfig key, nested tables allowed
    n_peers = 100

    [sweep]
    parameter = "share_ratio"
    values = [1.0, 0.9, 0.7, 0.5, 0.2]

    [metrics]         # optional metric parameters
    coverage = 0.99

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from ..simnet.config import ConfigError, SimConfig, desk_config, has_path, paper_config, set_path

OUTPUTS = ("ranking_loss", "heatmap", "convergence", "sybil_gain", "misreport", "overhead")
SCALES = ("desk", "paper")


@dataclass
class MetricParams:
    coverage: float = 0.99
    window_start: float = -1.0  # negative: after the connection ramp
    tau: float = -1.0  # negative: median of the no-attack scores
    epsilon: float = 0.05
    exact: bool = True
    ranking_walks: int = 2000
    ranking_graph_peers: int = 7518


@dataclass
class ExperimentSpec:
    name: str
    base: dict = field(default_factory=dict)
    parameter: str | None = None
    values: list = field(default_factory=list)
    repetitions: int = 1
    first_seed: int = 1
    outputs: list = field(default_factory=lambda: ["ranking_loss"])
    metrics: MetricParams = field(default_factory=MetricParams)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.first_seed, self.first_seed + self.repetitions))

    @property
    def points(self) -> list:
        return list(self.values) if self.parameter else [None]

    def config(self, scale: str = "desk", value=None, seed: int | None = None) -> SimConfig:
        cfg = base_config(scale)
        for path, v in flatten(self.base).items():
            set_path(cfg, path, v)
        if self.parameter is not None and value is not None:
            set_path(cfg, self.parameter, value)
        if seed is not None:
            cfg.master_seed = seed
        return cfg.validate()

    def validate(self, scale: str = "desk") -> "ExperimentSpec":
        if not self.name:
            raise ConfigError("experiment needs a name")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad or not self.outputs:
            raise ConfigError(f"outputs must be a non-empty subset of {OUTPUTS}; got {bad or 'nothing'}")
        if self.parameter is not None:
            if not has_path(self.parameter):
                raise ConfigError(f"unknown sweep key {self.parameter!r}")
            if not self.values:
                raise ConfigError("sweep needs at least one value")
        m = self.metrics
        if not 0 < m.coverage <= 1 or m.epsilon < 0 or m.ranking_walks < 1:
            raise ConfigError("metrics need 0 < coverage <= 1, epsilon >= 0, ranking_walks >= 1")
        for value in self.points:
            self.config(scale, value)  # raises on any bad combination
        return self


def base_config(scale: str) -> SimConfig:
    if scale not in SCALES:
        raise ConfigError(f"scale must be one of {SCALES}")
    return desk_config() if scale == "desk" else paper_config()


def flatten(table: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in table.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, path + "."))
        else:
            out[path] = value
    return out


def _metric_params(data: dict) -> MetricParams:
    known = {f.name: f.default for f in dataclasses.fields(MetricParams)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in metrics: {', '.join(sorted(unknown))}")
    out = {}
    for key, value in data.items():
        want = type(known[key])
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, want) or (want is int and isinstance(value, bool)):
            raise ConfigError(f"metrics.{key} must be {want.__name__}")
        if isinstance(value, float) and math.isnan(value):
            raise ConfigError(f"metrics.{key} must be a number")
        out[key] = value
    return MetricParams(**out)


def spec_from_dict(data: dict) -> ExperimentSpec:
    allowed = {"name", "base", "sweep", "repetitions", "first_seed", "outputs", "metrics"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in experiment: {', '.join(sorted(unknown))}")
    sweep = data.get("sweep", {})
    if not isinstance(sweep, dict) or set(sweep) - {"parameter", "values"}:
        raise ConfigError("sweep must be a table with 'parameter' and 'values'")
    if bool(sweep) and ("parameter" not in sweep or "values" not in sweep):
        raise ConfigError("sweep needs both 'parameter' and 'values'")
    base = data.get("base", {})
    if not isinstance(base, dict):
        raise ConfigError("base must be a table")
    for path, value in flatten(base).items():
        set_path(SimConfig(), path, value)  # type and name check
    outputs = data.get("outputs", ["ranking_loss"])
    if not isinstance(outputs, list):
        raise ConfigError("outputs must be a list")
    ints = {k: data.get(k, d) for k, d in (("repetitions", 1), ("first_seed", 1))}
    for k, v in ints.items():
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{k} must be an integer")
    return ExperimentSpec(
        name=str(data.get("name", "")),
        base=base,
        parameter=sweep.get("parameter"),
        values=list(sweep.get("values", [])),
        outputs=list(outputs),
        metrics=_metric_params(data.get("metrics", {})),
        **ints,
    )


def load_spec(path: str | Path, scale: str = "desk") -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return spec_from_dict(data).validate(scale)
