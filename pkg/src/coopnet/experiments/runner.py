"""Run experiment specs and write their results.

Every (sweep value, seed) pair gets an isolated world. Deterministic metrics
go to ``<name>.csv``; the JSON report adds configs, summaries and anything
wall-clock dependent, which never enters the CSV.
"""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..meritrank import RankingTable, exact_set_score
from ..simnet.config import ConfigError, SimConfig
from ..simnet.events import stream
from ..simnet.sybil import inject_active_sybils, inject_passive_sybils
from ..simnet.world import World
from . import metrics as M
from .spec import ExperimentSpec

CSV_COLUMNS = ("experiment", "parameter", "value", "seed", "config_hash", "metric", "result")


@dataclass
class RunResult:
    value: object
    seed: int
    config_hash: str
    metrics: dict
    info: dict = field(default_factory=dict)


def _exact_by_peer(world: World, peers: list[int]) -> dict[int, RankingTable]:
    ids = world.id_of_key
    out = {}
    for i, t in M.exact_rankings(world, peers).items():
        out[i] = RankingTable(world.peers[i].peer_id, {ids[k]: v for k, v in t.scores.items()}, 0, t.alpha)
    return out


def _sybil_metrics(world: World, cfg: SimConfig, outputs, mp) -> dict:
    syb = cfg.sybil
    if syb.mode == "none":
        raise ConfigError("sybil_gain and misreport outputs need sybil.mode passive or active")
    attacker = world.peers[syb.attacker]
    evs = M.evaluators(world, exclude=[attacker.index])
    originals = [p.peer_id for p in world.peers]
    want_exact = mp.exact or "misreport" in outputs
    base_mc = M.rerank(world, evs)
    base_exact = _exact_by_peer(world, evs) if want_exact else None

    rng = stream(cfg.master_seed, "sybil")
    weight = syb.weight or None
    if syb.mode == "passive":
        sybils = inject_passive_sybils(world, attacker, syb.count, rng, weight)
    else:
        sybils = inject_active_sybils(world, attacker, syb.count, rng, syb.topology, weight)
    sybil_ids = [s.peer_id for s in sybils]
    att_mc = M.rerank(world, evs)

    out = {"sybils": len(sybils), "sybil_gain": M.sybil_gain(base_mc, att_mc, attacker.peer_id, sybil_ids)}
    if not want_exact:
        return out
    att_exact = _exact_by_peer(world, evs)
    out["sybil_gain_exact"] = M.sybil_gain(base_exact, att_exact, attacker.peer_id, sybil_ids)
    out["exact_max_change"] = max(
        (abs(att_exact[i].score(k) - base_exact[i].score(k)) for i in evs for k in originals), default=0.0
    )
    alpha = cfg.ranking.alpha
    keys = [s.public_key for s in sybil_ids]
    worst_set = worst_sum = -math.inf
    for i in evs:
        a = att_exact[i].score(attacker.peer_id)
        me = world.peers[i].peer_id.public_key
        graph = world.peers[i].store.key_graph((me,))
        reach = exact_set_score(graph, me, keys, alpha, max_nodes=max(200, len(graph.nodes)))
        total = sum(att_exact[i].score(s) for s in sybil_ids)
        worst_set = max(worst_set, reach - a)
        worst_sum = max(worst_sum, total - a * (1 - alpha) / alpha)
    out["bottleneck_set_margin"] = worst_set  # <= 0 when the bound holds
    out["bottleneck_sum_margin"] = worst_sum
    out["bottleneck_ok"] = int(worst_set <= 1e-12 and worst_sum <= 1e-12)

    if "misreport" in outputs:
        before = M.mean_scores(base_exact, originals)
        after = M.mean_scores(att_exact, originals)
        tau = mp.tau if mp.tau >= 0 else statistics.median(before.values())
        rep = M.misreport_resistance_check(before, after, tau, mp.epsilon)
        out.update(tau=rep.tau, tau_prime=rep.tau_prime, misreport_gap=rep.gap,
                   misreport_mismatches=rep.mismatches, misreport_ok=int(rep.ok))
    return out


def run_point(cfg: SimConfig, outputs, mp) -> tuple[dict, dict]:
    """Simulate one configuration; return (deterministic metrics, extra info)."""
    world = World(cfg).run()
    m: dict = {}
    info: dict = {}
    if "ranking_loss" in outputs:
        m["ranking_loss"] = M.world_ranking_loss(world) if world.selfish else 1.0
    if "heatmap" in outputs:
        mat = M.heatmap(world)
        info["heatmap"] = [[None if math.isnan(x) else x for x in row] for row in mat.tolist()]
        if world.selfish:
            s = M.heatmap_summary(mat, world.selfish, world.honest)
            m.update(heatmap_selfish_mean=s["selfish_mean"], heatmap_honest_mean=s["honest_mean"],
                     heatmap_ratio=s["ratio"])
    if "convergence" in outputs:
        start = mp.window_start if mp.window_start >= 0 else None
        conv = M.convergence_metric(world, mp.coverage, start)
        base = M.convergence_metric(World(cfg.replace(selfish_fraction=0.0)).run(), mp.coverage, start)
        m.update(mean_delay=conv.mean_delay, baseline_delay=base.mean_delay,
                 delay_penalty=conv.mean_delay - base.mean_delay, tx_counted=conv.counted,
                 tx_unfinished=conv.unfinished)
    if "overhead" in outputs:
        m.update(M.overhead_report(world))
        info["ranking_ms"] = M.ranking_time_ms(mp.ranking_graph_peers, mp.ranking_walks)
    if "sybil_gain" in outputs or "misreport" in outputs:
        m.update(_sybil_metrics(world, cfg, outputs, mp))
    return m, info


def run_experiment(spec: ExperimentSpec, scale: str = "desk", first_seed: int | None = None,
                   out_dir: str | Path | None = None,
                   progress: Callable[[RunResult], None] | None = None) -> list[RunResult]:
    if first_seed is not None:
        spec.first_seed = first_seed
    spec.validate(scale)
    results = []
    for value in spec.points:
        for seed in spec.seeds:
            cfg = spec.config(scale, value, seed)
            m, info = run_point(cfg, spec.outputs, spec.metrics)
            res = RunResult(value, seed, cfg.config_hash(), m, info)
            results.append(res)
            if progress:
                progress(res)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{spec.name}.csv", spec, results)
        write_json(out / f"{spec.name}.json", spec, results, scale)
    return results


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, spec: ExperimentSpec, results: list[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in results:
            for name in sorted(r.metrics):
                w.writerow((spec.name, spec.parameter or "-", "-" if r.value is None else _fmt(r.value),
                            r.seed, r.config_hash, name, _fmt(r.metrics[name])))


def summarize(results: list[RunResult]) -> dict:
    """Per sweep value and metric: mean, sample std, standard error, count."""
    grouped: dict = {}
    for r in results:
        for name, v in r.metrics.items():
            if isinstance(v, (int, float)) and not math.isnan(v):
                grouped.setdefault(r.value, {}).setdefault(name, []).append(float(v))
    out = {}
    for value, by_metric in grouped.items():
        out[value] = {}
        for name, vals in by_metric.items():
            sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
            out[value][name] = {"mean": statistics.fmean(vals), "std": sd,
                                "sem": sd / math.sqrt(len(vals)), "n": len(vals)}
    return out


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def write_json(path: Path, spec: ExperimentSpec, results: list[RunResult], scale: str) -> None:
    doc = {
        "experiment": spec.name,
        "scale": scale,
        "parameter": spec.parameter,
        "runs": [
            {"value": r.value, "seed": r.seed, "config_hash": r.config_hash,
             "config": spec.config(scale, r.value, r.seed).to_dict(), "metrics": r.metrics, "info": r.info}
            for r in results
        ],
        "summary": [{"value": v, "metrics": s} for v, s in summarize(results).items()],
    }
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")
