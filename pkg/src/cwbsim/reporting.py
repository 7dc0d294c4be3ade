"""CSV/JSON report emission.

metrics.csv is long format (`step,recommender,metric,mean,std`) so new
metrics never change the schema; summary.json carries final-step values,
network measures, and the effective-config echo. Output bytes are a pure
function of (config, master seed): UTF-8, LF endings, 6 significant digits.
"""

from __future__ import annotations

import json
import math
import os

from .config import SimConfig, config_values, emit_effective
from .errors import CwbsimError
from .network import write_edgelist, write_node_attributes
from .sim import TRACE_METRICS, EnsembleStats

METRICS_HEADER = "step,recommender,metric,mean,std"


def _sig(v: float) -> str:
    return f"{v:.6g}"


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def metrics_csv_text(arm_stats: list[tuple[str, EnsembleStats]]) -> str:
    lines = [METRICS_HEADER]
    for arm, stats in arm_stats:
        for metric in TRACE_METRICS:
            mean = stats.mean[metric]
            std = stats.std[metric]
            for t in range(stats.steps):
                lines.append(f"{t},{arm},{metric},{_sig(mean[t])},{_sig(std[t])}")
    return "\n".join(lines) + "\n"


def summary_dict(arm_stats: list[tuple[str, EnsembleStats]], cfg: SimConfig) -> dict:
    arms = {}
    for arm, stats in arm_stats:
        final: dict[str, dict] = {}
        if stats.steps > 0:
            for metric in TRACE_METRICS:
                final[metric] = {
                    "mean": _jsonable(float(stats.mean[metric][-1])),
                    "std": _jsonable(float(stats.std[metric][-1])),
                }
        reports = [r for r in stats.final_reports if r is not None]
        network = {}
        if reports:
            for field_name in ("degree_gini", "homophily"):
                vals = [getattr(r, field_name) for r in reports if getattr(r, field_name) is not None]
                network[field_name] = _jsonable(sum(vals) / len(vals)) if vals else None
            threat: dict[str, float | None] = {}
            for r in reports:
                for aspect, v in r.centrality_weighted_threat.items():
                    threat.setdefault(aspect, [])
                    if v is not None:
                        threat[aspect].append(v)
            network["centrality_weighted_threat"] = {
                aspect: (_jsonable(sum(vs) / len(vs)) if vs else None)
                for aspect, vs in threat.items()
            }
        arms[arm] = {
            "final": final,
            "network": network,
            "floor_fallbacks": stats.floor_fallbacks,
        }
    return {
        "config": config_values(cfg),
        "master_seed": cfg.master_seed,
        "runs": cfg.runs,
        "std_defined": all(s.std_defined for _, s in arm_stats) if arm_stats else False,
        "arms": arms,
    }


def emit_reports(
    arm_stats: list[tuple[str, EnsembleStats]],
    cfg: SimConfig,
    out_dir: str,
) -> list[str]:
    """Write metrics.csv, summary.json, and the effective-config echo; dump
    the first run's final graph when configured. Returns the paths written."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise CwbsimError(f"cannot create output directory {out_dir!r}: {exc}") from exc

    written = []
    try:
        metrics_path = os.path.join(out_dir, "metrics.csv")
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(metrics_csv_text(arm_stats))
        written.append(metrics_path)

        summary_path = os.path.join(out_dir, "summary.json")
        with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(summary_dict(arm_stats, cfg), f, sort_keys=True, indent=2)
            f.write("\n")
        written.append(summary_path)

        config_path = os.path.join(out_dir, "effective_config.toml")
        with open(config_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(emit_effective(cfg))
        written.append(config_path)

        if cfg.dump_graph:
            for arm, stats in arm_stats:
                if stats.first_final_graph is None:
                    continue
                suffix = f"_{arm}" if len(arm_stats) > 1 else ""
                edge_path = os.path.join(out_dir, f"graph_final{suffix}.edgelist")
                write_edgelist(stats.first_final_graph, edge_path)
                written.append(edge_path)
                nodes_path = os.path.join(out_dir, f"graph_final{suffix}_nodes.csv")
                write_node_attributes(
                    nodes_path, stats.first_final_opinions, stats.first_final_resilience
                )
                written.append(nodes_path)
    except OSError as exc:
        raise CwbsimError(f"failed writing report: {exc}") from exc
    return written
