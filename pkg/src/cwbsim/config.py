"""Experiment configuration: TOML parsing with full validation, documented
defaults, presets, and a deterministic effective-config echo.

Every knob of every module lives here. Unknown keys are rejected with their
full path; range errors name the offending key (e.g. ``dynamics.mu``). The
emitted effective config re-parses to an equal config.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .agents import DynamicsParams
from .content import BUILTIN_ASPECTS, DetectorParams
from .cwb import CWBConfig
from .errors import InvalidConfigError
from .recommenders import CONNECTION_KINDS, OBJECTIVES, RANKER_KINDS, ObjectiveThresholds
from .sim import RunConfig

ASPECT_NAMES = tuple(BUILTIN_ASPECTS)


@dataclass
class SimConfig:
    """A full experiment: base run parameters plus the comparison arms."""

    steps: int = 200
    runs: int = 10
    master_seed: int = 0
    workers: int = 1
    recommenders: tuple[str, ...] = ("random",)
    rankers: tuple[str, ...] = ("chronological",)
    dump_graph: bool = False
    base: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> None:
        if self.steps < 0:
            raise InvalidConfigError("run.steps must be >= 0")
        if self.runs < 1:
            raise InvalidConfigError("run.runs must be >= 1")
        if self.workers < 1:
            raise InvalidConfigError("run.workers must be >= 1")
        if not self.recommenders:
            raise InvalidConfigError("connections.recommenders must not be empty")
        if not self.rankers:
            raise InvalidConfigError("feed.rankers must not be empty")
        if len(set(self.recommenders)) != len(self.recommenders):
            raise InvalidConfigError("connections.recommenders has duplicates")
        if len(set(self.rankers)) != len(self.rankers):
            raise InvalidConfigError("feed.rankers has duplicates")
        for arm_name, arm_cfg in self.arms():
            try:
                arm_cfg.validate()
            except InvalidConfigError as exc:
                raise InvalidConfigError(f"arm {arm_name!r}: {exc}") from exc

    def arms(self) -> list[tuple[str, RunConfig]]:
        """(name, RunConfig) per comparison arm, in config order.

        Arms are named by the recommender when only the recommenders vary,
        by the ranker when only the rankers vary, and by both otherwise.
        """
        out = []
        for rec, ranker in itertools.product(self.recommenders, self.rankers):
            if len(self.rankers) == 1:
                name = rec
            elif len(self.recommenders) == 1:
                name = ranker
            else:
                name = f"{rec}+{ranker}"
            cfg = replace(
                self.base, connection_kind=rec, ranker_kind=ranker, steps=self.steps
            )
            out.append((name, cfg))
        return out


# ---------------------------------------------------------------------------
# Schema: section -> key -> (kind, default, constraint)
# kind: "int" | "float" | "bool" | "str" | "strlist"
# constraint: (lo, hi) inclusive numeric range, tuple of choices, or None.
# ---------------------------------------------------------------------------

_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "steps": ("int", 200, (0, 10**9)),
        "runs": ("int", 10, (1, 10**6)),
        "master_seed": ("int", 0, (0, 2**63 - 1)),
        "workers": ("int", 1, (1, 4096)),
    },
    "graph": {
        "n": ("int", 100, (1, 10**7)),
        "m": ("int", 3, (1, 10**6)),
        "h": ("float", 0.3, (1e-12, 1e12)),
    },
    "dynamics": {
        "d_assim": ("float", 0.3, (1e-12, 2.0)),
        "d_backfire": ("float", 0.8, (1e-12, 2.0)),
        "mu": ("float", 0.05, (0.0, 1.0)),
        "lam": ("float", 0.05, (0.0, 1.0)),
        "p_post": ("float", 0.5, (0.0, 1.0)),
        "post_noise": ("float", 0.02, (0.0, 10.0)),
        "h_accept": ("float", 1.0, (1e-12, 1e12)),
    },
    "connections": {
        "p_rec": ("float", 0.2, (0.0, 1.0)),
        "recommenders": ("strlist", ["random"], CONNECTION_KINDS),
        "overlap_order": ("int", 2, (2, 6)),
    },
    "feed": {
        "rankers": ("strlist", ["chronological"], RANKER_KINDS),
        "k": ("int", 10, (1, 10**6)),
        "s_min": ("float", 0.5, (0.0, 1.0)),
        "pool_window": ("int", 3, (1, 10**6)),
    },
    "content": {
        "exogenous_per_step": ("int", 0, (0, 10**6)),
        "internal_toxicity": ("float", 0.05, (0.0, 1.0)),
        "exogenous_toxicity": ("float", 0.2, (0.0, 1.0)),
    },
    "detectors.extremity": {
        "tpr": ("float", 1.0, (0.0, 1.0)),
        "fpr": ("float", 0.0, (0.0, 1.0)),
        "threshold": ("float", 0.5, (0.0, 1.0)),
    },
    "detectors.toxicity": {
        "tpr": ("float", 1.0, (0.0, 1.0)),
        "fpr": ("float", 0.0, (0.0, 1.0)),
        "threshold": ("float", 0.5, (0.0, 1.0)),
    },
    "objectives": {
        "tau_extremity": ("float", 0.5, (0.0, 1.0)),
        "tau_diversity": ("float", 0.3, (0.0, 1.0)),
        "bandit_epsilon": ("float", 0.0, (0.0, 1.0)),
    },
    "cwb": {
        "window": ("int", 10, (1, 10**6)),
        "bins": ("int", 10, (2, 10**6)),
        "q": ("float", 1.0, (-1e18, 1e18)),
        "beta": ("float", 0.5, (0.0, 1.0)),
        "exogenous_weight": ("float", 1.0, (0.0, 1e6)),
        "resilience_weighting": ("bool", False, None),
        "pooled_diversity": ("bool", False, None),
        "cc_rule": ("str", "opinion_resilience", ("opinion_resilience", "cs_ce")),
        "score_source": ("str", "truth", ("truth", "detected", "calibrated")),
    },
    "cwb.weights": {
        "extremity": ("float", 1.0, (0.0, 1e6)),
        "toxicity": ("float", 1.0, (0.0, 1e6)),
        "diversity": ("float", 1.0, (0.0, 1e6)),
        "connection": ("float", 1.0, (0.0, 1e6)),
    },
    "output": {
        "dump_graph": ("bool", False, None),
    },
}


def _coerce(path: str, kind: str, value, constraint):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidConfigError(f"{path}: expected an integer, got {value!r}")
    elif kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif kind == "bool":
        if not isinstance(value, bool):
            raise InvalidConfigError(f"{path}: expected a boolean, got {value!r}")
    elif kind == "str":
        if not isinstance(value, str):
            raise InvalidConfigError(f"{path}: expected a string, got {value!r}")
        if constraint and value not in constraint:
            raise InvalidConfigError(f"{path}: {value!r} not one of {sorted(constraint)}")
        return value
    elif kind == "strlist":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise InvalidConfigError(f"{path}: expected a list of strings, got {value!r}")
        for v in value:
            if constraint and v not in constraint:
                raise InvalidConfigError(f"{path}: {v!r} not one of {sorted(constraint)}")
        return list(value)
    if constraint is not None and kind in ("int", "float"):
        lo, hi = constraint
        if not (lo <= value <= hi):
            raise InvalidConfigError(f"{path}: value {value!r} out of range [{lo}, {hi}]")
    return value


def _flatten_sections(data: dict) -> dict[str, dict]:
    """Map raw TOML to schema sections, rejecting unknown keys with paths."""
    out: dict[str, dict] = {}
    for section, content in data.items():
        if not isinstance(content, dict):
            raise InvalidConfigError(f"{section}: top-level keys must live in a section")
        for key, value in content.items():
            if isinstance(value, dict):
                sub = f"{section}.{key}"
                if sub not in _SCHEMA:
                    raise InvalidConfigError(f"unknown config section {sub!r}")
                out.setdefault(sub, {}).update(value)
            else:
                if section not in _SCHEMA:
                    raise InvalidConfigError(f"unknown config section {section!r}")
                out.setdefault(section, {})[key] = value
    return out


def build_config(data: dict) -> SimConfig:
    """Validate a raw mapping against the schema and build a SimConfig."""
    sections = _flatten_sections(data)
    values: dict[str, dict] = {}
    for section, keys in _SCHEMA.items():
        raw = sections.pop(section, {})
        values[section] = {}
        for key, (kind, default, constraint) in keys.items():
            if key in raw:
                values[section][key] = _coerce(f"{section}.{key}", kind, raw.pop(key), constraint)
            else:
                values[section][key] = default if not isinstance(default, list) else list(default)
        if raw:
            bad = sorted(raw)[0]
            raise InvalidConfigError(f"unknown config key {section}.{bad!r}")
    if sections:
        raise InvalidConfigError(f"unknown config section {sorted(sections)[0]!r}")

    dynamics = DynamicsParams(**values["dynamics"])
    detectors = {
        name: DetectorParams(**values[f"detectors.{name}"]) for name in ASPECT_NAMES
    }
    cwb = CWBConfig(
        weights=dict(values["cwb.weights"]),
        window=values["cwb"]["window"],
        bins=values["cwb"]["bins"],
        q=values["cwb"]["q"],
        beta=values["cwb"]["beta"],
        exogenous_weight=values["cwb"]["exogenous_weight"],
        resilience_weighting=values["cwb"]["resilience_weighting"],
        pooled_diversity=values["cwb"]["pooled_diversity"],
        cc_rule=values["cwb"]["cc_rule"],
        score_source=values["cwb"]["score_source"],
    )
    base = RunConfig(
        n=values["graph"]["n"],
        m=values["graph"]["m"],
        h=values["graph"]["h"],
        dynamics=dynamics,
        overlap_order=values["connections"]["overlap_order"],
        p_rec=values["connections"]["p_rec"],
        feed_k=values["feed"]["k"],
        s_min=values["feed"]["s_min"],
        pool_window=values["feed"]["pool_window"],
        exogenous_per_step=values["content"]["exogenous_per_step"],
        internal_toxicity=values["content"]["internal_toxicity"],
        exogenous_toxicity=values["content"]["exogenous_toxicity"],
        detectors=detectors,
        thresholds=ObjectiveThresholds(
            tau_extremity=values["objectives"]["tau_extremity"],
            tau_diversity=values["objectives"]["tau_diversity"],
        ),
        bandit_epsilon=values["objectives"]["bandit_epsilon"],
        cwb=cwb,
        steps=values["run"]["steps"],
    )
    cfg = SimConfig(
        steps=values["run"]["steps"],
        runs=values["run"]["runs"],
        master_seed=values["run"]["master_seed"],
        workers=values["run"]["workers"],
        recommenders=tuple(values["connections"]["recommenders"]),
        rankers=tuple(values["feed"]["rankers"]),
        dump_graph=values["output"]["dump_graph"],
        base=base,
    )
    cfg.validate()
    return cfg


def parse_config_text(text: str) -> SimConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"config is not valid TOML: {exc}") from exc
    return build_config(data)


def parse_config(path: str) -> SimConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path!r}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: not valid TOML: {exc}") from exc
    return build_config(data)


# ---------------------------------------------------------------------------
# Effective-config echo
# ---------------------------------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise InvalidConfigError(f"cannot serialize config value {v!r}")


def config_values(cfg: SimConfig) -> dict[str, dict]:
    """The effective config as a schema-ordered nested mapping."""
    b = cfg.base
    d = b.dynamics
    w = b.cwb
    out = {
        "run": {
            "steps": cfg.steps,
            "runs": cfg.runs,
            "master_seed": cfg.master_seed,
            "workers": cfg.workers,
        },
        "graph": {"n": b.n, "m": b.m, "h": b.h},
        "dynamics": {
            "d_assim": d.d_assim,
            "d_backfire": d.d_backfire,
            "mu": d.mu,
            "lam": d.lam,
            "p_post": d.p_post,
            "post_noise": d.post_noise,
            "h_accept": d.h_accept,
        },
        "connections": {
            "p_rec": b.p_rec,
            "recommenders": list(cfg.recommenders),
            "overlap_order": b.overlap_order,
        },
        "feed": {
            "rankers": list(cfg.rankers),
            "k": b.feed_k,
            "s_min": b.s_min,
            "pool_window": b.pool_window,
        },
        "content": {
            "exogenous_per_step": b.exogenous_per_step,
            "internal_toxicity": b.internal_toxicity,
            "exogenous_toxicity": b.exogenous_toxicity,
        },
        "objectives": {
            "tau_extremity": b.thresholds.tau_extremity,
            "tau_diversity": b.thresholds.tau_diversity,
            "bandit_epsilon": b.bandit_epsilon,
        },
        "cwb": {
            "window": w.window,
            "bins": w.bins,
            "q": w.q,
            "beta": w.beta,
            "exogenous_weight": w.exogenous_weight,
            "resilience_weighting": w.resilience_weighting,
            "pooled_diversity": w.pooled_diversity,
            "cc_rule": w.cc_rule,
            "score_source": w.score_source,
        },
        "cwb.weights": dict(w.weights),
        "output": {"dump_graph": cfg.dump_graph},
    }
    for name in ASPECT_NAMES:
        dp = b.detectors[name]
        out[f"detectors.{name}"] = {"tpr": dp.tpr, "fpr": dp.fpr, "threshold": dp.threshold}
    return out


def emit_effective(cfg: SimConfig) -> str:
    """Serialize the effective config to TOML that re-parses to an equal one."""
    values = config_values(cfg)
    lines = []
    for section in _SCHEMA:
        lines.append(f"[{section}]")
        for key in _SCHEMA[section]:
            lines.append(f"{key} = {_toml_value(values[section][key])}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def preset_fig6() -> SimConfig:
    """100-user ensemble comparing the three connection recommenders under a
    chronological feed, 10 runs, internal content only."""
    return parse_config_text(
        """
        [run]
        steps = 200
        runs = 10

        [graph]
        n = 100

        [connections]
        recommenders = ["random", "overlap", "diversified"]
        """
    )


def preset_cwbrs_vs_chrono() -> SimConfig:
    """Feed-ranker comparison under an exogenous toxic stream with imperfect
    detectors; desk-scale so the comparison runs in seconds."""
    return parse_config_text(
        """
        [run]
        steps = 100
        runs = 10

        [graph]
        n = 50

        [feed]
        rankers = ["chronological", "cwbrs"]
        s_min = 0.5

        [content]
        exogenous_per_step = 2
        exogenous_toxicity = 0.2

        [detectors.extremity]
        tpr = 0.9
        fpr = 0.1

        [detectors.toxicity]
        tpr = 0.9
        fpr = 0.1
        """
    )


def preset_sensitivity() -> list[tuple[str, SimConfig]]:
    """Small grid over the dynamics defaults: assimilation band width and
    acceptance bandwidth, at reduced scale."""
    grid = []
    for d_assim in (0.2, 0.3, 0.4):
        for h_accept in (0.5, 1.0, 2.0):
            cfg = parse_config_text(
                f"""
                [run]
                steps = 50
                runs = 3

                [graph]
                n = 50

                [dynamics]
                d_assim = {d_assim}
                h_accept = {h_accept}

                [connections]
                recommenders = ["random", "diversified"]
                """
            )
            grid.append((f"d_assim={d_assim}_h_accept={h_accept}", cfg))
    return grid


PRESETS: dict[str, str] = {
    "fig6": "three connection recommenders, 100 users, 10 runs, chronological feeds",
    "cwbrs-vs-chrono": "well-being re-ranker vs chronological baseline under a toxic exogenous stream",
    "sensitivity": "3x3 grid over d_assim and h_accept at reduced scale",
}


def load_preset(name: str) -> list[tuple[str, SimConfig]]:
    """Resolve a preset name to a list of (label, config) experiment cells."""
    if name == "fig6":
        return [("", preset_fig6())]
    if name == "cwbrs-vs-chrono":
        return [("", preset_cwbrs_vs_chrono())]
    if name == "sensitivity":
        return preset_sensitivity()
    raise InvalidConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
