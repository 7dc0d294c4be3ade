"""Collective well-being metric engine.

Event terms (content shared / content exposure / contact creation) are
computed per aspect and per user over a rolling step window, then folded
over users with a weighted power mean and combined with a feed-diversity
entropy term and a connection term into a single [0, 1] scalar. Every
aggregation choice (window, user exponent, aspect mix, weights) is a config
knob, and every missing value stays missing instead of collapsing to 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .agents import UserState
from .content import Aspect, BUILTIN_ASPECTS, DetectorParams, Polarity, debias_prevalence
from .errors import InvalidConfigError, UndefinedMeasureError
from .network import SocialGraph, closeness_or_none, degree_gini, homophily_index


@dataclass
class CWBConfig:
    """Aggregation choices for the community metric."""

    aspects: tuple[Aspect, ...] = tuple(BUILTIN_ASPECTS.values())
    weights: dict[str, float] = field(
        default_factory=lambda: {
            "extremity": 1.0,
            "toxicity": 1.0,
            "diversity": 1.0,
            "connection": 1.0,
        }
    )
    window: int = 10
    q: float = 1.0
    q_inf: float = 1e6
    bins: int = 10
    beta: float = 0.5
    exogenous_weight: float = 1.0
    resilience_weighting: bool = False
    pooled_diversity: bool = False
    cc_rule: str = "opinion_resilience"
    score_source: str = "truth"

    def validate(self) -> None:
        if self.window < 1:
            raise InvalidConfigError(f"window must be >= 1, got {self.window}")
        if self.bins < 2:
            raise InvalidConfigError(f"bins must be >= 2, got {self.bins}")
        if not (0.0 <= self.beta <= 1.0):
            raise InvalidConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.exogenous_weight < 0:
            raise InvalidConfigError(f"exogenous weight must be >= 0, got {self.exogenous_weight}")
        if sum(abs(w) for w in self.weights.values()) <= 0:
            raise InvalidConfigError("aspect weights must not all be zero")
        if self.cc_rule not in ("opinion_resilience", "cs_ce"):
            raise InvalidConfigError(f"unknown cc_rule {self.cc_rule!r}")
        if self.score_source not in ("truth", "detected", "calibrated"):
            raise InvalidConfigError(f"unknown score_source {self.score_source!r}")
        known = {a.name for a in self.aspects} | {"diversity", "connection"}
        for key in self.weights:
            if key not in known:
                raise InvalidConfigError(f"weight for unknown term {key!r}")


@dataclass
class StateView:
    """Read-only snapshot of the simulation state the metric engine consumes."""

    step: int
    users: list[UserState]
    graph: SocialGraph | None = None
    cc_events: list[tuple[int, int, int, float]] = field(default_factory=list)
    pooled_diversity_trace: list[float | None] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Event terms
# ---------------------------------------------------------------------------


def _windowed(rows: list[tuple], lo: int) -> list[tuple]:
    return [r for r in rows if r[0] >= lo]


def _resolve_score(
    truth_mean: float, det_mean: float, source: str, detector: DetectorParams | None
) -> float:
    if source == "truth":
        return truth_mean
    if source == "detected":
        return det_mean
    if detector is None:
        raise InvalidConfigError("calibrated score source needs detector params")
    return debias_prevalence(det_mean, detector)


def content_shared(
    u: UserState,
    aspect: str,
    window: int,
    step: int,
    source: str = "truth",
    detector: DetectorParams | None = None,
) -> float | None:
    """Mean aspect score of items authored by u in the last `window` steps.

    Returns None (no-data) when the user shared nothing in the window.
    """
    rows = _windowed(u.cs_window.get(aspect, ()), step - window + 1)
    count = sum(r[1] for r in rows)
    if count == 0:
        return None
    truth_mean = sum(r[2] for r in rows) / count
    det_mean = sum(r[3] for r in rows) / count
    return _resolve_score(truth_mean, det_mean, source, detector)


def content_exposure(
    u: UserState,
    aspect: str,
    window: int,
    step: int,
    exogenous_weight: float = 1.0,
    source: str = "truth",
    detector: DetectorParams | None = None,
) -> float | None:
    """Weighted mean aspect score of items that appeared in u's feeds.

    Items from external sources are weighted by `exogenous_weight`.
    """
    rows = _windowed(u.ce_window.get(aspect, ()), step - window + 1)
    w = exogenous_weight
    den = 0.0
    truth = 0.0
    det = 0.0
    for _, ni, ti, di, ne, te, de in rows:
        den += ni + w * ne
        truth += ti + w * te
        det += di + w * de
    if den == 0.0:
        return None
    return _resolve_score(truth / den, det / den, source, detector)


def contact_creation(
    a: UserState,
    b: UserState,
    d_backfire: float,
    cfg: CWBConfig,
    step: int | None = None,
) -> float:
    """Value of a new connection between a and b.

    Default rule: bridge value |Δo|/2, zeroed beyond the backfire threshold,
    times a support value (1, or resilience complementarity |Δres| when
    resilience weighting is on). The cs_ce rule instead scores how much an
    exposed user gains a low-sharing counterpart per harmful aspect; it
    needs the current step to window the participants' CS/CE.
    """
    dist = abs(a.opinion - b.opinion)
    support = abs(a.resilience - b.resilience) if cfg.resilience_weighting else 1.0
    if cfg.cc_rule == "opinion_resilience":
        bridge = dist / 2.0 if dist < d_backfire else 0.0
        return bridge * support
    # cs_ce variant: pairing heavy exposure with healthy sharing has value.
    if step is None:
        raise InvalidConfigError("cs_ce contact rule needs the current step")
    vals = []
    for aspect in cfg.aspects:
        if aspect.polarity is not Polarity.HARMFUL:
            continue
        ce_a = content_exposure(a, aspect.name, cfg.window, step, cfg.exogenous_weight)
        ce_b = content_exposure(b, aspect.name, cfg.window, step, cfg.exogenous_weight)
        cs_a = content_shared(a, aspect.name, cfg.window, step)
        cs_b = content_shared(b, aspect.name, cfg.window, step)
        pair = []
        if ce_a is not None and cs_b is not None:
            pair.append(max(0.0, ce_a - cs_b))
        if ce_b is not None and cs_a is not None:
            pair.append(max(0.0, ce_b - cs_a))
        if pair:
            vals.append(max(pair))
    if not vals:
        return 0.0
    return support * (sum(vals) / len(vals))


def satisfaction(user_opinion: float, feed_opinions) -> tuple[float, float] | None:
    """(raw mean opinion distance, 1 - raw/2) for a feed; None when empty.

    Raw distance and its complement are both reported; the complement is the
    plotted default. Pure Python on purpose: feeds are tiny and this sits in
    the per-user per-step hot loop.
    """
    k = len(feed_opinions)
    if k == 0:
        return None
    raw = sum(abs(o - user_opinion) for o in feed_opinions) / k
    return raw, 1.0 - raw / 2.0


def feed_diversity_entropy(feed_opinions, bins: int) -> float | None:
    """Shannon entropy of opinions binned into `bins` equal-width bins over
    [-1, 1], normalized by ln(bins). None for an empty feed."""
    if bins < 2:
        raise InvalidConfigError(f"bins must be >= 2, got {bins}")
    k = len(feed_opinions)
    if k == 0:
        return None
    counts: dict[int, int] = {}
    for o in feed_opinions:
        idx = int((o + 1.0) * 0.5 * bins)
        if idx >= bins:
            idx = bins - 1
        counts[idx] = counts.get(idx, 0) + 1
    ent = 0.0
    for c in counts.values():
        p = c / k
        ent -= p * math.log(p)
    return ent / math.log(bins)


# ---------------------------------------------------------------------------
# Aggregators
# ---------------------------------------------------------------------------


def aggregate_users(values, weights=None, q: float = 1.0, q_inf: float = 1e6) -> float:
    """Weighted power mean of exponent q over the finite values.

    None entries (no-data) are skipped together with their weights.
    q <= -q_inf is the exact minimum, q >= q_inf the exact maximum, q == 0
    the geometric mean (zeros pull it to 0).
    """
    if weights is None:
        weights = [1.0] * len(values)
    if len(weights) != len(values):
        raise InvalidConfigError("values and weights must have equal length")
    pairs = [(v, w) for v, w in zip(values, weights) if v is not None]
    if not pairs:
        raise UndefinedMeasureError("no finite values to aggregate")
    if any(w < 0 for _, w in pairs):
        raise InvalidConfigError("negative user weight")
    wsum = sum(w for _, w in pairs)
    if wsum == 0:
        raise InvalidConfigError("user weights sum to zero")
    if q <= -q_inf:
        return min(v for v, _ in pairs)
    if q >= q_inf:
        return max(v for v, _ in pairs)
    if q == 0.0:
        if any(v == 0.0 for v, _ in pairs):
            return 0.0
        return math.exp(sum(w * math.log(v) for v, w in pairs) / wsum)
    if q < 0 and any(v == 0.0 for v, _ in pairs):
        return 0.0
    s = sum(w * v**q for v, w in pairs) / wsum
    return s ** (1.0 / q)


def aggregate_time(
    series,
    mode: str = "windowed",
    window: int | None = None,
    alpha: float = 0.5,
) -> float:
    """Fold a metric series over time: mean of the last `window` entries, or
    an exponential moving average seeded at the first value."""
    series = [s for s in series]
    if not series:
        raise UndefinedMeasureError("empty series")
    if mode == "windowed":
        w = len(series) if window is None else max(1, window)
        tail = series[-w:]
        return sum(tail) / len(tail)
    if mode == "ema":
        if not (0.0 < alpha <= 1.0):
            raise InvalidConfigError(f"ema alpha must be in (0, 1], got {alpha}")
        acc = series[0]
        for s in series[1:]:
            acc = alpha * s + (1.0 - alpha) * acc
        return acc
    raise InvalidConfigError(f"unknown time aggregation mode {mode!r}")


# ---------------------------------------------------------------------------
# Community report
# ---------------------------------------------------------------------------


@dataclass
class CWBReport:
    """Per-aspect, per-user and community-aggregated terms plus network
    measures, with an explicit mask of missing components."""

    step: int
    cwb: float
    aspect_terms: dict[str, float | None]
    community_diversity: float | None
    connection_term: float | None
    cs: dict[str, dict[int, float | None]]
    ce: dict[str, dict[int, float | None]]
    satisfaction: dict[int, float | None]
    raw_distance: dict[int, float | None]
    diversity: dict[int, float | None]
    cc_events: list[tuple[int, int, int, float]]
    degree_gini: float | None = None
    homophily: float | None = None
    closeness: dict[int, float | None] = field(default_factory=dict)
    centrality_weighted_threat: dict[str, float | None] = field(default_factory=dict)
    missing: tuple[str, ...] = ()

    def to_json(self) -> str:
        def enc(d):
            if isinstance(d, dict):
                return {str(k): enc(v) for k, v in sorted(d.items(), key=lambda kv: str(kv[0]))}
            if isinstance(d, (list, tuple)):
                return [enc(v) for v in d]
            return d

        payload = {
            "step": self.step,
            "cwb": self.cwb,
            "aspect_terms": enc(self.aspect_terms),
            "community_diversity": self.community_diversity,
            "connection_term": self.connection_term,
            "cs": enc(self.cs),
            "ce": enc(self.ce),
            "satisfaction": enc(self.satisfaction),
            "raw_distance": enc(self.raw_distance),
            "diversity": enc(self.diversity),
            "cc_events": enc(self.cc_events),
            "degree_gini": self.degree_gini,
            "homophily": self.homophily,
            "closeness": enc(self.closeness),
            "centrality_weighted_threat": enc(self.centrality_weighted_threat),
            "missing": list(self.missing),
        }
        return json.dumps(payload, sort_keys=True, allow_nan=False)

    def to_csv_rows(self) -> list[tuple]:
        """Long-format rows `step,aspect,term,value`; missing values empty."""

        def fmt(v):
            return "" if v is None else v

        rows: list[tuple] = []
        for name in sorted(self.aspect_terms):
            rows.append((self.step, name, "term", fmt(self.aspect_terms[name])))
            for uid in sorted(self.cs.get(name, {})):
                rows.append((self.step, name, f"cs_user_{uid}", fmt(self.cs[name][uid])))
            for uid in sorted(self.ce.get(name, {})):
                rows.append((self.step, name, f"ce_user_{uid}", fmt(self.ce[name][uid])))
            thr = self.centrality_weighted_threat.get(name)
            rows.append((self.step, name, "centrality_weighted_threat", fmt(thr)))
        rows.append((self.step, "community", "cwb_total", fmt(self.cwb)))
        rows.append((self.step, "community", "diversity", fmt(self.community_diversity)))
        rows.append((self.step, "community", "connection", fmt(self.connection_term)))
        rows.append((self.step, "community", "degree_gini", fmt(self.degree_gini)))
        rows.append((self.step, "community", "homophily", fmt(self.homophily)))
        for uid in sorted(self.satisfaction):
            rows.append((self.step, "community", f"satisfaction_user_{uid}", fmt(self.satisfaction[uid])))
        for uid in sorted(self.diversity):
            rows.append((self.step, "community", f"diversity_user_{uid}", fmt(self.diversity[uid])))
        return rows


def _oriented(value: float, polarity: Polarity) -> float:
    return 1.0 - value if polarity is Polarity.HARMFUL else value


def _user_aspect_value(
    u: UserState,
    aspect: Aspect,
    cfg: CWBConfig,
    step: int,
    detector: DetectorParams | None,
) -> tuple[float | None, float | None, float | None]:
    """(blended oriented value, raw CS, raw CE) for one user and aspect."""
    cs = content_shared(u, aspect.name, cfg.window, step, cfg.score_source, detector)
    ce = content_exposure(
        u, aspect.name, cfg.window, step, cfg.exogenous_weight, cfg.score_source, detector
    )
    if ce is None and cs is None:
        return None, cs, ce
    if ce is None:
        blended = _oriented(cs, aspect.polarity)
    elif cs is None:
        blended = _oriented(ce, aspect.polarity)
    else:
        blended = cfg.beta * _oriented(ce, aspect.polarity) + (1.0 - cfg.beta) * _oriented(
            cs, aspect.polarity
        )
    return blended, cs, ce


def cwb_components(
    view: StateView,
    cfg: CWBConfig,
    detectors: dict[str, DetectorParams] | None = None,
) -> dict:
    """Aspect, diversity and connection terms plus the combined scalar.

    This is the cheap per-step path; `cwb_total` adds per-user detail and
    network measures on top of it.
    """
    detectors = detectors or {}
    step = view.step
    lo = step - cfg.window + 1

    aspect_terms: dict[str, float | None] = {}
    for aspect in cfg.aspects:
        det = detectors.get(aspect.name)
        vals = []
        weights = []
        for u in view.users:
            blended, _, _ = _user_aspect_value(u, aspect, cfg, step, det)
            if blended is None:
                continue
            w = 1.0
            if cfg.resilience_weighting and aspect.polarity is Polarity.HARMFUL:
                w = 1.0 - u.resilience
            vals.append(blended)
            weights.append(w)
        if not vals or sum(weights) == 0.0:
            aspect_terms[aspect.name] = None
        else:
            aspect_terms[aspect.name] = aggregate_users(vals, weights, cfg.q, cfg.q_inf)

    if cfg.pooled_diversity:
        pool_vals = [
            v
            for s, v in enumerate(view.pooled_diversity_trace)
            if s >= lo and v is not None
        ]
        community_diversity = sum(pool_vals) / len(pool_vals) if pool_vals else None
    else:
        per_user = []
        for u in view.users:
            tail = [v for s, v in enumerate(u.diversity_trace) if s >= lo and v is not None]
            if tail:
                per_user.append(sum(tail) / len(tail))
        community_diversity = sum(per_user) / len(per_user) if per_user else None

    cc_vals = [v for s, _, _, v in view.cc_events if s >= lo]
    connection_term = sum(cc_vals) / len(cc_vals) if cc_vals else None

    terms: dict[str, float | None] = dict(aspect_terms)
    terms["diversity"] = community_diversity
    terms["connection"] = connection_term

    missing = tuple(sorted(k for k, v in terms.items() if v is None))
    if all(v is None for v in terms.values()):
        raise UndefinedMeasureError("no user contributed data to any component")
    present = {k: v for k, v in terms.items() if v is not None and cfg.weights.get(k, 0.0) > 0}
    if not present:
        raise InvalidConfigError("every component with data has zero weight")
    wsum = sum(cfg.weights[k] for k in present)
    cwb = sum(cfg.weights[k] * v for k, v in present.items()) / wsum

    return {
        "cwb": cwb,
        "aspect_terms": aspect_terms,
        "diversity": community_diversity,
        "connection": connection_term,
        "missing": missing,
    }


def cwb_total(
    view: StateView,
    cfg: CWBConfig,
    detectors: dict[str, DetectorParams] | None = None,
    include_network: bool = True,
) -> CWBReport:
    """Full community report: terms, per-user detail, network measures."""
    comp = cwb_components(view, cfg, detectors)
    detectors = detectors or {}
    step = view.step

    cs: dict[str, dict[int, float | None]] = {}
    ce: dict[str, dict[int, float | None]] = {}
    for aspect in cfg.aspects:
        det = detectors.get(aspect.name)
        cs[aspect.name] = {}
        ce[aspect.name] = {}
        for u in view.users:
            _, cs_u, ce_u = _user_aspect_value(u, aspect, cfg, step, det)
            cs[aspect.name][u.id] = cs_u
            ce[aspect.name][u.id] = ce_u

    sat = {u.id: (u.satisfaction_trace[-1] if u.satisfaction_trace else None) for u in view.users}
    raw = {u.id: (u.raw_distance_trace[-1] if u.raw_distance_trace else None) for u in view.users}
    div = {u.id: (u.diversity_trace[-1] if u.diversity_trace else None) for u in view.users}
    lo = step - cfg.window + 1
    cc_in_window = [e for e in view.cc_events if e[0] >= lo]

    gini = None
    hom = None
    close: dict[int, float | None] = {}
    threat: dict[str, float | None] = {}
    if include_network and view.graph is not None:
        g = view.graph
        try:
            gini = degree_gini(g)
        except UndefinedMeasureError:
            gini = None
        try:
            hom = homophily_index(g, [u.opinion for u in view.users])
        except UndefinedMeasureError:
            hom = None
        close = {u.id: closeness_or_none(g, u.id) for u in view.users}
        for aspect in cfg.aspects:
            if aspect.polarity is not Polarity.HARMFUL:
                continue
            det = detectors.get(aspect.name)
            num = 0.0
            den = 0.0
            for u in view.users:
                c = close.get(u.id)
                if c is None:
                    continue
                exposure = content_exposure(
                    u, aspect.name, cfg.window, step, cfg.exogenous_weight, cfg.score_source, det
                )
                if exposure is None:
                    continue
                num += c * exposure
                den += c
            threat[aspect.name] = (num / den) if den > 0 else None

    return CWBReport(
        step=step,
        cwb=comp["cwb"],
        aspect_terms=comp["aspect_terms"],
        community_diversity=comp["diversity"],
        connection_term=comp["connection"],
        cs=cs,
        ce=ce,
        satisfaction=sat,
        raw_distance=raw,
        diversity=div,
        cc_events=cc_in_window,
        degree_gini=gini,
        homophily=hom,
        closeness=close,
        centrality_weighted_threat=threat,
        missing=comp["missing"],
    )
