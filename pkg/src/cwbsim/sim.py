"""Deterministic simulation engine: step transaction, run orchestration, and
multi-run ensembles with mean/std statistics.

Every step executes a fixed phase order: (1) posting, (2) candidate-pool
assembly with optional exogenous injections, (3) feed ranking, (4) sequential
per-item opinion updates, (5) connection recommendation/acceptance with
contact-creation scoring, (6) metric recording. Phase randomness comes from
streams keyed on (run seed, step, phase), with per-user draw rows inside a
phase, so results do not depend on the order users are processed in phases
(1)-(3) and (6); phases (4) and (5) iterate users by ascending id.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .agents import DynamicsParams, UserState, accept_connection, generate_post, update_opinion
from .content import DetectorParams, ItemFactory, true_aspect_score
from .cwb import (
    CWBConfig,
    CWBReport,
    StateView,
    contact_creation,
    content_exposure,
    cwb_components,
    cwb_total,
    feed_diversity_entropy,
    satisfaction,
)
from .errors import InvalidConfigError, UndefinedMeasureError
from .network import generate_homophily_pa
from .recommenders import (
    ObjectiveBandit,
    ObjectiveThresholds,
    cwbrs_rerank,
    objective_bandit_update,
    rank_chronological,
    recommend_connection,
    select_objective,
)

# Stream tags: init streams and per-step phases.
_INIT_USERS = 101
_INIT_GRAPH = 102
_PHASE_POST = 1
_PHASE_POOL = 2
_PHASE_RANK = 3
_PHASE_CONNECT = 5

TRACE_METRICS = ("satisfaction", "raw_distance", "diversity", "edges", "cwb_total")


@dataclass
class RunConfig:
    """One arm of an experiment: every knob a single run needs."""

    n: int = 100
    m: int = 3
    h: float = 0.3
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    connection_kind: str = "random"
    overlap_order: int = 2
    p_rec: float = 0.2
    ranker_kind: str = "chronological"
    feed_k: int = 10
    s_min: float = 0.5
    pool_window: int = 3
    exogenous_per_step: int = 0
    internal_toxicity: float = 0.05
    exogenous_toxicity: float = 0.2
    detectors: dict[str, DetectorParams] = field(default_factory=dict)
    thresholds: ObjectiveThresholds = field(default_factory=ObjectiveThresholds)
    bandit_epsilon: float = 0.0
    cwb: CWBConfig = field(default_factory=CWBConfig)
    steps: int = 200

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidConfigError(f"need at least one user, got n={self.n}")
        if self.m < 1 or self.n <= self.m:
            raise InvalidConfigError(f"need n >= m+1 >= 2, got n={self.n}, m={self.m}")
        if not (self.h > 0):
            raise InvalidConfigError(f"graph bandwidth must be > 0, got h={self.h}")
        self.dynamics.validate()
        if self.connection_kind not in ("random", "overlap", "diversified"):
            raise InvalidConfigError(f"unknown connection recommender {self.connection_kind!r}")
        if self.overlap_order < 2:
            raise InvalidConfigError(f"overlap order must be >= 2, got {self.overlap_order}")
        if not (0.0 <= self.p_rec <= 1.0):
            raise InvalidConfigError(f"p_rec must be in [0, 1], got {self.p_rec}")
        if self.ranker_kind not in ("chronological", "cwbrs"):
            raise InvalidConfigError(f"unknown feed ranker {self.ranker_kind!r}")
        if self.feed_k < 1:
            raise InvalidConfigError(f"feed size must be >= 1, got {self.feed_k}")
        if not (0.0 <= self.s_min <= 1.0):
            raise InvalidConfigError(f"s_min must be in [0, 1], got {self.s_min}")
        if self.pool_window < 1:
            raise InvalidConfigError(f"pool window must be >= 1, got {self.pool_window}")
        if self.exogenous_per_step < 0:
            raise InvalidConfigError(
                f"exogenous items per step must be >= 0, got {self.exogenous_per_step}"
            )
        for name, prev in (
            ("internal_toxicity", self.internal_toxicity),
            ("exogenous_toxicity", self.exogenous_toxicity),
        ):
            if not (0.0 <= prev <= 1.0):
                raise InvalidConfigError(f"{name} must be in [0, 1], got {prev}")
        if not (0.0 <= self.bandit_epsilon <= 1.0):
            raise InvalidConfigError(f"bandit epsilon must be in [0, 1], got {self.bandit_epsilon}")
        for aspect, dp in self.detectors.items():
            dp.validate(aspect)
        if self.steps < 0:
            raise InvalidConfigError(f"steps must be >= 0, got {self.steps}")
        self.cwb.validate()


@dataclass
class RunTrace:
    """Per-step metric series for one run."""

    steps: int
    seed: int
    metrics: dict[str, np.ndarray]
    posts_emitted: int = 0
    exogenous_injected: int = 0
    items_stored: int = 0
    floor_fallbacks: int = 0
    final_report: CWBReport | None = None
    final_graph: object = None
    final_opinions: list[float] | None = None
    final_resilience: list[float] | None = None


@dataclass
class EnsembleStats:
    """Per-step, per-metric mean and sample std across R runs."""

    steps: int
    runs: int
    std_defined: bool
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    final_reports: list[CWBReport | None] = field(default_factory=list)
    floor_fallbacks: int = 0
    first_final_graph: object = None
    first_final_opinions: list[float] | None = None
    first_final_resilience: list[float] | None = None


class _RowStream:
    """Per-user slice of a phase's pre-drawn randomness.

    Exposes the two Generator methods the agent/content operations use, so
    per-user draw sequences are isolated and user processing order cannot
    matter inside a phase.
    """

    __slots__ = ("_u", "_z", "_iu", "_iz")

    def __init__(self, uniforms, normals=None):
        self._u = uniforms
        self._z = normals
        self._iu = 0
        self._iz = 0

    def random(self):
        v = self._u[self._iu]
        self._iu += 1
        return v

    def normal(self, loc=0.0, scale=1.0):
        v = self._z[self._iz]
        self._iz += 1
        return loc + scale * v

    def uniform(self, low=0.0, high=1.0):
        return low + (high - low) * self.random()


class SimState:
    """Mutable state of one run; snapshots are taken between steps."""

    def __init__(self, config: RunConfig, seed: int):
        self.config = config
        self.seed = seed
        self.step_index = 0

        rng_users = _stream(seed, _INIT_USERS)
        opinions = rng_users.uniform(-1.0, 1.0, config.n)
        resilience = rng_users.uniform(0.0, 1.0, config.n)
        self.users = [
            UserState(i, float(opinions[i]), float(resilience[i])) for i in range(config.n)
        ]
        rng_graph = _stream(seed, _INIT_GRAPH)
        self.graph = generate_homophily_pa(config.n, config.m, opinions, config.h, rng_graph)

        aspects = {a.name: a for a in config.cwb.aspects}
        self.factory = ItemFactory(
            detectors=config.detectors,
            aspects=aspects,
            internal_toxicity=config.internal_toxicity,
            exogenous_toxicity=config.exogenous_toxicity,
        )
        self.items = []
        self.cc_events: list[tuple[int, int, int, float]] = []
        self.pooled_diversity_trace: list[float | None] = []
        self.feeds: list[list] = [[] for _ in range(config.n)]
        self.recent_posts: list[dict[int, list]] = []  # one author->items dict per step
        self.posts_emitted = 0
        self.exogenous_injected = 0
        self.floor_fallbacks = 0
        self.bandit = ObjectiveBandit(epsilon=config.bandit_epsilon)
        self.applied_objectives: list[str] = []
        self.prev_cwb: float | None = None

    def view(self) -> StateView:
        return StateView(
            step=self.step_index,
            users=self.users,
            graph=self.graph,
            cc_events=self.cc_events,
            pooled_diversity_trace=self.pooled_diversity_trace,
        )


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *tags])))


def _aspect_names(cfg: RunConfig) -> list[str]:
    return [a.name for a in cfg.cwb.aspects]


def step(state: SimState, config: RunConfig) -> dict[str, float]:
    """Advance one step and return the step's metric record."""
    t = state.step_index
    n = config.n
    users = state.users
    aspects = list(config.cwb.aspects)
    n_aspects = len(aspects)

    # Phase 1: posting. Row width: post gate + toxicity + per-aspect detection.
    rng1 = _stream(state.seed, t, _PHASE_POST)
    u1 = rng1.random((n, 2 + n_aspects))
    z1 = rng1.standard_normal((n, 1))
    step_posts: dict[int, list] = {}
    for u in users:
        row = _RowStream(u1[u.id], z1[u.id])
        item = generate_post(u, config.dynamics, t, state.factory, row)
        if item is not None:
            state.items.append(item)
            state.posts_emitted += 1
            step_posts.setdefault(u.id, []).append(item)
            for aspect in aspects:
                u.push_share(t, aspect.name, true_aspect_score(item, aspect), item.detected[aspect.name])
    state.recent_posts.append(step_posts)
    if len(state.recent_posts) > config.pool_window:
        state.recent_posts.pop(0)

    # Phase 2: candidate pools = neighbors' recent posts + exogenous injections.
    exo_items: list[list] = [[] for _ in range(n)]
    if config.exogenous_per_step > 0:
        rng2 = _stream(state.seed, t, _PHASE_POOL)
        width = config.exogenous_per_step * (2 + n_aspects)
        u2 = rng2.random((n, width))
        for u in users:
            row = _RowStream(u2[u.id])
            for _ in range(config.exogenous_per_step):
                opinion = row.uniform(-1.0, 1.0)
                item = state.factory.make_item(
                    author=None, step=t, opinion=opinion, source="external", rng=row
                )
                state.items.append(item)
                state.exogenous_injected += 1
                exo_items[u.id].append(item)

    pools: list[list] = []
    for u in users:
        pool = []
        for bucket in state.recent_posts:
            for nbr in state.graph.neighbors(u.id):
                if nbr in bucket:
                    pool.extend(bucket[nbr])
        pool.extend(exo_items[u.id])
        pools.append(pool)

    # Phase 3: feed ranking (+ exposure recording).
    cwb_cfg = config.cwb
    if config.ranker_kind == "cwbrs":
        rng3 = _stream(state.seed, t, _PHASE_RANK)
        u3 = rng3.random((n, 2))
        lo = t - cwb_cfg.window + 1
        state.applied_objectives = []
        for u in users:
            ce_ext = content_exposure(
                u, "extremity", cwb_cfg.window, t, cwb_cfg.exogenous_weight, "detected"
            )
            recent = [o for s, o in u.exposure_opinions if s >= lo]
            div = feed_diversity_entropy(recent, cwb_cfg.bins)
            objective = select_objective(ce_ext, div, config.thresholds)
            objective = state.bandit.select(objective, _RowStream(u3[u.id]))
            state.applied_objectives.append(objective)
            feed, floor_ok = cwbrs_rerank(
                pools[u.id],
                u,
                objective,
                config.feed_k,
                config.s_min,
                config.dynamics.d_backfire,
                cwb_cfg.bins,
                lo_step=lo,
            )
            if not floor_ok:
                state.floor_fallbacks += 1
            state.feeds[u.id] = feed
    else:
        for u in users:
            state.feeds[u.id] = rank_chronological(pools[u.id], config.feed_k)

    for u in users:
        for item in state.feeds[u.id]:
            external = item.source == "external"
            for aspect in aspects:
                u.push_exposure(
                    t,
                    aspect.name,
                    true_aspect_score(item, aspect),
                    item.detected[aspect.name],
                    external,
                )
            u.exposure_opinions.append((t, item.opinion))

    # Phase 4: opinion updates, sequential per feed item, users by ascending id.
    for u in users:
        o = u.opinion
        for item in state.feeds[u.id]:
            o = update_opinion(o, item.opinion, config.dynamics)
        u.opinion = o

    # Phase 5: connection recommendation, acceptance, contact scoring.
    rng5 = _stream(state.seed, t, _PHASE_CONNECT)
    u5 = rng5.random((n, 3))
    opinions_now = [u.opinion for u in users]
    for u in users:
        if u5[u.id, 0] >= config.p_rec:
            continue
        row = _RowStream(u5[u.id, 1:])
        candidate = recommend_connection(
            state.graph, u.id, config.connection_kind, opinions_now, row, config.overlap_order
        )
        if candidate is None:
            continue
        if not accept_connection(u, opinions_now[candidate], config.dynamics, row):
            continue
        if state.graph.add_edge(u.id, candidate):
            cc = _contact_value(users[u.id], users[candidate], config, t)
            state.cc_events.append((t, u.id, candidate, cc))

    # Phase 6: metrics.
    sats, raws, divs = [], [], []
    pooled: list[float] = []
    for u in users:
        feed_ops = [item.opinion for item in state.feeds[u.id]]
        pooled.extend(feed_ops)
        sr = satisfaction(u.opinion, feed_ops)
        if sr is None:
            u.raw_distance_trace.append(None)
            u.satisfaction_trace.append(None)
        else:
            u.raw_distance_trace.append(sr[0])
            u.satisfaction_trace.append(sr[1])
            raws.append(sr[0])
            sats.append(sr[1])
        d = feed_diversity_entropy(feed_ops, cwb_cfg.bins)
        u.diversity_trace.append(d)
        if d is not None:
            divs.append(d)
    state.pooled_diversity_trace.append(feed_diversity_entropy(pooled, cwb_cfg.bins))

    try:
        comp = cwb_components(state.view(), cwb_cfg, config.detectors)
        cwb_value = comp["cwb"]
    except UndefinedMeasureError:
        cwb_value = float("nan")

    if (
        config.ranker_kind == "cwbrs"
        and config.bandit_epsilon > 0
        and state.prev_cwb is not None
        and not (cwb_value != cwb_value)
    ):
        delta = cwb_value - state.prev_cwb
        for objective in state.applied_objectives:
            objective_bandit_update(state.bandit, objective, delta)
    if not (cwb_value != cwb_value):
        state.prev_cwb = cwb_value

    oldest = t - cwb_cfg.window + 1
    for u in users:
        u.prune(oldest)
    lo_cc = oldest
    if state.cc_events and state.cc_events[0][0] < lo_cc:
        state.cc_events = [e for e in state.cc_events if e[0] >= lo_cc]

    record = {
        "satisfaction": sum(sats) / len(sats) if sats else float("nan"),
        "raw_distance": sum(raws) / len(raws) if raws else float("nan"),
        "diversity": sum(divs) / len(divs) if divs else float("nan"),
        "edges": float(state.graph.edge_count),
        "cwb_total": cwb_value,
    }
    state.step_index += 1
    return record


def _contact_value(a: UserState, b: UserState, config: RunConfig, t: int) -> float:
    return contact_creation(a, b, config.dynamics.d_backfire, config.cwb, step=t)


def run(config: RunConfig, seed: int) -> RunTrace:
    """Execute one run of `config.steps` steps; bit-identical for identical
    (config, seed)."""
    config.validate()
    state = SimState(config, seed)
    series: dict[str, list[float]] = {name: [] for name in TRACE_METRICS}
    for _ in range(config.steps):
        record = step(state, config)
        for name in TRACE_METRICS:
            series[name].append(record[name])

    final_report = None
    if config.steps > 0:
        view = state.view()
        view.step = state.step_index - 1  # report window anchored at the last executed step
        try:
            final_report = cwb_total(view, config.cwb, config.detectors)
        except UndefinedMeasureError:
            final_report = None

    return RunTrace(
        steps=config.steps,
        seed=seed,
        metrics={name: np.asarray(vals) for name, vals in series.items()},
        posts_emitted=state.posts_emitted,
        exogenous_injected=state.exogenous_injected,
        items_stored=len(state.items),
        floor_fallbacks=state.floor_fallbacks,
        final_report=final_report,
        final_graph=state.graph,
        final_opinions=[u.opinion for u in state.users],
        final_resilience=[u.resilience for u in state.users],
    )


def derive_run_seed(master_seed: int, run_index: int) -> int:
    """Stable 64-bit hash of (master seed, run index)."""
    words = np.random.SeedSequence([master_seed, run_index]).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


def _run_for_pool(args) -> RunTrace:
    config, seed = args
    return run(config, seed)


def run_ensemble(
    config: RunConfig, master_seed: int, runs: int, workers: int = 1
) -> EnsembleStats:
    """R independent runs with seeds hashed from (master_seed, run index).

    The merge is ordered by run index, so the result does not depend on
    execution order, including parallel execution.
    """
    if runs < 1:
        raise InvalidConfigError(f"need at least one run, got {runs}")
    config.validate()
    seeds = [derive_run_seed(master_seed, r) for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_for_pool, [(config, s) for s in seeds]))
    else:
        traces = [run(config, s) for s in seeds]

    mean: dict[str, np.ndarray] = {}
    std: dict[str, np.ndarray] = {}
    for name in TRACE_METRICS:
        stack = np.stack([tr.metrics[name] for tr in traces]) if config.steps > 0 else np.zeros((runs, 0))
        mean[name] = stack.mean(axis=0)
        if runs >= 2:
            std[name] = stack.std(axis=0, ddof=1)
        else:
            std[name] = np.zeros(config.steps)
    return EnsembleStats(
        steps=config.steps,
        runs=runs,
        std_defined=runs >= 2,
        mean=mean,
        std=std,
        final_reports=[tr.final_report for tr in traces],
        floor_fallbacks=sum(tr.floor_fallbacks for tr in traces),
        first_final_graph=traces[0].final_graph,
        first_final_opinions=traces[0].final_opinions,
        first_final_resilience=traces[0].final_resilience,
    )
