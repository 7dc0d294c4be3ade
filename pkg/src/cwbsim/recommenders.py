"""Connection recommenders and feed rankers, including the well-being-aware
greedy re-ranker with an engagement floor.

The re-ranker is a one-step greedy optimizer over hand-defined objectives
(no learned policy); an optional epsilon-greedy bandit can override the
objective cascade using realized one-step metric deltas as rewards. All
recommenders are pure functions of the snapshot and an rng stream; ties
break on the smallest id so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agents import UserState
from .content import ContentItem
from .errors import InvalidConfigError, NotFoundError
from .network import SocialGraph

CONNECTION_KINDS = ("random", "overlap", "diversified")
RANKER_KINDS = ("chronological", "cwbrs")

REDUCE_EXTREMITY = "reduce-extremity-exposure"
INCREASE_DIVERSITY = "increase-diversity"
MAINTAIN_ENGAGEMENT = "maintain-engagement"
OBJECTIVES = (REDUCE_EXTREMITY, INCREASE_DIVERSITY, MAINTAIN_ENGAGEMENT)


def _ball(g: SocialGraph, u: int, radius: int) -> set[int]:
    """Nodes within graph distance `radius` of u, excluding u."""
    seen = {u}
    frontier = {u}
    for _ in range(radius):
        nxt = set()
        for v in frontier:
            nxt |= g.neighbors(v)
        frontier = nxt - seen
        seen |= frontier
        if not frontier:
            break
    seen.discard(u)
    return seen


def recommend_connection(
    g: SocialGraph,
    u: int,
    kind: str,
    opinions,
    rng: np.random.Generator,
    order: int = 2,
) -> int | None:
    """Propose one candidate to connect with u, or None if nobody is eligible.

    overlap: most shared contacts within the configured neighborhood order
    (order 2 = common friends). diversified: largest opinion distance.
    random: uniform over eligible users. Ties break on the smallest id.
    """
    if kind not in CONNECTION_KINDS:
        raise InvalidConfigError(f"unknown connection recommender {kind!r}")
    if not (0 <= u < g.n):
        raise NotFoundError(f"unknown user id {u}")
    excluded = g.neighbors(u)
    eligible = [v for v in range(g.n) if v != u and v not in excluded]
    if not eligible:
        return None
    if kind == "random":
        return eligible[int(rng.random() * len(eligible))]
    if kind == "overlap":
        if order < 2:
            raise InvalidConfigError(f"overlap order must be >= 2, got {order}")
        ball = _ball(g, u, order - 1)
        best, best_score = None, -1
        for v in eligible:
            score = len(ball & g.neighbors(v))
            if score > best_score:
                best, best_score = v, score
        return best
    # diversified
    o_u = opinions[u]
    best, best_score = None, -1.0
    for v in eligible:
        score = abs(o_u - opinions[v])
        if score > best_score:
            best, best_score = v, score
    return best


def rank_chronological(pool: list[ContentItem], k: int) -> list[ContentItem]:
    """The k most recent items; ties on step go to the lower item id."""
    if k < 1:
        raise InvalidConfigError(f"feed size must be >= 1, got {k}")
    return sorted(pool, key=lambda it: (-it.step, it.id))[:k]


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveThresholds:
    tau_extremity: float = 0.5
    tau_diversity: float = 0.3


def select_objective(
    windowed_ce_extremity: float | None,
    windowed_diversity: float | None,
    thresholds: ObjectiveThresholds,
) -> str:
    """Rule cascade over the user's windowed exposure snapshot.

    Missing window data cannot trigger a rule, so a cold-start user falls
    through to maintain-engagement.
    """
    if windowed_ce_extremity is not None and windowed_ce_extremity > thresholds.tau_extremity:
        return REDUCE_EXTREMITY
    if windowed_diversity is not None and windowed_diversity < thresholds.tau_diversity:
        return INCREASE_DIVERSITY
    return MAINTAIN_ENGAGEMENT


def _bin_index(opinion: float, bins: int) -> int:
    return min(int((opinion + 1.0) * 0.5 * bins), bins - 1)


def exposure_bin_counts(u: UserState, bins: int, lo_step: int) -> dict[int, int]:
    """How often each opinion bin appeared in u's recent feeds."""
    counts: dict[int, int] = {}
    for step, opinion in u.exposure_opinions:
        if step < lo_step:
            continue
        b = _bin_index(opinion, bins)
        counts[b] = counts.get(b, 0) + 1
    return counts


def objective_score(
    item: ContentItem,
    objective: str,
    user_opinion: float,
    bin_counts: dict[int, int],
    bins: int,
) -> float:
    """Additive per-item score under the active objective.

    The re-ranker consumes detector labels, not ground truth, so detector
    noise propagates into the decisions by construction.
    """
    if objective == REDUCE_EXTREMITY:
        return 0.0 if item.detected.get("extremity", False) else 1.0
    if objective == INCREASE_DIVERSITY:
        seen = bin_counts.get(_bin_index(item.opinion, bins), 0)
        return 1.0 / (1.0 + seen)
    if objective == MAINTAIN_ENGAGEMENT:
        return 1.0 - abs(item.opinion - user_opinion) / 2.0
    raise InvalidConfigError(f"unknown objective {objective!r}")


def cwbrs_rerank(
    pool: list[ContentItem],
    u: UserState,
    objective: str,
    k: int,
    s_min: float,
    d_backfire: float,
    bins: int,
    lo_step: int = 0,
) -> tuple[list[ContentItem], bool]:
    """Greedy forward selection of up to k items maximizing the objective
    score, keeping the predicted satisfaction of the selected feed at or
    above s_min whenever that is feasible.

    Under increase-diversity, items at backfire distance are excluded
    outright (never emitted). When no nonempty feed can meet the floor, the
    satisfaction-maximizing prefix of the unconstrained greedy order is
    returned and the step is flagged (second return value False).
    """
    if k < 1:
        raise InvalidConfigError(f"feed size must be >= 1, got {k}")
    if not pool:
        return [], True

    candidates = pool
    if objective == INCREASE_DIVERSITY:
        candidates = [it for it in pool if abs(it.opinion - u.opinion) < d_backfire]
        if not candidates:
            return [], True

    bin_counts = exposure_bin_counts(u, bins, lo_step)
    scored = sorted(
        candidates,
        key=lambda it: (-objective_score(it, objective, u.opinion, bin_counts, bins), it.id),
    )

    selected: list[ContentItem] = []
    dist_sum = 0.0
    remaining = list(scored)
    while len(selected) < k and remaining:
        placed = False
        for i, it in enumerate(remaining):
            d = abs(it.opinion - u.opinion)
            sat = 1.0 - (dist_sum + d) / (len(selected) + 1) / 2.0
            if sat >= s_min:
                selected.append(it)
                dist_sum += d
                remaining.pop(i)
                placed = True
                break
        if not placed:
            break

    if selected:
        return selected, True

    # Floor infeasible for any nonempty feed: return the prefix of the
    # greedy order with the highest predicted satisfaction.
    best_len, best_sat = 1, -1.0
    dist_sum = 0.0
    for i, it in enumerate(scored[:k]):
        dist_sum += abs(it.opinion - u.opinion)
        sat = 1.0 - dist_sum / (i + 1) / 2.0
        if sat > best_sat:
            best_len, best_sat = i + 1, sat
    return scored[:best_len], False


# ---------------------------------------------------------------------------
# Objective bandit (optional epsilon-greedy layer over the cascade)
# ---------------------------------------------------------------------------


@dataclass
class ObjectiveBandit:
    """Running mean reward per objective; epsilon == 0 disables the layer
    so selection is exactly the rule cascade."""

    epsilon: float = 0.0
    counts: dict[str, int] = field(default_factory=lambda: {o: 0 for o in OBJECTIVES})
    means: dict[str, float] = field(default_factory=lambda: {o: 0.0 for o in OBJECTIVES})

    def select(self, cascade_choice: str, rng: np.random.Generator) -> str:
        if self.epsilon <= 0.0:
            return cascade_choice
        if rng.random() < self.epsilon:
            return OBJECTIVES[int(rng.random() * len(OBJECTIVES))]
        tried = [o for o in OBJECTIVES if self.counts[o] > 0]
        if not tried:
            return cascade_choice
        best = max(self.means[o] for o in tried)
        top = [o for o in tried if self.means[o] == best]
        if len(top) == 1:
            return top[0]
        return top[int(rng.random() * len(top))]


def objective_bandit_update(
    stats: ObjectiveBandit, objective: str, reward: float
) -> ObjectiveBandit:
    """Fold one realized one-step metric delta into the running means."""
    if objective not in stats.counts:
        raise NotFoundError(f"unknown objective {objective!r}")
    stats.counts[objective] += 1
    n = stats.counts[objective]
    stats.means[objective] += (reward - stats.means[objective]) / n
    return stats
