"""User state and opinion dynamics: bounded-confidence assimilation with a
backfire band, posting behavior, and connection acceptance.

The update rule is 1-D and applied per feed item, sequentially in feed
order (not batch-averaged), so order effects stay observable. Opinions are
clipped to [-1, 1] after every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


@dataclass
class DynamicsParams:
    """Free parameters of the user model.

    d_assim / d_backfire bound the assimilation and repulsion bands;
    mu / lam are the respective rates. Opinion distances in between leave
    the opinion untouched.
    """

    d_assim: float = 0.3
    d_backfire: float = 0.8
    mu: float = 0.05
    lam: float = 0.05
    p_post: float = 0.5
    post_noise: float = 0.02
    h_accept: float = 1.0

    def validate(self) -> None:
        if not (0 < self.d_assim <= self.d_backfire <= 2):
            raise InvalidConfigError(
                f"need 0 < d_assim <= d_backfire <= 2, got {self.d_assim}, {self.d_backfire}"
            )
        if not (0 <= self.mu <= 1):
            raise InvalidConfigError(f"mu must be in [0, 1], got {self.mu}")
        if not (0 <= self.lam <= 1):
            raise InvalidConfigError(f"lam must be in [0, 1], got {self.lam}")
        if not (0 <= self.p_post <= 1):
            raise InvalidConfigError(f"p_post must be in [0, 1], got {self.p_post}")
        if not (self.post_noise >= 0):
            raise InvalidConfigError(f"post_noise must be >= 0, got {self.post_noise}")
        if not (self.h_accept > 0):
            raise InvalidConfigError(f"h_accept must be > 0, got {self.h_accept}")


@dataclass
class UserState:
    """Per-user mutable state plus rolling metric histories.

    Resilience is drawn once at init and fixed for the run. The cs/ce
    windows hold one compact record per step per aspect; pruning to the
    metric window happens in the step transaction.

    cs record: (step, count, truth_sum, detected_sum)
    ce record: (step, n_int, truth_int, det_int, n_ext, truth_ext, det_ext)
    """

    id: int
    opinion: float
    resilience: float
    cs_window: dict[str, list[tuple]] = field(default_factory=dict)
    ce_window: dict[str, list[tuple]] = field(default_factory=dict)
    exposure_opinions: list[tuple[int, float]] = field(default_factory=list)
    satisfaction_trace: list[float | None] = field(default_factory=list)
    raw_distance_trace: list[float | None] = field(default_factory=list)
    diversity_trace: list[float | None] = field(default_factory=list)

    def push_share(self, step: int, aspect: str, truth: float, detected: bool) -> None:
        rows = self.cs_window.setdefault(aspect, [])
        if rows and rows[-1][0] == step:
            s, c, t, d = rows[-1]
            rows[-1] = (s, c + 1, t + truth, d + (1.0 if detected else 0.0))
        else:
            rows.append((step, 1, truth, 1.0 if detected else 0.0))

    def push_exposure(
        self, step: int, aspect: str, truth: float, detected: bool, external: bool
    ) -> None:
        rows = self.ce_window.setdefault(aspect, [])
        det = 1.0 if detected else 0.0
        if not rows or rows[-1][0] != step:
            rows.append((step, 0, 0.0, 0.0, 0, 0.0, 0.0))
        s, ni, ti, di, ne, te, de = rows[-1]
        if external:
            rows[-1] = (s, ni, ti, di, ne + 1, te + truth, de + det)
        else:
            rows[-1] = (s, ni + 1, ti + truth, di + det, ne, te, de)

    def prune(self, oldest_step: int) -> None:
        """Drop window entries older than oldest_step (exclusive lower bound)."""
        for rows in self.cs_window.values():
            while rows and rows[0][0] < oldest_step:
                rows.pop(0)
        for rows in self.ce_window.values():
            while rows and rows[0][0] < oldest_step:
                rows.pop(0)
        if self.exposure_opinions:
            keep = [e for e in self.exposure_opinions if e[0] >= oldest_step]
            if len(keep) != len(self.exposure_opinions):
                self.exposure_opinions = keep


def update_opinion(o: float, c: float, p: DynamicsParams) -> float:
    """One exposure event: assimilate toward close content, back away from
    distant content, ignore the band in between. Result clipped to [-1, 1]."""
    if not (math.isfinite(o) and math.isfinite(c)):
        raise InvalidInputError(f"non-finite opinion update inputs: o={o}, c={c}")
    delta = c - o
    a = abs(delta)
    if a <= p.d_assim:
        o = o + p.mu * delta
    elif a >= p.d_backfire:
        o = o - p.lam * delta
    if o > 1.0:
        return 1.0
    if o < -1.0:
        return -1.0
    return o


def generate_post(
    u: UserState,
    p: DynamicsParams,
    step: int,
    factory,
    rng: np.random.Generator,
):
    """With probability p_post, emit a content item carrying the user's
    current opinion plus Gaussian jitter (clipped). `factory` is the content
    module's item factory, which assigns ids and aspect ground truth."""
    if rng.random() >= p.p_post:
        return None
    opinion = u.opinion
    if p.post_noise > 0:
        opinion += rng.normal(0.0, p.post_noise)
    opinion = min(1.0, max(-1.0, opinion))
    return factory.make_item(author=u.id, step=step, opinion=opinion, source="internal", rng=rng)


def accept_connection(
    u: UserState, candidate_opinion: float, p: DynamicsParams, rng: np.random.Generator
) -> bool:
    """Accept a proposed connection with probability exp(-|Δo| / h_accept)."""
    if not (math.isfinite(u.opinion) and math.isfinite(candidate_opinion)):
        raise InvalidInputError("non-finite opinion in accept_connection")
    return rng.random() < math.exp(-abs(u.opinion - candidate_opinion) / p.h_accept)
