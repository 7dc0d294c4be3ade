"""Content items with ground-truth aspect scores and simulated noisy detectors.

Detectors are confusion-matrix simulations: an item whose ground truth
clears the aspect threshold is flagged with probability tpr, otherwise with
probability fpr. The affine law E[flagged] = tpr*p + fpr*(1-p) and its
inverse (de-biasing) are the load-bearing properties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidConfigError, NotFoundError, UndefinedMeasureError


class Polarity(Enum):
    HARMFUL = "harmful"
    BENEFICIAL = "beneficial"


@dataclass(frozen=True)
class Aspect:
    """A named dimension of content value or harm, scored per item in [0, 1]."""

    name: str
    polarity: Polarity


EXTREMITY = Aspect("extremity", Polarity.HARMFUL)
TOXICITY = Aspect("toxicity", Polarity.HARMFUL)

BUILTIN_ASPECTS: dict[str, Aspect] = {a.name: a for a in (EXTREMITY, TOXICITY)}


@dataclass(frozen=True)
class DetectorParams:
    """Confusion-matrix detector for one aspect."""

    tpr: float = 1.0
    fpr: float = 0.0
    threshold: float = 0.5

    def validate(self, aspect: str = "") -> None:
        label = f" for {aspect}" if aspect else ""
        for name, v in (("tpr", self.tpr), ("fpr", self.fpr), ("threshold", self.threshold)):
            if not (0.0 <= v <= 1.0):
                raise InvalidConfigError(f"detector {name}{label} must be in [0, 1], got {v}")


@dataclass
class ContentItem:
    """Immutable-after-creation content unit.

    aspect_truth holds sampled ground truth for aspects that are not
    derivable from the opinion (toxicity). detected holds the creation-time
    detector labels that the ranking pipeline consumes.
    """

    id: int
    author: int | None
    step: int
    opinion: float
    aspect_truth: dict[str, float] = field(default_factory=dict)
    source: str = "internal"
    detected: dict[str, bool] = field(default_factory=dict)


def true_aspect_score(item: ContentItem, aspect: Aspect) -> float:
    """Ground-truth score of `item` for `aspect`; deterministic given the item.

    Extremity is |opinion|; other aspects read the truth sampled at
    creation. Unknown aspects (not built-in, not stored) raise.
    """
    if aspect.name == "extremity":
        return abs(item.opinion)
    if aspect.name in item.aspect_truth:
        return item.aspect_truth[aspect.name]
    raise NotFoundError(f"aspect {aspect.name!r} not registered for item {item.id}")


def noisy_detect(
    item: ContentItem, aspect: Aspect, dp: DetectorParams, rng: np.random.Generator
) -> bool:
    """One detector draw: flag with prob tpr if truth >= threshold, else fpr."""
    truth = true_aspect_score(item, aspect)
    p = dp.tpr if truth >= dp.threshold else dp.fpr
    return bool(rng.random() < p)


def measured_prevalence(
    items: list[ContentItem], aspect: Aspect, dp: DetectorParams, rng: np.random.Generator
) -> float:
    """Fraction of items the noisy detector flags.

    Expected value is tpr*p + fpr*(1-p) for true prevalence p; the two error
    kinds pull in opposite directions and cancel exactly when tpr = fpr.
    """
    if not items:
        raise UndefinedMeasureError("prevalence undefined on an empty collection")
    flagged = 0
    for item in items:
        if noisy_detect(item, aspect, dp, rng):
            flagged += 1
    return flagged / len(items)


def debias_prevalence(measured: float, dp: DetectorParams) -> float:
    """Invert the affine detection law: p = (measured - fpr) / (tpr - fpr).

    Requires tpr != fpr (a tpr==fpr detector carries no information about
    p). The result is clipped to [0, 1] against sampling noise.
    """
    if dp.tpr == dp.fpr:
        raise UndefinedMeasureError("de-biasing undefined when tpr == fpr")
    p = (measured - dp.fpr) / (dp.tpr - dp.fpr)
    return min(1.0, max(0.0, p))


class ItemFactory:
    """Creates items with sequential ids, sampled toxicity ground truth, and
    creation-time detector labels.

    Internal and external sources carry different toxicity prevalence;
    external items model the stream arriving from outside the community.
    """

    def __init__(
        self,
        detectors: dict[str, DetectorParams] | None = None,
        aspects: dict[str, Aspect] | None = None,
        internal_toxicity: float = 0.05,
        exogenous_toxicity: float = 0.2,
    ):
        self.aspects = dict(BUILTIN_ASPECTS if aspects is None else aspects)
        self.detectors = {name: DetectorParams() for name in self.aspects}
        if detectors:
            self.detectors.update(detectors)
        self.internal_toxicity = internal_toxicity
        self.exogenous_toxicity = exogenous_toxicity
        self._next_id = 0
        self.created = 0

    def make_item(
        self,
        author: int | None,
        step: int,
        opinion: float,
        source: str,
        rng: np.random.Generator,
    ) -> ContentItem:
        item = ContentItem(
            id=self._next_id,
            author=author,
            step=step,
            opinion=float(opinion),
            source=source,
        )
        self._next_id += 1
        self.created += 1
        if "toxicity" in self.aspects:
            prev = self.exogenous_toxicity if source == "external" else self.internal_toxicity
            item.aspect_truth["toxicity"] = 1.0 if rng.random() < prev else 0.0
        for name, aspect in self.aspects.items():
            item.detected[name] = noisy_detect(item, aspect, self.detectors[name], rng)
        return item
