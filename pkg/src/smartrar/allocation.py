"""Utility-weighted randomisation probabilities.

Each action's allocation probability is its expected utility raised to the
power ``c``, normalised over the action set:

    p(a | h) = Q(a)^c / sum_a' Q(a')^c

``c = 0`` gives fixed equal randomisation (0^0 is taken as 1), ``c = 1``
allocates in proportion to expected utility, and an arm whose expected
utility reaches zero stops receiving patients. Q-values must be
non-negative for the power weighting to be well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .core import Action, History

#: Below this total weight the normalisation is considered degenerate and
#: allocation falls back to equal probabilities.
DEGENERATE_TOTAL = 1e-12

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AllocationProbs:
    """Randomisation probabilities over actions for one history cell."""

    history: History
    probs: Mapping[Action, float]

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("probs must be non-empty")
        for action, p in self.probs.items():
            if action not in (0, 1):
                raise ValueError(f"action must be 0 or 1, got {action!r}")
            if not (math.isfinite(p) and -SUM_TOLERANCE <= p <= 1.0 + SUM_TOLERANCE):
                raise ValueError(f"probability for action {action} out of [0, 1]: {p!r}")
        total = sum(self.probs.values())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"allocation probabilities must sum to 1, got {total!r}")

    def prob(self, action: Action) -> float:
        return self.probs[action]


def equal_allocation(history: History, actions: tuple[Action, ...] = (0, 1)) -> AllocationProbs:
    share = 1.0 / len(actions)
    return AllocationProbs(history=history, probs={a: share for a in actions})


def allocation_probs(
    q: Mapping[Action, object],
    c: float,
    *,
    history: History | None = None,
    min_prob: float = 0.0,
) -> AllocationProbs:
    """Convert Q-values into allocation probabilities.

    ``q`` maps actions to Q-values (either bare floats or objects with a
    ``value`` attribute). ``min_prob`` imposes an optional floor on every
    probability (re-normalised afterwards); the default of 0 reproduces the
    unfloored rule exactly.
    """
    if not (math.isfinite(c) and c >= 0.0):
        raise ValueError(f"exponent c must be a non-negative real, got {c!r}")
    if history is None:
        history = History.first_stage()
    actions = sorted(q)
    values = {a: float(getattr(q[a], "value", q[a])) for a in actions}
    for a, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"Q-value for action {a} is not finite: {v!r}")
        if v < 0.0:
            raise ValueError(
                f"Q-value for action {a} is negative ({v!r}); utility tables must be non-negative"
            )

    if c == 0.0:
        probs = {a: 1.0 / len(actions) for a in actions}
    else:
        weights = {a: v**c for a, v in values.items()}
        total = sum(weights.values())
        if total < DEGENERATE_TOTAL:
            probs = {a: 1.0 / len(actions) for a in actions}
        else:
            probs = {a: w / total for a, w in weights.items()}

    if min_prob > 0.0:
        floored = {a: max(p, min_prob) for a, p in probs.items()}
        total = sum(floored.values())
        probs = {a: p / total for a, p in floored.items()}

    return AllocationProbs(history=history, probs=probs)
