"""Shared domain types for the two-stage trial engine.

A trial has two stages. Stage one randomises every participant between
prophylaxis (action 1) and placebo (action 0) with a binary infection
endpoint. Participants who become infected enter stage two, where they are
randomised between active treatment (action 1) and placebo (action 0) with
a binary death endpoint. Everything downstream (inference, policy,
allocation, simulation) is written against the value types defined here.

Two design constants shape a trial:

* ``m`` (myopic flag): with ``m = 1`` the stage-two history collapses to
  the empty history (stage-two data are pooled over the stage-one action)
  and stage-one decisions ignore stage-two payoffs entirely.
* ``c`` (adaptation exponent): randomisation probabilities are
  proportional to expected utility raised to the power ``c``, so ``c = 0``
  is fixed equal randomisation and ``c = 1`` is fully response-adaptive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

if TYPE_CHECKING:
    from .simulator import InterimSnapshot

# Binary action / outcome codes. Stage 1: action 1 = prophylaxis, outcome
# 1 = infection. Stage 2: action 1 = treatment, outcome 1 = death.
Action = int
StageOutcome = int

ACTIONS: tuple[Action, ...] = (0, 1)

#: Stage-one infection-probability grid (21 values, 0 to 1 in steps of 0.05).
R_GRID: tuple[float, ...] = tuple(i / 100 for i in range(0, 101, 5))

#: Stage-two death-probability grid (8 values).
S_GRID: tuple[float, ...] = tuple(i / 100 for i in (5, 10, 20, 40, 60, 80, 90, 95))

#: Reduced grids spanning the same qualitative regions at a fraction of the
#: cost; used for CI and desk-scale runs.
R_GRID_REDUCED: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
S_GRID_REDUCED: tuple[float, ...] = (0.05, 0.4, 0.8, 0.95)


class ConfigurationError(ValueError):
    """Raised when a configuration object (e.g. a utility table) is invalid."""


def _check_binary(name: str, value: int) -> None:
    if value not in (0, 1):
        raise ValueError(f"{name} must be 0 or 1, got {value!r}")


def _check_prob(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")


@dataclass(frozen=True)
class History:
    """Patient history at the point a decision is made.

    Stage one always has the empty history. Stage two histories carry the
    stage-one action and outcome when the design is dynamic (``myopic=0``)
    and collapse to a single pooled cell when it is myopic (``myopic=1``).
    """

    stage: int
    stage1_action: Action | None = None
    stage1_outcome: StageOutcome | None = None
    myopic: int = 0

    def __post_init__(self) -> None:
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage!r}")
        _check_binary("myopic", self.myopic)
        if self.stage == 1:
            if self.stage1_action is not None or self.stage1_outcome is not None:
                raise ValueError("stage-1 history must be empty")
        elif self.myopic:
            if self.stage1_action is not None or self.stage1_outcome is not None:
                raise ValueError("myopic stage-2 history must be pooled (empty)")
        else:
            if self.stage1_action is None or self.stage1_outcome is None:
                raise ValueError("dynamic stage-2 history requires stage-1 action and outcome")
            _check_binary("stage1_action", self.stage1_action)
            _check_binary("stage1_outcome", self.stage1_outcome)

    @classmethod
    def first_stage(cls) -> "History":
        return _FIRST_STAGE

    @classmethod
    def second_stage(cls, stage1_action: Action) -> "History":
        """Dynamic stage-2 history; only infected patients reach stage 2."""
        return _SECOND_STAGE[stage1_action]

    @classmethod
    def second_stage_pooled(cls) -> "History":
        return _POOLED_STAGE


# Canonical instances: History is a frozen value type with only four
# reachable states, shared to keep hot loops cheap.
_FIRST_STAGE = History(stage=1)
_SECOND_STAGE = (
    History(stage=2, stage1_action=0, stage1_outcome=1, myopic=0),
    History(stage=2, stage1_action=1, stage1_outcome=1, myopic=0),
)
_POOLED_STAGE = History(stage=2, myopic=1)


def stage2_histories(myopic_m: int) -> tuple[History, ...]:
    """All stage-2 history cells reachable under the given myopic flag."""
    _check_binary("myopic_m", myopic_m)
    if myopic_m:
        return (_POOLED_STAGE,)
    return _SECOND_STAGE


@dataclass(frozen=True)
class PatientRecord:
    """One participant's complete path through the trial."""

    stage1_action: Action
    stage1_outcome: StageOutcome
    stage2_action: Action | None
    stage2_outcome: StageOutcome | None
    realized_utility: float

    def __post_init__(self) -> None:
        _check_binary("stage1_action", self.stage1_action)
        _check_binary("stage1_outcome", self.stage1_outcome)
        if self.stage1_outcome == 1:
            if self.stage2_action is None or self.stage2_outcome is None:
                raise ValueError("infected patients must carry stage-2 action and outcome")
            _check_binary("stage2_action", self.stage2_action)
            _check_binary("stage2_outcome", self.stage2_outcome)
        else:
            if self.stage2_action is not None or self.stage2_outcome is not None:
                raise ValueError("uninfected patients must not carry stage-2 fields")
        if not (math.isfinite(self.realized_utility) and self.realized_utility >= 0.0):
            raise ValueError(f"realized_utility must be finite and >= 0, got {self.realized_utility!r}")

    @property
    def infected(self) -> bool:
        return self.stage1_outcome == 1


@dataclass(frozen=True)
class Scenario:
    """Generative truth: infection probabilities (r0, r1) by stage-one arm
    and death probabilities (s0, s1) by stage-one arm.

    The death probability depends on the stage-one action only, never on
    the stage-two action.
    """

    r0: float
    r1: float
    s0: float
    s1: float

    def __post_init__(self) -> None:
        for name in ("r0", "r1", "s0", "s1"):
            _check_prob(name, getattr(self, name))

    def infection_prob(self, stage1_action: Action) -> float:
        return self.r1 if stage1_action else self.r0

    def death_prob(self, stage1_action: Action) -> float:
        return self.s1 if stage1_action else self.s0


def scenario_grid() -> list[Scenario]:
    """Full scenario grid in row-major order: s0 outermost, then s1, then
    r0, then r1 innermost. 21^2 x 8^2 = 28224 scenarios.

    The ordering is fixed so CSV output is diff-stable across runs and
    matches the panel layout of the relative-utility matrices (one panel
    per (s0, s1) pair, r0 on the x axis, r1 on the y axis).
    """
    return [
        Scenario(r0=r0, r1=r1, s0=s0, s1=s1)
        for s0 in S_GRID
        for s1 in S_GRID
        for r0 in R_GRID
        for r1 in R_GRID
    ]


def reduced_scenario_grid() -> list[Scenario]:
    """Reduced grid (5^2 x 4^2 = 400 scenarios), same nesting order."""
    return [
        Scenario(r0=r0, r1=r1, s0=s0, s1=s1)
        for s0 in S_GRID_REDUCED
        for s1 in S_GRID_REDUCED
        for r0 in R_GRID_REDUCED
        for r1 in R_GRID_REDUCED
    ]


# The ten realisation rows: two stage-1 rows (uninfected) and eight stage-2
# rows (a1 x a2 x survived/died).
UTILITY_ROW_KEYS: tuple[str, ...] = (
    "uninfected_a1_0",
    "uninfected_a1_1",
    "survived_a1_0_a2_0",
    "died_a1_0_a2_0",
    "survived_a1_0_a2_1",
    "died_a1_0_a2_1",
    "survived_a1_1_a2_0",
    "died_a1_1_a2_0",
    "survived_a1_1_a2_1",
    "died_a1_1_a2_1",
)


@dataclass(frozen=True)
class UtilityTable:
    """Utility of every terminal (history, action, outcome) realisation.

    ``stage1_alive[a1]`` is the utility of escaping infection under
    stage-one action ``a1``; ``stage2[a1][a2][y2]`` is the utility of an
    infected patient with stage-one action ``a1``, stage-two action ``a2``
    and death indicator ``y2``. All entries must be finite and
    non-negative so utility-proportional randomisation is well defined.
    """

    stage1_alive: tuple[float, float]
    stage2: tuple[tuple[tuple[float, float], tuple[float, float]], ...]

    def __post_init__(self) -> None:
        if len(self.stage1_alive) != 2 or len(self.stage2) != 2:
            raise ConfigurationError("utility table must cover both stage-1 actions")
        for key, value in self.entries().items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0.0):
                raise ConfigurationError(f"utility for row {key!r} must be finite and >= 0, got {value!r}")

    @classmethod
    def default(cls) -> "UtilityTable":
        """Unit utility for survival, zero for death, at every realisation."""
        alive_dead = ((1.0, 0.0), (1.0, 0.0))
        return cls(stage1_alive=(1.0, 1.0), stage2=(alive_dead, alive_dead))

    @classmethod
    def from_entries(cls, entries: Mapping[str, float]) -> "UtilityTable":
        """Build a table from the ten named realisation rows.

        Missing rows fall back to the default table, so a partial override
        (e.g. only the death rows) is enough. Unknown keys are rejected.
        """
        unknown = set(entries) - set(UTILITY_ROW_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown utility rows: {sorted(unknown)}")
        base = dict(cls.default().entries())
        base.update({k: float(v) for k, v in entries.items()})
        stage1_alive = (base["uninfected_a1_0"], base["uninfected_a1_1"])
        stage2 = tuple(
            tuple(
                (base[f"survived_a1_{a1}_a2_{a2}"], base[f"died_a1_{a1}_a2_{a2}"])
                for a2 in (0, 1)
            )
            for a1 in (0, 1)
        )
        return cls(stage1_alive=stage1_alive, stage2=stage2)

    def entries(self) -> dict[str, float]:
        """The ten realisation rows as a flat named mapping."""
        out: dict[str, float] = {}
        for a1 in (0, 1):
            out[f"uninfected_a1_{a1}"] = self.stage1_alive[a1]
        for a1 in (0, 1):
            for a2 in (0, 1):
                out[f"survived_a1_{a1}_a2_{a2}"] = self.stage2[a1][a2][0]
                out[f"died_a1_{a1}_a2_{a2}"] = self.stage2[a1][a2][1]
        return out

    def stage1_utility(self, stage1_action: Action) -> float:
        """Utility of the uninfected stage-1 row."""
        _check_binary("stage1_action", stage1_action)
        return self.stage1_alive[stage1_action]

    def stage2_utility(self, stage1_action: Action, stage2_action: Action, outcome: StageOutcome) -> float:
        _check_binary("stage1_action", stage1_action)
        _check_binary("stage2_action", stage2_action)
        _check_binary("outcome", outcome)
        return self.stage2[stage1_action][stage2_action][outcome]

    def stage2_outcome_utilities(
        self, stage1_action: Action | None, stage2_action: Action
    ) -> tuple[float, float]:
        """(survived, died) utilities for a stage-2 cell.

        ``stage1_action=None`` addresses a pooled (myopic) history cell,
        which is only well defined when the stage-2 rows do not depend on
        the stage-one action.
        """
        _check_binary("stage2_action", stage2_action)
        if stage1_action is not None:
            _check_binary("stage1_action", stage1_action)
            return self.stage2[stage1_action][stage2_action]
        u0 = self.stage2[0][stage2_action]
        u1 = self.stage2[1][stage2_action]
        if u0 != u1:
            raise ConfigurationError(
                "pooled stage-2 utilities are ambiguous: rows "
                f"survived/died_a1_0_a2_{stage2_action} and _a1_1_a2_{stage2_action} differ"
            )
        return u0

    def min_entry(self) -> float:
        return min(self.entries().values())

    def max_entry(self) -> float:
        return max(self.entries().values())


def utility_lookup(table: UtilityTable, record: PatientRecord) -> float:
    """Utility of a patient's terminal row.

    Uninfected patients resolve to their stage-1 row; infected patients to
    the (a1, a2, y2) stage-2 row.
    """
    if record.stage1_outcome == 0:
        return table.stage1_utility(record.stage1_action)
    assert record.stage2_action is not None and record.stage2_outcome is not None
    return table.stage2_utility(record.stage1_action, record.stage2_action, record.stage2_outcome)


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters for both posterior engines.

    The conjugate engine places an independent Beta(alpha, beta) prior on
    each history-action cell; the MCMC engine places independent
    Normal(mean, sd) priors on every regression coefficient. Defaults are
    weakly informative: Beta(1, 1) and Normal(0, 2.5).
    """

    conjugate_alpha: float = 1.0
    conjugate_beta: float = 1.0
    coefficient_prior_mean: float = 0.0
    coefficient_prior_sd: float = 2.5

    def __post_init__(self) -> None:
        for name in ("conjugate_alpha", "conjugate_beta", "coefficient_prior_sd"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be a positive real, got {value!r}")
        if not math.isfinite(self.coefficient_prior_mean):
            raise ValueError("coefficient_prior_mean must be finite")


ENGINES: tuple[str, ...] = ("conjugate", "mcmc")


@dataclass(frozen=True)
class DesignConfig:
    """One trial design: the (m, c) cell plus operational settings.

    ``(m, c)`` in {0,1}^2 reproduces the four canonical design cells
    (fixed/adaptive x dynamic/myopic); ``adapt_c`` is generalised to any
    non-negative real, where values between 0 and 1 temper adaptation.
    ``min_alloc_prob`` is an optional allocation floor (default off).
    """

    myopic_m: int
    adapt_c: float
    max_patients: int = 2000
    num_interims: int = 4
    prior_spec: PriorSpec = field(default_factory=PriorSpec)
    engine: str = "conjugate"
    seed: int = 0
    min_alloc_prob: float = 0.0

    def __post_init__(self) -> None:
        _check_binary("myopic_m", self.myopic_m)
        if not (math.isfinite(self.adapt_c) and self.adapt_c >= 0.0):
            raise ValueError(f"adapt_c must be a non-negative real, got {self.adapt_c!r}")
        if self.max_patients < 1:
            raise ValueError("max_patients must be positive")
        if self.num_interims < 1:
            raise ValueError("num_interims must be >= 1")
        if self.max_patients % self.num_interims != 0:
            raise ValueError(
                f"max_patients ({self.max_patients}) must be divisible by "
                f"num_interims ({self.num_interims}) for equal-size cohorts"
            )
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not (0.0 <= self.min_alloc_prob <= 0.5):
            raise ValueError("min_alloc_prob must lie in [0, 0.5] for two actions")


def canonical_designs(
    max_patients: int = 2000,
    num_interims: int = 4,
    prior_spec: PriorSpec | None = None,
    engine: str = "conjugate",
) -> tuple[DesignConfig, ...]:
    """The four canonical design cells, ordered (m, c) = (0,0), (0,1), (1,0), (1,1)."""
    prior = prior_spec if prior_spec is not None else PriorSpec()
    return tuple(
        DesignConfig(
            myopic_m=m,
            adapt_c=float(c),
            max_patients=max_patients,
            num_interims=num_interims,
            prior_spec=prior,
            engine=engine,
        )
        for m in (0, 1)
        for c in (0, 1)
    )


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one simulated trial.

    ``mean_utility`` is the empirical mean realized utility over all
    enrolled patients. ``per_interim_alloc`` holds one allocation snapshot
    per adapting analysis. ``patient_records`` is populated only when the
    caller asks for patient-level output.
    """

    mean_utility: float
    per_interim_alloc: tuple["InterimSnapshot", ...]
    seed: int
    patient_records: tuple[PatientRecord, ...] | None = None
    warnings: tuple[str, ...] = ()
