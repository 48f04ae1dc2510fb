"""Whole-trial simulation: outcome generation, interim analyses, adaptation.

A trial enrols ``max_patients`` in ``num_interims`` equal cohorts. All
outcomes are observed immediately, so each scheduled analysis sees complete
data for every prior cohort. The first cohort is always randomised
equally at both stages; after each adapting analysis the allocation
probabilities are recomputed from posteriors, Q-values and the
utility-weighting rule, and applied wholesale to the next cohort. The
final analysis never re-randomises.

Outcome generation follows the two-stage generative model: infection is
Bernoulli in the stage-one arm's rate, and death among the infected is
Bernoulli in a rate that depends on the stage-one arm only, never on the
stage-two action.

Randomness comes from the Philox counter-based generator seeded from the
design seed; patient outcomes and the MCMC engine draw from independent,
deterministically derived substreams, so a trial is reproducible
bit-for-bit from (scenario, design) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .allocation import AllocationProbs, allocation_probs, equal_allocation
from .core import (
    Action,
    DesignConfig,
    History,
    PatientRecord,
    Scenario,
    TrialResult,
    UtilityTable,
    stage2_histories,
)
from .inference import (
    CellCounts,
    StageData,
    posterior_conjugate_cells,
    posterior_mcmc,
)
from .policy import q_stage1, q_stage2


@dataclass(frozen=True)
class InterimSchedule:
    """Cohort size and analysis plan for one trial.

    ``adapt_at`` lists the analyses after which allocation probabilities
    are recomputed; the final analysis is never among them.
    """

    cohort_size: int
    num_analyses: int = 4
    adapt_at: frozenset[int] = frozenset({1, 2, 3})

    def __post_init__(self) -> None:
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be positive")
        if self.num_analyses < 1:
            raise ValueError("num_analyses must be positive")
        allowed = set(range(1, self.num_analyses))
        if not set(self.adapt_at) <= allowed:
            raise ValueError(
                f"adapt_at must be a subset of {{1, ..., {self.num_analyses - 1}}}, "
                f"got {sorted(self.adapt_at)}"
            )

    @classmethod
    def from_design(cls, design: DesignConfig) -> "InterimSchedule":
        """Equal cohorts with adaptation at every analysis but the last."""
        return cls(
            cohort_size=design.max_patients // design.num_interims,
            num_analyses=design.num_interims,
            adapt_at=frozenset(range(1, design.num_interims)),
        )


@dataclass(frozen=True)
class InterimSnapshot:
    """Allocation probabilities in force after one adapting analysis."""

    analysis: int
    stage1: AllocationProbs
    stage2: tuple[AllocationProbs, ...]


@dataclass
class TrialState:
    """Mutable working state of a running trial."""

    records: list[PatientRecord] = field(default_factory=list)
    current_alloc_stage1: AllocationProbs | None = None
    current_alloc_stage2: dict[History, AllocationProbs] = field(default_factory=dict)
    rng_state: np.random.Generator | None = None


def true_value(scenario: Scenario, stage1_action: Action) -> float:
    """Expected participant utility for a stage-one arm under the default
    0/1 utility table: survive-uninfected plus survive-after-infection mass."""
    r = scenario.infection_prob(stage1_action)
    s = scenario.death_prob(stage1_action)
    return (1.0 - r) + r * (1.0 - s)


def generate_patient(
    scenario: Scenario,
    a1: Action,
    a2_provider: Callable[[History], Action],
    rng: np.random.Generator,
    utilities: UtilityTable | None = None,
) -> PatientRecord:
    """Draw one patient's outcomes given their stage-one action.

    Infection is Bernoulli(r_a1); on infection the stage-two action is
    obtained from ``a2_provider`` (called with the patient's dynamic
    stage-2 history) and death is Bernoulli(s_a1). The realized utility is
    looked up from the table at the terminal row.
    """
    table = utilities if utilities is not None else UtilityTable.default()
    y1 = int(rng.random() < scenario.infection_prob(a1))
    if not y1:
        record = PatientRecord(a1, 0, None, None, table.stage1_utility(a1))
        return record
    a2 = a2_provider(History.second_stage(a1))
    y2 = int(rng.random() < scenario.death_prob(a1))
    return PatientRecord(a1, 1, a2, y2, table.stage2_utility(a1, a2, y2))


def _stage_data_from_counts(
    events1: np.ndarray,
    trials1: np.ndarray,
    events2: np.ndarray,
    trials2: np.ndarray,
    myopic_m: int,
) -> tuple[StageData, StageData]:
    """Assemble StageData from running count arrays.

    ``events2``/``trials2`` are (a1, a2)-indexed; the myopic design pools
    them over the stage-one action.
    """
    h1 = History.first_stage()
    stage1 = StageData(
        stage=1,
        cells={
            (h1, a): CellCounts(events=int(events1[a]), trials=int(trials1[a])) for a in (0, 1)
        },
    )
    if myopic_m:
        pooled = History.second_stage_pooled()
        cells2 = {
            (pooled, a2): CellCounts(
                events=int(events2[0, a2] + events2[1, a2]),
                trials=int(trials2[0, a2] + trials2[1, a2]),
            )
            for a2 in (0, 1)
        }
    else:
        cells2 = {
            (History.second_stage(a1), a2): CellCounts(
                events=int(events2[a1, a2]), trials=int(trials2[a1, a2])
            )
            for a1 in (0, 1)
            for a2 in (0, 1)
        }
    return stage1, StageData(stage=2, cells=cells2)


def _spawn_engine_seed(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, np.uint64)[0])


def run_trial(
    scenario: Scenario,
    design: DesignConfig,
    *,
    utilities: UtilityTable | None = None,
    keep_records: bool = False,
) -> TrialResult:
    """Simulate one complete trial under the given design.

    Patients are simulated cohort by cohort with vectorised Bernoulli
    draws (assignment, infection, then treatment assignment and death for
    the infected, in patient order). After each adapting analysis the
    posteriors, Q-values and allocation probabilities are recomputed for
    both stages, honouring the myopic flag for both the stage-one utility
    and the stage-two history pooling. The computation also runs when
    ``c = 0``; it then simply reproduces equal allocation.

    Fully deterministic given ``design.seed``; set ``keep_records`` to
    materialise per-patient records (off by default for sweep throughput).
    """
    table = utilities if utilities is not None else UtilityTable.default()
    schedule = InterimSchedule.from_design(design)
    m = design.myopic_m

    root = np.random.SeedSequence(design.seed)
    patient_stream, engine_stream = root.spawn(2)
    rng = np.random.Generator(np.random.Philox(patient_stream))
    engine_children = (
        engine_stream.spawn(schedule.num_analyses) if design.engine == "mcmc" else None
    )

    state = TrialState(rng_state=rng)
    state.current_alloc_stage1 = equal_allocation(History.first_stage())
    state.current_alloc_stage2 = {h: equal_allocation(h) for h in stage2_histories(m)}

    # Utility lookup arrays: stage-1 row by a1; stage-2 row by (a1, a2, y2).
    u_stage1 = np.array(table.stage1_alive, dtype=np.float64)
    u_stage2 = np.array(table.stage2, dtype=np.float64)

    events1 = np.zeros(2, dtype=np.int64)
    trials1 = np.zeros(2, dtype=np.int64)
    events2 = np.zeros((2, 2), dtype=np.int64)
    trials2 = np.zeros((2, 2), dtype=np.int64)

    total_utility = 0.0
    snapshots: list[InterimSnapshot] = []
    warnings: list[str] = []
    kept: list[tuple[np.ndarray, ...]] = []

    n = schedule.cohort_size
    for analysis in range(1, schedule.num_analyses + 1):
        p1_treat = state.current_alloc_stage1.prob(1)
        if m:
            pooled_prob = state.current_alloc_stage2[History.second_stage_pooled()].prob(1)
            p2_treat = (pooled_prob, pooled_prob)
        else:
            p2_treat = (
                state.current_alloc_stage2[History.second_stage(0)].prob(1),
                state.current_alloc_stage2[History.second_stage(1)].prob(1),
            )

        # Draw order per cohort: assignment, infection (all patients), then
        # treatment assignment, death (infected patients, in patient order).
        a1 = (rng.random(n) < p1_treat).astype(np.int8)
        infect_p = np.where(a1 == 1, scenario.r1, scenario.r0)
        y1 = (rng.random(n) < infect_p).astype(np.int8)
        inf_idx = np.nonzero(y1)[0]
        a1_inf = a1[inf_idx]
        treat_p = np.where(a1_inf == 1, p2_treat[1], p2_treat[0])
        a2 = (rng.random(inf_idx.size) < treat_p).astype(np.int8)
        death_p = np.where(a1_inf == 1, scenario.s1, scenario.s0)
        y2 = (rng.random(inf_idx.size) < death_p).astype(np.int8)

        cohort_utility = u_stage1[a1]
        cohort_utility[inf_idx] = u_stage2[a1_inf, a2, y2]
        total_utility += float(cohort_utility.sum())

        trials1 += np.bincount(a1, minlength=2)
        events1 += np.bincount(a1_inf, minlength=2)
        pair = a1_inf.astype(np.int64) * 2 + a2
        trials2 += np.bincount(pair, minlength=4).reshape(2, 2)
        events2 += np.bincount(pair[y2 == 1], minlength=4).reshape(2, 2)

        if keep_records:
            kept.append((a1, y1, inf_idx, a2, y2, cohort_utility))

        if analysis in schedule.adapt_at:
            stage1_data, stage2_data = _stage_data_from_counts(
                events1, trials1, events2, trials2, m
            )
            if design.engine == "conjugate":
                post1 = posterior_conjugate_cells(stage1_data, design.prior_spec)
                post2 = posterior_conjugate_cells(stage2_data, design.prior_spec)
            else:
                assert engine_children is not None
                seed1_seq, seed2_seq = engine_children[analysis - 1].spawn(2)
                res1 = posterior_mcmc(
                    stage1_data, design.prior_spec, seed=_spawn_engine_seed(seed1_seq)
                )
                res2 = posterior_mcmc(
                    stage2_data, design.prior_spec, seed=_spawn_engine_seed(seed2_seq)
                )
                warnings.extend(f"analysis {analysis} stage 1: {w}" for w in res1.warnings)
                warnings.extend(f"analysis {analysis} stage 2: {w}" for w in res2.warnings)
                post1 = dict(res1.cells)
                post2 = dict(res2.cells)

            stage1_by_action = {a: post1[(History.first_stage(), a)] for a in (0, 1)}
            s2q = q_stage2(post2, table)
            s1q = q_stage1(stage1_by_action, s2q, table, m)
            state.current_alloc_stage1 = allocation_probs(
                {a: s1q[a].value for a in (0, 1)},
                design.adapt_c,
                history=History.first_stage(),
                min_prob=design.min_alloc_prob,
            )
            state.current_alloc_stage2 = {
                h: allocation_probs(
                    {a: s2q[(h, a)].value for a in (0, 1)},
                    design.adapt_c,
                    history=h,
                    min_prob=design.min_alloc_prob,
                )
                for h in stage2_histories(m)
            }
            snapshots.append(
                InterimSnapshot(
                    analysis=analysis,
                    stage1=state.current_alloc_stage1,
                    stage2=tuple(
                        state.current_alloc_stage2[h] for h in stage2_histories(m)
                    ),
                )
            )

    records: tuple[PatientRecord, ...] | None = None
    if keep_records:
        built: list[PatientRecord] = []
        for a1, y1, inf_idx, a2, y2, cohort_utility in kept:
            a2_full = np.full(a1.shape[0], -1, dtype=np.int8)
            y2_full = np.full(a1.shape[0], -1, dtype=np.int8)
            a2_full[inf_idx] = a2
            y2_full[inf_idx] = y2
            for i in range(a1.shape[0]):
                infected = bool(y1[i])
                built.append(
                    PatientRecord(
                        stage1_action=int(a1[i]),
                        stage1_outcome=int(y1[i]),
                        stage2_action=int(a2_full[i]) if infected else None,
                        stage2_outcome=int(y2_full[i]) if infected else None,
                        realized_utility=float(cohort_utility[i]),
                    )
                )
        state.records = built
        records = tuple(built)

    return TrialResult(
        mean_utility=total_utility / design.max_patients,
        per_interim_alloc=tuple(snapshots),
        seed=design.seed,
        patient_records=records,
        warnings=tuple(warnings),
    )
