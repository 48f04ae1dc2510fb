"""Trial-simulation contracts: generation, scheduling, adaptation, determinism."""

import numpy as np
import pytest

from smartrar import (
    DesignConfig,
    History,
    InterimSchedule,
    Scenario,
    UtilityTable,
    generate_patient,
    run_trial,
    true_value,
)


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


PROSE_SCENARIO = Scenario(0.1, 0.3, 0.45, 0.5)


class TestTrueValue:
    def test_placebo_arm(self):
        assert true_value(PROSE_SCENARIO, 0) == pytest.approx(0.955)

    def test_prophylaxis_arm(self):
        assert true_value(PROSE_SCENARIO, 1) == pytest.approx(0.85)

    def test_no_infection_is_unit_value(self):
        assert true_value(Scenario(0.0, 0.5, 0.9, 0.9), 0) == 1.0


class TestGeneratePatient:
    def test_degenerate_no_infection(self):
        scenario = Scenario(0.0, 0.0, 0.5, 0.5)
        g = rng(1)
        for _ in range(50):
            record = generate_patient(scenario, 0, lambda h: 0, g)
            assert record.stage1_outcome == 0
            assert record.stage2_action is None
            assert record.realized_utility == 1.0

    def test_degenerate_certain_death(self):
        scenario = Scenario(1.0, 1.0, 1.0, 1.0)
        g = rng(2)
        for _ in range(50):
            record = generate_patient(scenario, 1, lambda h: 1, g)
            assert record.stage1_outcome == 1
            assert record.stage2_outcome == 1
            assert record.realized_utility == 0.0

    def test_provider_sees_dynamic_history(self):
        scenario = Scenario(1.0, 1.0, 0.5, 0.5)
        seen = []
        generate_patient(scenario, 1, lambda h: seen.append(h) or 0, rng(3))
        assert seen == [History.second_stage(1)]

    def test_empirical_infection_rate(self):
        g = rng(12345)
        n = 100_000
        hits = sum(
            generate_patient(PROSE_SCENARIO, 0, lambda h: 0, g).stage1_outcome for _ in range(n)
        )
        assert hits / n == pytest.approx(0.1, abs=0.005)

    def test_death_rate_ignores_stage2_action(self):
        # generative death probability depends on the stage-1 arm only
        scenario = Scenario(1.0, 1.0, 0.3, 0.8)
        g = rng(99)
        n = 40_000
        deaths = {0: [0, 0], 1: [0, 0]}  # a2 -> [count, total]
        for i in range(n):
            record = generate_patient(scenario, 0, lambda h: i % 2, g)
            deaths[record.stage2_action][0] += record.stage2_outcome
            deaths[record.stage2_action][1] += 1
        rate0 = deaths[0][0] / deaths[0][1]
        rate1 = deaths[1][0] / deaths[1][1]
        assert rate0 == pytest.approx(0.3, abs=0.02)
        assert rate1 == pytest.approx(0.3, abs=0.02)


class TestInterimSchedule:
    def test_from_design_defaults(self):
        schedule = InterimSchedule.from_design(DesignConfig(myopic_m=0, adapt_c=1.0))
        assert schedule.cohort_size == 500
        assert schedule.num_analyses == 4
        assert schedule.adapt_at == frozenset({1, 2, 3})

    def test_final_analysis_never_adapts(self):
        with pytest.raises(ValueError):
            InterimSchedule(cohort_size=500, num_analyses=4, adapt_at=frozenset({4}))

    def test_single_cohort_design(self):
        schedule = InterimSchedule.from_design(
            DesignConfig(myopic_m=0, adapt_c=0.0, max_patients=600, num_interims=1)
        )
        assert schedule.adapt_at == frozenset()


class TestRunTrial:
    def test_bit_for_bit_determinism(self):
        design = DesignConfig(myopic_m=0, adapt_c=1.0, seed=42)
        a = run_trial(PROSE_SCENARIO, design, keep_records=True)
        b = run_trial(PROSE_SCENARIO, design, keep_records=True)
        assert a.mean_utility == b.mean_utility
        assert a.patient_records == b.patient_records
        assert a.per_interim_alloc == b.per_interim_alloc

    def test_patient_conservation(self):
        design = DesignConfig(myopic_m=0, adapt_c=1.0, seed=5)
        result = run_trial(PROSE_SCENARIO, design, keep_records=True)
        records = result.patient_records
        assert len(records) == design.max_patients
        infected = [r for r in records if r.stage1_outcome == 1]
        assert all(r.stage2_action is not None for r in infected)
        assert all(r.stage2_action is None for r in records if r.stage1_outcome == 0)

    def test_mean_utility_matches_records(self):
        design = DesignConfig(myopic_m=1, adapt_c=1.0, seed=8)
        result = run_trial(PROSE_SCENARIO, design, keep_records=True)
        total = sum(r.realized_utility for r in result.patient_records)
        assert result.mean_utility == pytest.approx(total / design.max_patients, abs=1e-12)

    def test_fixed_design_tracks_mixture_value(self):
        expected = 0.5 * (true_value(PROSE_SCENARIO, 0) + true_value(PROSE_SCENARIO, 1))
        for seed in (0, 1, 2):
            result = run_trial(PROSE_SCENARIO, DesignConfig(myopic_m=0, adapt_c=0.0, seed=seed))
            assert result.mean_utility == pytest.approx(expected, abs=0.02)

    def test_fixed_design_snapshots_exactly_equal(self):
        for m in (0, 1):
            design = DesignConfig(myopic_m=m, adapt_c=0.0, seed=17)
            result = run_trial(PROSE_SCENARIO, design)
            assert len(result.per_interim_alloc) == 3
            for snapshot in result.per_interim_alloc:
                assert snapshot.stage1.probs == {0: 0.5, 1: 0.5}
                for alloc in snapshot.stage2:
                    assert alloc.probs == {0: 0.5, 1: 0.5}

    def test_fixed_designs_coincide_at_equal_seed(self):
        # with c = 0 the myopic flag cannot influence outcomes, so the two
        # fixed designs generate identical trials from identical seeds
        dynamic = DesignConfig(myopic_m=0, adapt_c=0.0, seed=12)
        myopic = DesignConfig(myopic_m=1, adapt_c=0.0, seed=12)
        a = run_trial(PROSE_SCENARIO, dynamic, keep_records=True)
        b = run_trial(PROSE_SCENARIO, myopic, keep_records=True)
        assert a.mean_utility == b.mean_utility
        assert a.patient_records == b.patient_records

    def test_fixed_design_unbiased_over_seeds(self):
        # mean over 100 seeds within 3 standard errors of the mixture value
        scenario = Scenario(0.3, 0.6, 0.2, 0.7)
        expected = 0.5 * (true_value(scenario, 0) + true_value(scenario, 1))
        utilities = [
            run_trial(scenario, DesignConfig(myopic_m=0, adapt_c=0.0, seed=seed)).mean_utility
            for seed in range(100)
        ]
        mean = np.mean(utilities)
        se = np.std(utilities, ddof=1) / 10
        assert abs(mean - expected) < 3 * se + 1e-9

    def test_adaptive_dynamic_favours_better_arm(self):
        scenario = Scenario(0.5, 0.5, 0.05, 0.95)
        design = DesignConfig(myopic_m=0, adapt_c=1.0, seed=3)
        result = run_trial(scenario, design)
        assert result.per_interim_alloc[-1].stage1.prob(0) > 0.5

    def test_adaptive_myopic_blind_to_death_rates(self):
        # equal infection rates: myopic stage-1 allocation stays near 0.5
        scenario = Scenario(0.5, 0.5, 0.05, 0.95)
        design = DesignConfig(myopic_m=1, adapt_c=1.0, seed=3)
        result = run_trial(scenario, design)
        assert result.per_interim_alloc[-1].stage1.prob(0) == pytest.approx(0.5, abs=0.05)

    def test_myopic_snapshot_pools_stage2(self):
        design = DesignConfig(myopic_m=1, adapt_c=1.0, seed=9)
        result = run_trial(PROSE_SCENARIO, design)
        for snapshot in result.per_interim_alloc:
            assert len(snapshot.stage2) == 1
            assert snapshot.stage2[0].history == History.second_stage_pooled()

    def test_dynamic_snapshot_has_both_histories(self):
        design = DesignConfig(myopic_m=0, adapt_c=1.0, seed=9)
        result = run_trial(PROSE_SCENARIO, design)
        for snapshot in result.per_interim_alloc:
            assert [a.history for a in snapshot.stage2] == [
                History.second_stage(0),
                History.second_stage(1),
            ]

    def test_snapshot_probabilities_sum_to_one(self):
        design = DesignConfig(myopic_m=0, adapt_c=1.0, seed=23)
        result = run_trial(Scenario(0.8, 0.6, 0.9, 0.2), design)
        for snapshot in result.per_interim_alloc:
            assert abs(sum(snapshot.stage1.probs.values()) - 1.0) <= 1e-12
            for alloc in snapshot.stage2:
                assert abs(sum(alloc.probs.values()) - 1.0) <= 1e-12

    def test_general_utility_table(self):
        # intermediate utilities flow into realized utility and u_bar
        table = UtilityTable.from_entries(
            {f"survived_a1_{a1}_a2_{a2}": 0.7 for a1 in (0, 1) for a2 in (0, 1)}
        )
        design = DesignConfig(myopic_m=0, adapt_c=0.0, seed=4)
        result = run_trial(Scenario(1.0, 1.0, 0.0, 0.0), design, utilities=table, keep_records=True)
        assert result.mean_utility == pytest.approx(0.7)
        assert all(r.realized_utility == 0.7 for r in result.patient_records)

    def test_mcmc_engine_trial(self):
        design = DesignConfig(
            myopic_m=0, adapt_c=1.0, max_patients=400, num_interims=4, engine="mcmc", seed=31
        )
        a = run_trial(PROSE_SCENARIO, design)
        b = run_trial(PROSE_SCENARIO, design)
        assert a.mean_utility == b.mean_utility
        assert a.per_interim_alloc == b.per_interim_alloc
        assert len(a.per_interim_alloc) == 3

    def test_engines_agree_on_direction(self):
        scenario = Scenario(0.5, 0.5, 0.05, 0.95)
        conjugate = run_trial(
            scenario, DesignConfig(myopic_m=0, adapt_c=1.0, seed=3, engine="conjugate")
        )
        mcmc = run_trial(
            scenario,
            DesignConfig(
                myopic_m=0, adapt_c=1.0, max_patients=400, num_interims=4, engine="mcmc", seed=3
            ),
        )
        assert conjugate.per_interim_alloc[-1].stage1.prob(0) > 0.5
        assert mcmc.per_interim_alloc[-1].stage1.prob(0) > 0.5
