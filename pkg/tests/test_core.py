"""Domain-type contracts: grids, histories, records, utility tables."""

import math

import pytest

from smartrar import (
    ConfigurationError,
    DesignConfig,
    History,
    PatientRecord,
    PriorSpec,
    R_GRID,
    S_GRID,
    Scenario,
    UtilityTable,
    reduced_scenario_grid,
    scenario_grid,
    stage2_histories,
    canonical_designs,
    utility_lookup,
)


class TestScenarioGrid:
    def test_full_grid_size(self):
        assert len(scenario_grid()) == 28224

    def test_grid_axes(self):
        assert len(R_GRID) == 21
        assert len(S_GRID) == 8
        assert R_GRID[0] == 0.0 and R_GRID[-1] == 1.0
        assert S_GRID == (0.05, 0.10, 0.20, 0.40, 0.60, 0.80, 0.90, 0.95)

    def test_first_element(self):
        assert scenario_grid()[0] == Scenario(r0=0.0, r1=0.0, s0=0.05, s1=0.05)

    def test_membership(self):
        grid = set(scenario_grid())
        assert Scenario(0.10, 0.30, 0.40, 0.60) in grid
        # 0.45 is not a death-probability grid value
        assert not any(sc.s0 == 0.45 for sc in grid)

    def test_duplicate_free(self):
        grid = scenario_grid()
        assert len(set(grid)) == len(grid)

    def test_order_deterministic(self):
        assert scenario_grid() == scenario_grid()

    def test_row_major_nesting(self):
        grid = scenario_grid()
        # r1 varies fastest, then r0; (s0, s1) changes only every 441 rows
        assert grid[1] == Scenario(0.0, 0.05, 0.05, 0.05)
        assert grid[21] == Scenario(0.05, 0.0, 0.05, 0.05)
        assert grid[441] == Scenario(0.0, 0.0, 0.05, 0.10)

    def test_reduced_grid(self):
        reduced = reduced_scenario_grid()
        assert len(reduced) == 400
        assert len(set(reduced)) == 400

    def test_free_form_scenarios_accept_any_probability(self):
        # off-grid values are fine outside the generator
        Scenario(0.1, 0.3, 0.45, 0.5)
        with pytest.raises(ValueError):
            Scenario(0.1, 0.3, 1.45, 0.5)


class TestHistory:
    def test_stage1_is_empty(self):
        h = History.first_stage()
        assert h.stage == 1 and h.stage1_action is None and h.stage1_outcome is None
        with pytest.raises(ValueError):
            History(stage=1, stage1_action=0)

    def test_stage2_dynamic_requires_fields(self):
        h = History.second_stage(1)
        assert (h.stage1_action, h.stage1_outcome, h.myopic) == (1, 1, 0)
        with pytest.raises(ValueError):
            History(stage=2, stage1_action=None, stage1_outcome=None, myopic=0)

    def test_stage2_myopic_collapses(self):
        h = History.second_stage_pooled()
        assert h.stage1_action is None and h.stage1_outcome is None
        with pytest.raises(ValueError):
            History(stage=2, stage1_action=1, stage1_outcome=1, myopic=1)

    def test_stage2_histories_by_flag(self):
        assert len(stage2_histories(0)) == 2
        assert len(stage2_histories(1)) == 1


class TestPatientRecord:
    def test_stage2_present_iff_infected(self):
        PatientRecord(0, 0, None, None, 1.0)
        PatientRecord(0, 1, 1, 0, 1.0)
        with pytest.raises(ValueError):
            PatientRecord(0, 0, 1, 0, 1.0)
        with pytest.raises(ValueError):
            PatientRecord(0, 1, None, None, 1.0)

    def test_binary_fields(self):
        with pytest.raises(ValueError):
            PatientRecord(2, 0, None, None, 1.0)


class TestUtilityTable:
    def test_default_rows(self, default_table):
        entries = default_table.entries()
        assert len(entries) == 10
        assert all(v == 1.0 for k, v in entries.items() if not k.startswith("died"))
        assert all(v == 0.0 for k, v in entries.items() if k.startswith("died"))

    def test_lookup_uninfected(self, default_table):
        record = PatientRecord(0, 0, None, None, 1.0)
        assert utility_lookup(default_table, record) == 1.0

    def test_lookup_died(self, default_table):
        record = PatientRecord(1, 1, 1, 1, 0.0)
        assert utility_lookup(default_table, record) == 0.0

    def test_lookup_survived_after_infection(self, default_table):
        record = PatientRecord(1, 1, 0, 0, 1.0)
        assert utility_lookup(default_table, record) == 1.0

    def test_lookup_total_over_generative_rows(self, default_table):
        # every realisation row reachable from the generative model resolves
        for a1 in (0, 1):
            utility_lookup(default_table, PatientRecord(a1, 0, None, None, 1.0))
            for a2 in (0, 1):
                for y2 in (0, 1):
                    utility_lookup(default_table, PatientRecord(a1, 1, a2, y2, 0.0))

    def test_override_rows(self):
        table = UtilityTable.from_entries({"died_a1_0_a2_0": 0.1, "uninfected_a1_1": 0.8})
        assert table.stage2_utility(0, 0, 1) == 0.1
        assert table.stage1_utility(1) == 0.8
        assert table.stage2_utility(1, 1, 1) == 0.0

    def test_unknown_row_rejected(self):
        with pytest.raises(ConfigurationError):
            UtilityTable.from_entries({"died_a1_2_a2_0": 0.5})

    def test_negative_utility_rejected(self):
        with pytest.raises(ConfigurationError):
            UtilityTable.from_entries({"died_a1_0_a2_0": -0.5})
        with pytest.raises(ConfigurationError):
            UtilityTable.from_entries({"survived_a1_0_a2_0": math.inf})

    def test_pooled_stage2_utilities_require_invariance(self):
        table = UtilityTable.from_entries({"survived_a1_0_a2_0": 0.9})
        with pytest.raises(ConfigurationError):
            table.stage2_outcome_utilities(None, 0)
        # untouched action column still fine
        assert table.stage2_outcome_utilities(None, 1) == (1.0, 0.0)


class TestDesignConfig:
    def test_table1_cells(self):
        designs = canonical_designs()
        assert [(d.myopic_m, d.adapt_c) for d in designs] == [
            (0, 0.0),
            (0, 1.0),
            (1, 0.0),
            (1, 1.0),
        ]

    def test_cohort_divisibility(self):
        DesignConfig(myopic_m=0, adapt_c=1.0, max_patients=2000, num_interims=4)
        with pytest.raises(ValueError):
            DesignConfig(myopic_m=0, adapt_c=1.0, max_patients=2001, num_interims=4)

    def test_generalised_exponent(self):
        DesignConfig(myopic_m=0, adapt_c=0.5)
        with pytest.raises(ValueError):
            DesignConfig(myopic_m=0, adapt_c=-0.1)

    def test_seed_range(self):
        DesignConfig(myopic_m=0, adapt_c=0.0, seed=2**64 - 1)
        with pytest.raises(ValueError):
            DesignConfig(myopic_m=0, adapt_c=0.0, seed=2**64)

    def test_prior_spec_positivity(self):
        with pytest.raises(ValueError):
            PriorSpec(conjugate_alpha=0.0)
        with pytest.raises(ValueError):
            PriorSpec(coefficient_prior_sd=-1.0)
