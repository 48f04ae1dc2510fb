"""Sweep orchestration: seed lattice, parallel determinism, matrix layout."""

import math

import pytest

from smartrar import (
    DesignConfig,
    IncompleteGridError,
    Scenario,
    SweepConfig,
    figure_matrix,
    matrix_bundle_from_cells,
    run_sweep,
    canonical_designs,
    trial_seed,
)

SCENARIOS = (
    Scenario(0.5, 0.45, 0.05, 0.95),
    Scenario(0.1, 0.3, 0.45, 0.5),
    Scenario(0.0, 0.0, 0.4, 0.4),
)


def small_config(**overrides) -> SweepConfig:
    defaults = dict(
        scenarios=SCENARIOS,
        designs=canonical_designs(max_patients=400, num_interims=4),
        replicates=3,
        base_seed=11,
        parallelism=1,
    )
    defaults.update(overrides)
    return SweepConfig(**defaults)


class TestTrialSeed:
    def test_pure_function(self):
        assert trial_seed(7, 3, 1, 9) == trial_seed(7, 3, 1, 9)

    def test_distinct_coordinates_distinct_seeds(self):
        seeds = {
            trial_seed(0, s, d, r) for s in range(4) for d in range(4) for r in range(4)
        }
        assert len(seeds) == 64


class TestRunSweep:
    def test_row_shape_and_order(self):
        result = run_sweep(small_config())
        assert len(result.rows) == len(SCENARIOS) * 4
        # scenario-major, design-minor ordering
        assert result.rows[0].scenario == SCENARIOS[0]
        assert [((r.myopic_m, r.adapt_c)) for r in result.rows[:4]] == [
            (0, 0.0),
            (0, 1.0),
            (1, 0.0),
            (1, 1.0),
        ]
        for row in result.rows:
            assert len(row.u_bars) == 3
            assert 0.0 <= row.u_bar_bar <= 1.0
            assert math.isfinite(row.std_err)

    def test_parallelism_degree_does_not_change_results(self):
        serial = run_sweep(small_config(parallelism=1))
        parallel = run_sweep(small_config(parallelism=2))
        assert serial.rows == parallel.rows
        assert serial.relative == parallel.relative

    def test_relative_rows(self):
        result = run_sweep(small_config())
        rel = {(r.scenario, r.myopic_m): r for r in result.relative}
        assert len(rel) == len(SCENARIOS) * 2
        by_cell = {(r.scenario, r.myopic_m, r.adapt_c): r.u_bar_bar for r in result.rows}
        for (scenario, m), row in rel.items():
            expected = by_cell[(scenario, m, 1.0)] / by_cell[(scenario, m, 0.0)]
            assert row.rel_u == pytest.approx(expected, rel=1e-12)
            assert not row.degenerate

    def test_no_infection_scenario_is_exactly_neutral(self):
        result = run_sweep(small_config())
        for row in result.relative:
            if row.scenario.r0 == 0.0 and row.scenario.r1 == 0.0:
                assert row.rel_u == 1.0

    def test_degenerate_denominator_flagged(self):
        # everyone infected, everyone dies: fixed-design utility is zero
        config = small_config(scenarios=(Scenario(1.0, 1.0, 1.0, 1.0),), replicates=2)
        result = run_sweep(config)
        assert len(result.relative) == 2
        for row in result.relative:
            assert row.degenerate
            assert math.isnan(row.rel_u)

    def test_replicate_std_err(self):
        result = run_sweep(small_config(replicates=1))
        assert all(row.std_err == 0.0 for row in result.rows)

    def test_subset_of_designs_skips_relative(self):
        config = small_config(designs=(DesignConfig(myopic_m=0, adapt_c=1.0, max_patients=400),))
        result = run_sweep(config)
        assert result.relative == ()


class TestFigureMatrix:
    def test_layout_from_synthetic_cells(self):
        r_values = (0.0, 0.5, 1.0)
        s_values = (0.1, 0.9)
        cells = {
            (r0, r1, s0, s1): r0 + 10 * r1 + 100 * s0 + 1000 * s1
            for r0 in r_values
            for r1 in r_values
            for s0 in s_values
            for s1 in s_values
        }
        bundle = matrix_bundle_from_cells(cells, m=0, r_values=r_values, s_values=s_values)
        assert len(bundle.panels) == 4
        # panels ordered s0-major
        assert [(p.s0, p.s1) for p in bundle.panels] == [
            (0.1, 0.1),
            (0.1, 0.9),
            (0.9, 0.1),
            (0.9, 0.9),
        ]
        panel = bundle.panels[1]  # s0=0.1, s1=0.9
        # rows indexed by r1, columns by r0
        assert panel.values[0][2] == 1.0 + 0.0 + 10.0 + 900.0
        assert panel.values[2][0] == 0.0 + 10.0 + 10.0 + 900.0

    def test_missing_cells_reported(self):
        cells = {(0.0, 0.0, 0.1, 0.1): 1.0}
        with pytest.raises(IncompleteGridError) as err:
            matrix_bundle_from_cells(cells, m=0, r_values=(0.0, 1.0), s_values=(0.1,))
        assert (1.0, 0.0, 0.1, 0.1) in err.value.missing
        assert len(err.value.missing) == 3

    def test_figure_matrix_from_sweep_result(self):
        r_values = (0.2, 0.7)
        s_values = (0.3,)
        scenarios = tuple(
            Scenario(r0, r1, 0.3, 0.3) for r0 in r_values for r1 in r_values
        )
        result = run_sweep(
            small_config(scenarios=scenarios, replicates=1)
        )
        bundle = figure_matrix(result, m=1, r_values=r_values, s_values=s_values)
        assert len(bundle.panels) == 1
        assert len(bundle.panels[0].values) == 2
        assert len(bundle.panels[0].values[0]) == 2

    def test_full_grid_default_errors_on_reduced_input(self):
        result = run_sweep(small_config(replicates=1))
        with pytest.raises(IncompleteGridError):
            figure_matrix(result, m=0)

    def test_full_grid_panel_shape(self):
        from smartrar import R_GRID, S_GRID

        cells = {
            (r0, r1, s0, s1): 1.0
            for s0 in S_GRID
            for s1 in S_GRID
            for r0 in R_GRID
            for r1 in R_GRID
        }
        bundle = matrix_bundle_from_cells(cells, m=0, r_values=R_GRID, s_values=S_GRID)
        assert len(bundle.panels) == 64
        for panel in bundle.panels:
            assert len(panel.values) == 21
            assert all(len(row) == 21 for row in panel.values)
