"""Scenario-grid sweeps over trial designs, with deterministic parallelism.

Every (scenario, design, replicate) triple maps to a trial seed through a
pure function of the base seed and the three indices, so results are
identical whatever the degree of parallelism or execution order. Work is
partitioned by scenario; each work item is independent and owns its RNG
substreams; aggregation is a deterministic reduction into index order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core import (
    R_GRID,
    S_GRID,
    DesignConfig,
    Scenario,
    UtilityTable,
)
from .simulator import run_trial


class SweepError(RuntimeError):
    """A trial inside a sweep failed; the message identifies the triple."""


class IncompleteGridError(ValueError):
    """A matrix layout was requested over a grid with missing cells."""

    def __init__(self, message: str, missing: list[tuple[float, float, float, float]]):
        super().__init__(message)
        self.missing = missing


@dataclass(frozen=True)
class SweepConfig:
    """What to sweep: scenarios x designs x replicates, plus seeding."""

    scenarios: tuple[Scenario, ...]
    designs: tuple[DesignConfig, ...]
    replicates: int = 10
    base_seed: int = 0
    parallelism: int | None = None

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise ValueError("scenarios must be non-empty")
        if not self.designs:
            raise ValueError("designs must be non-empty")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        if self.parallelism is not None and self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    """Aggregated utilities for one (scenario, design) cell."""

    scenario: Scenario
    myopic_m: int
    adapt_c: float
    u_bar_bar: float
    u_bars: tuple[float, ...]
    std_err: float


@dataclass(frozen=True)
class RelativeRow:
    """Adaptive-over-fixed mean-utility ratio for one (scenario, m) pair.

    ``degenerate`` flags a zero fixed-design denominator; the ratio is then
    NaN rather than the row being dropped.
    """

    scenario: Scenario
    myopic_m: int
    rel_u: float
    degenerate: bool = False


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    rows: tuple[SweepRow, ...]
    relative: tuple[RelativeRow, ...]
    warnings: tuple[str, ...] = ()


def trial_seed(base_seed: int, scenario_index: int, design_index: int, replicate: int) -> int:
    """Trial seed as a pure function of the seed lattice coordinates."""
    seq = np.random.SeedSequence((base_seed, scenario_index, design_index, replicate))
    return int(seq.generate_state(1, np.uint64)[0])


def _run_block(
    args: tuple[
        int,
        tuple[Scenario, ...],
        tuple[DesignConfig, ...],
        int,
        int,
        UtilityTable | None,
    ],
) -> tuple[int, np.ndarray, list[str]]:
    """Run all trials for a contiguous block of scenario indices."""
    start, scenarios, designs, replicates, base_seed, utilities = args
    out = np.empty((len(scenarios), len(designs), replicates), dtype=np.float64)
    warnings: list[str] = []
    for offset, scenario in enumerate(scenarios):
        s_idx = start + offset
        for d_idx, design in enumerate(designs):
            for rep in range(replicates):
                seed = trial_seed(base_seed, s_idx, d_idx, rep)
                try:
                    result = run_trial(scenario, replace(design, seed=seed), utilities=utilities)
                except Exception as exc:
                    raise SweepError(
                        f"trial failed for scenario index {s_idx} "
                        f"({scenario}), design (m={design.myopic_m}, c={design.adapt_c}), "
                        f"replicate {rep}: {exc}"
                    ) from exc
                out[offset, d_idx, rep] = result.mean_utility
                warnings.extend(
                    f"scenario {s_idx} design (m={design.myopic_m}, c={design.adapt_c}) "
                    f"replicate {rep}: {w}"
                    for w in result.warnings
                )
    return start, out, warnings


def _partition(n: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous (start, stop) blocks covering range(n)."""
    block = max(1, math.ceil(n / (workers * 4)))
    return [(i, min(i + block, n)) for i in range(0, n, block)]


def run_sweep(config: SweepConfig, utilities: UtilityTable | None = None) -> SweepResult:
    """Run the sweep and aggregate per-cell mean utilities.

    Per-scenario work items execute concurrently when ``parallelism``
    exceeds one; the result is identical for any parallelism degree.
    """
    n_scenarios = len(config.scenarios)
    n_designs = len(config.designs)
    workers = config.parallelism if config.parallelism is not None else (os.cpu_count() or 1)
    blocks = _partition(n_scenarios, workers)
    tasks = [
        (
            start,
            config.scenarios[start:stop],
            config.designs,
            config.replicates,
            config.base_seed,
            utilities,
        )
        for start, stop in blocks
    ]

    utility_matrix = np.empty((n_scenarios, n_designs, config.replicates), dtype=np.float64)
    warnings: list[str] = []
    if workers <= 1 or len(tasks) == 1:
        results: Iterable[tuple[int, np.ndarray, list[str]]] = map(_run_block, tasks)
    else:
        executor = ProcessPoolExecutor(max_workers=workers)
        try:
            results = list(executor.map(_run_block, tasks))
        finally:
            executor.shutdown()
    for start, block, block_warnings in results:
        utility_matrix[start : start + block.shape[0]] = block
        warnings.extend(block_warnings)

    rows: list[SweepRow] = []
    for s_idx, scenario in enumerate(config.scenarios):
        for d_idx, design in enumerate(config.designs):
            u_bars = utility_matrix[s_idx, d_idx]
            std_err = (
                float(np.std(u_bars, ddof=1) / math.sqrt(config.replicates))
                if config.replicates > 1
                else 0.0
            )
            rows.append(
                SweepRow(
                    scenario=scenario,
                    myopic_m=design.myopic_m,
                    adapt_c=design.adapt_c,
                    u_bar_bar=float(np.mean(u_bars)),
                    u_bars=tuple(float(u) for u in u_bars),
                    std_err=std_err,
                )
            )

    relative = _relative_rows(config, rows)
    return SweepResult(
        config=config, rows=tuple(rows), relative=tuple(relative), warnings=tuple(warnings)
    )


def _relative_rows(config: SweepConfig, rows: Sequence[SweepRow]) -> list[RelativeRow]:
    by_cell = {(r.scenario, r.myopic_m, r.adapt_c): r for r in rows}
    out: list[RelativeRow] = []
    for scenario in config.scenarios:
        for m in (0, 1):
            fixed = by_cell.get((scenario, m, 0.0))
            adaptive = by_cell.get((scenario, m, 1.0))
            if fixed is None or adaptive is None:
                continue
            if fixed.u_bar_bar == 0.0:
                out.append(
                    RelativeRow(scenario=scenario, myopic_m=m, rel_u=float("nan"), degenerate=True)
                )
            else:
                out.append(
                    RelativeRow(
                        scenario=scenario,
                        myopic_m=m,
                        rel_u=adaptive.u_bar_bar / fixed.u_bar_bar,
                    )
                )
    return out


@dataclass(frozen=True)
class MatrixPanel:
    """One (s0, s1) panel: relative utilities over the (r0, r1) plane.

    ``values[i][j]`` is the cell at the i-th r1 value (ascending) and the
    j-th r0 value (ascending): r0 runs along columns, r1 along rows.
    """

    s0: float
    s1: float
    values: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class MatrixBundle:
    """All panels for one myopic flag, ordered s0-major then s1."""

    myopic_m: int
    r_values: tuple[float, ...]
    s_values: tuple[float, ...]
    panels: tuple[MatrixPanel, ...]


def matrix_bundle_from_cells(
    cells: dict[tuple[float, float, float, float], float],
    m: int,
    r_values: Sequence[float],
    s_values: Sequence[float],
) -> MatrixBundle:
    """Arrange (r0, r1, s0, s1) -> relative-utility cells into panels.

    Every cell of the requested grid must be present, otherwise the
    missing cells are reported.
    """
    if m not in (0, 1):
        raise ValueError(f"m must be 0 or 1, got {m!r}")
    r_vals = tuple(r_values)
    s_vals = tuple(s_values)
    missing = [
        (r0, r1, s0, s1)
        for s0 in s_vals
        for s1 in s_vals
        for r0 in r_vals
        for r1 in r_vals
        if (r0, r1, s0, s1) not in cells
    ]
    if missing:
        shown = ", ".join(str(c) for c in missing[:10])
        suffix = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise IncompleteGridError(
            f"{len(missing)} grid cells missing for m={m}: {shown}{suffix}", missing
        )
    panels = tuple(
        MatrixPanel(
            s0=s0,
            s1=s1,
            values=tuple(
                tuple(cells[(r0, r1, s0, s1)] for r0 in r_vals) for r1 in r_vals
            ),
        )
        for s0 in s_vals
        for s1 in s_vals
    )
    return MatrixBundle(myopic_m=m, r_values=r_vals, s_values=s_vals, panels=panels)


def figure_matrix(
    result: SweepResult,
    m: int,
    r_values: Sequence[float] | None = None,
    s_values: Sequence[float] | None = None,
) -> MatrixBundle:
    """Panel-matrix layout of a sweep's relative utilities.

    Defaults to the full grids (64 panels of 21 x 21, one panel per
    (s0, s1) pair ordered s0-major, r0 along columns and r1 along rows);
    pass reduced value sets for reduced layouts.
    """
    cells = {
        (row.scenario.r0, row.scenario.r1, row.scenario.s0, row.scenario.s1): row.rel_u
        for row in result.relative
        if row.myopic_m == m
    }
    return matrix_bundle_from_cells(
        cells,
        m,
        r_values if r_values is not None else R_GRID,
        s_values if s_values is not None else S_GRID,
    )
