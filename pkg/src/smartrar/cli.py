"""Command-line front end: simulate, sweep and report commands.

All CSV output uses a fixed column order, a dot decimal separator and
reals serialised with 17 significant digits, so files round-trip exactly
and are byte-stable across runs with identical inputs and seeds.

Every command accepts ``--config FILE`` pointing at a flat INI-style file
whose section matches the command and whose keys mirror the flags
one-to-one (e.g. ``[sweep]`` with ``base-seed = 7``); explicit flags
override file values. A ``[utilities]`` section may override any of the
ten utility-table rows by name. ``--threads`` and ``--out-dir`` can also
be set through the SMARTRAR_THREADS and SMARTRAR_OUT_DIR environment
variables (flags win over the environment, which wins over the file).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .core import (
    ConfigurationError,
    DesignConfig,
    Scenario,
    UtilityTable,
    reduced_scenario_grid,
    scenario_grid,
    canonical_designs,
)
from .simulator import run_trial
from .sweep import (
    IncompleteGridError,
    SweepConfig,
    SweepError,
    matrix_bundle_from_cells,
    run_sweep,
)

ENV_THREADS = "SMARTRAR_THREADS"
ENV_OUT_DIR = "SMARTRAR_OUT_DIR"

REPLICATES_CSV = "sweep_replicates.csv"
AGGREGATE_CSV = "sweep_aggregate.csv"
MANIFEST_FILE = "manifest.txt"


def fmt_real(x: float) -> str:
    """17-significant-digit decimal form; guarantees exact float round trips."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record for one command invocation."""

    command: str
    tool_version: str
    created_utc: str
    config: tuple[tuple[str, str], ...]
    outputs: tuple[tuple[str, str], ...]  # (filename, sha256)

    def render(self) -> str:
        lines = [
            f"tool_version = {self.tool_version}",
            f"command = {self.command}",
            f"created_utc = {self.created_utc}",
            "",
            "[config]",
        ]
        lines.extend(f"{key} = {value}" for key, value in self.config)
        lines.append("")
        lines.append("[outputs]")
        lines.extend(f"{name} = sha256:{digest}" for name, digest in self.outputs)
        return "\n".join(lines) + "\n"


def write_manifest(out_dir: Path, command: str, config: dict[str, str], files: list[Path]) -> Path:
    manifest = RunManifest(
        command=command,
        tool_version=__version__,
        created_utc=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        config=tuple(sorted(config.items())),
        outputs=tuple((f.name, _sha256(f)) for f in files),
    )
    path = out_dir / MANIFEST_FILE
    path.write_text(manifest.render(), newline="\n")
    return path


# ----------------------------------------------------------------------
# Config file handling
# ----------------------------------------------------------------------


def _load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigurationError(f"config file not found or unreadable: {path}")
    return parser


def _resolve(flag_value, cfg: configparser.ConfigParser, section: str, key: str, default, convert):
    """Flag > config file > default."""
    if flag_value is not None:
        return flag_value
    if cfg.has_option(section, key):
        return convert(cfg.get(section, key))
    return default


def _resolve_env(flag_value, env_name: str, cfg, section, key, default, convert):
    """Flag > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(env_name)
    if env is not None:
        return convert(env)
    if cfg.has_option(section, key):
        return convert(cfg.get(section, key))
    return default


def _utilities_from_config(cfg: configparser.ConfigParser) -> UtilityTable | None:
    if not cfg.has_section("utilities"):
        return None
    entries = {key: float(value) for key, value in cfg.items("utilities")}
    return UtilityTable.from_entries(entries)


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def _write_patients_csv(path: Path, result) -> None:
    lines = ["patient,stage1_action,stage1_outcome,stage2_action,stage2_outcome,utility"]
    assert result.patient_records is not None
    for i, record in enumerate(result.patient_records):
        a2 = "" if record.stage2_action is None else str(record.stage2_action)
        y2 = "" if record.stage2_outcome is None else str(record.stage2_outcome)
        lines.append(
            f"{i},{record.stage1_action},{record.stage1_outcome},{a2},{y2},"
            f"{fmt_real(record.realized_utility)}"
        )
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _write_allocations_csv(path: Path, result) -> None:
    lines = ["analysis,stage,stage1_action,action,probability"]
    for snapshot in result.per_interim_alloc:
        for action in (0, 1):
            lines.append(
                f"{snapshot.analysis},1,,{action},{fmt_real(snapshot.stage1.prob(action))}"
            )
        for alloc in snapshot.stage2:
            a1 = "" if alloc.history.stage1_action is None else str(alloc.history.stage1_action)
            for action in (0, 1):
                lines.append(
                    f"{snapshot.analysis},2,{a1},{action},{fmt_real(alloc.prob(action))}"
                )
    path.write_text("\n".join(lines) + "\n", newline="\n")


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    section = "simulate"
    r0 = _resolve(args.r0, cfg, section, "r0", 0.0, float)
    r1 = _resolve(args.r1, cfg, section, "r1", 0.0, float)
    s0 = _resolve(args.s0, cfg, section, "s0", 0.05, float)
    s1 = _resolve(args.s1, cfg, section, "s1", 0.05, float)
    m = _resolve(args.m, cfg, section, "m", 0, int)
    c = _resolve(args.c, cfg, section, "c", 0.0, float)
    seed = _resolve(args.seed, cfg, section, "seed", 0, int)
    engine = _resolve(args.engine, cfg, section, "engine", "conjugate", str)
    patients = _resolve(args.patients, cfg, section, "patients", 2000, int)
    interims = _resolve(args.interims, cfg, section, "interims", 4, int)
    out = _resolve_env(args.out, ENV_OUT_DIR, cfg, section, "out", None, str)

    scenario = Scenario(r0=r0, r1=r1, s0=s0, s1=s1)
    design = DesignConfig(
        myopic_m=m,
        adapt_c=c,
        max_patients=patients,
        num_interims=interims,
        engine=engine,
        seed=seed,
    )
    utilities = _utilities_from_config(cfg)
    result = run_trial(scenario, design, utilities=utilities, keep_records=True)

    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_patients_csv(out_dir / "patients.csv", result)
        _write_allocations_csv(out_dir / "allocations.csv", result)
    print(f"u_bar={fmt_real(result.mean_utility)}")
    return 0


# ----------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------


def _scenarios_from_grid(grid: str) -> list[Scenario]:
    if grid == "full":
        return scenario_grid()
    if grid == "reduced":
        return reduced_scenario_grid()
    path = Path(grid)
    if not path.exists():
        raise ConfigurationError(f"--grid must be 'full', 'reduced' or a scenario CSV; {grid!r} not found")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "r0,r1,s0,s1":
        raise ConfigurationError(f"scenario file {grid} must start with header 'r0,r1,s0,s1'")
    scenarios = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ConfigurationError(f"{grid}:{ln}: expected 4 comma-separated values")
        scenarios.append(Scenario(*(float(p) for p in parts)))
    if not scenarios:
        raise ConfigurationError(f"scenario file {grid} contains no scenarios")
    return scenarios


def _designs_from_spec(spec: str, engine: str) -> list[DesignConfig]:
    all_designs = {
        f"m{d.myopic_m}c{int(d.adapt_c)}": d for d in canonical_designs(engine=engine)
    }
    if spec == "all":
        return list(all_designs.values())
    chosen = []
    for token in spec.split(","):
        token = token.strip()
        if token not in all_designs:
            raise ConfigurationError(
                f"unknown design {token!r}; expected 'all' or a comma list of "
                f"{sorted(all_designs)}"
            )
        chosen.append(all_designs[token])
    return chosen


def write_sweep_csvs(out_dir: Path, result) -> list[Path]:
    replicate_lines = ["r0,r1,s0,s1,m,c,replicate,u_bar"]
    aggregate_lines = ["r0,r1,s0,s1,m,c,u_bar_bar,std_err"]
    for row in result.rows:
        prefix = (
            f"{fmt_real(row.scenario.r0)},{fmt_real(row.scenario.r1)},"
            f"{fmt_real(row.scenario.s0)},{fmt_real(row.scenario.s1)},"
            f"{row.myopic_m},{fmt_real(row.adapt_c)}"
        )
        for rep, u_bar in enumerate(row.u_bars):
            replicate_lines.append(f"{prefix},{rep},{fmt_real(u_bar)}")
        aggregate_lines.append(f"{prefix},{fmt_real(row.u_bar_bar)},{fmt_real(row.std_err)}")
    rep_path = out_dir / REPLICATES_CSV
    agg_path = out_dir / AGGREGATE_CSV
    rep_path.write_text("\n".join(replicate_lines) + "\n", newline="\n")
    agg_path.write_text("\n".join(aggregate_lines) + "\n", newline="\n")
    return [rep_path, agg_path]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    section = "sweep"
    grid = _resolve(args.grid, cfg, section, "grid", "reduced", str)
    designs_spec = _resolve(args.designs, cfg, section, "designs", "all", str)
    replicates = _resolve(args.replicates, cfg, section, "replicates", 10, int)
    base_seed = _resolve(args.base_seed, cfg, section, "base-seed", 0, int)
    engine = _resolve(args.engine, cfg, section, "engine", "conjugate", str)
    threads = _resolve_env(args.threads, ENV_THREADS, cfg, section, "threads", None, int)
    out_dir_value = _resolve_env(args.out_dir, ENV_OUT_DIR, cfg, section, "out-dir", None, str)
    if out_dir_value is None:
        print("error: --out-dir is required (flag, SMARTRAR_OUT_DIR or config)", file=sys.stderr)
        return 2

    out_dir = Path(out_dir_value)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: output directory not writable: {exc}", file=sys.stderr)
        return 2

    scenarios = _scenarios_from_grid(grid)
    designs = _designs_from_spec(designs_spec, engine)
    utilities = _utilities_from_config(cfg)
    sweep_config = SweepConfig(
        scenarios=tuple(scenarios),
        designs=tuple(designs),
        replicates=replicates,
        base_seed=base_seed,
        parallelism=threads,
    )
    try:
        result = run_sweep(sweep_config, utilities=utilities)
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    files = write_sweep_csvs(out_dir, result)
    config_snapshot = {
        "grid": grid,
        "designs": designs_spec,
        "replicates": str(replicates),
        "base_seed": str(base_seed),
        "engine": engine,
        "threads": "auto" if threads is None else str(threads),
        "scenarios": str(len(scenarios)),
    }
    write_manifest(out_dir, "sweep", config_snapshot, files)
    print(f"wrote {len(result.rows)} aggregated rows to {out_dir / AGGREGATE_CSV}")
    return 0


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------


def _read_aggregate(path: Path) -> list[tuple[float, float, float, float, int, float, float]]:
    lines = path.read_text().splitlines()
    expected = "r0,r1,s0,s1,m,c,u_bar_bar,std_err"
    if not lines or lines[0] != expected:
        raise ConfigurationError(f"{path} must start with header {expected!r}")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise ConfigurationError(f"{path}:{ln}: expected 8 comma-separated values")
        r0, r1, s0, s1 = (float(p) for p in parts[:4])
        rows.append((r0, r1, s0, s1, int(parts[4]), float(parts[5]), float(parts[6])))
    return rows


def _matrix_file_name(m: int, s0: float, s1: float) -> str:
    return f"rel_u_m{m}_s0_{s0}_s1_{s1}.csv"


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    section = "report"
    in_path = _resolve(args.in_file, cfg, section, "in", None, str)
    m = _resolve(args.m, cfg, section, "m", None, int)
    fmt = _resolve(args.format, cfg, section, "format", "csv-matrix", str)
    out_dir_value = _resolve_env(args.out_dir, ENV_OUT_DIR, cfg, section, "out-dir", None, str)
    if in_path is None or m is None:
        print("error: --in and --m are required", file=sys.stderr)
        return 2
    if m not in (0, 1):
        print(f"error: --m must be 0 or 1, got {m}", file=sys.stderr)
        return 2
    if fmt not in ("csv-matrix", "long-csv"):
        print(f"error: --format must be csv-matrix or long-csv, got {fmt!r}", file=sys.stderr)
        return 2
    if out_dir_value is None:
        print("error: --out-dir is required (flag, SMARTRAR_OUT_DIR or config)", file=sys.stderr)
        return 2

    rows = _read_aggregate(Path(in_path))
    by_cell: dict[tuple[float, float, float, float], dict[float, float]] = {}
    for r0, r1, s0, s1, row_m, c, u_bar_bar in rows:
        if row_m != m:
            continue
        by_cell.setdefault((r0, r1, s0, s1), {})[c] = u_bar_bar

    gaps = [cell for cell, values in sorted(by_cell.items()) if not {0.0, 1.0} <= set(values)]
    if not by_cell:
        print(f"error: input contains no rows for m={m}", file=sys.stderr)
        return 1
    if gaps:
        for cell in gaps[:20]:
            missing_c = sorted({0.0, 1.0} - set(by_cell[cell]))
            print(f"error: missing c={missing_c} rows for scenario {cell}", file=sys.stderr)
        if len(gaps) > 20:
            print(f"error: ... and {len(gaps) - 20} more incomplete scenarios", file=sys.stderr)
        return 1

    rel_cells = {}
    for cell, values in by_cell.items():
        fixed = values[0.0]
        rel_cells[cell] = values[1.0] / fixed if fixed != 0.0 else float("nan")

    r_values = sorted({cell[0] for cell in rel_cells} | {cell[1] for cell in rel_cells})
    s_values = sorted({cell[2] for cell in rel_cells} | {cell[3] for cell in rel_cells})
    try:
        bundle = matrix_bundle_from_cells(rel_cells, m, r_values, s_values)
    except IncompleteGridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(out_dir_value)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "long-csv":
        lines = ["r0,r1,s0,s1,m,rel_u"]
        for s0 in bundle.s_values:
            for s1 in bundle.s_values:
                for r0 in bundle.r_values:
                    for r1 in bundle.r_values:
                        lines.append(
                            f"{fmt_real(r0)},{fmt_real(r1)},{fmt_real(s0)},{fmt_real(s1)},"
                            f"{m},{fmt_real(rel_cells[(r0, r1, s0, s1)])}"
                        )
        path = out_dir / f"rel_u_m{m}_long.csv"
        path.write_text("\n".join(lines) + "\n", newline="\n")
        print(f"wrote {path}")
    else:
        for panel in bundle.panels:
            lines = ["r1\\r0," + ",".join(str(r0) for r0 in bundle.r_values)]
            for i, r1 in enumerate(bundle.r_values):
                cells = ",".join(fmt_real(v) for v in panel.values[i])
                lines.append(f"{r1},{cells}")
            path = out_dir / _matrix_file_name(m, panel.s0, panel.s1)
            path.write_text("\n".join(lines) + "\n", newline="\n")
        print(f"wrote {len(bundle.panels)} matrix files to {out_dir}")
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smartrar",
        description="Two-stage adaptive trial simulator: single trials, grid sweeps, matrix reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trial and emit patient and allocation CSVs")
    sim.add_argument("--r0", type=float, help="infection probability, stage-1 placebo arm")
    sim.add_argument("--r1", type=float, help="infection probability, stage-1 prophylaxis arm")
    sim.add_argument("--s0", type=float, help="death probability after stage-1 placebo")
    sim.add_argument("--s1", type=float, help="death probability after stage-1 prophylaxis")
    sim.add_argument("--m", type=int, choices=(0, 1), help="myopic flag (default 0)")
    sim.add_argument("--c", type=float, help="adaptation exponent (default 0)")
    sim.add_argument("--seed", type=int, help="trial seed (default 0)")
    sim.add_argument("--engine", choices=("conjugate", "mcmc"), help="posterior engine")
    sim.add_argument("--patients", type=int, help="maximum sample size (default 2000)")
    sim.add_argument("--interims", type=int, help="number of scheduled analyses (default 4)")
    sim.add_argument("--out", help="output directory for patients.csv and allocations.csv")
    sim.add_argument("--config", help="INI config file; flags override file values")
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="run a scenario-grid sweep across designs")
    swp.add_argument("--grid", help="'full', 'reduced' or a scenario CSV path (default reduced)")
    swp.add_argument("--designs", help="'all' or comma list like m0c0,m0c1 (default all)")
    swp.add_argument("--replicates", type=int, help="trials per (scenario, design) (default 10)")
    swp.add_argument("--base-seed", type=int, help="seed-lattice base (default 0)")
    swp.add_argument("--engine", choices=("conjugate", "mcmc"), help="posterior engine")
    swp.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    swp.add_argument("--out-dir", help="output directory")
    swp.add_argument("--config", help="INI config file; flags override file values")
    swp.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="emit relative-utility matrices from a sweep aggregate")
    rep.add_argument("--in", dest="in_file", help="sweep aggregate CSV")
    rep.add_argument("--m", type=int, choices=(0, 1), help="myopic flag to report")
    rep.add_argument("--format", choices=("csv-matrix", "long-csv"), help="output format")
    rep.add_argument("--out-dir", help="output directory")
    rep.add_argument("--config", help="INI config file; flags override file values")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
