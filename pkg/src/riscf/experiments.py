"""Experiment sweeps and deterministic result persistence.

Every sweep runs a grid of values against a set of schemes and seeds and
collects (scheme, value, seed) cells of achievable sum rate per
subcarrier plus the iteration count at which the optimizer's relative
sum-rate change fell below its tolerance.  Cells are independent: each
derives its randomness from the seed alone, so partial grids, reordered
runs and rerun subsets reproduce byte-identical numbers.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import InvariantError, ParameterError
from .scenario import (
    SCHEME_ORDER,
    ScenarioGeometry,
    SystemConfig,
    config_hash,
    config_to_dict,
    geometry_to_dict,
    run_single,
)


@dataclass(frozen=True)
class RunRecord:
    scheme: str
    sweep_value: float
    seed: int
    asr: float
    iterations: int


@dataclass
class ExperimentResult:
    """All cells of one sweep plus enough metadata to reproduce them."""

    name: str
    sweep: str
    grid: tuple[float, ...]
    schemes: tuple[str, ...]
    seeds: tuple[int, ...]
    config: SystemConfig
    geometry: ScenarioGeometry
    records: list[RunRecord] = field(default_factory=list)
    traces: dict[tuple[str, float, int], list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(r.asr < 0 for r in self.records):
            raise InvariantError("negative rate recorded")

    def cell(self, scheme: str, value: float) -> list[RunRecord]:
        return [r for r in self.records if r.scheme == scheme and r.sweep_value == value]

    def median_asr(self, scheme: str, value: float) -> float:
        rows = self.cell(scheme, value)
        if not rows:
            raise ParameterError(f"no records for ({scheme}, {value})")
        return statistics.median(r.asr for r in rows)

    def median_iterations(self, scheme: str, value: float) -> float:
        rows = self.cell(scheme, value)
        if not rows:
            raise ParameterError(f"no records for ({scheme}, {value})")
        return statistics.median(r.iterations for r in rows)


def _run_grid(
    name: str,
    sweep: str,
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    grid: Sequence[float],
    schemes: Sequence[str],
    seeds: Sequence[int],
    cell_runner: Callable,
) -> ExperimentResult:
    result = ExperimentResult(
        name=name,
        sweep=sweep,
        grid=tuple(float(v) for v in grid),
        schemes=tuple(schemes),
        seeds=tuple(int(s) for s in seeds),
        config=cfg,
        geometry=geom,
    )
    for scheme in result.schemes:
        for value in result.grid:
            for seed in result.seeds:
                run = cell_runner(cfg, geom, scheme, value, seed)
                result.records.append(
                    RunRecord(scheme=scheme, sweep_value=value, seed=seed,
                              asr=run.asr, iterations=run.iterations)
                )
                result.traces[(scheme, value, seed)] = [v / cfg.M for v in run.trace.wsr]
    return result


def run_convergence_experiment(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    seeds: Sequence[int],
    schemes: Sequence[str] = SCHEME_ORDER,
) -> ExperimentResult:
    """Optimize every scheme at the configured operating point, keep full traces.

    Raises when a proposed-family run fails to converge within the
    iteration cap, since downstream comparisons would be meaningless.
    """
    def cell(cfg, geom, scheme, value, seed):
        return run_single(cfg, geom, scheme, seed)

    result = _run_grid("converge", "power_dbm", cfg, geom,
                       [float(cfg.power_dbm) if not isinstance(cfg.power_dbm, tuple) else 0.0],
                       schemes, seeds, cell)
    for rec in result.records:
        if rec.scheme.startswith("proposed") and rec.iterations > cfg.ao_max_iters:
            raise InvariantError(
                f"scheme {rec.scheme} seed {rec.seed} did not converge within {cfg.ao_max_iters} iterations"
            )
    return result


def run_power_sweep(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    grid: Sequence[float],
    seeds: Sequence[int],
    schemes: Sequence[str] = SCHEME_ORDER,
) -> ExperimentResult:
    def cell(cfg, geom, scheme, value, seed):
        return run_single(replace(cfg, power_dbm=float(value)), geom, scheme, seed)

    return _run_grid("sweep_power", "power_dbm", cfg, geom, grid, schemes, seeds, cell)


def run_user_sweep(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    grid: Sequence[int],
    seeds: Sequence[int],
    schemes: Sequence[str] = SCHEME_ORDER,
) -> ExperimentResult:
    def cell(cfg, geom, scheme, value, seed):
        k = int(value)
        weights = None if cfg.weights is None else cfg.weights[:k]
        return run_single(replace(cfg, K=k, weights=weights), geom, scheme, seed)

    return _run_grid("sweep_users", "num_users", cfg, geom, grid, schemes, seeds, cell)


def run_distance_sweep(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    grid: Sequence[float],
    seeds: Sequence[int],
    schemes: Sequence[str] = SCHEME_ORDER,
) -> ExperimentResult:
    def cell(cfg, geom, scheme, value, seed):
        moved = replace(geom, ue_center_distance=float(value))
        return run_single(cfg, moved, scheme, seed)

    return _run_grid("sweep_distance", "ue_center_distance", cfg, geom, grid, schemes, seeds, cell)


def run_csi_sweep(
    cfg: SystemConfig,
    geom: ScenarioGeometry,
    grid: Sequence[float],
    seeds: Sequence[int],
    schemes: Sequence[str] = SCHEME_ORDER,
) -> ExperimentResult:
    """Optimize on an imperfect estimate of error level delta, score on the truth."""
    def cell(cfg, geom, scheme, value, seed):
        return run_single(cfg, geom, scheme, seed, delta=float(value))

    return _run_grid("sweep_csi", "csi_delta", cfg, geom, grid, schemes, seeds, cell)


def emit_results(
    result: ExperimentResult, out_dir: str | Path, emit_traces: bool = False
) -> list[Path]:
    """Write the sweep as CSV plus a JSON sidecar; rerecording is byte-identical.

    The CSV has one row per (scheme, value, seed) cell in a fixed order;
    floats are written with shortest-round-trip precision.  The sidecar
    captures the full configuration, the grid, the seed list and a hash
    of the configuration.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    csv_path = out / f"{result.name}.csv"
    lines = ["scheme,sweep_value,seed,asr_bits_per_sc,iterations_to_converge"]
    ordered = {(r.scheme, r.sweep_value, r.seed): r for r in result.records}
    for scheme in result.schemes:
        for value in result.grid:
            for seed in result.seeds:
                r = ordered[(scheme, value, seed)]
                lines.append(f"{r.scheme},{r.sweep_value!r},{r.seed},{r.asr!r},{r.iterations}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(csv_path)

    sidecar = {
        "experiment": result.name,
        "sweep": result.sweep,
        "grid": list(result.grid),
        "schemes": list(result.schemes),
        "seeds": list(result.seeds),
        "system": config_to_dict(result.config),
        "geometry": geometry_to_dict(result.geometry),
        "config_hash": config_hash(result.config, result.geometry),
    }
    json_path = out / f"{result.name}.json"
    json_path.write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    paths.append(json_path)

    if emit_traces:
        trace_path = out / f"{result.name}_trace.csv"
        tlines = ["scheme,sweep_value,seed,iteration,asr_bits_per_sc"]
        for scheme in result.schemes:
            for value in result.grid:
                for seed in result.seeds:
                    for i, v in enumerate(result.traces[(scheme, value, seed)]):
                        tlines.append(f"{scheme},{value!r},{seed},{i},{v!r}")
        trace_path.write_text("\n".join(tlines) + "\n", encoding="utf-8")
        paths.append(trace_path)
    return paths
