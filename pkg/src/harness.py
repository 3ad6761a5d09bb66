"""Run configuration, batch execution and coverage summaries.

One run = one (planner, environment, seed) mission.  Every run writes a
per-step CSV; a batch adds ``summary.csv`` with one row per run, and
``summarize`` reduces that to medians per planner.
"""

from __future__ import annotations

import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

import worldgen
from baselines import NbvParams
from belief import BeliefParams
from config import ConfigError, _deep_merge, _set_dotted, project_root
from executive import ExecutiveParams, MissionAborted, StepRow, run_mission
from gcp import GcpParams
from irm import IrmParams
from lcp import LcpParams
from log_config import get_logger
from reward import RewardWeights
from world import GroundTruthWorld, MotionNoise, SensorSpec, load_world, parse_world

log = get_logger("harness")

PLANNERS = ("hierarchical", "nbv", "hfe")
COVERAGE_MARK = 0.9

SUMMARY_FIELDS = (
    "run_id", "planner", "environment", "seed", "status", "final_coverage", "steps",
    "auc", "steps_to_90", "censored", "step_budget", "global_nodes", "frontier_events",
    "trajectory_length", "diagnostic",
)
COMPARISON_FIELDS = (
    "planner", "runs", "median_final_coverage", "median_steps_to_90", "censored",
    "median_auc", "aborted",
)


# ---------------------------------------------------------------------------
# Configuration models
# ---------------------------------------------------------------------------

class WorldSpec(BaseModel):
    """Either an environment file or a generator recipe."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    path: str | None = None
    kind: str | None = None
    width: int = Field(0, ge=0)
    height: int = Field(0, ge=0)
    seed: int = 0
    options: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self) -> "WorldSpec":
        if (self.path is None) == (self.kind is None):
            raise ValueError("world needs exactly one of 'path' or 'kind'")
        if self.kind is not None and self.kind not in worldgen.KINDS:
            raise ValueError(f"unknown world kind {self.kind!r}, expected one of {worldgen.KINDS}")
        return self

    @property
    def label(self) -> str:
        if self.path is not None:
            return os.path.splitext(os.path.basename(self.path))[0]
        return f"{self.kind}{self.width}x{self.height}s{self.seed}"

    def resolve(self, base_dir: str | None = None) -> str:
        candidates = [self.path] if os.path.isabs(self.path) else [
            os.path.join(d, self.path) for d in (base_dir, os.getcwd(), project_root()) if d
        ]
        for c in candidates:
            if os.path.isfile(c):
                return c
        raise ConfigError(f"environment file not found: {self.path}")

    def build(self, base_dir: str | None = None) -> GroundTruthWorld:
        if self.path is not None:
            return load_world(self.resolve(base_dir))
        text = worldgen.generate(self.kind, self.width, self.height, self.seed, **self.options)
        return parse_world(text, name=self.label)


class RunParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    planner: Literal["hierarchical", "nbv", "hfe"] = "hierarchical"
    seed: int = 0
    step_budget: int | None = Field(None, ge=1)


class LoggingParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    level: str = "INFO"
    directory: str | None = "./logs"
    max_bytes: int = Field(10 * 1024 * 1024, ge=1024)
    backup_count: int = Field(5, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    run: RunParams = Field(default_factory=RunParams)
    world: WorldSpec = Field(default_factory=lambda: WorldSpec(kind="room", width=9, height=9))
    sensor: SensorSpec = Field(default_factory=SensorSpec)
    noise: MotionNoise = Field(default_factory=MotionNoise)
    belief: BeliefParams = Field(default_factory=BeliefParams)
    irm: IrmParams = Field(default_factory=IrmParams)
    reward: RewardWeights = Field(default_factory=RewardWeights)
    gcp: GcpParams = Field(default_factory=GcpParams)
    lcp: LcpParams = Field(default_factory=LcpParams)
    executive: ExecutiveParams = Field(default_factory=ExecutiveParams)
    nbv: NbvParams = Field(default_factory=NbvParams)
    logging: LoggingParams = Field(default_factory=LoggingParams)

    @property
    def planner(self) -> str:
        return self.run.planner

    @property
    def seed(self) -> int:
        return self.run.seed

    @property
    def step_budget(self) -> int | None:
        return self.run.step_budget

    def with_values(self, **dotted: Any) -> "RunConfig":
        """Copy with ``section__key=value`` style overrides applied."""
        data = self.model_dump()
        for key, value in dotted.items():
            _set_dotted(data, key.replace("__", "."), value)
        return build_run_config(data)


def build_run_config(cfg: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(cfg)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    run_id: str
    planner: str
    environment: str
    seed: int
    status: str
    rows: list[StepRow] = field(default_factory=list)
    diagnostic: str = ""
    step_budget: int | None = None
    global_nodes: int = 0
    frontier_events: int = 0
    trajectory_length: float = 0.0
    csv_path: str | None = None

    @property
    def final_coverage(self) -> float:
        return self.rows[-1].coverage_fraction if self.rows else 0.0

    @property
    def steps(self) -> int:
        return self.rows[-1].step if self.rows else 0

    @property
    def auc(self) -> float:
        """Sum of per-step coverage fractions (area under the step curve)."""
        return float(sum(r.coverage_fraction for r in self.rows))

    @property
    def steps_to_90(self) -> int | None:
        for r in self.rows:
            if r.coverage_fraction >= COVERAGE_MARK:
                return r.step
        return None

    def summary_row(self) -> dict[str, str]:
        s90 = self.steps_to_90
        return {
            "run_id": self.run_id,
            "planner": self.planner,
            "environment": self.environment,
            "seed": str(self.seed),
            "status": self.status,
            "final_coverage": f"{self.final_coverage:.6f}",
            "steps": str(self.steps),
            "auc": f"{self.auc:.6f}",
            "steps_to_90": "" if s90 is None else str(s90),
            "censored": "1" if s90 is None else "0",
            "step_budget": "" if self.step_budget is None else str(self.step_budget),
            "global_nodes": str(self.global_nodes),
            "frontier_events": str(self.frontier_events),
            "trajectory_length": f"{self.trajectory_length:.3f}",
            "diagnostic": self.diagnostic,
        }


def run_id_for(config: RunConfig) -> str:
    return f"{config.planner}_{config.world.label}_s{config.seed}"


def write_rows(path: str, rows: Iterable[StepRow]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=StepRow.FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_dict())


def read_rows(path: str) -> list[StepRow]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return [
            StepRow(
                step=int(r["step"]),
                sim_time=float(r["sim_time"]),
                covered_cells=int(r["covered_cells"]),
                coverage_fraction=float(r["coverage_fraction"]),
                x=float(r["x"]),
                y=float(r["y"]),
                mode=r["mode"],
                episode=int(r["episode"]),
                distance=float(r["distance"]),
            )
            for r in csv.DictReader(fh)
        ]


def run_one(
    config: RunConfig,
    out_dir: str | None = None,
    base_dir: str | None = None,
    run_id: str | None = None,
) -> RunRecord:
    """Execute one mission; aborts and run errors are recorded, not raised."""
    run_id = run_id or run_id_for(config)
    record = RunRecord(run_id, config.planner, config.world.label, config.seed, "done",
                       step_budget=config.step_budget)
    result = None
    try:
        world = config.world.build(base_dir)
        result = run_mission(world, config, config.seed)
    except MissionAborted as exc:
        result = exc.result
        record.diagnostic = exc.diagnostic
        log.warning("run %s aborted: %s", run_id, exc.diagnostic)
    except Exception as exc:
        record.status = "aborted"
        record.diagnostic = f"{type(exc).__name__}: {exc}"
        log.exception("run %s failed", run_id)
    if result is not None:
        record.status = result.status
        record.rows = result.rows
        record.trajectory_length = result.trajectory_length
        if result.global_irm is not None:
            record.global_nodes = result.global_irm.graph.number_of_nodes()
            record.frontier_events = result.global_irm.frontier_events
    if out_dir is not None:
        record.csv_path = os.path.join(out_dir, "runs", f"{run_id}.csv")
        write_rows(record.csv_path, record.rows)
    log.info("run %s: %s, coverage %.3f after %d steps", run_id, record.status,
             record.final_coverage, record.steps)
    return record


# ---------------------------------------------------------------------------
# Matrix
# ---------------------------------------------------------------------------

_ALIASES = {"planner": "run.planner", "seed": "run.seed", "step_budget": "run.step_budget"}


def expand_matrix(spec: dict) -> list[RunConfig]:
    """Cartesian product of the ``matrix`` lists applied on top of ``base``.

    Matrix keys are dotted config keys; ``planner``, ``seed`` and
    ``step_budget`` are shorthands for their ``run.`` keys and
    ``environment`` takes a file path or a ``world`` mapping.
    """
    unknown = set(spec) - {"base", "matrix"}
    if unknown:
        raise ConfigError(f"unknown matrix spec keys: {sorted(unknown)}")
    base = spec.get("base") or {}
    matrix = spec.get("matrix") or {}
    if not isinstance(base, dict) or not isinstance(matrix, dict):
        raise ConfigError("matrix spec 'base' and 'matrix' must be mappings")
    for key, values in matrix.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"matrix entry {key!r} must be a non-empty list")

    keys = list(matrix)
    configs = []
    for combo in itertools.product(*(matrix[k] for k in keys)):
        data = _deep_merge(base, {})
        for key, value in zip(keys, combo):
            if key == "environment":
                data["world"] = {"path": value} if isinstance(value, str) else dict(value)
            else:
                _set_dotted(data, _ALIASES.get(key, key), value)
        configs.append(build_run_config(data))
    return configs


def _unique_ids(configs: Sequence[RunConfig]) -> list[str]:
    ids, seen = [], {}
    for c in configs:
        rid = run_id_for(c)
        n = seen.get(rid, 0)
        seen[rid] = n + 1
        ids.append(rid if n == 0 else f"{rid}_{n}")
    return ids


def write_summary(path: str, records: Sequence[RunRecord]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(rec.summary_row())


def _collect(future, config: RunConfig, run_id: str) -> RunRecord:
    """Result of a pooled run; a worker that died still yields an aborted record."""
    try:
        return future.result()
    except Exception as exc:
        log.exception("run %s failed in worker", run_id)
        return RunRecord(run_id, config.planner, config.world.label, config.seed, "aborted",
                         diagnostic=f"{type(exc).__name__}: {exc}", step_budget=config.step_budget)


def run_matrix(
    configs: Sequence[RunConfig],
    out_dir: str,
    workers: int = 1,
    base_dir: str | None = None,
) -> list[RunRecord]:
    """Run every config independently, then write ``summary.csv``."""
    ids = _unique_ids(configs)
    log.info("matrix: %d runs, %d worker(s), output %s", len(configs), workers, out_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_one, c, out_dir, base_dir, rid) for c, rid in zip(configs, ids)]
            records = [_collect(f, c, rid) for f, c, rid in zip(futures, configs, ids)]
    else:
        records = []
        for i, (c, rid) in enumerate(zip(configs, ids), start=1):
            log.info("matrix: run %d/%d %s", i, len(configs), rid)
            records.append(run_one(c, out_dir, base_dir, rid))
    write_summary(os.path.join(out_dir, "summary.csv"), records)
    return records


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    """Minimal per-run facts ``summarize`` needs, from records or summary.csv."""

    planner: str
    status: str
    final_coverage: float
    steps: int
    auc: float
    steps_to_90: int | None
    step_budget: int | None

    @classmethod
    def from_record(cls, rec: RunRecord) -> "SummaryRow":
        return cls(rec.planner, rec.status, rec.final_coverage, rec.steps, rec.auc,
                   rec.steps_to_90, rec.step_budget)

    @classmethod
    def from_csv(cls, row: dict[str, str]) -> "SummaryRow":
        return cls(
            planner=row["planner"],
            status=row["status"],
            final_coverage=float(row["final_coverage"]),
            steps=int(row["steps"]),
            auc=float(row["auc"]),
            steps_to_90=int(row["steps_to_90"]) if row["steps_to_90"] else None,
            step_budget=int(row["step_budget"]) if row.get("step_budget") else None,
        )

    @property
    def censored_steps_to_90(self) -> int:
        if self.steps_to_90 is not None:
            return self.steps_to_90
        return self.step_budget if self.step_budget is not None else self.steps


def read_summary(path: str) -> list[SummaryRow]:
    if os.path.isdir(path):
        path = os.path.join(path, "summary.csv")
    if not os.path.isfile(path):
        raise ConfigError(f"summary file not found: {path}")
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return [SummaryRow.from_csv(r) for r in csv.DictReader(fh)]


def summarize(records: Sequence[RunRecord | SummaryRow]) -> list[dict[str, str]]:
    """Per-planner medians; a missing 90 % crossing counts as the step budget."""
    rows = [r if isinstance(r, SummaryRow) else SummaryRow.from_record(r) for r in records]
    by_planner: dict[str, list[SummaryRow]] = {}
    for r in rows:
        by_planner.setdefault(r.planner, []).append(r)

    table = []
    for planner in sorted(by_planner, key=lambda p: (PLANNERS.index(p) if p in PLANNERS else len(PLANNERS), p)):
        group = by_planner[planner]
        table.append({
            "planner": planner,
            "runs": str(len(group)),
            "median_final_coverage": f"{np.median([g.final_coverage for g in group]):.6f}",
            "median_steps_to_90": f"{np.median([g.censored_steps_to_90 for g in group]):.1f}",
            "censored": str(sum(1 for g in group if g.steps_to_90 is None)),
            "median_auc": f"{np.median([g.auc for g in group]):.6f}",
            "aborted": str(sum(1 for g in group if g.status == "aborted")),
        })
    return table


def write_comparison(path: str, table: Sequence[dict[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARISON_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)


def format_table(table: Sequence[dict[str, str]]) -> str:
    widths = {f: max(len(f), *(len(r[f]) for r in table)) if table else len(f) for f in COMPARISON_FIELDS}
    lines = ["  ".join(f.ljust(widths[f]) for f in COMPARISON_FIELDS)]
    for r in table:
        lines.append("  ".join(r[f].ljust(widths[f]) for f in COMPARISON_FIELDS))
    return "\n".join(lines)
