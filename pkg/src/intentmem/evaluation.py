"""Metrics over execution records, the component ablation, and step consistency."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .embedding import HashingProvider
from .errors import MetricError, ScenarioError
from .executor import ExecConfig, ExecutionRecord, Executor, OUTCOME_SUCCESS
from .memory import APPROVED, PlanMemory
from .persist import atomic_write_text, dumps, write_document
from .pipeline import Artifacts
from .planner import HintGenerator, Labeler, Planner, PlannerConfig, RuleLabeler
from .plans import GlobalPlan
from .sim_desktop import Scenario, SimDesktop, read_scenario

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# per-record metrics


def ser(record: ExecutionRecord) -> float | None:
    """Successful steps over attempted steps; None when nothing was attempted."""
    if record.steps_attempted == 0:
        return None
    return record.steps_successful / record.steps_attempted


def batch_ser(records: Sequence[ExecutionRecord]) -> float | None:
    """Mean of the defined per-record SER values."""
    vals = [v for v in (ser(r) for r in records) if v is not None]
    return float(np.mean(vals)) if vals else None


def completion(record: ExecutionRecord, plan: GlobalPlan | None = None) -> float:
    total = plan.n_steps if plan is not None else record.plan_steps_total
    if total == 0:
        raise MetricError("completion is undefined for an empty plan")
    return record.plan_steps_executed / total


@dataclass(frozen=True)
class LengthBin:
    lo: int
    hi: int
    n: int
    success: float
    ser: float | None
    ticks: float

    def to_dict(self) -> dict[str, Any]:
        return {"bin": [self.lo, self.hi], "n": self.n, "success": self.success, "ser": self.ser,
                "ticks": self.ticks}


def bin_by_length(records: Sequence[ExecutionRecord], width: int = 5) -> list[LengthBin]:
    """Group records by original plan length into left-closed bins ``[k*width, (k+1)*width)``."""
    if width <= 0:
        raise MetricError("bin width must be positive")
    groups: dict[int, list[ExecutionRecord]] = {}
    for r in records:
        groups.setdefault(r.plan_steps_total // width, []).append(r)
    out = []
    for k in sorted(groups):
        rs = groups[k]
        out.append(LengthBin(k * width, (k + 1) * width, len(rs),
                             sum(r.outcome == OUTCOME_SUCCESS for r in rs) / len(rs),
                             batch_ser(rs), float(np.mean([r.ticks for r in rs]))))
    return out


# ---------------------------------------------------------------------------
# step consistency


def step_text(step) -> str:
    return " ".join(x for x in (step.verb, step.object, step.text) if x)


def unit_consistency(plans: Sequence[GlobalPlan], threshold: float = 0.93,
                     embed: Callable[[Sequence[str]], np.ndarray] | None = None) -> list[bool]:
    """Per plan-unit position: every pair of runs agrees step by step above ``threshold``.

    Units are matched by position; a position absent from any run, or whose
    step counts differ between runs, is inconsistent.
    """
    if len(plans) < 2:
        raise MetricError("step consistency needs at least two runs")
    embed = embed or HashingProvider().embed
    width = max(len(p.units) for p in plans)
    out = []
    for k in range(width):
        units = [p.units[k] if k < len(p.units) else None for p in plans]
        if any(u is None for u in units) or len({len(u.steps) for u in units}) != 1:
            out.append(False)
            continue
        ok = True
        for j in range(len(units[0].steps)):
            vecs = embed([step_text(u.steps[j]) for u in units])
            for a, b in itertools.combinations(range(len(units)), 2):
                na, nb = np.linalg.norm(vecs[a]), np.linalg.norm(vecs[b])
                cos = float(vecs[a] @ vecs[b] / (na * nb)) if na and nb else 0.0
                if not cos > threshold:
                    ok = False
        out.append(ok)
    return out


def step_consistency(commands: Sequence[str], make_planner: Callable[[int], Planner], runs: int = 5,
                     threshold: float = 0.93) -> float:
    """Fraction of consistent plan units over ``runs`` independent plannings of each command.

    ``make_planner(run)`` builds the planner for one run so that seeded
    labelers can vary between runs.
    """
    if runs < 2:
        raise MetricError("step consistency needs runs >= 2")
    flags: list[bool] = []
    planners = [make_planner(r) for r in range(runs)]
    for cmd in commands:
        plans = [p.plan(cmd).plan for p in planners]
        flags.extend(unit_consistency(plans, threshold))
    if not flags:
        raise MetricError("no plan units to compare")
    return sum(flags) / len(flags)


# ---------------------------------------------------------------------------
# task suite and ablation


@dataclass(frozen=True)
class Task:
    id: str
    command: str
    scenario: Scenario


def load_suite(path: str | Path) -> list[Task]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
        tasks = [Task(t["id"], t["command"], read_scenario(path.parent / t["scenario"])) for t in doc["tasks"]]
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: bad suite ({exc!r})") from exc
    if len({t.id for t in tasks}) != len(tasks):
        raise ScenarioError(f"{path}: duplicate task ids")
    return tasks


@dataclass(frozen=True)
class AblationConfig:
    name: str
    learned: bool = False  # Z
    greedy: bool = False  # T_g
    gated: bool = False  # T_SG
    skills: bool = False  # S_SG
    plan_memory: bool = False  # PM

    def planner_config(self, base: PlannerConfig) -> PlannerConfig:
        return replace(base, use_sg=self.gated, use_greedy=self.greedy, use_skills=self.skills,
                       use_pm=self.plan_memory)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "Z": self.learned, "T_g": self.greedy, "T_SG": self.gated,
                "S_SG": self.skills, "PM": self.plan_memory}


ABLATION_ROWS = (
    AblationConfig("B"),
    AblationConfig("B+T_g", greedy=True),
    AblationConfig("B+T_SG+Z", learned=True, gated=True),
    AblationConfig("B+T_SG+S_SG+PM", gated=True, skills=True, plan_memory=True),
    AblationConfig("B+T_SG+Z+PM", learned=True, gated=True, plan_memory=True),
    AblationConfig("B+T_SG+Z+S_SG+PM", learned=True, gated=True, skills=True, plan_memory=True),
)


def row_by_name(name: str) -> AblationConfig:
    for row in ABLATION_ROWS:
        if row.name == name:
            return row
    raise MetricError(f"unknown ablation row {name!r}; known: {[r.name for r in ABLATION_ROWS]}")


@dataclass
class TaskResult:
    task_id: str
    case: str
    outcome: str
    completion: float
    ser: float | None
    steps_attempted: int
    plan_steps: int
    retries: int
    ticks: int
    generator_calls: int

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class RowMetrics:
    config: AblationConfig
    tasks: list[TaskResult]
    bins: list[LengthBin]
    records: list[ExecutionRecord] = field(default_factory=list, repr=False)

    @property
    def success(self) -> float:
        return sum(t.outcome == OUTCOME_SUCCESS for t in self.tasks) / len(self.tasks)

    @property
    def completion(self) -> float:
        return float(np.mean([t.completion for t in self.tasks]))

    @property
    def ser(self) -> float | None:
        return batch_ser(self.records)

    @property
    def mean_ticks(self) -> float:
        return float(np.mean([t.ticks for t in self.tasks]))

    def summary(self) -> dict[str, Any]:
        cases: dict[str, int] = {}
        for t in self.tasks:
            cases[t.case] = cases.get(t.case, 0) + 1
        return {"row": self.config.name, "success": self.success, "completion": self.completion,
                "ser": self.ser, "mean_ticks": self.mean_ticks, "cases": dict(sorted(cases.items())),
                "generator_calls": sum(t.generator_calls for t in self.tasks)}


@dataclass
class MetricsReport:
    rows: list[RowMetrics]
    seed: int
    consistency: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "rows": [{**r.summary(), "config": r.config.to_dict(), "bins": [b.to_dict() for b in r.bins],
                      "tasks": [t.to_dict() for t in r.tasks]} for r in self.rows],
            "step_consistency": dict(self.consistency),
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_tsv(self) -> str:
        lines = ["row\tsuccess\tcompletion\tser\tmean_ticks\tgenerator_calls"]
        for r in self.rows:
            s = r.summary()
            ser_v = "na" if s["ser"] is None else f"{s['ser']:.4f}"
            lines.append(f"{s['row']}\t{s['success']:.4f}\t{s['completion']:.4f}\t{ser_v}\t"
                         f"{s['mean_ticks']:.2f}\t{s['generator_calls']}")
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        """Report document at ``path`` plus a plain-text table next to it."""
        path = Path(path)
        write_document(path, "report", self.to_dict())
        atomic_write_text(path.with_suffix(".tsv"), self.to_tsv())


def run_row(tasks: Sequence[Task], row: AblationConfig, artifacts: Artifacts, planner_cfg: PlannerConfig,
            exec_cfg: ExecConfig, seed: int = 0, labeler: Labeler | None = None,
            memory: PlanMemory | None = None) -> RowMetrics:
    """Run one ablation row over the suite in order; successful plans are auto-approved."""
    cfg = row.planner_config(planner_cfg)
    index = artifacts.index if (row.gated or row.greedy) else None
    memory = memory if memory is not None else (PlanMemory() if row.plan_memory else None)
    planner = Planner(artifacts.encoder, index, memory, labeler or RuleLabeler(), HintGenerator(), cfg)
    hint_index = artifacts.index if row.skills else None
    results, records = [], []
    for task in tasks:
        res = planner.plan(task.command)
        sim = SimDesktop(task.scenario, seed=seed)
        rec = Executor(sim, hint_index, artifacts.encoder, exec_cfg).run(res.plan, task.id, res.generator_calls)
        if rec.outcome == OUTCOME_SUCCESS and row.plan_memory:
            planner.approve(res, APPROVED)
        records.append(rec)
        results.append(TaskResult(task.id, res.decision.case, rec.outcome, completion(rec), ser(rec),
                                  rec.steps_attempted, rec.plan_steps_total, rec.retries, rec.ticks,
                                  res.generator_calls))
        log.debug("%s %s %s %s", row.name, task.id, res.decision.case, rec.outcome)
    return RowMetrics(row, results, bin_by_length(records), records)


def run_ablation(tasks: Sequence[Task], artifacts: Mapping[bool, Artifacts], planner_cfg: PlannerConfig,
                 exec_cfg: ExecConfig, rows: Sequence[AblationConfig] = ABLATION_ROWS, seed: int = 0) -> MetricsReport:
    """``artifacts`` maps learned-representation on/off to the matching build."""
    out = []
    for row in rows:
        if row.learned not in artifacts:
            raise MetricError(f"row {row.name} needs the {'learned' if row.learned else 'raw'} build")
        out.append(run_row(tasks, row, artifacts[row.learned], planner_cfg, exec_cfg, seed))
    return MetricsReport(out, seed)
