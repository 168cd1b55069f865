"""Top-level run control.

Levels 1-3 go through a single-pass plan/code/debug path (replanning only
when an episode cannot produce runnable code); levels 4-5 go through the
genetic selection loop unless the GA ablation is on. Everything a run
produces lands under the output directory: final candidates, reports, the
per-task append-only database, and a machine-readable summary that is
written even when tasks fail.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from . import metrics
from .agents import AgentTeam, KnowledgeBase
from .backends.base import ExecutionBackend
from .backends.sim import SimBackend, SimLandscape
from .backends.subproc import SubprocessBackend
from .errors import ConfigError
from .evaluator import (
    CandidateProgram,
    EvaluationReport,
    Evaluator,
    achievement_from_report,
)
from .ga import (
    DEFAULT_GENERATIONS,
    DEFAULT_OFFSPRING,
    DEFAULT_POPULATION,
    FAILED_EPISODE_FITNESS,
    GAConfig,
    RunDatabase,
    fitness_for,
    run_generation_loop,
)
from .gateway import AuditLog, CallBudget, ChatGateway, HttpGateway, MockGateway
from .mockref import BrokenCodeInjector, ReferencePolicy
from .tasks import TaskSpec, canonical_json


@dataclass(frozen=True, slots=True)
class RunConfig:
    backend: str = "sim"  # "sim" or "subprocess"
    gateway: str = "mock"  # "mock" or "live"
    population: int = DEFAULT_POPULATION
    offspring: int = DEFAULT_OFFSPRING
    t_sel: int = DEFAULT_GENERATIONS
    t_code: int = 5
    t_debug: int = 3
    knowledge_base: bool = True
    ga: bool = True
    debugging: bool = True
    seed: int = 0
    workers: int = 1
    quality_floor: float = 0.0
    few_shot_n: int = 10
    replan_cap: int = 3
    landscape_path: str | None = None
    harness_cmd: str | None = None
    prompts_path: str | None = None
    mock_policy: str = "reference"  # "reference", "broken-first", "broken-all"
    sampling_with_replacement: bool = False  # offspring sensitivity runs

    def normalized(self) -> "RunConfig":
        """Apply the ablation invariants: no GA means an empty population,
        no debugging agent means regeneration-only episodes."""
        cfg = self
        if not cfg.ga and (cfg.population or cfg.offspring):
            cfg = replace(cfg, population=0, offspring=0)
        if not cfg.debugging and cfg.t_debug != 1:
            cfg = replace(cfg, t_debug=1)
        for name in ("population", "offspring", "t_sel", "t_code", "t_debug", "replan_cap"):
            if getattr(cfg, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if cfg.ga and cfg.offspring > cfg.population:
            raise ConfigError("offspring (M) cannot exceed population (P)")
        if cfg.backend not in ("sim", "subprocess"):
            raise ConfigError(f"unknown backend {cfg.backend!r}")
        if cfg.gateway not in ("mock", "live"):
            raise ConfigError(f"unknown gateway {cfg.gateway!r}")
        return cfg


def derive_seed(seed: int, *parts: Any) -> int:
    payload = json.dumps([seed, *[str(p) for p in parts]])
    return int.from_bytes(hashlib.sha256(payload.encode()).digest()[:4], "big")


def make_backend(cfg: RunConfig) -> ExecutionBackend:
    if cfg.backend == "sim":
        landscape = (
            SimLandscape.load(cfg.landscape_path)
            if cfg.landscape_path
            else SimLandscape.default()
        )
        return SimBackend(landscape)
    if not cfg.harness_cmd:
        raise ConfigError("subprocess backend needs --harness-cmd")
    if not cfg.prompts_path:
        raise ConfigError("subprocess backend needs --prompts")
    return SubprocessBackend(cfg.harness_cmd.split(), prompts_path=cfg.prompts_path)


def make_gateway(cfg: RunConfig, *, audit: AuditLog, budget: CallBudget | None, seed: int) -> ChatGateway:
    if cfg.gateway == "live":
        return HttpGateway(audit=audit, budget=budget)
    policy: Any = ReferencePolicy()
    if cfg.mock_policy == "broken-first":
        policy = BrokenCodeInjector(policy, "first_generation")
    elif cfg.mock_policy == "broken-all":
        policy = BrokenCodeInjector(policy, "all")
    elif cfg.mock_policy != "reference":
        raise ConfigError(f"unknown mock policy {cfg.mock_policy!r}")
    return MockGateway(policy, seed=seed, audit=audit, budget=budget)


@dataclass(slots=True)
class TaskRunResult:
    task_id: str
    level: int
    passed: bool
    candidate: CandidateProgram | None
    report: EvaluationReport | None
    fitness: float | None
    episodes: int
    database: RunDatabase
    audit: AuditLog

    def summary(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "level": self.level,
            "passed": self.passed,
            "best_effort": not self.passed and self.candidate is not None,
            "candidate_id": None if self.candidate is None else self.candidate.candidate_id,
            "errors": sorted(e.value for e in self.report.errors) if self.report else [],
            "fitness": self.fitness,
            "episodes": self.episodes,
        }


def _single_pass(
    task: TaskSpec,
    team: AgentTeam,
    backend: ExecutionBackend,
    evaluator: Evaluator,
    cfg: RunConfig,
    *,
    eval_seed: int,
) -> TaskRunResult:
    db = RunDatabase()
    db.append(
        {
            "type": "run_header",
            "task_id": task.task_id,
            "seed": cfg.seed,
            "config": {"mode": "single_pass", "replan_cap": cfg.replan_cap,
                       "t_code": cfg.t_code, "t_debug": cfg.t_debug},
        }
    )
    mode = "optimization" if task.level >= 4 else "generation"
    episodes = 0
    attempts = 1 + max(0, cfg.replan_cap)  # initial pass plus up to replan_cap replans
    for attempt in range(attempts):
        scope = f"{task.task_id}/a{attempt}"
        if mode == "optimization" and attempt == 0:
            baseline_plan = team.plan_baseline(task.prompt, scope=scope)
            db.append({"type": "baseline_plan", "plan": baseline_plan.to_dict()})
        plan = team.plan_fresh(task.prompt, generation=0, slot=attempt, scope=scope)
        episode = team.run_episode(
            plan, backend, t_debug=cfg.t_debug, t_code=cfg.t_code, scope=scope
        )
        episodes += 1
        candidate_id = f"{task.task_id}-a{attempt}"
        if not episode.success:
            db.append(
                {
                    "type": "candidate",
                    "generation": attempt,
                    "candidate_id": candidate_id,
                    "plan": plan.to_dict(),
                    "source": None,
                    "status": "codegen_failed",
                    "fitness": FAILED_EPISODE_FITNESS,
                    "report": None,
                    "episode": {
                        "coding_calls": episode.coding_calls,
                        "repair_calls": episode.repair_calls,
                        "regenerations": episode.regenerations,
                        "last_error": episode.last_error,
                    },
                }
            )
            continue  # backtrack to planning
        candidate = CandidateProgram(candidate_id, episode.source, plan=plan)
        report = evaluator.evaluate(candidate, task, seed=eval_seed)
        fitness = fitness_for(report, task) if task.level >= 4 else None
        db.append(
            {
                "type": "candidate",
                "generation": attempt,
                "candidate_id": candidate_id,
                "plan": plan.to_dict(),
                "source": episode.source,
                "status": "evaluated",
                "fitness": FAILED_EPISODE_FITNESS if fitness is None else fitness,
                "report": report.to_dict(),
                "episode": {
                    "coding_calls": episode.coding_calls,
                    "repair_calls": episode.repair_calls,
                    "regenerations": episode.regenerations,
                    "last_error": episode.last_error,
                },
            }
        )
        return TaskRunResult(
            task_id=task.task_id,
            level=task.level,
            passed=report.passed,
            candidate=candidate,
            report=report,
            fitness=fitness,
            episodes=episodes,
            database=db,
            audit=team.gateway.audit,  # type: ignore[attr-defined]
        )
    return TaskRunResult(
        task_id=task.task_id,
        level=task.level,
        passed=False,
        candidate=None,
        report=None,
        fitness=None,
        episodes=episodes,
        database=db,
        audit=team.gateway.audit,  # type: ignore[attr-defined]
    )


def run_task(
    task: TaskSpec,
    cfg: RunConfig,
    *,
    backend: ExecutionBackend | None = None,
    out_dir: str | Path | None = None,
) -> TaskRunResult:
    """Run one task end to end under the configured stack."""
    cfg = cfg.normalized()
    backend = backend if backend is not None else make_backend(cfg)
    audit = AuditLog()
    task_seed = derive_seed(cfg.seed, task.task_id)
    episode_cap = max(1, cfg.population * max(1, cfg.t_sel)) + cfg.replan_cap
    budget = CallBudget(episode_cap * cfg.t_code * max(1, cfg.t_debug))
    gateway = make_gateway(cfg, audit=audit, budget=budget, seed=task_seed)
    kb = KnowledgeBase.bundled(enabled=cfg.knowledge_base)
    if not cfg.knowledge_base:
        kb = KnowledgeBase.disabled()
    team = AgentTeam(gateway, kb, reflection_enabled=cfg.debugging)
    evaluator = Evaluator(
        backend, few_shot_n=cfg.few_shot_n, quality_floor=cfg.quality_floor
    )
    eval_seed = derive_seed(cfg.seed, task.task_id, "eval")

    if task.level >= 4 and cfg.ga and cfg.population > 0:
        ga_cfg = GAConfig(
            population=cfg.population,
            offspring=cfg.offspring,
            generations=cfg.t_sel,
            t_code=cfg.t_code,
            t_debug=cfg.t_debug,
            with_replacement=cfg.sampling_with_replacement,
        )
        loop = run_generation_loop(
            task, team, backend, evaluator, ga_cfg, seed=task_seed, eval_seed=eval_seed
        )
        best = loop.best
        result = TaskRunResult(
            task_id=task.task_id,
            level=task.level,
            passed=loop.passed,
            candidate=loop.candidate
            if loop.candidate is not None
            else (
                CandidateProgram(best.candidate_id, best.source or "", plan=best.plan)
                if best is not None and best.source
                else None
            ),
            report=best.report if best is not None else None,
            fitness=best.fitness if best is not None else None,
            episodes=loop.episodes_run,
            database=loop.database,
            audit=audit,
        )
    else:
        result = _single_pass(task, team, backend, evaluator, cfg, eval_seed=eval_seed)

    if out_dir is not None:
        persist_task_run(result, out_dir)
    return result


def persist_task_run(result: TaskRunResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / "database").mkdir(parents=True, exist_ok=True)
    result.database.save(out / "database" / f"{result.task_id}.jsonl")
    (out / "audit").mkdir(parents=True, exist_ok=True)
    result.audit.save_jsonl(out / "audit" / f"{result.task_id}.jsonl")
    if result.candidate is not None:
        cdir = out / "candidates" / result.task_id
        cdir.mkdir(parents=True, exist_ok=True)
        (cdir / f"{result.candidate.candidate_id}.py").write_text(
            result.candidate.source, "utf-8"
        )
    if result.report is not None:
        rdir = out / "reports" / result.task_id
        rdir.mkdir(parents=True, exist_ok=True)
        (rdir / f"{result.report.candidate_id}.json").write_text(
            canonical_json(result.report.to_dict()) + "\n", "utf-8"
        )


@dataclass(slots=True)
class SuiteRunResult:
    results: dict[str, TaskRunResult] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)


def summarize_results(
    tasks: Sequence[TaskSpec], results: dict[str, TaskRunResult]
) -> dict[str, Any]:
    verdicts_by_level: dict[int, list[bool]] = {}
    hard_by_level: dict[int, list[float]] = {}
    achievement: dict[str, float] = {}
    histogram: dict[str, int] = {}
    for task in tasks:
        result = results.get(task.task_id)
        passed = bool(result and result.passed)
        verdicts_by_level.setdefault(task.level, []).append(passed)
        if result and result.report:
            for mode in result.report.errors:
                histogram[mode.value] = histogram.get(mode.value, 0) + 1
        elif not passed:
            histogram["missing"] = histogram.get("missing", 0) + 1
        if task.level >= 4:
            sa = achievement_from_report(task, result.report if result else None)
            achievement[task.task_id] = sa
            if task.difficulty == "hard":
                hard_by_level.setdefault(task.level, []).append(sa)
    per_level = {
        str(lvl): metrics.pass_rate(v) for lvl, v in sorted(verdicts_by_level.items())
    }
    overall = metrics.weighted_pass_rate(verdicts_by_level) if verdicts_by_level else 0.0
    return {
        "level_counts": {str(k): len(v) for k, v in sorted(verdicts_by_level.items())},
        "per_level_pass": per_level,
        "overall_pass": overall,
        "achievement": dict(sorted(achievement.items())),
        "per_level_hard_achievement": {
            str(k): sum(v) / len(v) for k, v in sorted(hard_by_level.items())
        },
        "error_histogram": dict(sorted(histogram.items())),
        "per_task": {
            t.task_id: results[t.task_id].summary() for t in tasks if t.task_id in results
        },
    }


def run_suite(
    tasks: Sequence[TaskSpec],
    cfg: RunConfig,
    *,
    out_dir: str | Path | None = None,
    backend: ExecutionBackend | None = None,
) -> SuiteRunResult:
    """Run a manifest of tasks, concurrently up to the worker limit.

    Per-task artifacts are independent of scheduling order (each task seeds
    its own gateway and evaluation), so concurrent runs stay reproducible.
    """
    cfg = cfg.normalized()
    suite = SuiteRunResult()

    def one(task: TaskSpec) -> tuple[str, TaskRunResult]:
        task_backend = backend if backend is not None else make_backend(cfg)
        return task.task_id, run_task(task, cfg, backend=task_backend, out_dir=out_dir)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for task_id, result in pool.map(one, tasks):
                suite.results[task_id] = result
    else:
        for task in tasks:
            task_id, result = one(task)
            suite.results[task_id] = result

    suite.summary = summarize_results(tasks, suite.results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(canonical_json(suite.summary) + "\n", "utf-8")
    return suite
