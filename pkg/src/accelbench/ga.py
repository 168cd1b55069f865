"""Genetic-algorithm selection loop over generation plans.

Each generation realizes P plans into candidates (M refined from sampled
offspring plus P - M fresh after the first generation), evaluates them
all, and returns early once any candidate satisfies the task. Fitness
scores are shift-normalized into sampling probabilities; selection is
without replacement; every plan, source, fitness, and report lands in an
append-only database. The best record is always parent-eligible (elitism
changes eligibility only, never the sampling rule).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import metrics
from .agents import AgentTeam, PlanGenome, build_feedback, failed_episode_feedback
from .backends.base import ExecutionBackend
from .errors import InvalidM, ParseError
from .evaluator import CandidateProgram, EvaluationReport, Evaluator, report_from_dict
from .tasks import TaskSpec

ETA = 1e-6
FAILED_EPISODE_FITNESS = -10.0

DEFAULT_POPULATION = 7  # P
DEFAULT_OFFSPRING = 4  # M
DEFAULT_GENERATIONS = 4  # T_sel; 5 also supported, 4 is the shipped default


@dataclass(frozen=True, slots=True)
class FitnessRecord:
    candidate_id: str
    plan: PlanGenome
    fitness: float
    probability: float
    generation: int
    source: str | None
    report: EvaluationReport | None
    passed: bool

    @property
    def evaluated(self) -> bool:
        return self.report is not None


class RunDatabase:
    """Append-only store of everything a task run produced.

    Rows are JSON-able dicts, deep-copied on append so no caller can mutate
    history; the on-disk form is one canonical JSON object per line.
    """

    def __init__(self) -> None:
        self._rows: list[dict[str, Any]] = []

    def append(self, row: dict[str, Any]) -> None:
        self._rows.append(json.loads(json.dumps(row)))

    @property
    def rows(self) -> tuple[dict[str, Any], ...]:
        # deep copies: callers can never mutate history
        return tuple(json.loads(json.dumps(r)) for r in self._rows)

    def candidate_rows(self) -> list[dict[str, Any]]:
        return [r for r in self.rows if r.get("type") == "candidate"]

    def best_candidate_row(self) -> dict[str, Any] | None:
        rows = self.candidate_rows()
        if not rows:
            return None
        return max(rows, key=lambda r: (r["fitness"], r["candidate_id"]))

    def lineage_chain(self, candidate_id: str) -> list[str]:
        """Walk parent links back to a fresh ancestor; raises on a cycle."""
        by_id = {r["candidate_id"]: r for r in self.candidate_rows()}
        chain = [candidate_id]
        seen = {candidate_id}
        current = by_id.get(candidate_id)
        while current is not None:
            parent = current["plan"].get("parent_candidate_id")
            if parent is None:
                break
            if parent in seen:
                raise ParseError(f"lineage cycle at {parent}")
            chain.append(parent)
            seen.add(parent)
            current = by_id.get(parent)
        return chain

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(r, sort_keys=True) for r in self._rows]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunDatabase":
        db = cls()
        for line in Path(path).read_text("utf-8").splitlines():
            if line.strip():
                db._rows.append(json.loads(line))
        return db


def normalize_fitness(scores: Sequence[float], eta: float = ETA) -> list[float]:
    """Shift-to-positive proportional normalization.

    p_i = (f_i - min f + eta) / sum_j (f_j - min f + eta); handles negative
    and tied scores, always sums to 1, equal scores map to uniform.
    """
    if not scores:
        raise InvalidM("normalize_fitness needs at least one score")
    lowest = min(scores)
    shifted = [s - lowest + eta for s in scores]
    total = sum(shifted)
    return [s / total for s in shifted]


def select_offspring(
    records: Sequence[FitnessRecord],
    m: int,
    seed: int,
    *,
    with_replacement: bool = False,
) -> list[FitnessRecord]:
    """Sample M records proportional to normalized fitness.

    Without replacement by default (selected implementations are distinct);
    deterministic under the seed. Requesting the whole population returns
    it sorted by fitness, best first.
    """
    if m > len(records) and not with_replacement:
        raise InvalidM(f"cannot select {m} of {len(records)} records")
    if m == len(records) and not with_replacement:
        return sorted(records, key=lambda r: (-r.fitness, r.candidate_id))
    probs = normalize_fitness([r.fitness for r in records])
    rng = np.random.default_rng(np.random.SeedSequence([abs(seed), len(records), m]))
    idx = rng.choice(len(records), size=m, replace=with_replacement, p=np.asarray(probs))
    return [records[i] for i in idx]


def fitness_for(report: EvaluationReport, task: TaskSpec) -> float:
    """Scalar fitness of an evaluated candidate, or the failure penalty when
    the run never reached stage-3 measurements."""
    s3 = report.stage3
    if s3.skipped or s3.quality_loss is None:
        return FAILED_EPISODE_FITNESS
    if task.level == 5:
        return metrics.fitness(s3.quality_loss, tau=s3.latency, tau_max=task.latency_bound)
    return metrics.fitness(s3.quality_loss, s3.speedup, u_req=task.speedup_requirement)


@dataclass(frozen=True, slots=True)
class GAConfig:
    population: int = DEFAULT_POPULATION
    offspring: int = DEFAULT_OFFSPRING
    generations: int = DEFAULT_GENERATIONS
    t_code: int = 5
    t_debug: int = 3
    with_replacement: bool = False

    def __post_init__(self) -> None:
        if self.population < 1:
            raise InvalidM("population must be >= 1 for the selection loop")
        if not (0 <= self.offspring <= self.population):
            raise InvalidM("offspring count must lie in [0, population]")


@dataclass(slots=True)
class LoopResult:
    passed: bool
    candidate: CandidateProgram | None
    best: FitnessRecord | None
    generations_run: int
    episodes_run: int
    database: RunDatabase


def _seed_for(seed: int, generation: int) -> int:
    return int(np.random.SeedSequence([abs(seed), generation]).generate_state(1)[0])


def run_generation_loop(
    task: TaskSpec,
    team: AgentTeam,
    backend: ExecutionBackend,
    evaluator: Evaluator,
    cfg: GAConfig | None = None,
    *,
    seed: int = 0,
    database: RunDatabase | None = None,
    eval_seed: int = 0,
) -> LoopResult:
    """The full selection loop for an optimization task (level 4 or 5).

    Returns as soon as a generation contains a passing candidate; otherwise
    runs ``cfg.generations`` generations and returns the best-effort record
    with the highest fitness seen. All failures are rows in the database,
    never exceptions.
    """
    cfg = cfg or GAConfig()
    db = database if database is not None else RunDatabase()
    db.append(
        {
            "type": "run_header",
            "task_id": task.task_id,
            "seed": seed,
            "config": {
                "population": cfg.population,
                "offspring": cfg.offspring,
                "generations": cfg.generations,
                "t_code": cfg.t_code,
                "t_debug": cfg.t_debug,
            },
        }
    )
    baseline_plan = team.plan_baseline(task.prompt, scope=f"{task.task_id}/baseline")
    db.append({"type": "baseline_plan", "plan": baseline_plan.to_dict()})

    episodes_run = 0
    best: FitnessRecord | None = None
    prev_records: list[FitnessRecord] = []

    for gen in range(cfg.generations):
        plans: list[PlanGenome] = []
        if gen == 0 or not prev_records:
            parents: list[FitnessRecord] = []
        else:
            pool = [r for r in prev_records if r.evaluated] or list(prev_records)
            if best is not None and all(r.candidate_id != best.candidate_id for r in pool):
                pool = pool + [best]  # elitism: eligibility only
            m = min(cfg.offspring, len(pool))
            parents = select_offspring(
                pool, m, _seed_for(seed, gen), with_replacement=cfg.with_replacement
            )
            db.append(
                {
                    "type": "selection",
                    "generation": gen,
                    "parents": [p.candidate_id for p in parents],
                }
            )
        for slot, parent in enumerate(parents):
            feedback = (
                build_feedback(parent.report, task)
                if parent.report
                else failed_episode_feedback(task)
            )
            plans.append(
                team.refine_plan(
                    parent.plan,
                    parent.candidate_id,
                    feedback,
                    generation=gen,
                    slot=slot,
                    user_prompt=task.prompt,
                    scope=f"{task.task_id}/g{gen}/s{slot}",
                )
            )
        for slot in range(len(plans), cfg.population):
            plans.append(
                team.plan_fresh(
                    task.prompt,
                    generation=gen,
                    slot=slot,
                    scope=f"{task.task_id}/g{gen}/s{slot}",
                )
            )

        records: list[FitnessRecord] = []
        for slot, plan in enumerate(plans):
            candidate_id = f"{task.task_id}-g{gen}-c{slot}"
            scope = f"{task.task_id}/g{gen}/s{slot}"
            episode = team.run_episode(
                plan, backend, t_debug=cfg.t_debug, t_code=cfg.t_code, scope=scope
            )
            episodes_run += 1
            if not episode.success:
                records.append(
                    FitnessRecord(
                        candidate_id=candidate_id,
                        plan=plan,
                        fitness=FAILED_EPISODE_FITNESS,
                        probability=0.0,
                        generation=gen,
                        source=None,
                        report=None,
                        passed=False,
                    )
                )
                db.append(
                    {
                        "type": "candidate",
                        "generation": gen,
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
                continue
            candidate = CandidateProgram(
                candidate_id=candidate_id,
                source=episode.source,
                plan=plan,
                parent_id=plan.parent_candidate_id,
                generation=gen,
            )
            report = evaluator.evaluate(candidate, task, seed=eval_seed)
            fit = fitness_for(report, task)
            records.append(
                FitnessRecord(
                    candidate_id=candidate_id,
                    plan=plan,
                    fitness=fit,
                    probability=0.0,
                    generation=gen,
                    source=episode.source,
                    report=report,
                    passed=report.passed,
                )
            )
            db.append(
                {
                    "type": "candidate",
                    "generation": gen,
                    "candidate_id": candidate_id,
                    "plan": plan.to_dict(),
                    "source": episode.source,
                    "status": "evaluated",
                    "fitness": fit,
                    "report": report.to_dict(),
                    "episode": {
                        "coding_calls": episode.coding_calls,
                        "repair_calls": episode.repair_calls,
                        "regenerations": episode.regenerations,
                        "last_error": episode.last_error,
                    },
                }
            )

        evaluated = [r for r in records if r.evaluated]
        if evaluated:
            probs = normalize_fitness([r.fitness for r in evaluated])
            prob_by_id = {r.candidate_id: p for r, p in zip(evaluated, probs)}
            records = [
                FitnessRecord(
                    candidate_id=r.candidate_id,
                    plan=r.plan,
                    fitness=r.fitness,
                    probability=prob_by_id.get(r.candidate_id, 0.0),
                    generation=r.generation,
                    source=r.source,
                    report=r.report,
                    passed=r.passed,
                )
                for r in records
            ]
        gen_best = max(records, key=lambda r: (r.fitness, r.candidate_id), default=None)
        if gen_best is not None and (best is None or gen_best.fitness > best.fitness):
            best = gen_best
        db.append(
            {
                "type": "generation_summary",
                "generation": gen,
                "probabilities": {
                    r.candidate_id: r.probability for r in records if r.evaluated
                },
                "best_fitness": None if best is None else best.fitness,
                "best_candidate_id": None if best is None else best.candidate_id,
                "passed": any(r.passed for r in records),
            }
        )

        passing = [r for r in records if r.passed]
        if passing:
            winner = max(passing, key=lambda r: (r.fitness, r.candidate_id))
            return LoopResult(
                passed=True,
                candidate=CandidateProgram(
                    candidate_id=winner.candidate_id,
                    source=winner.source,
                    plan=winner.plan,
                    parent_id=winner.plan.parent_candidate_id,
                    generation=gen,
                ),
                best=winner,
                generations_run=gen + 1,
                episodes_run=episodes_run,
                database=db,
            )
        prev_records = records

    return LoopResult(
        passed=False,
        candidate=None,
        best=best,
        generations_run=cfg.generations,
        episodes_run=episodes_run,
        database=db,
    )


def record_from_row(row: dict[str, Any]) -> FitnessRecord:
    """Rehydrate a database candidate row (reports included) for analysis."""
    plan_data = row["plan"]
    plan = PlanGenome(
        plan_id=plan_data["plan_id"],
        plan_text=plan_data["plan_text"],
        encoded_config=plan_data["encoded_config"],
        origin=plan_data["origin"],
        generation=plan_data["generation"],
        parent_candidate_id=plan_data.get("parent_candidate_id"),
    )
    report = report_from_dict(row["report"]) if row.get("report") else None
    return FitnessRecord(
        candidate_id=row["candidate_id"],
        plan=plan,
        fitness=row["fitness"],
        probability=0.0,
        generation=row["generation"],
        source=row.get("source"),
        report=report,
        passed=bool(report and report.passed),
    )
