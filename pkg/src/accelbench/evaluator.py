"""Three-stage evaluation of a candidate against a task.

Stage 1 is a runnability probe plus static attribute matching; stage 2
executes the candidate and checks mean quality against an absolute floor;
stage 3, invoked only for tasks with quantitative targets, measures
quality loss and speedup (or raw latency) against a reconstructed
baseline. Candidate-side failures are data in the report, never
exceptions; stage k+1 only runs when stage k passed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from . import codegen, metrics
from .backends.base import ExecutionBackend, RunResult
from .errors import AmbiguityError
from .metrics import ErrorMode, SampleMeasurements
from .static_check import (
    MatchVerdict,
    Mismatch,
    RuleSet,
    attrs_to_partial,
    extract_attributes,
    match_attributes,
)
from .tasks import KeyAttributes, TaskSpec

DEFAULT_FEW_SHOT = 10

SKIP_EARLIER_FAILURE = "earlier_failure"
SKIP_NOT_REQUIRED = "not_required"


@dataclass(frozen=True, slots=True)
class CandidateProgram:
    """Generated source plus its lineage through the agent loop."""

    candidate_id: str
    source: str
    plan: Any | None = None
    parent_id: str | None = None
    generation: int = 0


@dataclass(frozen=True, slots=True)
class Stage1Result:
    passed: bool
    runtime_failure: bool = False
    failure_text: str | None = None
    verdict: MatchVerdict | None = None
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class Stage2Result:
    skipped: bool
    skip_reason: str | None = None
    passed: bool = False
    runtime_failure: bool = False
    failure_text: str | None = None
    mean_quality: float | None = None
    threshold: float = 0.0


@dataclass(frozen=True, slots=True)
class Stage3Result:
    skipped: bool
    skip_reason: str | None = None
    required: bool = False
    passed: bool = False
    runtime_failure: bool = False
    failure_text: str | None = None
    quality_loss: float | None = None
    speedup: float | None = None
    latency: float | None = None
    quality_ok: bool | None = None
    speed_ok: bool | None = None
    quality_threshold: float | None = None
    speed_target: float | None = None


@dataclass(frozen=True, slots=True)
class EvaluationReport:
    task_id: str
    candidate_id: str
    stage1: Stage1Result
    stage2: Stage2Result
    stage3: Stage3Result
    errors: frozenset[ErrorMode]
    passed: bool
    wall_clock: float

    def to_dict(self) -> dict[str, Any]:
        verdict = self.stage1.verdict
        return {
            "task_id": self.task_id,
            "candidate_id": self.candidate_id,
            "passed": self.passed,
            "errors": sorted(e.value for e in self.errors),
            "wall_clock": self.wall_clock,
            "stage1": {
                "passed": self.stage1.passed,
                "runtime_failure": self.stage1.runtime_failure,
                "failure_text": self.stage1.failure_text,
                "mismatches": None
                if verdict is None
                else [[m.attribute, m.expected, m.found] for m in verdict.mismatches],
                "extraneous": None if verdict is None else list(verdict.extraneous),
                "diagnostics": list(self.stage1.diagnostics),
            },
            "stage2": {
                "skipped": self.stage2.skipped,
                "skip_reason": self.stage2.skip_reason,
                "passed": self.stage2.passed,
                "runtime_failure": self.stage2.runtime_failure,
                "failure_text": self.stage2.failure_text,
                "mean_quality": self.stage2.mean_quality,
                "threshold": self.stage2.threshold,
            },
            "stage3": {
                "skipped": self.stage3.skipped,
                "skip_reason": self.stage3.skip_reason,
                "required": self.stage3.required,
                "passed": self.stage3.passed,
                "runtime_failure": self.stage3.runtime_failure,
                "failure_text": self.stage3.failure_text,
                "quality_loss": self.stage3.quality_loss,
                "speedup": self.stage3.speedup,
                "latency": self.stage3.latency,
                "quality_ok": self.stage3.quality_ok,
                "speed_ok": self.stage3.speed_ok,
                "quality_threshold": self.stage3.quality_threshold,
                "speed_target": self.stage3.speed_target,
            },
        }


def report_from_dict(data: Mapping[str, Any]) -> EvaluationReport:
    s1 = data["stage1"]
    verdict = None
    if s1.get("mismatches") is not None:
        verdict = MatchVerdict(
            passed=not s1["mismatches"],
            mismatches=tuple(Mismatch(a, e, f) for a, e, f in s1["mismatches"]),
            extraneous=tuple(s1.get("extraneous") or ()),
        )
    s2 = data["stage2"]
    s3 = data["stage3"]
    return EvaluationReport(
        task_id=data["task_id"],
        candidate_id=data["candidate_id"],
        stage1=Stage1Result(
            passed=s1["passed"],
            runtime_failure=s1["runtime_failure"],
            failure_text=s1["failure_text"],
            verdict=verdict,
            diagnostics=tuple(s1.get("diagnostics") or ()),
        ),
        stage2=Stage2Result(**s2),
        stage3=Stage3Result(**s3),
        errors=frozenset(ErrorMode(v) for v in data["errors"]),
        passed=data["passed"],
        wall_clock=data["wall_clock"],
    )


def _attrs_from_found(found: Mapping[str, Any]) -> KeyAttributes:
    return KeyAttributes(
        pipeline_class=found["pipeline_class"],
        model_id=found["model_id"],
        scheduler_class=found["scheduler_class"],
        num_inference_steps=found["num_inference_steps"],
        resolution=tuple(found["resolution"]),
        conditioning=found["conditioning"],
        preprocessors=frozenset(found.get("preprocessors", frozenset())),
        accel_methods={m: dict(p) for m, p in found.get("accel_methods", {}).items()},
    )


class Evaluator:
    """Runs the three-stage protocol; caches baseline measurements per task."""

    def __init__(
        self,
        backend: ExecutionBackend,
        *,
        few_shot_n: int = DEFAULT_FEW_SHOT,
        quality_floor: float = 0.0,
        rules: RuleSet | None = None,
    ) -> None:
        self.backend = backend
        self.few_shot_n = few_shot_n
        # Absolute stage-2 floor; a raw score supplied per task suite, kept
        # separate from the relative bound on purpose.
        self.quality_floor = quality_floor
        self.rules = rules
        self._baseline_cache: dict[tuple[str, int, int], RunResult] = {}

    def _baseline_run(self, task: TaskSpec, seed: int) -> RunResult:
        key = (task.task_id, self.few_shot_n, seed)
        cached = self._baseline_cache.get(key)
        if cached is not None:
            return cached
        baseline_attrs = task.ground_truth.without_acceleration()
        baseline_source = codegen.render_source(attrs_to_partial(baseline_attrs))
        result = self.backend.run(baseline_source, baseline_attrs, self.few_shot_n, seed)
        self._baseline_cache[key] = result
        return result

    def evaluate(
        self, candidate: CandidateProgram, task: TaskSpec, *, seed: int = 0
    ) -> EvaluationReport:
        wall = 0.0
        stage3_required = task.level in (4, 5)

        def skipped_rest() -> tuple[Stage2Result, Stage3Result]:
            return (
                Stage2Result(skipped=True, skip_reason=SKIP_EARLIER_FAILURE),
                Stage3Result(
                    skipped=True, skip_reason=SKIP_EARLIER_FAILURE, required=stage3_required
                ),
            )

        # Stage 1: runnability probe + static match.
        try:
            found, diagnostics = extract_attributes(candidate.source, self.rules)
        except AmbiguityError as exc:
            stage1 = Stage1Result(
                passed=False, runtime_failure=True, failure_text=f"AmbiguityError: {exc}"
            )
            stage2, stage3 = skipped_rest()
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage1_runtime_failure=True),
                passed=False,
                wall_clock=wall,
            )

        probe = self.backend.check(candidate.source, found)
        if not probe.ok:
            stage1 = Stage1Result(
                passed=False,
                runtime_failure=True,
                failure_text=probe.error_text,
                diagnostics=tuple(diagnostics),
            )
            stage2, stage3 = skipped_rest()
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage1_runtime_failure=True),
                passed=False,
                wall_clock=wall,
            )

        verdict = match_attributes(found, task.ground_truth)
        stage1 = Stage1Result(
            passed=verdict.passed, verdict=verdict, diagnostics=tuple(diagnostics)
        )
        if not verdict.passed:
            stage2, stage3 = skipped_rest()
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage1_mismatch=True),
                passed=False,
                wall_clock=wall,
            )

        # Stage 2: absolute performance on the few-shot sample set. All
        # truth fields matched, so the found attributes form a complete
        # record (extraneous methods included: tolerated code still runs).
        exec_attrs = _attrs_from_found(found)
        run = self.backend.run(candidate.source, exec_attrs, self.few_shot_n, seed)
        wall += run.wall_clock
        if not run.ok:
            stage2 = Stage2Result(
                skipped=False,
                passed=False,
                runtime_failure=True,
                failure_text=run.failure_text,
                threshold=self.quality_floor,
            )
            stage3 = Stage3Result(
                skipped=True, skip_reason=SKIP_EARLIER_FAILURE, required=stage3_required
            )
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage1_runtime_failure=True),
                passed=False,
                wall_clock=wall,
            )

        mean_quality = sum(run.quality) / len(run.quality)
        stage2_passed = mean_quality >= self.quality_floor
        stage2 = Stage2Result(
            skipped=False,
            passed=stage2_passed,
            mean_quality=mean_quality,
            threshold=self.quality_floor,
        )
        if not stage2_passed:
            stage3 = Stage3Result(
                skipped=True, skip_reason=SKIP_EARLIER_FAILURE, required=stage3_required
            )
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage2_failed=True),
                passed=False,
                wall_clock=wall,
            )

        # Stage 3: relative analysis against the reconstructed baseline,
        # only when the task carries quantitative targets. The candidate's
        # stage-2 measurements are reused (same N, same seed).
        if not stage3_required:
            stage3 = Stage3Result(skipped=True, skip_reason=SKIP_NOT_REQUIRED, required=False)
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=frozenset(),
                passed=True,
                wall_clock=wall,
            )

        baseline = self._baseline_run(task, seed)
        wall += baseline.wall_clock
        if not baseline.ok:
            stage3 = Stage3Result(
                skipped=False,
                required=True,
                passed=False,
                runtime_failure=True,
                failure_text=baseline.failure_text,
            )
            return EvaluationReport(
                task_id=task.task_id,
                candidate_id=candidate.candidate_id,
                stage1=stage1,
                stage2=stage2,
                stage3=stage3,
                errors=metrics.classify_error(stage1_runtime_failure=True),
                passed=False,
                wall_clock=wall,
            )

        m = SampleMeasurements.from_lists(
            baseline.quality, run.quality, baseline.latency, run.latency
        )
        loss = metrics.quality_loss(m)
        u = metrics.speedup(m)
        quality_ok = loss <= task.quality_threshold
        if task.level == 4:
            target = task.speedup_requirement
            speed_ok = u >= target
            latency = None
        else:
            target = task.latency_bound
            latency = sum(run.latency) / len(run.latency)
            speed_ok = latency <= target
        stage3_passed = quality_ok and speed_ok
        stage3 = Stage3Result(
            skipped=False,
            required=True,
            passed=stage3_passed,
            quality_loss=loss,
            speedup=u,
            latency=latency,
            quality_ok=quality_ok,
            speed_ok=speed_ok,
            quality_threshold=task.quality_threshold,
            speed_target=target,
        )
        errors: frozenset[ErrorMode] = frozenset()
        if not stage3_passed:
            errors = metrics.classify_error(
                stage3_quality_failed=not quality_ok, stage3_speed_failed=not speed_ok
            )
        return EvaluationReport(
            task_id=task.task_id,
            candidate_id=candidate.candidate_id,
            stage1=stage1,
            stage2=stage2,
            stage3=stage3,
            errors=errors,
            passed=stage3_passed,
            wall_clock=wall,
        )


def evaluate(
    candidate: CandidateProgram,
    task: TaskSpec,
    backend: ExecutionBackend,
    few_shot_n: int = DEFAULT_FEW_SHOT,
    *,
    quality_floor: float = 0.0,
    seed: int = 0,
    rules: RuleSet | None = None,
) -> EvaluationReport:
    """One-shot evaluation (no baseline cache reuse across calls)."""
    ev = Evaluator(backend, few_shot_n=few_shot_n, quality_floor=quality_floor, rules=rules)
    return ev.evaluate(candidate, task, seed=seed)


MISSING_BUCKET = "missing"


@dataclass(slots=True)
class SuiteSummary:
    level_counts: dict[int, int] = field(default_factory=dict)
    per_level_pass: dict[int, float] = field(default_factory=dict)
    overall_pass: float = 0.0
    hard_achievement: dict[str, float] = field(default_factory=dict)
    per_level_hard_achievement: dict[int, float] = field(default_factory=dict)
    error_histogram: dict[str, int] = field(default_factory=dict)
    reports: dict[str, EvaluationReport] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "level_counts": {str(k): v for k, v in sorted(self.level_counts.items())},
            "per_level_pass": {str(k): v for k, v in sorted(self.per_level_pass.items())},
            "overall_pass": self.overall_pass,
            "hard_achievement": dict(sorted(self.hard_achievement.items())),
            "per_level_hard_achievement": {
                str(k): v for k, v in sorted(self.per_level_hard_achievement.items())
            },
            "error_histogram": dict(sorted(self.error_histogram.items())),
            "reports": {tid: r.to_dict() for tid, r in sorted(self.reports.items())},
        }


def achievement_from_report(task: TaskSpec, report: EvaluationReport | None) -> float:
    """Continuous credit for a hard task; 0 when speed was never measured."""
    if report is None or report.stage3.skipped:
        return 0.0
    s3 = report.stage3
    if task.level == 4 and s3.speedup is not None:
        return metrics.achievement_rate(s3.speedup, task.speedup_requirement)
    if task.level == 5 and s3.latency is not None and s3.latency > 0:
        return min(task.latency_bound / s3.latency, 1.0)
    return 0.0


def score_suite(
    tasks: Sequence[TaskSpec],
    candidates: Mapping[str, CandidateProgram | None],
    backend: ExecutionBackend,
    *,
    few_shot_n: int = DEFAULT_FEW_SHOT,
    quality_floor: float = 0.0,
    seed: int = 0,
    rules: RuleSet | None = None,
) -> SuiteSummary:
    """Aggregate pass rates, hard-task achievement, and the error histogram.

    A task without a candidate counts as failed; those land in a dedicated
    ``missing`` histogram bucket, kept separate from compile errors.
    """
    ev = Evaluator(backend, few_shot_n=few_shot_n, quality_floor=quality_floor, rules=rules)
    summary = SuiteSummary()
    verdicts_by_level: dict[int, list[bool]] = {}
    hard_by_level: dict[int, list[float]] = {}

    for task in tasks:
        candidate = candidates.get(task.task_id)
        if candidate is None:
            verdicts_by_level.setdefault(task.level, []).append(False)
            summary.error_histogram[MISSING_BUCKET] = (
                summary.error_histogram.get(MISSING_BUCKET, 0) + 1
            )
            if task.difficulty == "hard":
                summary.hard_achievement[task.task_id] = 0.0
                hard_by_level.setdefault(task.level, []).append(0.0)
            continue
        report = ev.evaluate(candidate, task, seed=seed)
        summary.reports[task.task_id] = report
        verdicts_by_level.setdefault(task.level, []).append(report.passed)
        for mode in report.errors:
            summary.error_histogram[mode.value] = summary.error_histogram.get(mode.value, 0) + 1
        if task.difficulty == "hard":
            sa = achievement_from_report(task, report)
            summary.hard_achievement[task.task_id] = sa
            hard_by_level.setdefault(task.level, []).append(sa)

    summary.level_counts = {lvl: len(v) for lvl, v in sorted(verdicts_by_level.items())}
    summary.per_level_pass = {
        lvl: metrics.pass_rate(v) for lvl, v in sorted(verdicts_by_level.items())
    }
    summary.overall_pass = metrics.weighted_pass_rate(verdicts_by_level) if verdicts_by_level else 0.0
    summary.per_level_hard_achievement = {
        lvl: sum(vals) / len(vals) for lvl, vals in sorted(hard_by_level.items())
    }
    return summary
