"""Planning, coding, and debugging agents.

Plans carry a machine-readable configuration block next to the prose (the
templates instruct the model to emit it inside a fenced json block), which
keeps the genetic database inspectable and makes deterministic mock runs
possible. The episode loop realizes one plan into runnable code: generate,
probe, repair up to the debug budget, regenerate up to the restart budget,
then hand control back to planning.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backends.base import CheckResult, ExecutionBackend
from .errors import AmbiguityError, BudgetExhausted, ConfigError, UnparseablePlan
from .evaluator import EvaluationReport
from .gateway import ChatGateway, ChatMessage
from .static_check import RuleSet, extract_attributes
from .tasks import TaskSpec

DEFAULT_T_DEBUG = 3
DEFAULT_T_CODE = 5

ORIGIN_FRESH = "fresh"
ORIGIN_REFINED = "refined"

_TEMPLATE_FIELD_RE = re.compile(r"\{(\w+)\}")


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return resources.files("accelbench").joinpath(f"data/agent_prompts/{name}.txt").read_text("utf-8")


def render_template(text: str, **fields: Any) -> str:
    """Substitute {name} tokens for known fields, leaving other braces
    (for example the json skeleton in the templates) untouched."""

    def sub(m: re.Match) -> str:
        key = m.group(1)
        return str(fields[key]) if key in fields else m.group(0)

    return _TEMPLATE_FIELD_RE.sub(sub, text)


@dataclass(frozen=True, slots=True)
class PlanGenome:
    """A generation plan: prose plus its encoded target configuration."""

    plan_id: str
    plan_text: str
    encoded_config: Mapping[str, Any]
    origin: str = ORIGIN_FRESH
    generation: int = 0
    parent_candidate_id: str | None = None

    def __post_init__(self) -> None:
        if self.origin not in (ORIGIN_FRESH, ORIGIN_REFINED):
            raise ConfigError(f"unknown plan origin {self.origin!r}")
        if self.origin == ORIGIN_REFINED and self.parent_candidate_id is None:
            raise ConfigError("refined plans must carry a parent candidate id")
        if self.origin == ORIGIN_FRESH and self.parent_candidate_id is not None:
            raise ConfigError("fresh plans must not carry a parent candidate id")

    def config_json(self) -> str:
        return json.dumps(self.encoded_config, sort_keys=True)

    def to_dict(self) -> dict[str, Any]:
        return {
            "plan_id": self.plan_id,
            "plan_text": self.plan_text,
            "encoded_config": json.loads(json.dumps(self.encoded_config)),
            "origin": self.origin,
            "generation": self.generation,
            "parent_candidate_id": self.parent_candidate_id,
        }


@dataclass(frozen=True, slots=True)
class PlanResult:
    primary: PlanGenome
    baseline: PlanGenome | None = None


@dataclass(frozen=True, slots=True)
class FeedbackReport:
    """Measured quality/efficiency compared against the task targets."""

    quality_loss: float | None
    speedup: float | None
    latency: float | None
    quality_threshold: float
    speedup_requirement: float | None
    latency_bound: float | None
    gaps: tuple[str, ...]
    error_modes: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "quality_loss": self.quality_loss,
                "speedup": self.speedup,
                "latency": self.latency,
                "quality_threshold": self.quality_threshold,
                "speedup_requirement": self.speedup_requirement,
                "latency_bound": self.latency_bound,
                "error_modes": list(self.error_modes),
            },
            sort_keys=True,
        )

    def prose(self) -> str:
        return "\n".join(self.gaps)


def failed_episode_feedback(task: TaskSpec, last_error: str | None = None) -> FeedbackReport:
    """Feedback for a parent whose episode never produced runnable code:
    every task target is listed, all of them unmeasured."""
    reason = "code generation failed"
    gaps = [f"quality loss: not measured ({reason})"]
    if task.speedup_requirement is not None:
        gaps.append(
            f"speedup: not measured ({reason}), target {task.speedup_requirement:.2f}x"
        )
    if task.latency_bound is not None:
        gaps.append(f"latency: not measured ({reason}), bound {task.latency_bound:.3f}s")
    if last_error:
        gaps.append(f"last error: {last_error}")
    return FeedbackReport(
        quality_loss=None,
        speedup=None,
        latency=None,
        quality_threshold=task.quality_threshold,
        speedup_requirement=task.speedup_requirement,
        latency_bound=task.latency_bound,
        gaps=tuple(gaps),
        error_modes=("codegen_failure",),
    )


def build_feedback(report: EvaluationReport, task: TaskSpec) -> FeedbackReport:
    """Describe an evaluation against the task targets, one gap per target."""
    s3 = report.stage3
    loss = s3.quality_loss if not s3.skipped else None
    u = s3.speedup if not s3.skipped else None
    tau = s3.latency if not s3.skipped else None
    stage_note = None
    if report.stage1.runtime_failure or report.stage2.runtime_failure:
        stage_note = "the code failed to run"
    elif not report.stage1.passed:
        stage_note = "key attributes did not match the request"
    elif not report.stage2.skipped and not report.stage2.passed:
        stage_note = "absolute quality fell below the floor"

    gaps: list[str] = []
    delta = task.quality_threshold
    if loss is None:
        gaps.append(f"quality loss: not measured ({stage_note or 'earlier stage failed'})")
    elif loss > delta:
        gaps.append(f"quality loss {loss:.4f} exceeds the {delta:.4f} bound by {loss - delta:.4f}")
    else:
        gaps.append(f"quality loss {loss:.4f} is within the {delta:.4f} bound (margin {delta - loss:.4f})")

    if task.speedup_requirement is not None:
        req = task.speedup_requirement
        if u is None:
            gaps.append(f"speedup: not measured ({stage_note or 'earlier stage failed'}), target {req:.2f}x")
        elif u < req:
            gaps.append(f"speedup {u:.2f}x falls {req - u:.2f}x short of the required {req:.2f}x")
        else:
            gaps.append(f"speedup {u:.2f}x meets the required {req:.2f}x")
    if task.latency_bound is not None:
        bound = task.latency_bound
        if tau is None:
            gaps.append(f"latency: not measured ({stage_note or 'earlier stage failed'}), bound {bound:.3f}s")
        elif tau > bound:
            gaps.append(f"latency {tau:.3f}s exceeds the {bound:.3f}s bound by {tau - bound:.3f}s")
        else:
            gaps.append(f"latency {tau:.3f}s is within the {bound:.3f}s bound")

    return FeedbackReport(
        quality_loss=loss,
        speedup=u,
        latency=tau,
        quality_threshold=delta,
        speedup_requirement=task.speedup_requirement,
        latency_bound=task.latency_bound,
        gaps=tuple(gaps),
        error_modes=tuple(sorted(e.value for e in report.errors)),
    )


class KnowledgeBase:
    """Reference code templates plus tuning insights, keyed by pipeline and
    method name. Disabled lookups return empty context, so ablation runs
    leave no template text in any prompt."""

    def __init__(
        self,
        templates: Mapping[str, str],
        insights: Mapping[str, str],
        enabled: bool = True,
    ) -> None:
        self.templates = dict(templates)
        self.insights = dict(insights)
        self.enabled = enabled

    @classmethod
    def bundled(cls, enabled: bool = True) -> "KnowledgeBase":
        root = resources.files("accelbench").joinpath("data/kb")
        templates = {
            p.name.rsplit(".", 1)[0]: p.read_text("utf-8")
            for p in sorted(root.joinpath("templates").iterdir(), key=lambda p: p.name)
        }
        insights = {
            p.name.rsplit(".", 1)[0]: p.read_text("utf-8")
            for p in sorted(root.joinpath("insights").iterdir(), key=lambda p: p.name)
        }
        return cls(templates, insights, enabled)

    @classmethod
    def load(cls, directory: str | Path, enabled: bool = True) -> "KnowledgeBase":
        root = Path(directory)
        templates = {
            p.stem: p.read_text("utf-8") for p in sorted((root / "templates").glob("*"))
        }
        insights = {
            p.stem: p.read_text("utf-8") for p in sorted((root / "insights").glob("*"))
        }
        return cls(templates, insights, enabled)

    @classmethod
    def disabled(cls) -> "KnowledgeBase":
        return cls({}, {}, enabled=False)

    def template_context(
        self, pipeline_class: str | None, methods: Iterable[str]
    ) -> tuple[list[str], str]:
        """Deterministic (template names, rendered reference code) lookup."""
        if not self.enabled:
            return [], ""
        names: list[str] = []
        chunks: list[str] = []
        if pipeline_class and pipeline_class in self.templates:
            names.append(pipeline_class)
            chunks.append(f"### Template: {pipeline_class}\n{self.templates[pipeline_class]}")
        for method in sorted(set(methods)):
            if method in self.templates:
                names.append(method)
                chunks.append(f"### Template: {method}\n{self.templates[method]}")
        return names, "\n".join(chunks)

    def insight_context(self, methods: Iterable[str] | None = None) -> str:
        """Tuning insights for the given methods (all of them by default)."""
        if not self.enabled:
            return ""
        keys = sorted(self.insights) if methods is None else sorted(set(methods))
        chunks = [
            f"### Insight: {key}\n{self.insights[key]}"
            for key in keys
            if key in self.insights
        ]
        return "\n".join(chunks)


def _kb_section(text: str) -> str:
    if not text:
        return ""
    return f"\n## Reference material\n{text}\n"


_CONFIG_BLOCK_RE = re.compile(r"CONFIG:\s*```json\s*(\{.*?\})\s*```", re.DOTALL)
_PLAN_TEXT_RE = re.compile(r"PLAN:\s*(.*?)\s*CONFIG:", re.DOTALL)
_CODE_FENCE_RE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)
_REFLECTION_RE = re.compile(r"REFLECTION:\s*(.*)")


def parse_plan_completion(text: str) -> tuple[str, dict[str, Any]]:
    m = _CONFIG_BLOCK_RE.search(text)
    if not m:
        raise ValueError("completion lacks a CONFIG json block")
    try:
        config = json.loads(m.group(1))
    except json.JSONDecodeError as exc:
        raise ValueError(f"CONFIG block is not valid json: {exc}") from exc
    plan_m = _PLAN_TEXT_RE.search(text)
    plan_text = plan_m.group(1).strip() if plan_m else text[: m.start()].strip()
    if not plan_text:
        raise ValueError("completion lacks plan prose")
    return plan_text, config


def parse_code_completion(text: str) -> str:
    m = _CODE_FENCE_RE.search(text)
    source = m.group(1) if m else text
    return source.strip() + "\n"


def parse_debug_completion(text: str) -> tuple[str, str]:
    m = _REFLECTION_RE.search(text)
    reflection = m.group(1).strip() if m else ""
    return reflection, parse_code_completion(text)


@dataclass(frozen=True, slots=True)
class EpisodeResult:
    """Outcome of realizing one plan into runnable code."""

    success: bool
    source: str | None
    action: str  # "done" or "replan"
    coding_calls: int
    repair_calls: int
    regenerations: int
    last_error: str | None = None

    @property
    def gateway_calls(self) -> int:
        return self.coding_calls + self.repair_calls


class AgentTeam:
    """The three agents sharing one gateway, knowledge base, and rule set."""

    def __init__(
        self,
        gateway: ChatGateway,
        kb: KnowledgeBase | None = None,
        *,
        rules: RuleSet | None = None,
        reflection_enabled: bool = True,
    ) -> None:
        self.gateway = gateway
        self.kb = kb if kb is not None else KnowledgeBase.bundled()
        self.rules = rules
        self.reflection_enabled = reflection_enabled

    # -- planning ----------------------------------------------------------

    def _plan_call(
        self,
        prompt: str,
        *,
        plan_id: str,
        origin: str,
        generation: int,
        parent_candidate_id: str | None,
        scope: str,
    ) -> PlanGenome:
        messages = [ChatMessage("user", prompt)]
        exchange = self.gateway.complete(messages, tag="plan", scope=scope)
        try:
            plan_text, config = parse_plan_completion(exchange.completion)
        except ValueError:
            retry = messages + [
                ChatMessage("assistant", exchange.completion),
                ChatMessage(
                    "user",
                    "Your reply lacked the required PLAN/CONFIG structure. "
                    "Respond again in exactly the requested format.",
                ),
            ]
            exchange = self.gateway.complete(retry, tag="plan", scope=scope)
            try:
                plan_text, config = parse_plan_completion(exchange.completion)
            except ValueError as exc:
                raise UnparseablePlan(str(exc)) from exc
        return PlanGenome(
            plan_id=plan_id,
            plan_text=plan_text,
            encoded_config=config,
            origin=origin,
            generation=generation,
            parent_candidate_id=parent_candidate_id,
        )

    def plan_fresh(
        self,
        user_prompt: str,
        *,
        generation: int = 0,
        slot: int = 0,
        plan_id: str | None = None,
        scope: str = "",
    ) -> PlanGenome:
        kb_text = self.kb.insight_context()
        prompt = render_template(
            _template("plan_fresh"),
            user_prompt=user_prompt,
            generation=generation,
            slot=slot,
            kb_section=_kb_section(kb_text),
        )
        return self._plan_call(
            prompt,
            plan_id=plan_id or f"plan-g{generation}-s{slot}",
            origin=ORIGIN_FRESH,
            generation=generation,
            parent_candidate_id=None,
            scope=scope,
        )

    def plan_baseline(self, user_prompt: str, *, scope: str = "") -> PlanGenome:
        prompt = render_template(
            _template("plan_baseline"),
            user_prompt=user_prompt,
            kb_section="",
        )
        return self._plan_call(
            prompt,
            plan_id="plan-baseline",
            origin=ORIGIN_FRESH,
            generation=0,
            parent_candidate_id=None,
            scope=scope,
        )

    def plan(self, user_prompt: str, mode: str, *, scope: str = "") -> PlanResult:
        """Generation mode yields one plan; optimization mode also yields
        the no-acceleration baseline plan."""
        if mode not in ("generation", "optimization"):
            raise ConfigError(f"unknown planning mode {mode!r}")
        baseline = None
        if mode == "optimization":
            baseline = self.plan_baseline(user_prompt, scope=scope)
        primary = self.plan_fresh(user_prompt, scope=scope)
        return PlanResult(primary=primary, baseline=baseline)

    def refine_plan(
        self,
        parent: PlanGenome,
        parent_candidate_id: str,
        feedback: FeedbackReport,
        *,
        generation: int,
        slot: int = 0,
        plan_id: str | None = None,
        user_prompt: str = "",
        scope: str = "",
    ) -> PlanGenome:
        kb_text = self.kb.insight_context()
        prompt = render_template(
            _template("plan_refine"),
            user_prompt=user_prompt,
            parent_config=json.dumps(parent.encoded_config, sort_keys=True),
            feedback_prose=feedback.prose(),
            feedback_json=feedback.to_json(),
            kb_section=_kb_section(kb_text),
        )
        return self._plan_call(
            prompt,
            plan_id=plan_id or f"plan-g{generation}-m{slot}",
            origin=ORIGIN_REFINED,
            generation=generation,
            parent_candidate_id=parent_candidate_id,
            scope=scope,
        )

    # -- coding and debugging ----------------------------------------------

    def code(self, plan: PlanGenome, *, regen_index: int = 0, scope: str = "") -> str:
        config = plan.encoded_config
        _, kb_text = self.kb.template_context(
            config.get("pipeline_class"), config.get("accel_methods", {})
        )
        prompt = render_template(
            _template("code"),
            plan_text=plan.plan_text,
            config_json=json.dumps(config, sort_keys=True),
            regen_index=regen_index,
            kb_section=_kb_section(kb_text),
        )
        exchange = self.gateway.complete([ChatMessage("user", prompt)], tag="code", scope=scope)
        return parse_code_completion(exchange.completion)

    def repair(
        self,
        plan: PlanGenome,
        source: str,
        error_text: str,
        reflections: Sequence[str],
        *,
        scope: str = "",
    ) -> tuple[str, str]:
        prompt = render_template(
            _template("debug"),
            config_json=json.dumps(plan.encoded_config, sort_keys=True),
            source=source,
            error_text=error_text,
            reflections="\n".join(f"- {r}" for r in reflections) or "(none)",
        )
        exchange = self.gateway.complete([ChatMessage("user", prompt)], tag="debug", scope=scope)
        return parse_debug_completion(exchange.completion)

    def probe(self, source: str, backend: ExecutionBackend) -> CheckResult:
        try:
            found, _ = extract_attributes(source, self.rules)
        except AmbiguityError as exc:
            return CheckResult(False, f"AmbiguityError: {exc}")
        return backend.check(source, found)

    def run_episode(
        self,
        plan: PlanGenome,
        backend: ExecutionBackend,
        *,
        t_debug: int = DEFAULT_T_DEBUG,
        t_code: int = DEFAULT_T_CODE,
        initial_source: str | None = None,
        scope: str = "",
    ) -> EpisodeResult:
        """Generate runnable code for a plan, or fail back to planning.

        Each restart cycle is one generation call followed by at most
        ``t_debug - 1`` reflective repairs, so an episode never spends more
        than ``t_code * t_debug`` coding/debugging gateway calls.
        """
        if t_debug < 1 or t_code < 1:
            raise ConfigError("t_debug and t_code must both be >= 1")
        coding_calls = 0
        repair_calls = 0
        last_error: str | None = None
        try:
            for cycle in range(t_code):
                if cycle == 0 and initial_source is not None:
                    source = initial_source
                else:
                    source = self.code(plan, regen_index=cycle, scope=scope)
                    coding_calls += 1
                check = self.probe(source, backend)
                reflections: list[str] = []  # cleared on every regeneration
                repairs = 0
                while not check.ok and repairs < t_debug - 1 and self.reflection_enabled:
                    reflection, source = self.repair(
                        plan, source, check.error_text or "", reflections, scope=scope
                    )
                    repair_calls += 1
                    repairs += 1
                    reflections.append(reflection)
                    check = self.probe(source, backend)
                if check.ok:
                    return EpisodeResult(
                        success=True,
                        source=source,
                        action="done",
                        coding_calls=coding_calls,
                        repair_calls=repair_calls,
                        regenerations=cycle,
                    )
                last_error = check.error_text
        except BudgetExhausted as exc:
            last_error = str(exc)
        return EpisodeResult(
            success=False,
            source=None,
            action="replan",
            coding_calls=coding_calls,
            repair_calls=repair_calls,
            regenerations=t_code,
            last_error=last_error,
        )
