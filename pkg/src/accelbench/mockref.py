"""Reference mock policy: a deterministic, prompt-driven stand-in for a
live model, strong enough to exercise the whole loop at desk scale.

The policy reads the structured sections the agent templates emit (user
request, plan configuration, feedback report), plans by parsing the
request, explores acceleration settings with a seeded generator, refines
by moving against the reported gaps, and codes by rendering the plan's
configuration. Same prompt fingerprint and seed always produce the same
completion.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from typing import Any, Mapping, Sequence

from .codegen import render_source
from .errors import MalformedResponse
from .gateway import ChatMessage
from .promptspec import parse_task_prompt

_USER_REQUEST_RE = re.compile(r"## User request\s*\n(.*?)(?:\n##|\Z)", re.DOTALL)
_PLAN_CONFIG_RE = re.compile(r"## Plan configuration\s*```json\s*(\{.*?\})\s*```", re.DOTALL)
_PARENT_CONFIG_RE = re.compile(
    r"## Current plan configuration\s*```json\s*(\{.*?\})\s*```", re.DOTALL
)
_FEEDBACK_JSON_RE = re.compile(r"## Feedback report.*?```json\s*(\{.*?\})\s*```", re.DOTALL)
_SCAFFOLD_RE = re.compile(r"### Template: (\w+)")
_REGEN_RE = re.compile(r"Regeneration attempt (\d+)")

MERGE_RATIO_GRID = [round(0.1 * i, 1) for i in range(1, 8)]
GATE_FRACTIONS = [0.4, 0.5, 0.6, 0.7, 0.8]


def _rng_for(fp: str, seed: int) -> random.Random:
    digest = hashlib.sha256(f"{fp}:{seed}".encode("utf-8")).hexdigest()
    return random.Random(int(digest[:12], 16))


def _summarize_methods(methods: Mapping[str, Mapping[str, Any]]) -> str:
    if not methods:
        return "none (reference configuration)"
    parts = []
    for name in sorted(methods):
        params = methods[name]
        if params:
            inner = ", ".join(f"{k}={v}" for k, v in sorted(params.items()))
            parts.append(f"{name}({inner})")
        else:
            parts.append(name)
    return ", ".join(parts)


def _plan_completion(config: Mapping[str, Any], note: str) -> str:
    w, h = config.get("resolution", (0, 0))
    lines = [
        "PLAN:",
        f"1. Instantiate {config.get('pipeline_class')} with model "
        f"{config.get('model_id')} ({config.get('conditioning')}).",
        f"2. Swap in {config.get('scheduler_class')}; run "
        f"{config.get('num_inference_steps')} steps at {w}x{h}.",
        f"3. Acceleration: {_summarize_methods(config.get('accel_methods', {}))}.",
    ]
    if note:
        lines.append(f"4. {note}")
    lines.append("CONFIG:")
    lines.append("```json")
    lines.append(json.dumps(config, sort_keys=True))
    lines.append("```")
    return "\n".join(lines)


class ReferencePolicy:
    """Programmatic completions for planning, coding, and debugging prompts."""

    def __init__(
        self,
        *,
        p_fp16: float = 0.75,
        p_token_merging: float = 0.6,
        p_feature_reuse: float = 0.6,
        p_gated_activation: float = 0.4,
    ) -> None:
        self.p_fp16 = p_fp16
        self.p_token_merging = p_token_merging
        self.p_feature_reuse = p_feature_reuse
        self.p_gated_activation = p_gated_activation

    # -- dispatch ------------------------------------------------------------

    def respond(self, messages: Sequence[ChatMessage], fp: str, seed: int) -> str:
        text = "\n\n".join(m.content for m in messages)
        if "You are the coding agent" in text:
            return self._code(text, fp, seed)
        if "You are the debugging agent" in text:
            return self._debug(text, fp, seed)
        if "You are the planning agent" in text:
            if "## Feedback report" in text:
                return self._refine(text, fp, seed)
            if "Produce the baseline plan" in text:
                return self._baseline(text)
            return self._fresh(text, fp, seed)
        raise MalformedResponse("reference policy cannot interpret this prompt")

    # -- planning ------------------------------------------------------------

    def _user_request(self, text: str) -> str:
        m = _USER_REQUEST_RE.search(text)
        if not m:
            raise MalformedResponse("prompt lacks a user request section")
        return m.group(1).strip()

    def _baseline(self, text: str) -> str:
        config, _ = parse_task_prompt(self._user_request(text))
        config["accel_methods"] = {}
        config.setdefault("preprocessors", [])
        return _plan_completion(config, "No acceleration: reference baseline for comparison.")

    def _fresh(self, text: str, fp: str, seed: int) -> str:
        request = self._user_request(text)
        config, targets = parse_task_prompt(request)
        config.setdefault("preprocessors", [])
        needs_search = (
            targets["speedup_requirement"] is not None
            or targets["latency_bound"] is not None
        )
        if needs_search:
            rng = _rng_for(fp, seed)
            config["accel_methods"] = self._explore(config, rng)
            note = "Initial exploration point; expect refinement from feedback."
        else:
            config.setdefault("accel_methods", {})
            note = ""
        return _plan_completion(config, note)

    def _explore(self, config: Mapping[str, Any], rng: random.Random) -> dict[str, Any]:
        steps = int(config.get("num_inference_steps", 50))
        methods: dict[str, Any] = {}
        if rng.random() < self.p_fp16:
            methods["half_precision"] = {}
        if rng.random() < self.p_token_merging:
            methods["token_merging"] = {"merge_ratio": rng.choice(MERGE_RATIO_GRID[:5])}
        if rng.random() < self.p_feature_reuse:
            methods["feature_reuse"] = {"cache_interval": rng.choice([2, 3, 4, 5])}
        if rng.random() < self.p_gated_activation:
            frac = rng.choice(GATE_FRACTIONS)
            methods["gated_activation"] = {"gate_step": max(1, round(frac * steps))}
        return methods

    def _refine(self, text: str, fp: str, seed: int) -> str:
        m = _PARENT_CONFIG_RE.search(text)
        fb = _FEEDBACK_JSON_RE.search(text)
        if not m or not fb:
            raise MalformedResponse("refine prompt lacks config or feedback blocks")
        config = json.loads(m.group(1))
        feedback = json.loads(fb.group(1))
        rng = _rng_for(fp, seed)
        steps = int(config.get("num_inference_steps", 50))
        methods = {k: dict(v) for k, v in config.get("accel_methods", {}).items()}

        loss = feedback.get("quality_loss")
        delta = feedback.get("quality_threshold") or 0.05
        if loss is None:
            methods = self._explore(config, rng)
            note = "Previous attempt never measured; proposing a new exploration point."
        elif loss > delta:
            overshoot = (loss - delta) / delta
            self._weaken(methods, steps, rng, moves=1 if overshoot <= 0.5 else 2)
            if "half_precision" not in methods:
                methods["half_precision"] = {}  # cheapest speed source first
            note = "Quality bound exceeded; softened the most aggressive settings."
        else:
            shortfall = self._speed_shortfall(feedback)
            margin_frac = (delta - loss) / delta
            if shortfall > 0:
                moves = 1 if shortfall <= 0.05 else (2 if shortfall <= 0.25 else 3)
                if margin_frac > 0.5 and shortfall > 0.05:
                    moves += 1
                self._strengthen(methods, steps, rng, moves=moves)
                note = "Speed target missed; strengthened acceleration within the quality margin."
            else:
                self._strengthen(methods, steps, rng, moves=1)
                note = "Targets nearly met; nudging acceleration for extra margin."
        config = dict(config)
        config["accel_methods"] = methods
        return _plan_completion(config, note)

    @staticmethod
    def _speed_shortfall(feedback: Mapping[str, Any]) -> float:
        u = feedback.get("speedup")
        req = feedback.get("speedup_requirement")
        if req and u is not None:
            return max(0.0, (req - u) / req)
        tau = feedback.get("latency")
        bound = feedback.get("latency_bound")
        if bound and tau is not None:
            return max(0.0, (tau - bound) / tau)
        return 0.0

    def _strengthen(
        self, methods: dict[str, Any], steps: int, rng: random.Random, *, moves: int
    ) -> None:
        for _ in range(moves):
            options: list[tuple[str, int]] = []
            if "half_precision" not in methods:
                options.append(("fp16", 4))
            interval = methods.get("feature_reuse", {}).get("cache_interval", 0)
            if interval < 10:
                options.append(("interval_up", 3))
            ratio = methods.get("token_merging", {}).get("merge_ratio", 0.0)
            if ratio < 0.7 - 1e-9:
                options.append(("ratio_up", 2))
            gate = methods.get("gated_activation", {}).get("gate_step")
            if gate is None or gate > max(1, round(0.2 * steps)):
                options.append(("gate_down", 2))
            if not options:
                return
            move = self._pick(options, rng)
            if move == "fp16":
                methods["half_precision"] = {}
            elif move == "interval_up":
                methods["feature_reuse"] = {"cache_interval": (interval or 1) + 1}
            elif move == "ratio_up":
                methods["token_merging"] = {"merge_ratio": round(min(0.7, ratio + 0.1), 1)}
            elif move == "gate_down":
                if gate is None:
                    gate = round(0.7 * steps)
                else:
                    gate = gate - max(1, round(0.1 * steps))
                methods["gated_activation"] = {
                    "gate_step": max(max(1, round(0.2 * steps)), gate)
                }

    def _weaken(
        self, methods: dict[str, Any], steps: int, rng: random.Random, *, moves: int
    ) -> None:
        for _ in range(moves):
            options: list[tuple[str, int]] = []
            if "token_merging" in methods:
                options.append(("ratio_down", 3))
            if "feature_reuse" in methods:
                options.append(("interval_down", 3))
            if "gated_activation" in methods:
                options.append(("gate_up", 3))
            if not options:
                if "half_precision" in methods:
                    del methods["half_precision"]
                return
            move = self._pick(options, rng)
            if move == "ratio_down":
                ratio = round(methods["token_merging"]["merge_ratio"] - 0.1, 1)
                if ratio <= 0:
                    del methods["token_merging"]
                else:
                    methods["token_merging"] = {"merge_ratio": ratio}
            elif move == "interval_down":
                interval = methods["feature_reuse"]["cache_interval"] - 1
                if interval <= 1:
                    del methods["feature_reuse"]
                else:
                    methods["feature_reuse"] = {"cache_interval": interval}
            elif move == "gate_up":
                gate = methods["gated_activation"]["gate_step"] + max(1, round(0.15 * steps))
                if gate >= steps:
                    del methods["gated_activation"]
                else:
                    methods["gated_activation"] = {"gate_step": gate}

    @staticmethod
    def _pick(options: list[tuple[str, int]], rng: random.Random) -> str:
        names = [name for name, _ in options]
        weights = [w for _, w in options]
        return rng.choices(names, weights=weights, k=1)[0]

    # -- coding and debugging --------------------------------------------------

    def _code(self, text: str, fp: str, seed: int) -> str:
        m = _PLAN_CONFIG_RE.search(text)
        if not m:
            raise MalformedResponse("coding prompt lacks a plan configuration block")
        config = json.loads(m.group(1))
        scaffold = _SCAFFOLD_RE.findall(text)
        style = int(fp, 16) % 2
        source = render_source(config, scaffold=scaffold, style=style)
        return f"```python\n{source}```"

    def _debug(self, text: str, fp: str, seed: int) -> str:
        m = _PLAN_CONFIG_RE.search(text)
        if not m:
            raise MalformedResponse("debug prompt lacks a plan configuration block")
        config = json.loads(m.group(1))
        style = (int(fp, 16) + 1) % 2
        source = render_source(config, style=style)
        reflection = (
            "The failure points at an invalid or missing runtime setting; "
            "regenerating strictly from the plan configuration."
        )
        return f"REFLECTION: {reflection}\n```python\n{source}```"


_BREAK_SNIPPET = "\nimport tomesd\ntomesd.apply_patch(pipe, ratio=1.5)\n"


class BrokenCodeInjector:
    """Wraps a policy and corrupts selected code completions with an
    out-of-range parameter, modeling a model that emits broken code.

    Modes: ``first_generation`` corrupts only initial code generations
    (repairs succeed), ``all`` corrupts code and repair completions alike
    (episodes exhaust their budgets).
    """

    def __init__(self, inner: ReferencePolicy, mode: str = "first_generation") -> None:
        if mode not in ("first_generation", "all"):
            raise ValueError(f"unknown injector mode {mode!r}")
        self.inner = inner
        self.mode = mode

    def respond(self, messages: Sequence[ChatMessage], fp: str, seed: int) -> str:
        text = "\n\n".join(m.content for m in messages)
        completion = self.inner.respond(messages, fp, seed)
        is_code = "You are the coding agent" in text
        is_debug = "You are the debugging agent" in text
        if self.mode == "all" and (is_code or is_debug):
            return self._corrupt(completion)
        if self.mode == "first_generation" and is_code:
            m = _REGEN_RE.search(text)
            if m and int(m.group(1)) == 0:
                return self._corrupt(completion)
        return completion

    @staticmethod
    def _corrupt(completion: str) -> str:
        head, _, tail = completion.rpartition("```")
        if not head:
            return completion + _BREAK_SNIPPET
        return head + _BREAK_SNIPPET + "```" + tail
