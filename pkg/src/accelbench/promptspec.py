"""Canonical user-prompt phrasing for built tasks, plus its parser.

The builder emits prompts in this sentence format; the reference mock
policy (and any structured consumer) can parse the pinned attributes and
quantitative targets back out. A live model sees ordinary English.
"""

from __future__ import annotations

import re
from typing import Any, Mapping

_INT_PARAMS = {"cache_interval", "gate_step"}


def format_task_prompt(
    config: Mapping[str, Any],
    *,
    level: int,
    quality_threshold: float,
    speedup_requirement: float | None = None,
    latency_bound: float | None = None,
) -> str:
    w, h = config["resolution"]
    parts = [
        f"Set up a {config['conditioning']} generation pipeline using "
        f"{config['pipeline_class']} with model {config['model_id']}, scheduler "
        f"{config['scheduler_class']}, {config['num_inference_steps']} inference "
        f"steps at {w}x{h} resolution."
    ]
    preprocessors = sorted(config.get("preprocessors", ()))
    if preprocessors:
        parts.append(f"Preprocess inputs with {', '.join(preprocessors)}.")
    methods = config.get("accel_methods", {})
    if level == 1:
        parts.append("Do not apply any acceleration techniques.")
    elif level in (2, 3):
        for method in sorted(methods):
            params = methods[method]
            if params:
                rendered = " and ".join(f"{k}={v}" for k, v in sorted(params.items()))
                parts.append(f"Apply {method} with {rendered}.")
            else:
                parts.append(f"Apply {method}.")
    elif level == 4:
        parts.append(
            f"Accelerate inference to achieve at least a {speedup_requirement:.2f}x "
            f"speedup over the unaccelerated baseline while keeping relative "
            f"quality loss within {quality_threshold * 100:.1f}%."
        )
    else:
        parts.append(
            f"Accelerate inference so that mean latency stays within "
            f"{latency_bound:.4f} seconds while keeping relative quality loss "
            f"within {quality_threshold * 100:.1f}%."
        )
    return " ".join(parts)


_CONDITIONING_RE = re.compile(r"Set up a (\w+) generation pipeline")
_PIPELINE_RE = re.compile(r"using ([A-Za-z0-9_]+) with model")
_MODEL_RE = re.compile(r"with model ([\w.\-]+),")
_SCHEDULER_RE = re.compile(r"scheduler ([A-Za-z0-9_]+),")
_STEPS_RE = re.compile(r"(\d+) inference\s+steps")
_RESOLUTION_RE = re.compile(r"at (\d+)x(\d+) resolution")
_PREPROC_RE = re.compile(r"Preprocess inputs with ([^.]+)\.")
_METHOD_RE = re.compile(r"Apply (\w+)(?: with (.+?))?\.(?=\s|$)")
_PARAM_RE = re.compile(r"(\w+)=([0-9.]+)")
_SPEEDUP_RE = re.compile(r"at least a ([0-9.]+)x\s+speedup")
_LATENCY_RE = re.compile(r"within ([0-9.]+) seconds")
_DELTA_RE = re.compile(r"quality loss\s+within ([0-9.]+)%")
_NO_ACCEL_RE = re.compile(r"Do not apply any acceleration")


def parse_task_prompt(text: str) -> tuple[dict[str, Any], dict[str, Any]]:
    """Recover (pinned configuration, quantitative targets) from a prompt.

    Missing pieces stay absent from the configuration; targets default to
    None so callers can distinguish generation from optimization requests.
    """
    config: dict[str, Any] = {}
    m = _CONDITIONING_RE.search(text)
    if m:
        config["conditioning"] = m.group(1)
    m = _PIPELINE_RE.search(text)
    if m:
        config["pipeline_class"] = m.group(1)
    m = _MODEL_RE.search(text)
    if m:
        config["model_id"] = m.group(1)
    m = _SCHEDULER_RE.search(text)
    if m:
        config["scheduler_class"] = m.group(1)
    m = _STEPS_RE.search(text)
    if m:
        config["num_inference_steps"] = int(m.group(1))
    m = _RESOLUTION_RE.search(text)
    if m:
        config["resolution"] = [int(m.group(1)), int(m.group(2))]
    m = _PREPROC_RE.search(text)
    if m:
        config["preprocessors"] = sorted(
            p.strip() for p in m.group(1).split(",") if p.strip()
        )
    methods: dict[str, dict[str, Any]] = {}
    for m in _METHOD_RE.finditer(text):
        name = m.group(1)
        params: dict[str, Any] = {}
        if m.group(2):
            for pm in _PARAM_RE.finditer(m.group(2)):
                raw = pm.group(2)
                params[pm.group(1)] = int(raw) if pm.group(1) in _INT_PARAMS else float(raw)
        methods[name] = params
    if methods or _NO_ACCEL_RE.search(text):
        config["accel_methods"] = methods

    targets: dict[str, Any] = {
        "speedup_requirement": None,
        "latency_bound": None,
        "quality_threshold": None,
        "explicit_no_accel": bool(_NO_ACCEL_RE.search(text)),
    }
    m = _SPEEDUP_RE.search(text)
    if m:
        targets["speedup_requirement"] = float(m.group(1))
    m = _LATENCY_RE.search(text)
    if m:
        targets["latency_bound"] = float(m.group(1))
    m = _DELTA_RE.search(text)
    if m:
        targets["quality_threshold"] = float(m.group(1)) / 100.0
    return config, targets
