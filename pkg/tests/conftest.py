from __future__ import annotations

import json
from pathlib import Path

import pytest

from accelbench.backends.sim import SimBackend, SimLandscape
from accelbench.tasks import KeyAttributes, TaskSpec
from accelbench.promptspec import format_task_prompt
from accelbench.codegen import render_source
from accelbench.static_check import attrs_to_partial

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def landscape() -> SimLandscape:
    return SimLandscape.default()


@pytest.fixture()
def sim_backend(landscape) -> SimBackend:
    return SimBackend(landscape)


@pytest.fixture(scope="session")
def corpus_labels() -> dict:
    return json.loads((DATA_DIR / "static_corpus" / "labels.json").read_text("utf-8"))


def make_attrs(**overrides) -> KeyAttributes:
    base = dict(
        pipeline_class="StableDiffusionPipeline",
        model_id="stable-diffusion-v1-5",
        scheduler_class="DDIMScheduler",
        num_inference_steps=50,
        resolution=(512, 512),
        conditioning="text2img",
        preprocessors=frozenset(),
        accel_methods={},
    )
    base.update(overrides)
    return KeyAttributes(**base)


def make_task(
    level: int = 1,
    *,
    attrs: KeyAttributes | None = None,
    task_id: str = "task",
    delta: float = 0.05,
    u_req: float | None = None,
    tau_max: float | None = None,
    difficulty: str | None = None,
) -> TaskSpec:
    attrs = attrs if attrs is not None else make_attrs()
    if level == 4 and u_req is None:
        u_req = 1.5
    if level == 5 and tau_max is None:
        tau_max = 2.0
    if level >= 4 and difficulty is None:
        difficulty = "medium"
    prompt = format_task_prompt(
        attrs.to_dict(),
        level=level,
        quality_threshold=delta,
        speedup_requirement=u_req,
        latency_bound=tau_max,
    )
    return TaskSpec(
        task_id=task_id,
        level=level,
        prompt=prompt,
        reference_code=render_source(attrs_to_partial(attrs)),
        ground_truth=attrs,
        quality_threshold=delta,
        speedup_requirement=u_req if level == 4 else None,
        latency_bound=tau_max if level == 5 else None,
        difficulty=difficulty if level >= 4 else None,
        hardware_tag="sim",
    )
