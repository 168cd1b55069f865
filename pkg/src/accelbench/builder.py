"""Benchmark construction.

Levels 1-3 are baseline and method-pinned tasks whose ground-truth
realization must pass its own evaluation; levels 4 and 5 come from a
randomized hill-climbing search over the acceleration grid (a fixed number
of proposals measured on a validation sample set), graded easy/medium/hard
by scaling the found speedup. Easy and medium emissions carry a
brute-force feasibility certificate; hard ones are flagged as possibly
infeasible by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import metrics
from .backends.sim import (
    GRID_CACHE_INTERVALS,
    GRID_MERGE_RATIOS,
    SimBackend,
    max_feasible_speedup,
)
from .codegen import render_source
from .errors import NoFeasibleConfig, VerificationFailure
from .evaluator import CandidateProgram, Evaluator
from .metrics import SampleMeasurements
from .promptspec import format_task_prompt
from .static_check import attrs_to_partial
from .tasks import (
    KeyAttributes,
    Manifest,
    ManifestEntry,
    TaskSpec,
    canonical_json,
    save_manifest,
    save_task,
)

GATE_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(2, 10))  # 0.2 .. 0.9

PIPELINE_MODELS = {
    "StableDiffusionPipeline": "stable-diffusion-v1-5",
    "StableDiffusionImg2ImgPipeline": "stable-diffusion-v1-5",
    "StableDiffusionXLPipeline": "stable-diffusion-xl-base-1.0",
    "DiTPipeline": "DiT-XL-2-256",
    "PixArtAlphaPipeline": "PixArt-XL-2-512",
    "PixArtSigmaPipeline": "PixArt-Sigma-XL-2-1024",
}
PIPELINE_CONDITIONING = {
    "StableDiffusionImg2ImgPipeline": "img2img",
    "DiTPipeline": "class2img",
}
SCHEDULERS = ("DDIMScheduler", "DPMSolverMultistepScheduler", "UniPCMultistepScheduler")
RESOLUTIONS = ((512, 512), (768, 768), (512, 768), (1024, 1024))

METHOD_DEFAULTS: dict[str, dict[str, Any]] = {
    "token_merging": {"merge_ratio": 0.4},
    "feature_reuse": {"cache_interval": 3},
    "gated_activation": {},  # gate_step filled from the step count
    "half_precision": {},
}
LEVEL3_PAIRS = (
    ("feature_reuse", "half_precision"),
    ("token_merging", "gated_activation"),
    ("token_merging", "feature_reuse"),
    ("gated_activation", "half_precision"),
)


@dataclass(frozen=True, slots=True)
class SearchConfig:
    """Speedup-search knobs: proposal budget, validation sample count, the
    quality-degradation bound, and the easy/hard scale factors."""

    iterations: int = 50
    validation_samples: int = 36
    sigma: float = 0.05
    delta_easy: float = 0.8
    delta_hard: float = 1.2

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (0.0 < self.sigma < 1.0):
            raise ValueError("sigma must be in (0, 1)")
        if not (self.delta_easy < 1.0 < self.delta_hard):
            raise ValueError("scale factors must satisfy delta_easy < 1 < delta_hard")


@dataclass(slots=True)
class SearchResult:
    best_methods: dict[str, dict[str, Any]]
    u_found: float
    quality_loss: float
    evaluations: int
    exhaustive: bool


def _slug(pipeline_class: str) -> str:
    return pipeline_class.removesuffix("Pipeline").lower()


def _default_steps(backend: SimBackend, pipeline: str) -> int:
    if hasattr(backend, "landscape"):
        return backend.landscape.profile(pipeline).n_base
    return 50


def _method_config(method: str, steps: int) -> dict[str, Any]:
    params = dict(METHOD_DEFAULTS[method])
    if method == "gated_activation":
        params["gate_step"] = max(1, round(0.5 * steps))
    return params


def _make_task(
    task_id: str,
    level: int,
    attrs: KeyAttributes,
    *,
    sigma: float,
    speedup_requirement: float | None = None,
    latency_bound: float | None = None,
    difficulty: str | None = None,
    hardware_tag: str = "sim",
) -> TaskSpec:
    prompt = format_task_prompt(
        attrs.to_dict(),
        level=level,
        quality_threshold=sigma,
        speedup_requirement=speedup_requirement,
        latency_bound=latency_bound,
    )
    return TaskSpec(
        task_id=task_id,
        level=level,
        prompt=prompt,
        reference_code=render_source(attrs_to_partial(attrs)),
        ground_truth=attrs,
        quality_threshold=sigma,
        speedup_requirement=speedup_requirement,
        latency_bound=latency_bound,
        difficulty=difficulty,
        hardware_tag=hardware_tag,
    )


def build_baseline_tasks(
    pipelines: Sequence[str],
    *,
    backend: SimBackend,
    seed: int = 0,
    sigma: float = 0.05,
    level3_pairs_per_pipeline: int = 1,
    verify: bool = True,
) -> list[TaskSpec]:
    """Levels 1-3: bare pipelines, one pinned method each, method pairs.

    Every emitted task's ground-truth realization is evaluated and must
    pass, otherwise VerificationFailure names the offender.
    """
    rng = np.random.default_rng(np.random.SeedSequence([abs(seed), 13]))
    tasks: list[TaskSpec] = []
    for pipeline in pipelines:
        steps = _default_steps(backend, pipeline)
        scheduler = str(rng.choice(SCHEDULERS))
        resolution = RESOLUTIONS[int(rng.integers(0, len(RESOLUTIONS)))]
        conditioning = PIPELINE_CONDITIONING.get(pipeline, "text2img")
        preprocessors = frozenset({"canny_edge"}) if conditioning == "img2img" else frozenset()
        base = KeyAttributes(
            pipeline_class=pipeline,
            model_id=PIPELINE_MODELS[pipeline],
            scheduler_class=scheduler,
            num_inference_steps=steps,
            resolution=resolution,
            conditioning=conditioning,
            preprocessors=preprocessors,
            accel_methods={},
        )
        slug = _slug(pipeline)
        tasks.append(_make_task(f"l1-{slug}", 1, base, sigma=sigma))
        for method in sorted(METHOD_DEFAULTS):
            attrs = KeyAttributes(
                pipeline_class=base.pipeline_class,
                model_id=base.model_id,
                scheduler_class=base.scheduler_class,
                num_inference_steps=base.num_inference_steps,
                resolution=base.resolution,
                conditioning=base.conditioning,
                preprocessors=base.preprocessors,
                accel_methods={method: _method_config(method, steps)},
            )
            tasks.append(_make_task(f"l2-{slug}-{method}", 2, attrs, sigma=sigma))
        pair_ids = rng.permutation(len(LEVEL3_PAIRS))[:level3_pairs_per_pipeline]
        for pi in sorted(int(i) for i in pair_ids):
            pair = LEVEL3_PAIRS[pi]
            attrs = KeyAttributes(
                pipeline_class=base.pipeline_class,
                model_id=base.model_id,
                scheduler_class=base.scheduler_class,
                num_inference_steps=base.num_inference_steps,
                resolution=base.resolution,
                conditioning=base.conditioning,
                preprocessors=base.preprocessors,
                accel_methods={m: _method_config(m, steps) for m in pair},
            )
            tasks.append(_make_task(f"l3-{slug}-{'-'.join(pair)}", 3, attrs, sigma=sigma))

    if verify:
        ev = Evaluator(backend)
        for task in tasks:
            report = ev.evaluate(
                CandidateProgram(f"{task.task_id}-selfcheck", task.reference_code), task
            )
            if not report.passed:
                raise VerificationFailure(
                    f"{task.task_id}: ground-truth realization failed its own "
                    f"evaluation ({sorted(e.value for e in report.errors)})"
                )
    return tasks


# -- speedup search ----------------------------------------------------------


def _space_points(allowed: frozenset[str], steps: int) -> list[dict[str, dict[str, Any]]]:
    """Enumerate the full discrete method space (identity included)."""
    ratio_opts = [None] + [r for r in GRID_MERGE_RATIOS if r > 0] if "token_merging" in allowed else [None]
    interval_opts = [None] + [k for k in GRID_CACHE_INTERVALS if k > 1] if "feature_reuse" in allowed else [None]
    gate_opts = [None] + [max(1, round(f * steps)) for f in GATE_FRACTIONS] if "gated_activation" in allowed else [None]
    fp16_opts = [False, True] if "half_precision" in allowed else [False]
    points = []
    for ratio in ratio_opts:
        for interval in interval_opts:
            for gate in gate_opts:
                for fp16 in fp16_opts:
                    methods: dict[str, dict[str, Any]] = {}
                    if ratio is not None:
                        methods["token_merging"] = {"merge_ratio": ratio}
                    if interval is not None:
                        methods["feature_reuse"] = {"cache_interval": interval}
                    if gate is not None:
                        methods["gated_activation"] = {"gate_step": gate}
                    if fp16:
                        methods["half_precision"] = {}
                    points.append(methods)
    return points


def _neighbors(
    methods: Mapping[str, Mapping[str, Any]], allowed: frozenset[str], steps: int
) -> list[dict[str, dict[str, Any]]]:
    out: list[dict[str, dict[str, Any]]] = []

    def clone() -> dict[str, dict[str, Any]]:
        return {m: dict(p) for m, p in methods.items()}

    if "token_merging" in allowed:
        ratio = methods.get("token_merging", {}).get("merge_ratio", 0.0)
        for nr in (round(ratio - 0.1, 1), round(ratio + 0.1, 1)):
            if 0.0 <= nr <= max(GRID_MERGE_RATIOS):
                c = clone()
                if nr == 0.0:
                    c.pop("token_merging", None)
                else:
                    c["token_merging"] = {"merge_ratio": nr}
                out.append(c)
    if "feature_reuse" in allowed:
        interval = methods.get("feature_reuse", {}).get("cache_interval", 1)
        for nk in (interval - 1, interval + 1):
            if 1 <= nk <= max(GRID_CACHE_INTERVALS):
                c = clone()
                if nk == 1:
                    c.pop("feature_reuse", None)
                else:
                    c["feature_reuse"] = {"cache_interval": nk}
                out.append(c)
    if "gated_activation" in allowed:
        gate = methods.get("gated_activation", {}).get("gate_step")
        step_delta = max(1, round(0.1 * steps))
        current = gate if gate is not None else steps
        for ng in (current - step_delta, current + step_delta):
            c = clone()
            if ng >= steps:
                c.pop("gated_activation", None)
                out.append(c)
            elif ng >= max(1, round(min(GATE_FRACTIONS) * steps)):
                c["gated_activation"] = {"gate_step": ng}
                out.append(c)
    if "half_precision" in allowed:
        c = clone()
        if "half_precision" in c:
            del c["half_precision"]
        else:
            c["half_precision"] = {}
        out.append(c)
    return out


def search_max_speedup(
    baseline: KeyAttributes,
    cfg: SearchConfig,
    backend: SimBackend,
    *,
    seed: int = 0,
    allowed_methods: Iterable[str] = tuple(METHOD_DEFAULTS),
) -> SearchResult:
    """Randomized local search for the fastest configuration within sigma.

    Spends exactly ``cfg.iterations`` proposal evaluations (each on
    ``cfg.validation_samples`` samples) unless the discrete space is small
    enough to enumerate outright, in which case the search is exhaustive
    and exact. The measured speedup of the winner never exceeds the
    brute-force grid optimum.
    """
    allowed = frozenset(allowed_methods)
    steps = baseline.num_inference_steps
    rng = np.random.default_rng(np.random.SeedSequence([abs(seed), 29]))
    base_attrs = baseline.without_acceleration()
    base_source = render_source(attrs_to_partial(base_attrs))
    base_run = backend.run(base_source, base_attrs, cfg.validation_samples, seed)
    if not base_run.ok:
        raise NoFeasibleConfig(f"baseline itself failed to run: {base_run.failure_text}")

    evaluated: dict[str, tuple[float, float]] = {}

    def key_of(methods: Mapping[str, Mapping[str, Any]]) -> str:
        return json.dumps(methods, sort_keys=True)

    def measure(methods: Mapping[str, Mapping[str, Any]]) -> tuple[float, float]:
        k = key_of(methods)
        if k in evaluated:
            return evaluated[k]
        attrs = KeyAttributes(
            pipeline_class=baseline.pipeline_class,
            model_id=baseline.model_id,
            scheduler_class=baseline.scheduler_class,
            num_inference_steps=baseline.num_inference_steps,
            resolution=baseline.resolution,
            conditioning=baseline.conditioning,
            preprocessors=baseline.preprocessors,
            accel_methods={m: dict(p) for m, p in methods.items()},
        )
        run = backend.run(render_source(attrs_to_partial(attrs)), attrs, cfg.validation_samples, seed)
        if not run.ok:
            evaluated[k] = (float("inf"), 0.0)
            return evaluated[k]
        m = SampleMeasurements.from_lists(
            base_run.quality, run.quality, base_run.latency, run.latency
        )
        evaluated[k] = (metrics.quality_loss(m), metrics.speedup(m))
        return evaluated[k]

    best_methods: dict[str, dict[str, Any]] | None = None
    best_u = 0.0

    def consider(methods: Mapping[str, Mapping[str, Any]]) -> None:
        nonlocal best_methods, best_u
        loss, u = measure(methods)
        if loss <= cfg.sigma and u > best_u:
            best_u = u
            best_methods = {m: dict(p) for m, p in methods.items()}

    space = _space_points(allowed, steps)
    exhaustive = len(space) <= cfg.iterations
    if exhaustive:
        for methods in space:
            consider(methods)
    else:
        consider({})  # identity: feasible anchor
        draws = 0
        while len(evaluated) < cfg.iterations and draws < 50 * cfg.iterations:
            draws += 1
            if best_methods is not None and rng.random() >= 0.25:
                options = _neighbors(best_methods, allowed, steps)
                proposal = options[int(rng.integers(0, len(options)))] if options else {}
            else:
                proposal = space[int(rng.integers(0, len(space)))]
            consider(proposal)

    if best_methods is None:
        raise NoFeasibleConfig("no configuration satisfied the degradation bound")
    loss, u = evaluated[key_of(best_methods)]
    return SearchResult(
        best_methods=best_methods,
        u_found=u,
        quality_loss=loss,
        evaluations=len(evaluated),
        exhaustive=exhaustive,
    )


@dataclass(slots=True)
class Emission:
    task: TaskSpec
    certificate: dict[str, Any]


def emit_graded_tasks(
    baseline_task: TaskSpec,
    search: SearchResult,
    cfg: SearchConfig,
    backend: SimBackend,
    *,
    seed: int = 0,
    levels: Sequence[int] = (4, 5),
) -> list[Emission]:
    """Scale the found speedup into easy/medium/hard level-4 requirements
    and the matching level-5 latency bounds.

    Variants whose scaled requirement does not exceed 1x are skipped (a
    level-4 task must demand an actual speedup). Certificates compare each
    requirement against the exhaustive grid optimum when the backend
    exposes a landscape.
    """
    base = baseline_task.ground_truth.without_acceleration()
    grades = {
        "easy": cfg.delta_easy * search.u_found,
        "medium": search.u_found,
        "hard": cfg.delta_hard * search.u_found,
    }
    u_star = None
    if hasattr(backend, "landscape"):
        u_star = max_feasible_speedup(backend.landscape, base.pipeline_class, cfg.sigma)

    base_run = backend.run(
        render_source(attrs_to_partial(base)), base, cfg.validation_samples, seed
    )
    if not base_run.ok:
        raise NoFeasibleConfig(f"baseline failed to run: {base_run.failure_text}")
    mean_latency = sum(base_run.latency) / len(base_run.latency)

    out: list[Emission] = []
    slug = _slug(base.pipeline_class)
    for difficulty in ("easy", "medium", "hard"):
        u_req = grades[difficulty]
        if u_req <= 1.0:
            continue
        cert = {
            "difficulty": difficulty,
            "u_req": u_req,
            "u_found": search.u_found,
            "u_star": u_star,
            "feasible": None if u_star is None else bool(u_req <= u_star),
            "possibly_infeasible": None if u_star is None else bool(u_req > u_star),
            "search_methods": search.best_methods,
        }
        if 4 in levels:
            task = _make_task(
                f"l4-{slug}-{difficulty}",
                4,
                base,
                sigma=cfg.sigma,
                speedup_requirement=u_req,
                difficulty=difficulty,
            )
            out.append(Emission(task=task, certificate=dict(cert, level=4)))
        if 5 in levels:
            tau_max = mean_latency / u_req
            task = _make_task(
                f"l5-{slug}-{difficulty}",
                5,
                base,
                sigma=cfg.sigma,
                latency_bound=tau_max,
                difficulty=difficulty,
            )
            out.append(
                Emission(task=task, certificate=dict(cert, level=5, tau_max=tau_max))
            )
    return out


@dataclass(slots=True)
class BuildReport:
    tasks: list[TaskSpec] = field(default_factory=list)
    emission_log: list[dict[str, Any]] = field(default_factory=list)
    manifest: Manifest | None = None


def build_bench(
    out_dir: str | Path,
    *,
    backend: SimBackend,
    cfg: SearchConfig | None = None,
    pipelines: Sequence[str] = ("StableDiffusionPipeline", "PixArtAlphaPipeline"),
    graded_pipelines: Sequence[str] = ("StableDiffusionPipeline",),
    seed: int = 0,
) -> BuildReport:
    """Build the bundled synthetic corpus: levels 1-3 for every pipeline,
    graded levels 4-5 for the selected ones. Fully deterministic under the
    seed; writes task files, the manifest, and the emission log."""
    cfg = cfg or SearchConfig()
    out = Path(out_dir)
    (out / "tasks").mkdir(parents=True, exist_ok=True)
    report = BuildReport()

    report.tasks.extend(
        build_baseline_tasks(pipelines, backend=backend, seed=seed, sigma=cfg.sigma)
    )
    for task in report.tasks:
        report.emission_log.append({"task_id": task.task_id, "level": task.level})

    for pipeline in graded_pipelines:
        base_task = next(
            t for t in report.tasks if t.level == 1 and t.ground_truth.pipeline_class == pipeline
        )
        search = search_max_speedup(base_task.ground_truth, cfg, backend, seed=seed)
        for emission in emit_graded_tasks(base_task, search, cfg, backend, seed=seed):
            report.tasks.append(emission.task)
            report.emission_log.append(
                {
                    "task_id": emission.task.task_id,
                    "level": emission.task.level,
                    **emission.certificate,
                }
            )

    entries = []
    for task in report.tasks:
        rel = f"tasks/{task.task_id}.json"
        save_task(task, out / rel)
        entries.append(ManifestEntry(path=rel, level=task.level, task_id=task.task_id))
    report.manifest = Manifest(entries=tuple(entries))
    save_manifest(report.manifest, out / "manifest.json")
    (out / "emission_log.json").write_text(
        canonical_json({"seed": seed, "emissions": report.emission_log}) + "\n", "utf-8"
    )
    return report
