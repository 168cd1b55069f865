"""Deterministic simulated execution landscape.

Models baseline latency/quality per pipeline and the effect of each
acceleration method as a speed multiplier plus a quality delta. Multipliers
compose multiplicatively, deltas add; this is a documented model for
desk-scale testing, not a claim about physical hardware. A run is a pure
function of (attributes, sample count, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import _core
from ..errors import SchemaError
from ..tasks import KeyAttributes, Violation, validate_attributes, validate_method_params
from ..vocab import default_vocabulary
from .base import BackendCapabilities, CheckResult, RunResult

# Discretized method-parameter grid used by searches and oracles; small
# enough that exhaustive enumeration stays cheap.
GRID_MERGE_RATIOS = tuple(round(0.1 * i, 1) for i in range(8))  # 0.0 .. 0.7
GRID_CACHE_INTERVALS = tuple(range(1, 11))  # 1 .. 10


@dataclass(frozen=True, slots=True)
class PipelineProfile:
    t_step: float  # seconds per denoising step
    q0: float  # baseline quality score
    n_base: int  # baseline step count


@dataclass(frozen=True, slots=True)
class SimLandscape:
    """All constants of the simulated environment."""

    pipelines: Mapping[str, PipelineProfile]
    k_tm: float
    k_fr: float
    k_ga: float
    k_st: float
    fp16_mult: float
    fp16_qfrac: float
    noise_time: float = 0.0
    noise_quality: float = 0.0

    def __post_init__(self) -> None:
        # relative time jitter of 1.0 would allow zero latencies
        if not (0.0 <= self.noise_time < 1.0):
            raise SchemaError(f"noise_time must be in [0, 1), got {self.noise_time}")
        if self.noise_quality < 0.0:
            raise SchemaError(f"noise_quality must be >= 0, got {self.noise_quality}")

    def profile(self, pipeline_class: str) -> PipelineProfile:
        try:
            return self.pipelines[pipeline_class]
        except KeyError:
            raise SchemaError(f"no landscape profile for {pipeline_class!r}") from None

    def with_noise(self, time: float, quality: float) -> "SimLandscape":
        return replace(self, noise_time=time, noise_quality=quality)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimLandscape":
        pipelines = {
            name: PipelineProfile(
                t_step=row["t_step"], q0=row["q0"], n_base=row["n_base"]
            )
            for name, row in data["pipelines"].items()
        }
        coeff = data["coefficients"]
        fp16 = data["half_precision"]
        noise = data.get("noise", {})
        return cls(
            pipelines=pipelines,
            k_tm=coeff["token_merging"],
            k_fr=coeff["feature_reuse"],
            k_ga=coeff["gated_activation"],
            k_st=coeff["step_reduction"],
            fp16_mult=fp16["speed_mult"],
            fp16_qfrac=fp16["quality_frac"],
            noise_time=noise.get("time", 0.0),
            noise_quality=noise.get("quality", 0.0),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SimLandscape":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    @classmethod
    def default(cls) -> "SimLandscape":
        text = resources.files("accelbench").joinpath("data/landscape.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    @classmethod
    def random(cls, seed: int) -> "SimLandscape":
        """A seeded random landscape over the default pipeline set.

        Coefficient ranges keep half precision always affordable at the
        default 5% bound, so every random landscape has headroom above 1x.
        """
        rng = np.random.default_rng(seed)
        base = cls.default()
        pipelines = {
            name: PipelineProfile(
                t_step=float(rng.uniform(0.02, 0.3)),
                q0=float(rng.uniform(0.25, 0.4)),
                n_base=int(rng.choice([30, 40, 50])),
            )
            for name in base.pipelines
        }
        return cls(
            pipelines=pipelines,
            k_tm=float(rng.uniform(0.01, 0.05)),
            k_fr=float(rng.uniform(0.004, 0.02)),
            k_ga=float(rng.uniform(0.006, 0.03)),
            k_st=float(rng.uniform(0.02, 0.1)),
            fp16_mult=1.6,
            fp16_qfrac=float(rng.uniform(0.001, 0.004)),
        )


def _method_args(attrs: KeyAttributes | Mapping[str, Any]) -> tuple[float, int, int, bool]:
    methods = attrs.accel_methods if isinstance(attrs, KeyAttributes) else attrs.get("accel_methods", {})
    ratio = float(methods.get("token_merging", {}).get("merge_ratio", 0.0))
    interval = int(methods.get("feature_reuse", {}).get("cache_interval", 1))
    gate = methods.get("gated_activation", {}).get("gate_step")
    fp16 = "half_precision" in methods
    return ratio, interval, gate, fp16


def compose_config(
    landscape: SimLandscape, attrs: KeyAttributes, *, baseline_steps: int | None = None
) -> tuple[float, float]:
    """(speed multiplier, quality delta) of a full attribute record.

    ``baseline_steps`` defaults to the pipeline's landscape baseline; a step
    count below it contributes the step-reduction effect.
    """
    profile = landscape.profile(attrs.pipeline_class)
    n_base = baseline_steps if baseline_steps is not None else profile.n_base
    steps = attrs.num_inference_steps
    ratio, interval, gate, fp16 = _method_args(attrs)
    gate_step = steps if gate is None else min(int(gate), steps)
    return _core.compose_effects(
        profile.q0,
        landscape.k_tm,
        landscape.k_fr,
        landscape.k_ga,
        landscape.k_st,
        landscape.fp16_mult,
        landscape.fp16_qfrac,
        ratio,
        interval,
        gate_step,
        steps,
        n_base,
        fp16,
    )


def config_to_methods(
    config: tuple[float, int, int, int, int], steps: int
) -> dict[str, dict[str, Any]]:
    """Translate a scan tuple (ratio, interval, gate, steps, fp16) into an
    acceleration-method map, dropping identity settings."""
    ratio, interval, gate, _, fp16 = config
    methods: dict[str, dict[str, Any]] = {}
    if ratio > 0:
        methods["token_merging"] = {"merge_ratio": ratio}
    if interval > 1:
        methods["feature_reuse"] = {"cache_interval": interval}
    if gate < steps:
        methods["gated_activation"] = {"gate_step": gate}
    if fp16:
        methods["half_precision"] = {}
    return methods


def max_feasible_speedup(
    landscape: SimLandscape,
    pipeline_class: str,
    delta: float,
    *,
    steps_options: tuple[int, ...] | None = None,
    merge_ratios: tuple[float, ...] = GRID_MERGE_RATIOS,
    cache_intervals: tuple[int, ...] = GRID_CACHE_INTERVALS,
    allow_fp16: bool = True,
    allow_gate: bool = True,
    return_config: bool = False,
):
    """Largest composed speedup with total quality loss within delta * q0.

    Exhaustive over the discrete grid (the kernel in ``_core`` does the
    scan). Steps are pinned at the pipeline baseline by default because the
    static check holds candidates to the task's exact step count; pass
    ``steps_options`` to widen the space.
    """
    profile = landscape.profile(pipeline_class)
    options = steps_options if steps_options is not None else (profile.n_base,)
    best_mult, config = _core.scan_max_speedup(
        profile.q0,
        delta,
        landscape.k_tm,
        landscape.k_fr,
        landscape.k_ga,
        landscape.k_st,
        landscape.fp16_mult,
        landscape.fp16_qfrac,
        tuple(float(r) for r in merge_ratios),
        tuple(int(k) for k in cache_intervals),
        tuple(int(n) for n in options),
        profile.n_base,
        allow_fp16,
        allow_gate,
    )
    if return_config:
        return best_mult, config
    return best_mult


def _sample_rng(attrs: KeyAttributes, sample_count: int, seed: int) -> np.random.Generator:
    payload = json.dumps(
        {"attrs": attrs.to_dict(), "n": sample_count, "seed": seed}, sort_keys=True
    )
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return np.random.default_rng(np.frombuffer(digest[:16], dtype=np.uint64))


class SimBackend:
    """ExecutionBackend over a SimLandscape.

    Pure given (attrs, sample count, seed); concurrent calls are safe.
    Invalid attributes produce a runtime-failure result, modeling code that
    does not run.
    """

    def __init__(self, landscape: SimLandscape | None = None, *, hardware_tag: str = "sim"):
        self.landscape = landscape or SimLandscape.default()
        self.capabilities = BackendCapabilities(
            supports_quality=True, supports_latency=True, hardware_tag=hardware_tag
        )
        self._vocab = default_vocabulary()

    def check(self, source: str, attrs: Mapping[str, Any]) -> CheckResult:
        if not source or not source.strip():
            return CheckResult(False, "RuntimeError: empty candidate source")
        problems = list(validate_method_params(attrs.get("accel_methods", {}), self._vocab))
        steps = attrs.get("num_inference_steps")
        if steps is not None and (not isinstance(steps, int) or steps < 1):
            problems.append(
                Violation("num_inference_steps", f"must be a positive integer, got {steps!r}")
            )
        if problems:
            text = "; ".join(str(p) for p in problems)
            return CheckResult(False, f"RuntimeError: {text}")
        return CheckResult(True, None)

    def run(
        self, source: str, attrs: KeyAttributes, sample_count: int, seed: int
    ) -> RunResult:
        if sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        violations = validate_attributes(attrs, self._vocab)
        if violations:
            text = "; ".join(str(v) for v in violations)
            return RunResult(status="runtime_failure", failure_text=f"RuntimeError: {text}")
        profile = self.landscape.profile(attrs.pipeline_class)
        mult, delta = compose_config(self.landscape, attrs)
        base_time = attrs.num_inference_steps * profile.t_step / mult
        base_quality = profile.q0 + delta
        if self.landscape.noise_time == 0.0 and self.landscape.noise_quality == 0.0:
            times = (base_time,) * sample_count
            qualities = (base_quality,) * sample_count
        else:
            rng = _sample_rng(attrs, sample_count, seed)
            t_jitter = rng.uniform(-1.0, 1.0, sample_count) * self.landscape.noise_time
            q_jitter = rng.uniform(-1.0, 1.0, sample_count) * self.landscape.noise_quality
            times = tuple(float(base_time * (1.0 + j)) for j in t_jitter)
            qualities = tuple(float(base_quality + j) for j in q_jitter)
        return RunResult(
            status="ok",
            quality=qualities,
            latency=times,
            wall_clock=float(sum(times)),
        )
