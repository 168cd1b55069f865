"""Benchmark task schema: attribute records, the five-level taxonomy, and
the on-disk task/manifest formats every other module consumes.

A task file is one JSON document whose keys mirror the field names below.
Unknown keys are rejected in strict mode and warned about in lenient mode.
All loaded objects are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ParseError, SchemaError
from .vocab import Vocabulary, default_vocabulary

DEFAULT_QUALITY_THRESHOLD = 0.05

DIFFICULTIES = ("easy", "medium", "hard")

RESOLUTION_MIN = 256
RESOLUTION_MAX = 1024
RESOLUTION_STEP = 8

_TASK_KEYS = {
    "task_id",
    "level",
    "prompt",
    "reference_code",
    "ground_truth",
    "quality_threshold",
    "speedup_requirement",
    "latency_bound",
    "difficulty",
    "hardware_tag",
}

_ATTR_KEYS = {
    "pipeline_class",
    "model_id",
    "scheduler_class",
    "num_inference_steps",
    "resolution",
    "conditioning",
    "preprocessors",
    "accel_methods",
}


@dataclass(frozen=True, slots=True)
class Violation:
    """One broken attribute rule: which field, and why."""

    attribute: str
    rule: str

    def __str__(self) -> str:
        return f"{self.attribute}: {self.rule}"


@dataclass(frozen=True, slots=True)
class KeyAttributes:
    """The extractable configuration of a diffusion program."""

    pipeline_class: str
    model_id: str
    scheduler_class: str
    num_inference_steps: int
    resolution: tuple[int, int]
    conditioning: str
    preprocessors: frozenset[str] = frozenset()
    accel_methods: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pipeline_class": self.pipeline_class,
            "model_id": self.model_id,
            "scheduler_class": self.scheduler_class,
            "num_inference_steps": self.num_inference_steps,
            "resolution": list(self.resolution),
            "conditioning": self.conditioning,
            "preprocessors": sorted(self.preprocessors),
            "accel_methods": {
                m: dict(sorted(params.items()))
                for m, params in sorted(self.accel_methods.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KeyAttributes":
        missing = _ATTR_KEYS - set(data)
        if missing:
            raise SchemaError(
                f"ground_truth missing fields: {', '.join(sorted(missing))}",
                field=sorted(missing)[0],
            )
        unknown = set(data) - _ATTR_KEYS
        if unknown:
            raise SchemaError(
                f"ground_truth has unknown fields: {', '.join(sorted(unknown))}",
                field=sorted(unknown)[0],
            )
        res = data["resolution"]
        if not (isinstance(res, (list, tuple)) and len(res) == 2):
            raise SchemaError("resolution must be a [width, height] pair", field="resolution")
        return cls(
            pipeline_class=data["pipeline_class"],
            model_id=data["model_id"],
            scheduler_class=data["scheduler_class"],
            num_inference_steps=data["num_inference_steps"],
            resolution=(res[0], res[1]),
            conditioning=data["conditioning"],
            preprocessors=frozenset(data["preprocessors"]),
            accel_methods={m: dict(p) for m, p in data["accel_methods"].items()},
        )

    def without_acceleration(self) -> "KeyAttributes":
        """The reconstructed baseline: same pipeline, no acceleration."""
        return replace(self, accel_methods={})


def validate_attributes(
    attrs: KeyAttributes, vocab: Vocabulary | None = None
) -> list[Violation]:
    """Check every KeyAttributes invariant; empty list means valid.

    Total function: never raises, deterministic, and independent of the
    iteration order of the set-valued fields.
    """
    vocab = vocab or default_vocabulary()
    out: list[Violation] = []

    for fname in ("pipeline_class", "model_id", "scheduler_class", "conditioning"):
        value = getattr(attrs, fname)
        if value not in vocab.identifier_set(fname):
            out.append(Violation(fname, f"unknown identifier {value!r}"))

    steps = attrs.num_inference_steps
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        out.append(Violation("num_inference_steps", f"must be a positive integer, got {steps!r}"))

    for axis, value in zip(("width", "height"), attrs.resolution):
        if not isinstance(value, int) or isinstance(value, bool):
            out.append(Violation("resolution", f"{axis} must be an integer, got {value!r}"))
            continue
        if not (RESOLUTION_MIN <= value <= RESOLUTION_MAX):
            out.append(
                Violation(
                    "resolution",
                    f"{axis}={value} outside [{RESOLUTION_MIN}, {RESOLUTION_MAX}]",
                )
            )
        if value % RESOLUTION_STEP != 0:
            out.append(Violation("resolution", f"{axis}={value} not a multiple of {RESOLUTION_STEP}"))

    for name in sorted(attrs.preprocessors):
        if name not in vocab.preprocessors:
            out.append(Violation("preprocessors", f"unknown preprocessor {name!r}"))

    out.extend(validate_method_params(attrs.accel_methods, vocab))
    return out


def validate_method_params(
    methods: Mapping[str, Mapping[str, Any]], vocab: Vocabulary | None = None
) -> list[Violation]:
    """Range/vocabulary checks for an acceleration-method map alone."""
    vocab = vocab or default_vocabulary()
    out: list[Violation] = []
    for method in sorted(methods):
        params = methods[method]
        rules = vocab.method_params.get(method)
        if rules is None:
            out.append(Violation("accel_methods", f"unknown method {method!r}"))
            continue
        for pname in sorted(params):
            rule = rules.get(pname)
            if rule is None:
                out.append(
                    Violation("accel_methods", f"{method}: unknown parameter {pname!r}")
                )
                continue
            msg = rule.check(params[pname])
            if msg is not None:
                out.append(Violation("accel_methods", f"{method}: {msg}"))
        for required in sorted(set(rules) - set(params)):
            out.append(Violation("accel_methods", f"{method}: missing parameter {required!r}"))
    return out


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """One benchmark task."""

    task_id: str
    level: int
    prompt: str
    reference_code: str
    ground_truth: KeyAttributes
    quality_threshold: float = DEFAULT_QUALITY_THRESHOLD
    speedup_requirement: float | None = None
    latency_bound: float | None = None
    difficulty: str | None = None
    hardware_tag: str = "unspecified"

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "task_id": self.task_id,
            "level": self.level,
            "prompt": self.prompt,
            "reference_code": self.reference_code,
            "ground_truth": self.ground_truth.to_dict(),
            "quality_threshold": self.quality_threshold,
            "hardware_tag": self.hardware_tag,
        }
        if self.speedup_requirement is not None:
            data["speedup_requirement"] = self.speedup_requirement
        if self.latency_bound is not None:
            data["latency_bound"] = self.latency_bound
        if self.difficulty is not None:
            data["difficulty"] = self.difficulty
        return data


def _check_task(spec: TaskSpec, vocab: Vocabulary | None = None) -> None:
    if not isinstance(spec.level, int) or not (1 <= spec.level <= 5):
        raise SchemaError(f"level must be 1..5, got {spec.level!r}", field="level")
    if not spec.task_id:
        raise SchemaError("task_id must be non-empty", field="task_id")
    if not spec.prompt:
        raise SchemaError("prompt must be non-empty", field="prompt")
    if not (0.0 < spec.quality_threshold < 1.0):
        raise SchemaError(
            f"quality_threshold must be in (0, 1), got {spec.quality_threshold}",
            field="quality_threshold",
        )

    if spec.level <= 3:
        if spec.speedup_requirement is not None:
            raise SchemaError(
                "speedup_requirement only allowed at level 4", field="speedup_requirement"
            )
        if spec.latency_bound is not None:
            raise SchemaError("latency_bound only allowed at level 5", field="latency_bound")
        if spec.difficulty is not None:
            raise SchemaError("difficulty only allowed at levels 4-5", field="difficulty")
    elif spec.level == 4:
        if spec.speedup_requirement is None:
            raise SchemaError("speedup_requirement required at level 4", field="speedup_requirement")
        if spec.speedup_requirement <= 1.0:
            raise SchemaError(
                f"speedup_requirement must be > 1, got {spec.speedup_requirement}",
                field="speedup_requirement",
            )
        if spec.latency_bound is not None:
            raise SchemaError("latency_bound only allowed at level 5", field="latency_bound")
    else:  # level 5
        if spec.latency_bound is None:
            raise SchemaError("latency_bound required at level 5", field="latency_bound")
        if spec.latency_bound <= 0:
            raise SchemaError(
                f"latency_bound must be > 0, got {spec.latency_bound}", field="latency_bound"
            )
        if spec.speedup_requirement is not None:
            raise SchemaError("speedup_requirement only allowed at level 4", field="speedup_requirement")

    if spec.level >= 4:
        if spec.difficulty not in DIFFICULTIES:
            raise SchemaError(
                f"difficulty must be one of {DIFFICULTIES} at levels 4-5, got {spec.difficulty!r}",
                field="difficulty",
            )

    violations = validate_attributes(spec.ground_truth, vocab)
    if violations:
        first = violations[0]
        raise SchemaError(
            f"ground_truth invalid: {'; '.join(str(v) for v in violations)}",
            field=f"ground_truth.{first.attribute}",
        )


def task_from_dict(
    data: Mapping[str, Any], *, strict: bool = True, vocab: Vocabulary | None = None
) -> TaskSpec:
    unknown = set(data) - _TASK_KEYS
    if unknown:
        if strict:
            raise SchemaError(
                f"unknown task keys: {', '.join(sorted(unknown))}", field=sorted(unknown)[0]
            )
        warnings.warn(f"ignoring unknown task keys: {sorted(unknown)}", stacklevel=2)
    missing = {"task_id", "level", "prompt", "reference_code", "ground_truth"} - set(data)
    if missing:
        raise SchemaError(
            f"missing task keys: {', '.join(sorted(missing))}", field=sorted(missing)[0]
        )
    spec = TaskSpec(
        task_id=data["task_id"],
        level=data["level"],
        prompt=data["prompt"],
        reference_code=data["reference_code"],
        ground_truth=KeyAttributes.from_dict(data["ground_truth"]),
        quality_threshold=data.get("quality_threshold", DEFAULT_QUALITY_THRESHOLD),
        speedup_requirement=data.get("speedup_requirement"),
        latency_bound=data.get("latency_bound"),
        difficulty=data.get("difficulty"),
        hardware_tag=data.get("hardware_tag", "unspecified"),
    )
    _check_task(spec, vocab)
    return spec


def load_task(path: str | Path, *, strict: bool = True) -> TaskSpec:
    """Load one task file, enforcing every schema invariant.

    Raises ParseError for malformed JSON and SchemaError (naming the field)
    for invariant violations.
    """
    text = Path(path).read_text("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: task document must be a JSON object")
    return task_from_dict(data, strict=strict)


def save_task(spec: TaskSpec, path: str | Path) -> None:
    Path(path).write_text(canonical_json(spec.to_dict()) + "\n", "utf-8")


def canonical_json(data: Any) -> str:
    """Deterministic JSON used for every artifact we persist."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Manifest: ordered task paths plus a level index.


@dataclass(frozen=True, slots=True)
class ManifestEntry:
    path: str
    level: int
    task_id: str


@dataclass(frozen=True, slots=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def level_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for entry in self.entries:
            counts[entry.level] = counts.get(entry.level, 0) + 1
        return dict(sorted(counts.items()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "tasks": [
                {"path": e.path, "level": e.level, "task_id": e.task_id}
                for e in self.entries
            ],
            "level_counts": {str(k): v for k, v in self.level_counts().items()},
        }


def manifest_from_entries(entries: Iterable[ManifestEntry]) -> Manifest:
    return Manifest(entries=tuple(entries))


def load_manifest(path: str | Path) -> Manifest:
    text = Path(path).read_text("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or "tasks" not in data:
        raise ParseError(f"{path}: manifest must be an object with a 'tasks' list")
    entries = []
    for i, row in enumerate(data["tasks"]):
        for key in ("path", "level", "task_id"):
            if key not in row:
                raise SchemaError(f"manifest entry {i} missing {key!r}", field=key)
        entries.append(ManifestEntry(path=row["path"], level=row["level"], task_id=row["task_id"]))
    manifest = Manifest(entries=tuple(entries))
    declared = data.get("level_counts")
    if declared is not None:
        actual = {str(k): v for k, v in manifest.level_counts().items()}
        if declared != actual:
            raise SchemaError(
                f"manifest level_counts {declared} do not match entries {actual}",
                field="level_counts",
            )
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(canonical_json(manifest.to_dict()) + "\n", "utf-8")


def load_manifest_tasks(
    manifest: Manifest, root: str | Path, *, strict: bool = True
) -> list[TaskSpec]:
    root = Path(root)
    return [load_task(root / e.path, strict=strict) for e in manifest.entries]
