"""Closed identifier vocabularies and per-method parameter rules.

The vocabulary is versioned data (``data/vocab.json``), not code, so new
pipelines or schedulers are a data change. Identifiers are matched exactly
and case-preserving; anything unknown is rejected at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping


@dataclass(frozen=True)
class ParamRule:
    name: str
    kind: str  # "int" or "float"
    min: float
    max: float | None = None
    max_exclusive: bool = False

    def check(self, value: Any) -> str | None:
        """Return a violation message, or None when the value is in range."""
        if self.kind == "int":
            if not isinstance(value, int) or isinstance(value, bool):
                return f"{self.name} must be an integer, got {value!r}"
        else:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return f"{self.name} must be a number, got {value!r}"
        if value < self.min:
            return f"{self.name}={value} below minimum {self.min}"
        if self.max is not None:
            if self.max_exclusive and value >= self.max:
                return f"{self.name}={value} outside [{self.min}, {self.max})"
            if not self.max_exclusive and value > self.max:
                return f"{self.name}={value} above maximum {self.max}"
        return None


@dataclass(frozen=True)
class Vocabulary:
    version: int
    pipeline_class: frozenset[str]
    model_id: frozenset[str]
    scheduler_class: frozenset[str]
    conditioning: frozenset[str]
    preprocessors: frozenset[str]
    method_params: Mapping[str, Mapping[str, ParamRule]]

    @property
    def methods(self) -> frozenset[str]:
        return frozenset(self.method_params)

    def identifier_set(self, field: str) -> frozenset[str]:
        return getattr(self, field)


def _load_raw() -> dict:
    text = resources.files("accelbench").joinpath("data/vocab.json").read_text("utf-8")
    return json.loads(text)


@lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    raw = _load_raw()
    methods: dict[str, dict[str, ParamRule]] = {}
    for method, params in raw["accel_methods"].items():
        rules = {}
        for pname, spec in params.items():
            rules[pname] = ParamRule(
                name=pname,
                kind=spec["type"],
                min=spec["min"],
                max=spec.get("max"),
                max_exclusive=spec.get("max_exclusive", False),
            )
        methods[method] = rules
    return Vocabulary(
        version=raw["version"],
        pipeline_class=frozenset(raw["pipeline_class"]),
        model_id=frozenset(raw["model_id"]),
        scheduler_class=frozenset(raw["scheduler_class"]),
        conditioning=frozenset(raw["conditioning"]),
        preprocessors=frozenset(raw["preprocessors"]),
        method_params=methods,
    )
