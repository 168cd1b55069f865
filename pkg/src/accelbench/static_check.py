"""Stage 1 of evaluation: rule-based attribute extraction and matching.

Extraction is lexical and structural, never executes the candidate, and is
driven by a rule data file so new pipelines need no code change. Rules are
ordered regular-expression matchers over comment-stripped source; when two
captures conflict, the later occurrence in source order wins (assignments
override), and ties fall back to rule order.

Rule file format (``data/extraction_rules.json``), one entry kind per
attribute shape:

* ``scalar_attributes``: ordered ``patterns`` with one capture group and a
  ``normalize`` step. Worked example, ``num_inference_steps``: the pattern
  ``\\bnum_inference_steps\\s*=\\s*(-?\\d+)`` applied to
  ``pipe(prompt, num_inference_steps=50)`` captures ``"50"`` and the
  ``int`` normalizer yields ``50``.
* ``pair_attributes``: two capture channels (``first``/``second``) plus an
  optional ``joint`` two-group pattern; ``resolution`` combines
  ``width=512`` and ``height=512`` into ``(512, 512)`` and is reported
  only when both halves were seen.
* ``priority_attributes``: ordered value buckets; the first bucket with
  any matching pattern wins. ``conditioning`` resolves ``init_image`` to
  ``img2img`` before falling back to ``prompt=`` implying ``text2img``.
* ``set_attributes``: every match is unioned. ``{PREPROCESSORS}`` inside a
  pattern expands to the preprocessor vocabulary alternation, so
  ``canny_edge(image)`` adds ``canny_edge`` to the set.
* ``methods``: per acceleration method, ``enable`` marker patterns and per
  parameter capture patterns. A parameterized method is reported present
  only when at least one parameter was captured (a bare marker is recorded
  as a diagnostic); ``half_precision`` has no parameters, so markers alone
  enable it. Captured values are reported as-is; range checking belongs to
  the execution probe, which is how broken code (for example
  ``ratio=1.5``) surfaces as a runtime failure rather than a mismatch.

Identifier captures are canonicalized against the closed vocabulary;
unknown identifiers are recorded as diagnostics and the attribute stays
absent.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import AmbiguityError
from .vocab import Vocabulary, default_vocabulary

FLOAT_TOLERANCE = 1e-9

_Capture = tuple[int, int, Any]  # (position, rule order, value)


def strip_comments(source: str) -> str:
    """Remove ``#`` comments outside single/double-quoted strings.

    Line-oriented; escape sequences are honored, triple-quoted strings are
    treated as ordinary quotes (good enough for stage-1 lexical matching).
    """
    out_lines = []
    for line in source.splitlines():
        quote = None
        escaped = False
        cut = len(line)
        for i, ch in enumerate(line):
            if escaped:
                escaped = False
                continue
            if ch == "\\":
                escaped = True
                continue
            if quote:
                if ch == quote:
                    quote = None
            elif ch in ("'", '"'):
                quote = ch
            elif ch == "#":
                cut = i
                break
        out_lines.append(line[:cut])
    return "\n".join(out_lines)


@dataclass(frozen=True)
class Mismatch:
    attribute: str
    expected: Any
    found: Any  # None means absent

    def __str__(self) -> str:
        found = "absent" if self.found is None else repr(self.found)
        return f"{self.attribute}: expected {self.expected!r}, found {found}"


@dataclass(frozen=True)
class MatchVerdict:
    passed: bool
    mismatches: tuple[Mismatch, ...] = ()
    extraneous: tuple[str, ...] = ()


@dataclass
class RuleSet:
    """Compiled extraction rules."""

    raw: dict
    vocab: Vocabulary
    scalar: dict[str, dict] = field(default_factory=dict)
    pair: dict[str, dict] = field(default_factory=dict)
    priority: dict[str, list] = field(default_factory=dict)
    sets: dict[str, list] = field(default_factory=dict)
    methods: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], vocab: Vocabulary | None = None) -> "RuleSet":
        vocab = vocab or default_vocabulary()
        rs = cls(raw=dict(raw), vocab=vocab)
        expand = {"PREPROCESSORS": "|".join(sorted(vocab.preprocessors))}

        def compile_all(patterns: list[str]) -> list[re.Pattern]:
            return [re.compile(p.format(**expand)) for p in patterns]

        for name, spec in raw["scalar_attributes"].items():
            rs.scalar[name] = {
                "patterns": compile_all(spec["patterns"]),
                "normalize": spec["normalize"],
                "vocab_field": spec.get("vocab_field"),
            }
        for name, spec in raw["pair_attributes"].items():
            rs.pair[name] = {
                "first": compile_all(spec["first"]),
                "second": compile_all(spec["second"]),
                "joint": compile_all(spec.get("joint", [])),
                "normalize": spec["normalize"],
            }
        for name, buckets in raw["priority_attributes"].items():
            rs.priority[name] = [
                {"value": b["value"], "patterns": compile_all(b["patterns"])}
                for b in buckets
            ]
        for name, spec in raw["set_attributes"].items():
            rs.sets[name] = compile_all(spec["patterns"])
        for method, spec in raw["methods"].items():
            rs.methods[method] = {
                "enable": compile_all(spec["enable"]),
                "params": {
                    pname: {
                        "patterns": compile_all(p["patterns"]),
                        "normalize": p["normalize"],
                    }
                    for pname, p in spec["params"].items()
                },
            }
        return rs

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary | None = None) -> "RuleSet":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")), vocab)


@lru_cache(maxsize=1)
def default_rules() -> RuleSet:
    text = resources.files("accelbench").joinpath("data/extraction_rules.json").read_text("utf-8")
    return RuleSet.from_dict(json.loads(text))


def _normalize(kind: str, raw: str, rules: RuleSet, vocab_field: str | None, diagnostics: list[str]):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "vocab":
        if raw in rules.vocab.identifier_set(vocab_field):
            return raw
        diagnostics.append(f"{vocab_field}: unknown identifier {raw!r}")
        return None
    if kind == "basename_vocab":
        candidate = raw.rsplit("/", 1)[-1]
        if candidate in rules.vocab.identifier_set(vocab_field):
            return candidate
        diagnostics.append(f"{vocab_field}: unknown identifier {raw!r}")
        return None
    raise ValueError(f"unknown normalizer {kind!r}")


def _collect(patterns: list[re.Pattern], text: str, order_base: int = 0) -> list[_Capture]:
    captures: list[_Capture] = []
    for order, pattern in enumerate(patterns, start=order_base):
        for m in pattern.finditer(text):
            captures.append((m.start(1) if m.groups() else m.start(), order, m.group(1) if m.groups() else m.group(0)))
    return captures


def _resolve_last(attribute: str, captures: list[_Capture]) -> Any:
    """Pick the winning capture: max source position, then max rule order."""
    if not captures:
        return None
    captures = sorted(captures, key=lambda c: (c[0], c[1]))
    top_pos, top_order, top_value = captures[-1]
    clashes = [c for c in captures if c[0] == top_pos and c[1] == top_order and c[2] != top_value]
    if clashes:
        raise AmbiguityError(
            f"{attribute}: conflicting captures {top_value!r} vs {clashes[0][2]!r} at position {top_pos}"
        )
    return top_value


def extract_attributes(
    source: str, rules: RuleSet | None = None
) -> tuple[dict[str, Any], list[str]]:
    """Extract the attribute subset visible in candidate source text.

    Returns the found attributes plus diagnostics (unknown identifiers,
    ambiguous or partial captures). Pure: identical source yields identical
    results, and comments never contribute captures.
    """
    rules = rules or default_rules()
    text = strip_comments(source)
    found: dict[str, Any] = {}
    diagnostics: list[str] = []

    for name, spec in rules.scalar.items():
        captures = _collect(spec["patterns"], text)
        normalized: list[_Capture] = []
        for pos, order, raw in captures:
            value = _normalize(spec["normalize"], raw, rules, spec["vocab_field"], diagnostics)
            if value is not None:
                normalized.append((pos, order, value))
        value = _resolve_last(name, normalized)
        if value is not None:
            found[name] = value

    for name, spec in rules.pair.items():
        first = _collect(spec["first"], text)
        second = _collect(spec["second"], text)
        for pattern in spec["joint"]:
            for m in pattern.finditer(text):
                first.append((m.start(1), len(spec["first"]), m.group(1)))
                second.append((m.start(2), len(spec["second"]), m.group(2)))
        a = _resolve_last(f"{name}[0]", first)
        b = _resolve_last(f"{name}[1]", second)
        if a is not None and b is not None:
            found[name] = (int(a), int(b))
        elif a is not None or b is not None:
            diagnostics.append(f"{name}: partial capture (one of the pair missing)")

    for name, buckets in rules.priority.items():
        for bucket in buckets:
            if any(p.search(text) for p in bucket["patterns"]):
                found[name] = bucket["value"]
                break

    for name, patterns in rules.sets.items():
        values = {m.group(1) for p in patterns for m in p.finditer(text)}
        if values:
            found[name] = frozenset(values)

    methods: dict[str, dict[str, Any]] = {}
    for method, spec in rules.methods.items():
        params: dict[str, Any] = {}
        for pname, pspec in spec["params"].items():
            captures = _collect(pspec["patterns"], text)
            normalized = [
                (pos, order, _normalize(pspec["normalize"], raw, rules, None, diagnostics))
                for pos, order, raw in captures
            ]
            value = _resolve_last(f"{method}.{pname}", normalized)
            if value is not None:
                params[pname] = value
        enabled_marker = any(p.search(text) for p in spec["enable"])
        if spec["params"]:
            if params:
                methods[method] = params
            elif enabled_marker:
                diagnostics.append(f"{method}: marker present but no parameters captured")
        elif enabled_marker:
            methods[method] = {}
    if methods:
        found["accel_methods"] = methods

    return found, diagnostics


def attrs_to_partial(attrs) -> dict[str, Any]:
    """Project a KeyAttributes record into the extraction dict shape."""
    return {
        "pipeline_class": attrs.pipeline_class,
        "model_id": attrs.model_id,
        "scheduler_class": attrs.scheduler_class,
        "num_inference_steps": attrs.num_inference_steps,
        "resolution": tuple(attrs.resolution),
        "conditioning": attrs.conditioning,
        "preprocessors": frozenset(attrs.preprocessors),
        "accel_methods": {m: dict(p) for m, p in attrs.accel_methods.items()},
    }


def _values_equal(expected: Any, found: Any) -> bool:
    if isinstance(expected, float) or isinstance(found, float):
        try:
            return abs(float(expected) - float(found)) <= FLOAT_TOLERANCE
        except (TypeError, ValueError):
            return False
    return expected == found


def match_attributes(found: Mapping[str, Any], truth) -> MatchVerdict:
    """Exact-match every ground-truth component; tolerate extraneous code.

    ``truth`` is a KeyAttributes record. Every truth field must be present
    in ``found`` with the same canonical value (integers exact, floats
    within 1e-9). Attributes or methods present only in ``found`` are
    listed as extraneous and never fail the verdict.
    """
    mismatches: list[Mismatch] = []
    extraneous: list[str] = []

    for name in ("pipeline_class", "model_id", "scheduler_class", "num_inference_steps", "conditioning"):
        expected = getattr(truth, name)
        got = found.get(name)
        if got is None:
            mismatches.append(Mismatch(name, expected, None))
        elif not _values_equal(expected, got):
            mismatches.append(Mismatch(name, expected, got))

    expected_res = tuple(truth.resolution)
    got_res = found.get("resolution")
    if got_res is None:
        mismatches.append(Mismatch("resolution", expected_res, None))
    elif tuple(got_res) != expected_res:
        mismatches.append(Mismatch("resolution", expected_res, tuple(got_res)))

    found_pre = set(found.get("preprocessors", frozenset()))
    for name in sorted(truth.preprocessors):
        if name not in found_pre:
            mismatches.append(Mismatch("preprocessors", name, None))
    for name in sorted(found_pre - set(truth.preprocessors)):
        extraneous.append(f"preprocessors:{name}")

    found_methods = found.get("accel_methods", {})
    for method in sorted(truth.accel_methods):
        expected_params = truth.accel_methods[method]
        got_params = found_methods.get(method)
        if got_params is None:
            mismatches.append(Mismatch(f"accel_methods.{method}", dict(expected_params), None))
            continue
        for pname in sorted(expected_params):
            if pname not in got_params:
                mismatches.append(
                    Mismatch(f"accel_methods.{method}.{pname}", expected_params[pname], None)
                )
            elif not _values_equal(expected_params[pname], got_params[pname]):
                mismatches.append(
                    Mismatch(
                        f"accel_methods.{method}.{pname}",
                        expected_params[pname],
                        got_params[pname],
                    )
                )
    for method in sorted(set(found_methods) - set(truth.accel_methods)):
        extraneous.append(f"accel_methods:{method}")

    return MatchVerdict(
        passed=not mismatches, mismatches=tuple(mismatches), extraneous=tuple(extraneous)
    )
