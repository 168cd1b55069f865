"""Execution backend that shells out to the metrics harness.

The harness contract: one invocation per run, a single JSON metrics record
on stdout (schema below), exit code zero unless the harness itself broke
(a crashing candidate is still a successful harness run, reported as
status=runtime_failure). Runs are serialized per hardware tag: at most one
concurrent execution per device.

Record schema (``accelbench.metrics_record/v1``)::

    {"schema": "accelbench.metrics_record/v1",
     "status": "ok" | "runtime_failure",
     "latency_s": [seconds, ...],
     "quality": [score, ...],
     "failure_text": null | "traceback text",
     "hardware_tag": "...",
     "seed": 0}
"""

from __future__ import annotations

import json
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from ..errors import BackendUnavailable, ParseError, SchemaError
from .base import BackendCapabilities, CheckResult, RunResult

RECORD_SCHEMA = "accelbench.metrics_record/v1"


@dataclass(frozen=True, slots=True)
class MetricsRecord:
    status: str
    latency_s: tuple[float, ...]
    quality: tuple[float, ...]
    failure_text: str | None
    hardware_tag: str
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": RECORD_SCHEMA,
            "status": self.status,
            "latency_s": list(self.latency_s),
            "quality": list(self.quality),
            "failure_text": self.failure_text,
            "hardware_tag": self.hardware_tag,
            "seed": self.seed,
        }


def parse_metrics_record(text: str) -> MetricsRecord:
    """Parse and validate one harness record.

    Raises ParseError for non-JSON input and SchemaError for structural
    violations (wrong schema tag, inconsistent lists, missing failure text).
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"metrics record is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("metrics record must be a JSON object")
    if data.get("schema") != RECORD_SCHEMA:
        raise SchemaError(f"unexpected record schema {data.get('schema')!r}", field="schema")
    status = data.get("status")
    if status not in ("ok", "runtime_failure"):
        raise SchemaError(f"unknown status {status!r}", field="status")
    latency = tuple(float(x) for x in data.get("latency_s", []))
    quality = tuple(float(x) for x in data.get("quality", []))
    failure_text = data.get("failure_text")
    if status == "ok":
        if not latency or not quality:
            raise SchemaError("ok records need non-empty latency and quality lists", field="latency_s")
        if len(latency) != len(quality):
            raise SchemaError("latency and quality lists must have equal length", field="quality")
    else:
        if not failure_text:
            raise SchemaError("runtime_failure records need failure text", field="failure_text")
    if "hardware_tag" not in data or "seed" not in data:
        raise SchemaError("record needs hardware_tag and seed", field="hardware_tag")
    return MetricsRecord(
        status=status,
        latency_s=latency,
        quality=quality,
        failure_text=failure_text,
        hardware_tag=data["hardware_tag"],
        seed=int(data["seed"]),
    )


def serialize_metrics_record(record: MetricsRecord) -> str:
    """Canonical single-line form; parse(serialize(r)) == r."""
    return json.dumps(record.to_dict(), sort_keys=True)


_TAG_LOCKS: dict[str, threading.Lock] = {}
_TAG_LOCKS_GUARD = threading.Lock()


def _lock_for(tag: str) -> threading.Lock:
    with _TAG_LOCKS_GUARD:
        if tag not in _TAG_LOCKS:
            _TAG_LOCKS[tag] = threading.Lock()
        return _TAG_LOCKS[tag]


class SubprocessBackend:
    """Runs candidates through the external metrics harness."""

    def __init__(
        self,
        harness_cmd: Sequence[str],
        *,
        prompts_path: str | Path,
        hardware_tag: str = "local",
        timeout: float = 600.0,
    ) -> None:
        if not harness_cmd:
            raise BackendUnavailable("empty harness command")
        self.harness_cmd = list(harness_cmd)
        self.prompts_path = str(prompts_path)
        self.timeout = timeout
        self.capabilities = BackendCapabilities(
            supports_quality=True, supports_latency=True, hardware_tag=hardware_tag
        )

    def _invoke(self, source: str, sample_count: int, seed: int) -> MetricsRecord:
        with tempfile.TemporaryDirectory(prefix="accelbench-cand-") as tmp:
            candidate = Path(tmp) / "candidate.py"
            candidate.write_text(source, "utf-8")
            cmd = self.harness_cmd + [
                str(candidate),
                self.prompts_path,
                "--n",
                str(sample_count),
                "--seed",
                str(seed),
            ]
            with _lock_for(self.capabilities.hardware_tag):
                try:
                    proc = subprocess.run(
                        cmd, capture_output=True, text=True, timeout=self.timeout
                    )
                except FileNotFoundError as exc:
                    raise BackendUnavailable(f"harness not found: {exc}") from exc
                except subprocess.TimeoutExpired as exc:
                    raise BackendUnavailable(f"harness timed out after {self.timeout}s") from exc
            if proc.returncode != 0:
                raise BackendUnavailable(
                    f"harness exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            try:
                return parse_metrics_record(proc.stdout.strip())
            except (ParseError, SchemaError) as exc:
                raise BackendUnavailable(f"unparseable harness output: {exc}") from exc

    def check(self, source: str, attrs: Mapping[str, Any]) -> CheckResult:
        if not source or not source.strip():
            return CheckResult(False, "RuntimeError: empty candidate source")
        record = self._invoke(source, 1, 0)
        if record.status == "ok":
            return CheckResult(True, None)
        return CheckResult(False, record.failure_text)

    def run(self, source: str, attrs: Any, sample_count: int, seed: int) -> RunResult:
        record = self._invoke(source, sample_count, seed)
        if record.status != "ok":
            return RunResult(status="runtime_failure", failure_text=record.failure_text)
        return RunResult(
            status="ok",
            quality=record.quality,
            latency=record.latency_s,
            wall_clock=float(sum(record.latency_s)),
        )
