"""Execution backend abstraction.

A backend turns a candidate (source text plus its extracted attributes)
into per-sample latency and quality measurements. The simulated backend is
pure and seed-repeatable; the subprocess backend shells out to the metrics
harness and serializes runs per hardware tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Protocol, runtime_checkable


@dataclass(frozen=True, slots=True)
class BackendCapabilities:
    supports_quality: bool
    supports_latency: bool
    hardware_tag: str


@dataclass(frozen=True, slots=True)
class RunResult:
    """Outcome of executing one candidate for N samples."""

    status: str  # "ok" or "runtime_failure"
    quality: tuple[float, ...] = ()
    latency: tuple[float, ...] = ()
    failure_text: str | None = None
    wall_clock: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True, slots=True)
class CheckResult:
    """Runnability probe outcome; failure text doubles as the debug signal."""

    ok: bool
    error_text: str | None = None


@runtime_checkable
class ExecutionBackend(Protocol):
    capabilities: BackendCapabilities

    def check(self, source: str, attrs: Mapping[str, Any]) -> CheckResult:
        """Probe whether a candidate would run at all (partial attrs allowed)."""
        ...

    def run(
        self, source: str, attrs: Any, sample_count: int, seed: int
    ) -> RunResult:
        """Execute the candidate for ``sample_count`` samples."""
        ...
