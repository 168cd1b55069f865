from .base import BackendCapabilities, CheckResult, ExecutionBackend, RunResult
from .sim import SimBackend, SimLandscape, max_feasible_speedup
from .subproc import (
    MetricsRecord,
    SubprocessBackend,
    parse_metrics_record,
    serialize_metrics_record,
)

__all__ = [
    "BackendCapabilities",
    "CheckResult",
    "ExecutionBackend",
    "RunResult",
    "SimBackend",
    "SimLandscape",
    "max_feasible_speedup",
    "MetricsRecord",
    "SubprocessBackend",
    "parse_metrics_record",
    "serialize_metrics_record",
]
