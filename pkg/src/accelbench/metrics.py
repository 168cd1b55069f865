"""Every scalar formula in one place.

Quality loss L and speedup U are mean-based ratios over paired sample
lists; the achievement rate caps the speedup ratio at 1; the fitness score
is a weighted sum of a capped speed ratio and a positive-part quality
penalty. Failures are classified into five modes tied to the evaluation
stage that rejected the candidate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegenerateInput, EmptyInput, InvariantError


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


@dataclass(frozen=True, slots=True)
class SampleMeasurements:
    """Paired baseline/accelerated quality scores and wall times."""

    quality_base: tuple[float, ...]
    quality_acc: tuple[float, ...]
    time_base: tuple[float, ...]
    time_acc: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.quality_base)
        if n < 1:
            raise DegenerateInput("need at least one sample")
        for name in ("quality_acc", "time_base", "time_acc"):
            if len(getattr(self, name)) != n:
                raise DegenerateInput(f"{name} length differs from quality_base ({n})")
        if any(t <= 0 for t in self.time_base) or any(t <= 0 for t in self.time_acc):
            raise DegenerateInput("all times must be positive")
        if _mean(self.quality_base) <= 0:
            raise DegenerateInput("mean baseline quality must be positive")

    @classmethod
    def from_lists(
        cls,
        quality_base: Iterable[float],
        quality_acc: Iterable[float],
        time_base: Iterable[float],
        time_acc: Iterable[float],
    ) -> "SampleMeasurements":
        return cls(
            tuple(quality_base), tuple(quality_acc), tuple(time_base), tuple(time_acc)
        )


def quality_loss(m: SampleMeasurements) -> float:
    """Relative drop of mean accelerated quality against the baseline.

    Negative values mean the accelerated run scored higher than baseline.
    """
    base = _mean(m.quality_base)
    if base <= 0:
        raise DegenerateInput("mean baseline quality must be positive")
    return (base - _mean(m.quality_acc)) / base


def speedup(m: SampleMeasurements) -> float:
    """Mean baseline latency over mean accelerated latency."""
    acc = _mean(m.time_acc)
    if acc <= 0:
        raise DegenerateInput("mean accelerated time must be positive")
    return _mean(m.time_base) / acc


def achievement_rate(u: float, u_req: float) -> float:
    """min(U / U_req, 1): continuous credit toward a speedup target."""
    if u_req <= 0:
        raise DegenerateInput(f"u_req must be positive, got {u_req}")
    return max(0.0, min(u / u_req, 1.0))


def pass_rate(verdicts: Sequence[bool]) -> float:
    """Fraction of passing verdicts."""
    if not verdicts:
        raise EmptyInput("pass_rate needs at least one verdict")
    return sum(1 for v in verdicts if v) / len(verdicts)


def weighted_pass_rate(per_level: dict[int, Sequence[bool]]) -> float:
    """Task-weighted average across levels: total passes over total tasks."""
    total = sum(len(v) for v in per_level.values())
    if total == 0:
        raise EmptyInput("weighted_pass_rate needs at least one verdict")
    passed = sum(sum(1 for x in v if x) for v in per_level.values())
    return passed / total


@dataclass(frozen=True, slots=True)
class FitnessWeights:
    """Weighted-sum coefficients for the candidate fitness score.

    Defaults make a full quality-bound violation (L = delta = 0.05) cancel a
    25% speedup surplus; all selection behaviour depends only on ordering,
    so these are configuration, not calibration.
    """

    w_speed: float = 1.0
    w_quality: float = 5.0
    speed_cap: float = 1.5


DEFAULT_WEIGHTS = FitnessWeights()


def fitness(
    quality_loss_value: float,
    u: float | None = None,
    *,
    u_req: float | None = None,
    tau: float | None = None,
    tau_max: float | None = None,
    weights: FitnessWeights = DEFAULT_WEIGHTS,
) -> float:
    """Scalar fitness of a candidate given its measured L and speed.

    The speed ratio is U/U_req when a speedup target exists, tau_max/tau
    when a latency bound exists, and U itself otherwise. Quality
    improvements (negative L) earn no bonus.
    """
    if tau_max is not None:
        if tau is None or tau <= 0:
            raise DegenerateInput("latency fitness needs a positive tau measurement")
        ratio = tau_max / tau
    else:
        if u is None:
            raise DegenerateInput("fitness needs a speedup measurement")
        ratio = u / u_req if u_req else u
    return weights.w_speed * min(ratio, weights.speed_cap) - weights.w_quality * max(
        quality_loss_value, 0.0
    )


class ErrorMode(enum.Enum):
    """The five failure modes, keyed to the evaluation stage."""

    COMPILE = "compile_error"
    KEY_ATTRIBUTES = "key_attributes_error"
    ABSOLUTE_QUALITY = "absolute_quality_error"
    RELATIVE_QUALITY = "relative_quality_error"
    RELATIVE_SPEED = "relative_speed_error"


def classify_error(
    *,
    stage1_runtime_failure: bool = False,
    stage1_mismatch: bool = False,
    stage2_failed: bool = False,
    stage3_quality_failed: bool = False,
    stage3_speed_failed: bool = False,
) -> frozenset[ErrorMode]:
    """Map stage outcomes of a failing evaluation to error modes.

    Earlier stages short-circuit later labels. The two stage-3 labels may
    co-occur; every other label is exclusive. Raises InvariantError when
    no stage failed (a passing evaluation has no error modes).
    """
    if stage1_runtime_failure:
        return frozenset({ErrorMode.COMPILE})
    if stage1_mismatch:
        return frozenset({ErrorMode.KEY_ATTRIBUTES})
    if stage2_failed:
        return frozenset({ErrorMode.ABSOLUTE_QUALITY})
    modes = set()
    if stage3_quality_failed:
        modes.add(ErrorMode.RELATIVE_QUALITY)
    if stage3_speed_failed:
        modes.add(ErrorMode.RELATIVE_SPEED)
    if not modes:
        raise InvariantError("classify_error called without any failing stage")
    return frozenset(modes)
