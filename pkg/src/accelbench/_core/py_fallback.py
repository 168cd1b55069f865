"""Pure-Python implementation of the landscape composition kernels.

This is the fallback selected when the compiled extension is absent (or
when ``ACCELBENCH_PURE_PYTHON=1``). The compiled module performs the same
arithmetic in the same order, so both paths produce bit-identical floats.
"""

from __future__ import annotations


def compose_effects(
    q0: float,
    k_tm: float,
    k_fr: float,
    k_ga: float,
    k_st: float,
    fp16_mult: float,
    fp16_qfrac: float,
    merge_ratio: float,
    cache_interval: int,
    gate_step: int,
    steps: int,
    n_base: int,
    fp16: bool,
) -> tuple[float, float]:
    """Composed (speed multiplier, quality delta) of one configuration.

    Speed multipliers compose multiplicatively and quality deltas add; the
    identity configuration (ratio 0, interval 1, gate at the last step,
    baseline steps, full precision) maps to exactly (1.0, 0.0).
    """
    mult = 1.0
    delta = 0.0
    if merge_ratio > 0.0:
        mult *= 1.0 / (1.0 - 0.5 * merge_ratio)
        delta += -k_tm * (merge_ratio * merge_ratio)
    if cache_interval > 1:
        mult *= 1.0 + 0.6 * (1.0 - 1.0 / cache_interval)
        delta += -k_fr * (cache_interval - 1.0) / cache_interval
    gate_frac = 1.0 - gate_step / steps
    if gate_frac > 0.0:
        mult *= 1.0 + 0.3 * gate_frac
        delta += -k_ga * (gate_frac * gate_frac)
    if fp16:
        mult *= fp16_mult
        delta += -fp16_qfrac * q0
    if steps < n_base:
        mult *= n_base / steps
        step_frac = 1.0 - steps / n_base
        delta += -k_st * (step_frac * step_frac)
    return mult, delta


def scan_max_speedup(
    q0: float,
    delta_bound: float,
    k_tm: float,
    k_fr: float,
    k_ga: float,
    k_st: float,
    fp16_mult: float,
    fp16_qfrac: float,
    merge_ratios: tuple[float, ...],
    cache_intervals: tuple[int, ...],
    steps_options: tuple[int, ...],
    n_base: int,
    allow_fp16: bool,
    allow_gate: bool = True,
) -> tuple[float, tuple[float, int, int, int, int]]:
    """Exhaustive scan of the discrete configuration grid.

    Returns the largest composed speed multiplier whose total quality loss
    stays within ``delta_bound * q0``, together with the winning
    configuration ``(merge_ratio, cache_interval, gate_step, steps, fp16)``.
    Gate steps range over 1..steps. Each grid point is composed with the
    exact arithmetic of compose_effects, so scan results equal per-config
    composition bit for bit; first-found wins ties, and the iteration order
    (steps, ratio, interval, fp16, gate) is part of the contract.
    """
    budget = -(delta_bound * q0)
    best_mult = 0.0
    best = (0.0, 1, n_base, n_base, 0)
    fp16_options = (0, 1) if allow_fp16 else (0,)
    for steps in steps_options:
        gate_range = range(1, steps + 1) if allow_gate else range(steps, steps + 1)
        for ratio in merge_ratios:
            for interval in cache_intervals:
                for use_fp16 in fp16_options:
                    for gate_step in gate_range:
                        mult, total_delta = compose_effects(
                            q0, k_tm, k_fr, k_ga, k_st, fp16_mult, fp16_qfrac,
                            ratio, interval, gate_step, steps, n_base,
                            bool(use_fp16),
                        )
                        if total_delta >= budget and mult > best_mult:
                            best_mult = mult
                            best = (ratio, interval, gate_step, steps, use_fp16)
    return best_mult, best
