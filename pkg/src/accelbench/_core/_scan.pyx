# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled grid-scan kernel.

Mirrors py_fallback.scan_max_speedup exactly: same iteration order, same
operation order, no fused contraction (see setup.py flags), so results are
bit-identical to the pure-Python path.
"""


def scan_max_speedup(
    double q0,
    double delta_bound,
    double k_tm,
    double k_fr,
    double k_ga,
    double k_st,
    double fp16_mult,
    double fp16_qfrac,
    tuple merge_ratios,
    tuple cache_intervals,
    tuple steps_options,
    long n_base,
    bint allow_fp16,
    bint allow_gate=True,
):
    cdef double budget = -(delta_bound * q0)
    cdef double best_mult = 0.0
    cdef double best_ratio = 0.0
    cdef long best_interval = 1
    cdef long best_gate = n_base
    cdef long best_steps = n_base
    cdef int best_fp16 = 0

    cdef list ratios = [float(r) for r in merge_ratios]
    cdef list intervals = [int(k) for k in cache_intervals]
    cdef list steps_list = [int(n) for n in steps_options]

    cdef double ratio, mult, delta, gate_frac, step_frac, base_mult, base_delta
    cdef long interval, steps, gate_step, gate_lo
    cdef int use_fp16, fp_hi
    cdef Py_ssize_t si, ri, ki

    fp_hi = 2 if allow_fp16 else 1

    for si in range(len(steps_list)):
        steps = steps_list[si]
        gate_lo = 1 if allow_gate else steps
        for ri in range(len(ratios)):
            ratio = ratios[ri]
            for ki in range(len(intervals)):
                interval = intervals[ki]
                for use_fp16 in range(fp_hi):
                    for gate_step in range(gate_lo, steps + 1):
                        # compose_effects, inlined in the same order
                        mult = 1.0
                        delta = 0.0
                        if ratio > 0.0:
                            mult *= 1.0 / (1.0 - 0.5 * ratio)
                            delta += -k_tm * (ratio * ratio)
                        if interval > 1:
                            mult *= 1.0 + 0.6 * (1.0 - 1.0 / interval)
                            delta += -k_fr * (interval - 1.0) / interval
                        gate_frac = 1.0 - (<double>gate_step) / (<double>steps)
                        if gate_frac > 0.0:
                            mult *= 1.0 + 0.3 * gate_frac
                            delta += -k_ga * (gate_frac * gate_frac)
                        if use_fp16:
                            mult *= fp16_mult
                            delta += -fp16_qfrac * q0
                        if steps < n_base:
                            mult *= (<double>n_base) / (<double>steps)
                            step_frac = 1.0 - (<double>steps) / (<double>n_base)
                            delta += -k_st * (step_frac * step_frac)
                        if delta >= budget and mult > best_mult:
                            best_mult = mult
                            best_ratio = ratio
                            best_interval = interval
                            best_gate = gate_step
                            best_steps = steps
                            best_fp16 = use_fp16

    return best_mult, (best_ratio, best_interval, best_gate, best_steps, best_fp16)
