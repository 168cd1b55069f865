"""Plain-text rendering of suite summaries: the five-level pass-rate table
with a task-weighted average column, hard-task achievement rates, and the
failure-mode histogram."""

from __future__ import annotations

from typing import Any, Mapping

LEVELS = ("1", "2", "3", "4", "5")


def _pct(value: float | None) -> str:
    return "  -  " if value is None else f"{100 * value:5.1f}"


def format_pass_table(summary: Mapping[str, Any]) -> str:
    per_level = summary.get("per_level_pass", {})
    counts = summary.get("level_counts", {})
    header = "  ".join(f"Level {lvl}" for lvl in LEVELS) + "   Avg."
    row = "  ".join(f"{_pct(per_level.get(lvl)):>7}" for lvl in LEVELS)
    row += f"  {_pct(summary.get('overall_pass')):>5}"
    count_row = "  ".join(f"{counts.get(lvl, 0):>7}" for lvl in LEVELS)
    total = sum(counts.get(lvl, 0) for lvl in LEVELS)
    count_row += f"  {total:>5}"
    return f"Pass rate (% of tasks)\n{header}\n{row}\ntasks:\n{count_row}"


def format_hard_table(summary: Mapping[str, Any]) -> str:
    hard = summary.get("per_level_hard_achievement", {})
    if not hard:
        return "Hard-task achievement: (no hard tasks in suite)"
    values = [hard[k] for k in sorted(hard)]
    avg = sum(values) / len(values)
    cells = "  ".join(f"Level {k}: {_pct(v).strip()}%" for k, v in sorted(hard.items()))
    return f"Hard-task achievement rate\n{cells}  Avg.: {100 * avg:.1f}%"


def format_histogram(summary: Mapping[str, Any]) -> str:
    hist = summary.get("error_histogram", {})
    if not hist:
        return "Failure modes: none"
    lines = ["Failure modes:"]
    width = max(len(k) for k in hist)
    for name in sorted(hist):
        lines.append(f"  {name:<{width}}  {hist[name]}")
    return "\n".join(lines)


def format_summary(summary: Mapping[str, Any]) -> str:
    return "\n\n".join(
        [format_pass_table(summary), format_hard_table(summary), format_histogram(summary)]
    )


def format_sweep_grid(grid: Mapping[str, Any]) -> str:
    """Render the P x T_sel sweep: one row per population size, S_p and S_a
    columns per generation budget."""
    p_values = grid["p_values"]
    t_values = grid["t_sel_values"]
    cells = grid["cells"]
    header = "P    " + "  ".join(f"T_sel={t}: S_p   S_a " for t in t_values)
    lines = [header]
    for p in p_values:
        row = [f"{p:<4}"]
        for t in t_values:
            cell = cells[f"{p}x{t}"]
            row.append(f"       {100 * cell['pass_rate']:5.1f} {100 * cell['achievement']:5.1f}")
        lines.append("  ".join(row))
    return "\n".join(lines)
