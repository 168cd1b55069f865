"""Command-line interface.

Subcommands: ``run`` (a task or manifest through the agent loop),
``evaluate`` (a pre-existing candidate file against a task), ``build-bench``
(construct the synthetic corpus), ``report`` (summarize a run directory),
``sweep`` (the population x generations grid on the sim backend), and
``parse-record`` (validate and canonicalize one harness metrics record).

Exit code 0 means the command completed; task failures are results, not
tool failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .backends.sim import SimBackend, SimLandscape
from .backends.subproc import parse_metrics_record, serialize_metrics_record
from .builder import SearchConfig, build_bench
from .errors import AccelBenchError
from .evaluator import CandidateProgram, Evaluator
from .orchestrator import RunConfig, make_backend, run_suite, run_task, summarize_results
from .reporting import format_summary, format_sweep_grid
from .tasks import canonical_json, load_manifest, load_manifest_tasks, load_task


def _add_run_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("sim", "subprocess"), default="sim")
    p.add_argument("--gateway", choices=("mock", "live"), default="mock")
    p.add_argument("--population", "-P", type=int, default=7, help="plans per generation")
    p.add_argument("--offspring", "-M", type=int, default=4, help="refined offspring per generation")
    p.add_argument("--t-sel", type=int, default=4, help="selection-loop generations")
    p.add_argument("--t-code", type=int, default=5, help="code regeneration cycles per episode")
    p.add_argument("--t-debug", type=int, default=3, help="repair iterations per cycle")
    p.add_argument("--no-knowledge-base", dest="knowledge_base", action="store_false")
    p.add_argument("--no-ga", dest="ga", action="store_false")
    p.add_argument("--no-debugging", dest="debugging", action="store_false")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quality-floor", type=float, default=0.0)
    p.add_argument("--few-shot-n", type=int, default=10)
    p.add_argument("--replan-cap", type=int, default=3)
    p.add_argument("--landscape", dest="landscape_path", default=None)
    p.add_argument("--harness-cmd", default=None, help="subprocess backend harness command")
    p.add_argument("--prompts", dest="prompts_path", default=None)
    p.add_argument("--mock-policy", choices=("reference", "broken-first", "broken-all"),
                   default="reference")
    p.add_argument("--sampling-with-replacement", action="store_true",
                   help="offspring sampling with replacement (sensitivity runs)")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        backend=args.backend,
        gateway=args.gateway,
        population=args.population,
        offspring=args.offspring,
        t_sel=args.t_sel,
        t_code=args.t_code,
        t_debug=args.t_debug,
        knowledge_base=args.knowledge_base,
        ga=args.ga,
        debugging=args.debugging,
        seed=args.seed,
        workers=args.workers,
        quality_floor=args.quality_floor,
        few_shot_n=args.few_shot_n,
        replan_cap=args.replan_cap,
        landscape_path=args.landscape_path,
        harness_cmd=args.harness_cmd,
        prompts_path=args.prompts_path,
        mock_policy=args.mock_policy,
        sampling_with_replacement=args.sampling_with_replacement,
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    if args.manifest:
        manifest = load_manifest(args.manifest)
        tasks = load_manifest_tasks(manifest, Path(args.manifest).parent)
        suite = run_suite(tasks, cfg, out_dir=out_dir)
        print(format_summary(suite.summary))
    else:
        task = load_task(args.task)
        result = run_task(task, cfg, out_dir=out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = summarize_results([task], {task.task_id: result})
        (out_dir / "summary.json").write_text(canonical_json(summary) + "\n", "utf-8")
        verdict = "passed" if result.passed else "failed"
        print(f"{task.task_id}: {verdict} (episodes={result.episodes})")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    task = load_task(args.task)
    source = Path(args.candidate).read_text("utf-8")
    backend = make_backend(cfg)
    evaluator = Evaluator(backend, few_shot_n=cfg.few_shot_n, quality_floor=cfg.quality_floor)
    candidate = CandidateProgram(Path(args.candidate).stem, source)
    report = evaluator.evaluate(candidate, task, seed=cfg.seed)
    print(canonical_json(report.to_dict()))
    if args.out:
        Path(args.out).write_text(canonical_json(report.to_dict()) + "\n", "utf-8")
    return 0


def cmd_build_bench(args: argparse.Namespace) -> int:
    cfg = SearchConfig(
        iterations=args.iterations,
        validation_samples=args.validation_samples,
        sigma=args.sigma,
        delta_easy=args.delta_easy,
        delta_hard=args.delta_hard,
    )
    landscape = SimLandscape.load(args.landscape) if args.landscape else SimLandscape.default()
    backend = SimBackend(landscape)
    report = build_bench(
        args.out,
        backend=backend,
        cfg=cfg,
        pipelines=tuple(args.pipelines.split(",")),
        graded_pipelines=tuple(args.graded_pipelines.split(",")),
        seed=args.seed,
    )
    counts = report.manifest.level_counts() if report.manifest else {}
    print(f"built {len(report.tasks)} tasks -> {args.out}")
    print("level counts:", {k: v for k, v in counts.items()})
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    summary_path = Path(args.run_dir) / "summary.json"
    if not summary_path.exists():
        print(f"no summary.json under {args.run_dir}", file=sys.stderr)
        return 2
    summary = json.loads(summary_path.read_text("utf-8"))
    print(format_summary(summary))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    manifest = load_manifest(args.manifest)
    tasks = [
        t
        for t in load_manifest_tasks(manifest, Path(args.manifest).parent)
        if t.level in (4, 5)
    ]
    p_values = [int(x) for x in args.p_values.split(",")]
    t_values = [int(x) for x in args.t_sel_values.split(",")]
    cells = {}
    for p in p_values:
        for t_sel in t_values:
            cell_cfg = replace(cfg, population=p, offspring=min(cfg.offspring, p), t_sel=t_sel)
            suite = run_suite(tasks, cell_cfg)
            achievement = suite.summary.get("achievement", {})
            mean_sa = (
                sum(achievement.values()) / len(achievement) if achievement else 0.0
            )
            cells[f"{p}x{t_sel}"] = {
                "pass_rate": suite.summary.get("overall_pass", 0.0),
                "achievement": mean_sa,
            }
    grid = {"p_values": p_values, "t_sel_values": t_values, "cells": cells}
    print(format_sweep_grid(grid))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(canonical_json(grid) + "\n", "utf-8")
    return 0


def cmd_parse_record(args: argparse.Namespace) -> int:
    text = Path(args.record).read_text("utf-8") if args.record != "-" else sys.stdin.read()
    record = parse_metrics_record(text.strip())
    print(serialize_metrics_record(record))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accelbench",
        description="Generate, evaluate, and evolve diffusion acceleration code.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a task or manifest through the agent loop")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--task", help="path to one task file")
    group.add_argument("--manifest", help="path to a manifest file")
    p.add_argument("--out", required=True, help="output directory")
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="evaluate an existing candidate against a task")
    p.add_argument("--task", required=True)
    p.add_argument("--candidate", required=True, help="path to candidate source")
    p.add_argument("--out", default=None, help="optional report output path")
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-bench", help="construct the synthetic task corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--validation-samples", type=int, default=36)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--delta-easy", type=float, default=0.8)
    p.add_argument("--delta-hard", type=float, default=1.2)
    p.add_argument("--landscape", default=None)
    p.add_argument(
        "--pipelines", default="StableDiffusionPipeline,PixArtAlphaPipeline"
    )
    p.add_argument("--graded-pipelines", default="StableDiffusionPipeline")
    p.set_defaults(func=cmd_build_bench)

    p = sub.add_parser("report", help="print the summary of a finished run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="population x generations grid on the sim backend")
    p.add_argument("--manifest", required=True)
    p.add_argument("--p-values", default="4,7,10")
    p.add_argument("--t-sel-values", default="2,4,6")
    p.add_argument("--out", default=None)
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("parse-record", help="validate one harness metrics record")
    p.add_argument("record", help="record file path, or - for stdin")
    p.set_defaults(func=cmd_parse_record)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AccelBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
