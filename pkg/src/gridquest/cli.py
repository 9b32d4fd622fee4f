"""Command line interface: scenario generation, single runs, benchmark
suites, and trace verification."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .generator import GeneratorParams, generate_scenario
from .metrics import verify_trace
from .orchestrator import ABLATIONS, MODES, BenchReport, RunConfig, run_scenario, run_suite
from .questions import scenario_from_json, scenario_to_json
from .trace import read_trace


def _cmd_generate(args: argparse.Namespace) -> int:
    params = GeneratorParams(
        grid_width=args.grid_width,
        grid_height=args.grid_height,
        object_count=args.objects,
        max_time=args.max_time,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        scenario = generate_scenario(args.seed + i, params)
        path = out_dir / f"{scenario.scenario_id}.json"
        path.write_text(scenario_to_json(scenario) + "\n")
    print(f"wrote {args.count} scenarios to {out_dir}")
    return 0


def _load_config(path: str | None, seed: int | None = None) -> RunConfig:
    if path is None:
        config = RunConfig()
    else:
        config = RunConfig.from_dict(json.loads(Path(path).read_text()))
    if seed is not None:
        config.seed = seed
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = scenario_from_json(Path(args.scenario).read_text())
    config = _load_config(args.config, args.seed)
    trace = run_scenario(scenario, config)
    Path(args.trace_out).write_text(trace.to_jsonl())
    summary = trace.summary_metrics() or {}
    print(
        f"{scenario.scenario_id}: acc={summary.get('acc', 0):.3f} "
        f"dar={summary.get('dar', 0):.3f} ns={summary.get('ns', 0):.3f} "
        f"nuwl={summary.get('nuwl', 0):.3f}"
    )
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    scenario_dir = Path(args.scenarios)
    files = sorted(scenario_dir.glob("*.json"))
    if not files:
        print(f"no scenario files in {scenario_dir}", file=sys.stderr)
        return 2
    scenarios = [scenario_from_json(f.read_text()) for f in files]

    configs: list[tuple[str, RunConfig]] = []
    for mode in args.modes.split(","):
        mode = mode.strip()
        if mode not in MODES:
            print(f"unknown mode {mode!r}", file=sys.stderr)
            return 2
        configs.append((mode, RunConfig(mode=mode, seed=args.seed)))
    if args.ablations:
        for name in args.ablations.split(","):
            name = name.strip()
            if name not in ABLATIONS:
                print(f"unknown ablation {name!r}", file=sys.stderr)
                return 2
            configs.append(
                (f"ablate_{name}", RunConfig(ablations=frozenset({name}), seed=args.seed))
            )

    report = run_suite(scenarios, configs, trace_dir=args.trace_dir)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report.to_json() + "\n")
    report_path.with_suffix(".csv").write_text(report.to_csv())
    print(report.to_csv(), end="")
    return 0


def _cmd_metrics_recompute(args: argparse.Namespace) -> int:
    trace = read_trace(args.trace)
    stored, recomputed, worst = verify_trace(trace)
    for key in ("acc", "dar", "ns", "nuwl"):
        print(f"{key}: stored={stored.get(key)} recomputed={recomputed[key]}")
    if worst > 1e-9:
        print(f"MISMATCH: max deviation {worst}", file=sys.stderr)
        return 1
    print("ok: stored metrics match recomputation")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridquest",
        description="Grid-world benchmark for parallel, urgency-aware question answering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate benchmark scenarios")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--grid-width", type=int, default=16)
    gen.add_argument("--grid-height", type=int, default=12)
    gen.add_argument("--objects", type=int, default=15)
    gen.add_argument("--max-time", type=float, default=600.0)
    gen.set_defaults(func=_cmd_generate)

    run = sub.add_parser("run", help="run one scenario and write its trace")
    run.add_argument("--scenario", required=True)
    run.add_argument("--config", default=None, help="JSON RunConfig file")
    run.add_argument("--seed", type=int, default=None, help="override config seed")
    run.add_argument("--trace-out", required=True)
    run.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench", help="run a config matrix over a scenario directory")
    bench.add_argument("--scenarios", required=True)
    bench.add_argument("--modes", default="paraeqsa,seq_nomem,seq_mem")
    bench.add_argument("--ablations", default="")
    bench.add_argument("--report", required=True)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--trace-dir", default=None)
    bench.set_defaults(func=_cmd_bench)

    metrics = sub.add_parser("metrics", help="metric utilities")
    metrics_sub = metrics.add_subparsers(dest="metrics_command", required=True)
    recompute = metrics_sub.add_parser(
        "recompute", help="recompute metrics from a trace and verify the stored summary"
    )
    recompute.add_argument("--trace", required=True)
    recompute.set_defaults(func=_cmd_metrics_recompute)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
