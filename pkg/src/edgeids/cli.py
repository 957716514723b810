"""Command line entry points: train, run, replay, report, bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .config import load_config
from .detection import ClassLabel, load_model, save_model
from .features import parse_flow_csv
from .llm_client import HttpProvider, MockProvider, TokenBucket
from .pipeline import BenignLogged, Pipeline, render_benign, render_log
from .telemetry import HostMetricsSource, ScriptedMetricsSource


def _add_config_arg(p):
    p.add_argument("--config", type=Path, default=None, help="TOML config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeids")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train DT/RF/KNN on a labeled flow CSV")
    p_train.add_argument("--data", type=Path, required=True)
    p_train.add_argument("--out", type=Path, required=True, help="output directory")
    p_train.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="process a flow CSV with host telemetry")
    _add_config_arg(p_run)
    p_run.add_argument("--flows", type=Path, required=True)
    p_run.add_argument("--models", type=Path, required=True, help="model directory")
    p_run.add_argument("--provider", choices=["mock", "http"], default="mock")

    p_replay = sub.add_parser("replay", help="deterministic replay")
    _add_config_arg(p_replay)
    p_replay.add_argument("--golden", action="store_true", help="run the canned fixture")
    p_replay.add_argument("--flows", type=Path)
    p_replay.add_argument("--models", type=Path)
    p_replay.add_argument("--telemetry", type=Path, help="scripted timeline JSON")
    p_replay.add_argument("--provider", choices=["mock", "http"], default="mock")

    p_report = sub.add_parser("report", help="ANOVA/Tukey report over trial CSVs")
    p_report.add_argument(
        "--trials", type=Path, nargs="+", required=True,
        help="one CSV per group, NAME=PATH or bare path",
    )
    p_report.add_argument("--out", type=Path, default=None)

    p_bench = sub.add_parser("bench", help="multi-trial scenario replay")
    _add_config_arg(p_bench)
    p_bench.add_argument("--dataset", type=Path, default=None)
    p_bench.add_argument(
        "--scenario",
        choices=["dos", "ddos", "brute-force", "port-scan"],
        default="brute-force",
    )
    p_bench.add_argument("--trials", type=int, default=62)
    p_bench.add_argument("--windows", type=int, default=40)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--provider", choices=["mock", "http"], default="mock")
    p_bench.add_argument("--out", type=Path, required=True)
    return parser


_SCENARIO_CLASSES = {
    "dos": ClassLabel.DoS,
    "ddos": ClassLabel.DDoS,
    "brute-force": ClassLabel.BruteForce,
    "port-scan": ClassLabel.PortScan,
}

_MODEL_FILES = {"DT": "dt.json", "KNN": "knn.json", "RF": "rf.json"}


def _load_models(model_dir: Path):
    import json as _json

    from .features import NormalizationStats

    models = [load_model(model_dir / f) for f in _MODEL_FILES.values()]
    stats_doc = _json.loads((model_dir / "stats.json").read_text())
    stats = NormalizationStats(
        mean=tuple(stats_doc["mean"]),
        stddev=tuple(stats_doc["stddev"]),
        sample_count=stats_doc["sample_count"],
        sigma_floor=stats_doc["sigma_floor"],
    )
    return models, stats


def cmd_train(args) -> int:
    data = bench_mod.ingest_dataset(args.data)
    models, stats = bench_mod.train_default_models(data, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for model in models:
        save_model(model, args.out / _MODEL_FILES[model.name])
    (args.out / "stats.json").write_text(
        json.dumps(
            {
                "mean": list(stats.mean),
                "stddev": list(stats.stddev),
                "sample_count": stats.sample_count,
                "sigma_floor": stats.sigma_floor,
            }
        )
    )
    print(f"trained {len(models)} models on {len(data)} vectors -> {args.out}")
    return 0


def _make_provider(name: str, cfg):
    if name == "http":
        return HttpProvider(cfg.provider)
    return MockProvider(elapsed_script=(0.2,))


def _run_flows(args, source) -> int:
    cfg = load_config(args.config)
    models, stats = _load_models(args.models)
    provider = _make_provider(args.provider, cfg)
    limiter = TokenBucket(cfg.limiter_capacity, cfg.limiter_refill_per_s)
    pipe = Pipeline(
        models=models,
        stats=stats,
        metrics_source=source,
        provider=provider,
        config=cfg.pipeline,
        limiter=limiter,
        event_sink=lambda e: print(json.dumps(e), file=sys.stderr),
    )
    for record in parse_flow_csv(args.flows):
        out = pipe.process_window(record)
        if isinstance(out, BenignLogged):
            print(render_benign(out, cfg.pipeline.tau_alert))
        else:
            print(render_log(out, cfg.pipeline.tau_alert))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    return _run_flows(args, HostMetricsSource(cfg.power_idle_w, cfg.power_peak_w))


def cmd_replay(args) -> int:
    if args.golden:
        cfg = load_config(args.config)
        record, _ = bench_mod.replay_golden()
        print(render_log(record, cfg.pipeline.tau_alert))
        return 0
    if not (args.flows and args.models and args.telemetry):
        print("replay needs --golden or --flows/--models/--telemetry", file=sys.stderr)
        return 2
    return _run_flows(args, ScriptedMetricsSource.from_file(args.telemetry))


def cmd_report(args) -> int:
    groups = {}
    for spec in args.trials:
        text = str(spec)
        if "=" in text:
            name, _, path = text.partition("=")
        else:
            name, path = Path(text).stem, text
        groups[name] = bench_mod.read_trials_csv(path)
    table, report = bench_mod.emit_report(groups)
    print(table)
    if args.out:
        args.out.write_text(json.dumps(report, indent=2))
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    models = stats = None
    if args.dataset is not None:
        data = bench_mod.ingest_dataset(args.dataset)
        models, stats = bench_mod.train_default_models(data, seed=args.seed)
    spec = bench_mod.ScenarioSpec(
        attack_class=_SCENARIO_CLASSES[args.scenario],
        trial_count=args.trials,
        windows_per_trial=args.windows,
        provider=args.provider,
        seed=args.seed,
    )
    rows = bench_mod.run_scenario(spec, config=cfg.pipeline, models=models, stats=stats)
    bench_mod.write_trials_csv(rows, args.out)
    print(f"wrote {len(rows)} trial rows -> {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {
        "train": cmd_train,
        "run": cmd_run,
        "replay": cmd_replay,
        "report": cmd_report,
        "bench": cmd_bench,
    }[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
