"""Command-line interface: train, sample, validate, benchmark, report.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import errors
from ..rng import derive_stream, derive_torch_generator
from ..sim.io import load_dataset
from . import report as report_mod
from .checkpoint import load_weights, read_manifest
from .config import RunConfig, config_from_dict, load_config
from .runner import (build_amortizer, compute_contexts, decoder_sample_batch,
                     evaluate_npe, run_training)

log = logging.getLogger("npe")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        updates["output_dir"] = str(args.out)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_checkpointed(checkpoint_dir):
    manifest = read_manifest(checkpoint_dir)
    cfg = config_from_dict(manifest["run_config"])
    problem = cfg.build_problem()
    model = build_amortizer(cfg, problem)
    load_weights(model, checkpoint_dir)
    return cfg, problem, model, manifest


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    summary = run_training(cfg, cfg.output_dir)
    counts = summary["param_counts"]
    print(f"parameters: decoder={counts['decoder']} summary={counts['summary']} "
          f"total={counts['total']}")
    final = summary["final"]
    print(f"final: sbc_wd_avg={final['wd_avg']:.5f} "
          f"sbc_wd_worst={final['wd_worst']:.5f} ecp={final['ecp']:.5f}")
    print(f"outputs in {cfg.output_dir}")
    return errors.EXIT_OK


def cmd_sample(args) -> int:
    cfg, problem, model, _ = _load_checkpointed(args.checkpoint)
    header, x_raw = load_dataset(args.data)
    if header.get("problem") not in (None, problem.name):
        raise errors.ConfigError(
            f"dataset is for problem {header.get('problem')!r}, "
            f"checkpoint for {problem.name!r}")
    seed = args.seed if args.seed is not None else cfg.seed
    gen = derive_torch_generator(seed, 0)
    x_proc = problem.preprocess_data(x_raw)
    contexts = compute_contexts(model, [x_proc])
    draws_proc = decoder_sample_batch(model, cfg.decoder, contexts, args.count,
                                      gen, n_steps=args.steps)[0]
    draws_raw = np.stack([problem.inverse_theta(t) for t in draws_proc])
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dest = out / "posterior_samples.csv"
    with dest.open("w") as fh:
        fh.write(",".join(f"theta_{j}" for j in range(draws_raw.shape[1])) + "\n")
        for row in draws_raw:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")
    print(f"wrote {args.count} draws to {dest}")
    return errors.EXIT_OK


def cmd_validate(args) -> int:
    checkpoint = args.checkpoint
    if checkpoint is None:
        if args.config is None:
            raise errors.ConfigError("validate needs --checkpoint or --config")
        base_cfg = load_config(args.config)
        checkpoint = Path(base_cfg.output_dir) / "checkpoint"
    cfg, problem, model, _ = _load_checkpointed(checkpoint)
    cfg = _apply_overrides(cfg, args)
    c = args.C or cfg.C
    l = args.L or cfg.L
    report = evaluate_npe(problem, model, cfg.decoder, c, l,
                          derive_stream(cfg.seed, 42),
                          derive_torch_generator(cfg.seed, 43))
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"method": args.method, "C": c, "L": l, **report.to_dict()}
    if args.method == "sbc":
        print(f"sbc: wd_avg={report.wd_avg:.5f} wd_worst={report.wd_worst:.5f} "
              f"tv={report.tv:.5f} hellinger={report.hellinger:.5f}")
        report_mod.plot_rank_histograms(report.per_margin_ranks,
                                        out / "sbc_ranks.png")
    else:
        print(f"tarp: ecp={report.ecp:.5f} (rendered x1e3: {1e3 * report.ecp:.3f})")
        report_mod.plot_coverage_curves(
            [{"problem": problem.name, "decoder": cfg.decoder,
              "seed": cfg.seed, "final": report.to_dict()}],
            out / "coverage_curves.png")
    (out / "validation.json").write_text(json.dumps(payload, indent=1))
    if report.skipped:
        return errors.EXIT_VALIDATION
    return errors.EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    base = Path(cfg.output_dir)
    summaries = []
    for i in range(cfg.repeats):
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + i)
        run_dir = base / f"run_{i:02d}"
        log.info("benchmark repeat %d/%d (seed %d)", i + 1, cfg.repeats,
                 run_cfg.seed)
        summaries.append(run_training(run_cfg, run_dir))
        metrics = report_mod.load_metrics_csv(run_dir / "metrics.csv")
        report_mod.plot_metric_traces(metrics, run_dir / "metrics.png")
    aggregates = report_mod.emit_report(summaries, base)
    rows = [{"problem": key.split("/")[0], "decoder": key.split("/")[1], **agg}
            for key, agg in aggregates.items()]
    print(report_mod.render_table(rows))
    print(f"summary written to {base / 'summary.csv'}")
    return errors.EXIT_OK


def cmd_report(args) -> int:
    summaries = []
    for run_dir in args.runs:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise errors.ConfigError(f"no report.json under {run_dir}")
        summaries.append(json.loads(path.read_text()))
    out = args.out or "report"
    aggregates = report_mod.emit_report(summaries, out)
    rows = [{"problem": key.split("/")[0], "decoder": key.split("/")[1], **agg}
            for key, agg in aggregates.items()]
    print(report_mod.render_table(rows))
    print(f"summary written to {Path(out) / 'summary.csv'}")
    return errors.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npe",
        description="Amortized posterior estimation benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="override the output directory")

    p_train = sub.add_parser("train", help="train one model and evaluate it")
    common(p_train)
    p_train.set_defaults(fn=cmd_train, needs_config=True)

    p_sample = sub.add_parser("sample", help="draw from a trained posterior")
    common(p_sample)
    p_sample.add_argument("--checkpoint", type=Path, required=True)
    p_sample.add_argument("--data", type=Path, required=True,
                          help="dataset dump file (JSON header + CSV rows)")
    p_sample.add_argument("--count", type=int, default=100)
    p_sample.add_argument("--steps", type=int, default=None,
                          help="override the reverse-ODE step count")
    p_sample.set_defaults(fn=cmd_sample)

    p_val = sub.add_parser("validate", help="calibration-check a checkpoint")
    common(p_val)
    p_val.add_argument("--checkpoint", type=Path)
    p_val.add_argument("--method", choices=("sbc", "tarp"), default="sbc")
    p_val.add_argument("--C", type=int, default=None)
    p_val.add_argument("--L", type=int, default=None)
    p_val.set_defaults(fn=cmd_validate)

    p_bench = sub.add_parser("benchmark", help="repeat training and aggregate")
    common(p_bench)
    p_bench.set_defaults(fn=cmd_benchmark, needs_config=True)

    p_rep = sub.add_parser("report", help="aggregate finished run directories")
    common(p_rep)
    p_rep.add_argument("runs", nargs="+", help="run directories with report.json")
    p_rep.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "needs_config", False) and args.config is None:
        parser.error(f"{args.command} requires --config")
    try:
        return args.fn(args)
    except errors.NpeBenchError as exc:
        log.error("%s", exc)
        return errors.exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
