"""Benchmark execution: builds models, trains them and evaluates calibration.

One run is a single training thread; parallelism across runs comes from
disjoint seeds and output directories.  All randomness is derived from the
run seed, so a (config, seed) pair reproduces checkpoints and metric rows
byte for byte apart from wall-clock columns.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from ..diffusion import Denoiser, euler_sample_batch
from ..flow import CouplingFlow, flow_train_step
from ..nets import (Amortizer, BiLstmSummary, DeepSetSummary, LossTracker,
                    OptimizerState, count_parameters, restore_params,
                    swap_in_ema, train_step)
from ..rng import derive_stream, derive_torch_generator
from ..sim.base import Problem, preprocess, sample_dataset, sample_prior
from ..validate import CalibrationReport, CalibrationRounds, report_from_rounds
from .checkpoint import rng_state_to_json, save_checkpoint
from .config import RunConfig, config_to_dict

log = logging.getLogger(__name__)

CSV_COLUMNS = ("batch", "loss", "sbc_wd_avg", "sbc_wd_worst", "sbc_tv",
               "sbc_hellinger", "ecp", "wall_s")

EVAL_STREAM_BASE = 10_000_000
EVAL_TORCH_BASE = 20_000_000
INIT_STREAM = 99_000_000


def build_amortizer(cfg: RunConfig, problem: Problem) -> Amortizer:
    """Construct decoder plus summary network with seeded initialization."""
    torch.manual_seed(
        int(np.random.SeedSequence([cfg.seed, INIT_STREAM]).generate_state(1)[0]))
    kind = cfg.resolved_summary(problem)
    theta_dim = problem.spec.theta_dim
    data_dim = problem.spec.data_dim
    if kind == "none":
        summary = None
        context_dim = data_dim
    elif kind == "deepset":
        summary = DeepSetSummary(data_dim, cfg.nets.summary_dim,
                                 width=cfg.nets.deepset_width)
        context_dim = cfg.nets.summary_dim
    else:
        summary = BiLstmSummary(data_dim, cfg.nets.summary_dim,
                                hidden=cfg.nets.bilstm_hidden,
                                lift_dim=cfg.nets.bilstm_lift,
                                num_layers=cfg.nets.bilstm_layers)
        context_dim = cfg.nets.summary_dim
    if cfg.decoder == "cdiff":
        decoder: torch.nn.Module = Denoiser(
            theta_dim, context_dim, cfg.edm, width=cfg.nets.denoiser_width,
            n_hidden=cfg.nets.denoiser_layers, embed_dim=cfg.nets.embed_dim)
    else:
        decoder = CouplingFlow(theta_dim, context_dim, cfg.flow)
    return Amortizer(decoder, summary)


def parameter_counts(model: Amortizer) -> dict:
    decoder = count_parameters(model.decoder)
    summary = count_parameters(model.summary) if model.summary is not None else 0
    return {"decoder": decoder, "summary": summary, "total": decoder + summary}


def compute_contexts(model: Amortizer, datasets: list[np.ndarray]) -> torch.Tensor:
    """Conditioning vectors for datasets of possibly different lengths.

    Datasets are grouped by length so each group runs as one batched
    forward pass.
    """
    lengths = np.array([x.shape[0] for x in datasets])
    with torch.no_grad():
        if model.summary is None:
            rows = np.stack([x[0] for x in datasets])
            return torch.as_tensor(rows, dtype=torch.float32)
        out = torch.empty((len(datasets), model.summary.out_dim), dtype=torch.float32)
        for n in np.unique(lengths):
            idx = np.nonzero(lengths == n)[0]
            batch = torch.as_tensor(np.stack([datasets[i] for i in idx]),
                                    dtype=torch.float32)
            out[torch.as_tensor(idx)] = model.summary(batch)
    return out


def decoder_sample_batch(model: Amortizer, decoder_kind: str,
                         contexts: torch.Tensor, count: int,
                         gen: torch.Generator,
                         n_steps: int | None = None) -> np.ndarray:
    """(B, count, theta_dim) preprocessed-space draws per context row."""
    with torch.no_grad():
        if decoder_kind == "cdiff":
            draws = euler_sample_batch(model.decoder, contexts, count, gen,
                                       n_steps=n_steps)
        else:
            draws = model.decoder.sample_batch(contexts, count, gen)
    return draws.numpy().astype(float)


def evaluate_npe(problem: Problem, model: Amortizer, decoder_kind: str,
                 c: int, l: int, rng: np.random.Generator,
                 gen: torch.Generator,
                 n_steps: int | None = None) -> CalibrationReport:
    """Calibration report for the amortized sampler on C fresh rounds."""
    stars_raw, datasets = [], []
    for _ in range(c):
        theta_raw = sample_prior(problem, rng)
        n = int(rng.integers(problem.n_range[0], problem.n_range[1] + 1))
        x_raw = sample_dataset(problem, theta_raw, n, rng)
        _, x_proc = preprocess(problem, theta_raw, x_raw)
        stars_raw.append(theta_raw)
        datasets.append(x_proc)
    contexts = compute_contexts(model, datasets)
    draws_proc = decoder_sample_batch(model, decoder_kind, contexts, l, gen,
                                      n_steps=n_steps)
    flat = draws_proc.reshape(c * l, -1)
    draws_raw = np.stack([problem.inverse_theta(t) for t in flat])
    violations = sum(not problem.in_support(t) for t in draws_raw)
    rounds = CalibrationRounds(
        problem=problem,
        theta_star_raw=np.stack(stars_raw),
        theta_star_proc=np.stack([problem.preprocess_theta(t) for t in stars_raw]),
        draws_raw=draws_raw.reshape(c, l, -1),
        draws_proc=draws_proc,
        support_violations=int(violations),
    )
    return report_from_rounds(rounds, rng)


def make_posterior_sampler(problem: Problem, model: Amortizer,
                           decoder_kind: str, gen: torch.Generator,
                           count: int = 100,
                           n_steps: int | None = None) -> Callable:
    """Per-dataset sampler closure: (x_raw, n, rng) -> (count, raw_dim) draws."""

    def sampler(x_raw: np.ndarray, n: int,
                rng: np.random.Generator | None = None) -> np.ndarray:
        x_proc = problem.preprocess_data(np.asarray(x_raw, dtype=float))
        contexts = compute_contexts(model, [x_proc])
        draws = decoder_sample_batch(model, decoder_kind, contexts, count, gen,
                                     n_steps=n_steps)[0]
        return np.stack([problem.inverse_theta(t) for t in draws])

    return sampler


def _format_row(values: dict) -> str:
    cells = []
    for col in CSV_COLUMNS:
        v = values[col]
        cells.append(str(v) if isinstance(v, int) else f"{v:.8g}")
    return ",".join(cells)


def run_training(cfg: RunConfig, out_dir) -> dict:
    """Train one model and evaluate calibration on a fixed cadence.

    Writes ``metrics.csv`` (one row per evaluation, flushed immediately so
    aborts keep the partial file), a final checkpoint, ``report.json`` and
    ``coverage_curve.json``.  Returns the run summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    model = build_amortizer(cfg, problem)
    counts = parameter_counts(model)
    log.info("run %s: decoder=%s params decoder=%d summary=%d total=%d",
             problem.name, cfg.decoder, counts["decoder"], counts["summary"],
             counts["total"])
    opt = OptimizerState(lr=cfg.optimizer.lr, beta1=cfg.optimizer.beta1,
                         beta2=cfg.optimizer.beta2, eps=cfg.optimizer.eps,
                         ema_decay=cfg.optimizer.ema_decay)
    tracker = LossTracker()
    train_gen = derive_torch_generator(cfg.seed, 1)
    step_fn = train_step if cfg.decoder == "cdiff" else flow_train_step

    loss_sum = 0.0
    wall_sum = 0.0
    since_eval = 0
    eval_idx = 0
    last_report: CalibrationReport | None = None
    csv_path = out / "metrics.csv"
    with csv_path.open("w") as csv_file:
        csv_file.write(",".join(CSV_COLUMNS) + "\n")
        csv_file.flush()
        for batch in range(1, cfg.training_batches + 1):
            sim_rng = derive_stream(cfg.seed, batch)
            lr = cfg.optimizer.lr_at(batch, cfg.training_batches)
            t0 = time.perf_counter()
            loss = step_fn(model, problem, opt, cfg.batch_size, sim_rng,
                           train_gen, tracker=tracker, lr=lr)
            wall_sum += time.perf_counter() - t0
            loss_sum += loss
            since_eval += 1
            if batch % cfg.eval_every == 0 or batch == cfg.training_batches:
                eval_idx += 1
                backup = swap_in_ema(opt, dict(model.named_parameters())) \
                    if opt.ema_decay > 0 else None
                # common random numbers across a run's evaluations: the same
                # calibration rounds and base noise each time, so the trace
                # reflects model improvement rather than re-sampling noise
                report = evaluate_npe(
                    problem, model, cfg.decoder, cfg.C, cfg.L,
                    derive_stream(cfg.seed, EVAL_STREAM_BASE),
                    derive_torch_generator(cfg.seed, EVAL_TORCH_BASE))
                if backup is not None:
                    restore_params(dict(model.named_parameters()), backup)
                row = {
                    "batch": batch,
                    "loss": loss_sum / since_eval,
                    "sbc_wd_avg": report.wd_avg,
                    "sbc_wd_worst": report.wd_worst,
                    "sbc_tv": report.tv,
                    "sbc_hellinger": report.hellinger,
                    "ecp": report.ecp,
                    "wall_s": wall_sum / since_eval,
                }
                csv_file.write(_format_row(row) + "\n")
                csv_file.flush()
                loss_sum = wall_sum = 0.0
                since_eval = 0
                last_report = report

    if opt.ema_decay > 0:
        # ship the averaged weights; they are what evaluation used
        swap_in_ema(opt, dict(model.named_parameters()))
    rng_state = rng_state_to_json(None, train_gen.get_state())
    save_checkpoint(model, out / "checkpoint", config_to_dict(cfg),
                    step=cfg.training_batches, rng_state=rng_state)
    assert last_report is not None
    summary = {
        "problem": problem.name,
        "decoder": cfg.decoder,
        "summary_net": cfg.resolved_summary(problem),
        "seed": cfg.seed,
        "batches": cfg.training_batches,
        "param_counts": counts,
        "final": last_report.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(summary, indent=1))
    (out / "coverage_curve.json").write_text(json.dumps(
        [[float(a), float(b)] for a, b in last_report.coverage_curve]))
    return summary
