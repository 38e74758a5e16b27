"""Aggregation of calibration reports into tables, CSV and figures.

Values are stored unscaled; rendered tables multiply by 1e3 (column names
say so).  The report path writes the delimited summary and matplotlib
figures side by side in the output directory.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ..errors import EmptyReport

plt.rcParams["figure.dpi"] = 150
plt.rcParams["savefig.bbox"] = "tight"

SUMMARY_COLUMNS = ("problem", "decoder", "runs",
                   "wd_avg_x1e3", "wd_worst_x1e3", "ecp_x1e3")


def aggregate_reports(reports: list[dict]) -> dict:
    """Combine per-run report dicts for one (problem, decoder) cell.

    wd_avg averages over runs and margins, wd_worst is the max over both,
    ecp averages over runs.
    """
    if not reports:
        raise EmptyReport("no run reports to aggregate")
    margins = np.concatenate([np.asarray(r["per_margin_wd"], dtype=float)
                              for r in reports])
    return {
        "runs": len(reports),
        "wd_avg": float(margins.mean()),
        "wd_worst": float(margins.max()),
        "ecp": float(np.mean([r["ecp"] for r in reports])),
    }


def emit_report(run_summaries: list[dict], out_dir) -> dict:
    """Summary table plus plot data for a collection of finished runs.

    Groups runs by (problem, decoder), writes ``summary.csv`` and
    ``summary.json``, renders the coverage and rank figures and returns the
    aggregate mapping.
    """
    if not run_summaries:
        raise EmptyReport("no runs supplied")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[dict]] = {}
    for summary in run_summaries:
        key = (summary["problem"], summary["decoder"])
        groups.setdefault(key, []).append(summary["final"])
    rows = []
    aggregates = {}
    for (problem, decoder), finals in sorted(groups.items()):
        agg = aggregate_reports(finals)
        aggregates[f"{problem}/{decoder}"] = agg
        rows.append({
            "problem": problem,
            "decoder": decoder,
            "runs": agg["runs"],
            "wd_avg_x1e3": f"{1e3 * agg['wd_avg']:.3f}",
            "wd_worst_x1e3": f"{1e3 * agg['wd_worst']:.3f}",
            "ecp_x1e3": f"{1e3 * agg['ecp']:.3f}",
        })
    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    (out / "summary.json").write_text(json.dumps(aggregates, indent=1))
    plot_coverage_curves(run_summaries, out / "coverage_curves.png")
    return aggregates


def render_table(rows: list[dict]) -> str:
    header = f"{'problem':24s} {'decoder':8s} {'runs':>4s} " \
             f"{'WD(avg)':>9s} {'WD(worst)':>9s} {'ECP':>9s}   (x1e3)"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['problem']:24s} {r['decoder']:8s} {r['runs']:4d} "
                     f"{1e3 * r['wd_avg']:9.3f} {1e3 * r['wd_worst']:9.3f} "
                     f"{1e3 * r['ecp']:9.3f}")
    return "\n".join(lines)


def plot_coverage_curves(run_summaries: list[dict], path) -> None:
    """Expected-minus-nominal coverage per run, one line each."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for summary in run_summaries:
        curve = np.asarray(summary["final"]["coverage_curve"], dtype=float)
        label = f"{summary['problem']}/{summary['decoder']}/s{summary.get('seed', '?')}"
        ax.plot(curve[:, 0], curve[:, 1] - curve[:, 0], lw=1.0, label=label)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("credibility level")
    ax.set_ylabel("coverage - credibility")
    if len(run_summaries) <= 8:
        ax.legend(fontsize=6)
    fig.savefig(path)
    plt.close(fig)


def plot_rank_histograms(ranks: np.ndarray, path, bins: int = 20) -> None:
    """Per-margin rank histograms against the uniform reference line."""
    n_margins = ranks.shape[0]
    cols = min(n_margins, 4)
    rows = (n_margins + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.4 * cols, 2.0 * rows),
                             squeeze=False)
    for j in range(rows * cols):
        ax = axes[j // cols][j % cols]
        if j >= n_margins:
            ax.axis("off")
            continue
        ax.hist(ranks[j], bins=bins, range=(0, 1), density=True,
                color="#4878cf", alpha=0.85)
        ax.axhline(1.0, color="k", lw=0.8, ls="--")
        ax.set_title(f"margin {j}", fontsize=7)
        ax.tick_params(labelsize=6)
    fig.savefig(path)
    plt.close(fig)


def plot_metric_traces(metrics_rows: list[dict], path) -> None:
    """Training loss and calibration distances against the batch counter."""
    batches = [int(r["batch"]) for r in metrics_rows]
    fig, axes = plt.subplots(1, 2, figsize=(7.0, 2.8))
    axes[0].plot(batches, [float(r["loss"]) for r in metrics_rows], lw=1.0)
    axes[0].set_xlabel("batch")
    axes[0].set_ylabel("training loss")
    axes[1].plot(batches, [float(r["sbc_wd_avg"]) for r in metrics_rows],
                 lw=1.0, label="rank WD (avg)")
    axes[1].plot(batches, [float(r["ecp"]) for r in metrics_rows],
                 lw=1.0, label="coverage WD")
    axes[1].set_xlabel("batch")
    axes[1].set_ylabel("distance to U(0,1)")
    axes[1].legend(fontsize=7)
    fig.savefig(path)
    plt.close(fig)


def load_metrics_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))
