"""Delimited summaries and figures rendered next to JSON reports."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .attribute import AttributionResult
from .harness import ExperimentReport


def write_simulation_csv(report: ExperimentReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["repetition", "method", "accuracy", "non_orphan_accuracy",
                         "correct", "total"])
        for rep in report.repetitions:
            if "methods" not in rep:
                continue
            for method, out in sorted(rep["methods"].items()):
                writer.writerow([
                    rep["repetition"], method,
                    f"{out['accuracy']:.6f}",
                    "" if out.get("non_orphan_accuracy") is None
                    else f"{out['non_orphan_accuracy']:.6f}",
                    out["correct"], out["total"],
                ])


def render_simulation_figures(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = sorted(report.aggregates)
    written: list[Path] = []

    means = [report.aggregates[m]["mean_accuracy"] for m in methods]
    lows = [report.aggregates[m]["mean_accuracy"] - report.aggregates[m]["min_accuracy"]
            for m in methods]
    highs = [report.aggregates[m]["max_accuracy"] - report.aggregates[m]["mean_accuracy"]
             for m in methods]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(methods, means, yerr=[lows, highs], capsize=4, color="#4878a8")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title("Attribution accuracy by method (mean, min-max over repetitions)")
    fig.tight_layout()
    path = out_dir / "accuracy_by_method.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    ok_reps = [r for r in report.repetitions if "methods" in r]
    if ok_reps:
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = [r["repetition"] for r in ok_reps]
        for method in methods:
            ax.plot(xs, [r["methods"][method]["accuracy"] for r in ok_reps],
                    marker="o", label=method)
        ax.set_xlabel("repetition")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="best", fontsize=8)
        ax.set_title("Accuracy per repetition")
        fig.tight_layout()
        path = out_dir / "accuracy_by_repetition.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def write_attribution_csv(result: AttributionResult, path: str | Path) -> None:
    is_votes = any("votes" in ev for ev in result.evidence.values())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["fine_tuned_id", "predicted_base"] + list(result.base_ids)
        if is_votes:
            header.append("abstain")
        writer.writerow(header)
        for ft_id in sorted(result.pairs):
            ev = result.evidence[ft_id]
            row: list = [ft_id, result.pairs[ft_id] or "NONE"]
            if "votes" in ev:
                row += ev["votes"] + [ev["abstain"]]
            else:
                row += ["" if v is None else f"{v:.6f}" for v in ev["scores"]]
            writer.writerow(row)


def render_attribution_figure(result: AttributionResult, path: str | Path) -> Path:
    """Heatmap of each fine-tuned model's evidence across the bases."""
    ft_ids = sorted(result.pairs)
    grid = np.zeros((len(ft_ids), len(result.base_ids)))
    for i, ft_id in enumerate(ft_ids):
        ev = result.evidence[ft_id]
        values = ev["votes"] if "votes" in ev else ev["scores"]
        grid[i] = [0.0 if v is None else float(v) for v in values]
    fig, ax = plt.subplots(figsize=(1.2 + 0.45 * len(result.base_ids),
                                    1.2 + 0.35 * len(ft_ids)))
    im = ax.imshow(grid, aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(result.base_ids)), result.base_ids, rotation=90, fontsize=7)
    ax.set_yticks(range(len(ft_ids)), ft_ids, fontsize=7)
    ax.set_title(f"{result.method} evidence", fontsize=10)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
