"""Report rendering: delimited score tables and matplotlib figures.

Every report path writes a deterministic JSON document plus a CSV table, and
renders a PNG chart next to them for quick inspection.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first

from .ioutil import atomic_write_text
from .metrics import ScoreReport


def write_score_csv(report: ScoreReport, path: str | Path) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["category", "gold", "pred", "precision", "recall", "f1"])
    for cat in sorted(report.per_category):
        s = report.per_category[cat]
        writer.writerow([cat, s.gold, s.pred,
                         f"{s.precision:.4f}", f"{s.recall:.4f}", f"{s.f1:.4f}"])
    writer.writerow(["weighted", report.gold_total, report.pred_total,
                     f"{report.micro[0]:.4f}", f"{report.micro[1]:.4f}",
                     f"{report.weighted_f1:.4f}"])
    return atomic_write_text(path, buf.getvalue())


def render_score_figure(report: ScoreReport, path: str | Path,
                        title: str = "Per-category F1") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    categories = sorted(report.per_category)
    f1s = [report.per_category[c].f1 for c in categories]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(categories, f1s, color="#4878a8")
    ax.axhline(report.weighted_f1, color="#b04a4a", linestyle="--",
               label=f"weighted F1 = {report.weighted_f1:.4f}")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_pilot_csv(rows: Sequence[Mapping], path: str | Path) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["rank", "name", "model", "erc_weighted_f1", "pair_weighted_f1"])
    for rank, row in enumerate(rows, start=1):
        writer.writerow([rank, row["name"], row["model"],
                         f"{row['erc_weighted_f1']:.4f}", f"{row['pair_weighted_f1']:.4f}"])
    return atomic_write_text(path, buf.getvalue())


def render_pilot_figure(rows: Sequence[Mapping], path: str | Path,
                        title: str = "Endpoint comparison") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [row["name"] for row in rows]
    erc = [row["erc_weighted_f1"] for row in rows]
    pairs = [row["pair_weighted_f1"] for row in rows]
    positions = range(len(names))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(names)), 4))
    ax.bar([p - width / 2 for p in positions], erc, width, label="ERC", color="#8a9f58")
    ax.bar([p + width / 2 for p in positions], pairs, width, label="pairs", color="#4878a8")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("weighted F1")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
