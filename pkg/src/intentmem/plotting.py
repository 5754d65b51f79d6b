"""Figures for a metrics report. PNG metadata is stripped so reruns are byte-stable."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import MetricsReport  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_META)
    plt.close(fig)
    return path


def plot_ablation(report: MetricsReport, path: str | Path) -> Path:
    names = [r.config.name for r in report.rows]
    xs = range(len(names))
    fig, ax = plt.subplots(figsize=(8, 4))
    w = 0.4
    ax.bar([x - w / 2 for x in xs], [r.success for r in report.rows], w, label="success")
    ax.bar([x + w / 2 for x in xs], [r.completion for r in report.rows], w, label="completion")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_bins(report: MetricsReport, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in report.rows:
        if not r.bins:
            continue
        ax.plot([b.lo for b in r.bins], [b.success for b in r.bins], marker="o", label=r.config.name)
    ax.set_xlabel("plan length (bin start, steps)")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
