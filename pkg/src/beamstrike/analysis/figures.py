"""Plots and CSV sidecars for the WSR / POS analysis."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import gaussian_kde  # noqa: E402

from .pos import UPOS_TAGS, TransitionMatrix  # noqa: E402

logger = logging.getLogger(__name__)

KDE_MIN_SAMPLES = 5


class IoFailure(OSError):
    pass


@dataclass
class AnalysisRecord:
    sample_id: str
    task: str
    victim: str
    wsr_percent: float
    modifications: int
    length_preserved: Optional[bool] = None
    pos_changes: Optional[int] = None
    qualifying: bool = False


WSR_FIELDS = ["sample_id", "task", "victim", "wsr_percent", "modifications",
              "length_preserved", "pos_changes", "qualifying"]


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _plot_wsr(records, ax) -> None:
    by_task = defaultdict(list)
    for r in records:
        by_task[r.task or "all"].append(r.wsr_percent)
    upper = max(max(v) for v in by_task.values())
    grid = np.linspace(0.0, max(upper * 1.2, 1.0), 256)
    for task in sorted(by_task):
        values = np.asarray(by_task[task], dtype=float)
        label = f"{task} (mean {values.mean():.1f}%)"
        if len(values) >= KDE_MIN_SAMPLES and np.ptp(values) > 0:
            ax.plot(grid, gaussian_kde(values, bw_method="scott")(grid), label=label)
        else:
            ax.hist(values, bins=min(10, max(1, len(values))), density=True, histtype="step", label=label)
    ax.set_xlabel("WSR (%)")
    ax.set_ylabel("density")
    ax.legend()


def emit_figures(records: Sequence[AnalysisRecord], matrix: TransitionMatrix, out_dir,
                 fmt: str = "png") -> list[Path]:
    """Write four figures plus their CSV data; returns every written path.

    Figures: WSR density per task, POS-change histogram over single-edit
    length-preserving samples, transition heatmap, word changes per victim.
    """
    if not records:
        raise ValueError("emit_figures needs at least one record")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return _emit(records, matrix, out, fmt)
    except OSError as exc:
        raise IoFailure(f"cannot write figures to {out}: {exc}") from exc


def _emit(records, matrix, out: Path, fmt: str) -> list[Path]:
    paths = []

    wsr_csv = out / "wsr.csv"
    _write_csv(wsr_csv, WSR_FIELDS, [
        [r.sample_id, r.task, r.victim, f"{r.wsr_percent:.6g}", r.modifications,
         "" if r.length_preserved is None else int(r.length_preserved),
         "" if r.pos_changes is None else r.pos_changes, int(r.qualifying)]
        for r in records
    ])
    fig, ax = plt.subplots(figsize=(6, 4))
    _plot_wsr(records, ax)
    ax.set_title("Word substitution rate by task")
    paths += [_save(fig, out / f"wsr_by_task.{fmt}"), wsr_csv]

    changes = Counter(r.pos_changes for r in records
                      if r.modifications == 1 and r.length_preserved and r.pos_changes is not None)
    pos_csv = out / "pos_changes.csv"
    total = sum(changes.values())
    _write_csv(pos_csv, ["pos_changes", "count", "frequency"],
               [[k, changes[k], f"{changes[k] / total:.6g}"] for k in sorted(changes)])
    fig, ax = plt.subplots(figsize=(6, 4))
    if changes:
        keys = sorted(changes)
        ax.bar(keys, [changes[k] for k in keys])
    else:
        ax.text(0.5, 0.5, "no single-edit, length-preserving samples", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_xlabel("POS tags changed")
    ax.set_ylabel("samples")
    ax.set_title("POS tag changes (single substitution)")
    paths += [_save(fig, out / f"pos_changes.{fmt}"), pos_csv]

    raw = matrix.as_array()
    norm = matrix.row_normalized()
    matrix_csv = out / "transition_matrix.csv"
    _write_csv(matrix_csv, ["from_upos", *UPOS_TAGS],
               [[tag, *row.tolist()] for tag, row in zip(UPOS_TAGS, raw)])
    norm_csv = out / "transition_matrix_normalized.csv"
    _write_csv(norm_csv, ["from_upos", *UPOS_TAGS],
               [[tag, *(f"{v:.6g}" for v in row)] for tag, row in zip(UPOS_TAGS, norm)])
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(raw, cmap="viridis")
    ax.set_xticks(range(len(UPOS_TAGS)), UPOS_TAGS, rotation=90)
    ax.set_yticks(range(len(UPOS_TAGS)), UPOS_TAGS)
    ax.set_xlabel("adversarial UPOS")
    ax.set_ylabel("original UPOS")
    fig.colorbar(im, ax=ax)
    ax.set_title(f"POS transitions (n={matrix.total})")
    paths += [_save(fig, out / f"transition_matrix.{fmt}"), matrix_csv, norm_csv]

    per_victim = defaultdict(Counter)
    for r in records:
        per_victim[r.victim or "victim"][r.modifications] += 1
    victims = sorted(per_victim)
    counts_csv = out / "word_changes.csv"
    _write_csv(counts_csv, ["victim", "modifications", "count"],
               [[v, m, per_victim[v][m]] for v in victims for m in sorted(per_victim[v])])
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = sorted({m for c in per_victim.values() for m in c})
    width = 0.8 / len(victims)
    for i, v in enumerate(victims):
        ax.bar([x + i * width for x in xs], [per_victim[v][x] for x in xs], width=width, label=v)
    ax.set_xlabel("words changed")
    ax.set_ylabel("samples")
    ax.legend()
    ax.set_title("Word changes per victim")
    paths += [_save(fig, out / f"word_changes_by_victim.{fmt}"), counts_csv]
    return paths


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
