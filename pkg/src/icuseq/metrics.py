"""AUROC (Mann-Whitney with tie handling) and metric reports."""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from .cohort import LABEL_NAMES


class UndefinedMetricError(ValueError):
    """Raised when AUROC is requested for a single-class label vector."""


def auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted half.

    Rank-based Mann-Whitney formulation with average ranks over tie groups;
    raises :class:`UndefinedMetricError` instead of silently returning a
    value when either class is absent.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC undefined: {n_pos} positives, {n_neg} negatives")
    order = np.argsort(s, kind="mergesort")
    _, inverse, counts = np.unique(s[order], return_inverse=True, return_counts=True)
    before = np.concatenate([[0], np.cumsum(counts)[:-1]])
    avg_rank = before + (counts + 1) / 2.0
    ranks_sorted = avg_rank[inverse]
    rank_sum_pos = ranks_sorted[y[order]].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def task_aurocs(scores: np.ndarray, labels: np.ndarray) -> dict:
    """Per-task AUROC for (n, 7) score/label matrices."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.shape[1] != len(LABEL_NAMES):
        raise ValueError("expected (n, 7) scores and labels")
    return {name: auroc(scores[:, k], labels[:, k])
            for k, name in enumerate(LABEL_NAMES)}


@dataclass
class MetricsReport:
    model: str
    task_auroc: dict       # LABEL_NAMES -> float
    mean_auroc: float
    epochs: int
    seed: int
    config_hash: str
    wall_clock_s: float = 0.0

    def __post_init__(self):
        if tuple(self.task_auroc) != LABEL_NAMES:
            raise ValueError("task_auroc must cover the seven outcomes in order")
        mean = sum(self.task_auroc.values()) / len(self.task_auroc)
        if abs(mean - self.mean_auroc) > 1e-12:
            raise ValueError("mean_auroc is not the arithmetic mean of the task values")

    @classmethod
    def from_scores(cls, model: str, scores, labels, epochs: int, seed: int,
                    config_hash: str, wall_clock_s: float = 0.0) -> "MetricsReport":
        per_task = task_aurocs(scores, labels)
        return cls(model=model, task_auroc=per_task,
                   mean_auroc=sum(per_task.values()) / len(per_task),
                   epochs=epochs, seed=seed, config_hash=config_hash,
                   wall_clock_s=wall_clock_s)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# CSV layout mirrors the comparison table: mean, the two readmission tasks,
# then the five mortality horizons. Timing stays out of the CSV so repeated
# runs are byte-identical; it lives in the JSON report only.
CSV_COLUMNS = ("model", "mean", *LABEL_NAMES, "epochs", "seed", "config_hash")


def reports_to_csv(reports: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow([r.model, repr(r.mean_auroc),
                         *[repr(r.task_auroc[name]) for name in LABEL_NAMES],
                         r.epochs, r.seed, r.config_hash])
    return buf.getvalue()


def reports_from_csv(text: str) -> list:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unrecognized report CSV header")
    out = []
    for row in rows[1:]:
        model, mean, *rest = row
        per_task = {name: float(rest[i]) for i, name in enumerate(LABEL_NAMES)}
        epochs, seed, config_hash = rest[len(LABEL_NAMES):]
        out.append(MetricsReport(model=model, task_auroc=per_task,
                                 mean_auroc=float(mean), epochs=int(epochs),
                                 seed=int(seed), config_hash=config_hash))
    return out
