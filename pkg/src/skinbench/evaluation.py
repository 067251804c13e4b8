"""Measurement protocol: confusion counts, pixel-level aggregation,
per-group averaging, average precision, threshold sweeps and the
rank-of-the-average-rank comparison table.

Rates hitting a 0/0 denominator are defined as 0 and flagged as
degenerate so aggregation never poisons downstream tables with NaN.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DimensionMismatch,
    IncompleteMatrix,
    NoPositives,
)
from .imageio import DONTCARE, SKIN, threshold_map

REPORT_COLUMNS = (
    "method",
    "dataset",
    "tau",
    "precision",
    "recall",
    "f1",
    "tpr",
    "fpr",
    "ap",
    "rank",
)


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    tpr: float
    fpr: float
    degenerate: bool = False


def confusion(pred, gt):
    """Count tp/fp/fn/tn with SKIN as the positive class.

    Ground-truth DONTCARE pixels are excluded from every count;
    predictions must not contain DONTCARE.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if (pred == DONTCARE).any():
        raise ValueError("predictions must not contain DONTCARE pixels")
    care = gt != DONTCARE
    pred_skin = pred == SKIN
    gt_skin = gt == SKIN
    return ConfusionCounts(
        tp=int(np.count_nonzero(care & pred_skin & gt_skin)),
        fp=int(np.count_nonzero(care & pred_skin & ~gt_skin)),
        fn=int(np.count_nonzero(care & ~pred_skin & gt_skin)),
        tn=int(np.count_nonzero(care & ~pred_skin & ~gt_skin)),
    )


def _rate(num, den):
    return (num / den, False) if den else (0.0, True)


def metrics(c):
    """Derive precision, recall, F1, TPR, FPR from confusion counts."""
    precision, d1 = _rate(c.tp, c.tp + c.fp)
    recall, d2 = _rate(c.tp, c.tp + c.fn)
    f1, d3 = _rate(2 * c.tp, 2 * c.tp + c.fn + c.fp)
    fpr, d4 = _rate(c.fp, c.fp + c.tn)
    return Metrics(precision, recall, f1, recall, fpr, degenerate=d1 or d2 or d3 or d4)


def aggregate_pixel_level(counts):
    """Sum counts over all images, then compute metrics once.

    This is pixel-level averaging: large images weigh more than small
    ones, deliberately unlike the mean of per-image metrics.
    """
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    return metrics(total)


def group_average(counts_by_group):
    """Pixel-level metrics per group, then the unweighted mean across groups.

    Groups model videos evaluated as a single unit: each group counts
    once no matter how many frames it holds.
    """
    if not counts_by_group:
        return Metrics(0.0, 0.0, 0.0, 0.0, 0.0, degenerate=True)
    per_group = [aggregate_pixel_level(counts) for counts in counts_by_group.values()]
    n = len(per_group)
    return Metrics(
        precision=sum(m.precision for m in per_group) / n,
        recall=sum(m.recall for m in per_group) / n,
        f1=sum(m.f1 for m in per_group) / n,
        tpr=sum(m.tpr for m in per_group) / n,
        fpr=sum(m.fpr for m in per_group) / n,
        degenerate=any(m.degenerate for m in per_group),
    )


def average_precision(labeled_fractions):
    """AP in [0, 100] for ranking positives by detected skin fraction.

    Input is (is_positive, skin_fraction) per image. Images are sorted
    by fraction descending (stable, so ties keep input order) and AP is
    the mean precision at each positive's rank -- no interpolation.
    """
    if not labeled_fractions:
        raise NoPositives("no images to rank")
    positive = np.array([bool(lab) for lab, _ in labeled_fractions])
    fractions = np.array([float(frac) for _, frac in labeled_fractions])
    if not positive.any():
        raise NoPositives("average precision needs at least one positive image")
    order = np.argsort(-fractions, kind="stable")
    hits = positive[order]
    ranks = np.arange(1, len(hits) + 1)
    precision_at = np.cumsum(hits) / ranks
    return float(100.0 * precision_at[hits].mean())


def threshold_sweep(maps, gts, taus):
    """Pixel-level metrics for every tau in the sweep grid.

    Returns [(tau, Metrics), ...]; with the inclusive >= rule both TPR
    and FPR are non-increasing as tau rises.
    """
    if len(maps) != len(gts):
        raise ValueError("need one ground-truth mask per probability map")
    rows = []
    for tau in taus:
        counts = [confusion(threshold_map(m, tau), gt) for m, gt in zip(maps, gts)]
        rows.append((tau, aggregate_pixel_level(counts)))
    return rows


@dataclass
class RankTable:
    per_dataset: np.ndarray  # (methods, datasets) fractional ranks, 1 = best
    average: np.ndarray  # (methods,) mean rank across datasets
    final: np.ndarray  # (methods,) rank of the average rank


def rank_table(scores, higher_is_better=True):
    """Rank methods per dataset, average the ranks, rank the averages.

    Ties receive the mean of the tied rank positions (fractional
    ranking) at both stages.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.size == 0:
        raise IncompleteMatrix(f"need a 2-D score matrix, got shape {scores.shape}")
    if np.isnan(scores).any():
        raise IncompleteMatrix("score matrix has missing entries")
    keyed = -scores if higher_is_better else scores
    per_dataset = np.column_stack(
        [rankdata(keyed[:, j]) for j in range(scores.shape[1])]
    )
    average = per_dataset.mean(axis=1)
    final = rankdata(average)
    return RankTable(per_dataset, average, final)


@dataclass
class ManifestEntry:
    image_path: Path
    mask_path: Path | None = None
    group: str | None = None
    label: str | None = None  # "face"/"nonface" for AP-protocol manifests


_AP_LABELS = ("face", "nonface")


def parse_manifest(path):
    """Read a dataset manifest: TAB-separated image/mask[/group] records.

    Relative paths resolve against the manifest's directory. `#` starts
    a comment line. For the face-ranking protocol the second column may
    be the literal label `face` or `nonface` instead of a mask path.
    """
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = [f.strip() for f in line.split("\t")]
            if not 2 <= len(fields) <= 3 or not fields[0] or not fields[1]:
                raise ValueError(
                    f"{path}:{lineno}: expected image<TAB>mask[<TAB>group], got {line!r}"
                )
            image = Path(fields[0])
            if not image.is_absolute():
                image = base / image
            mask = None
            label = None
            if fields[1] in _AP_LABELS:
                label = fields[1]
            else:
                mask = Path(fields[1])
                if not mask.is_absolute():
                    mask = base / mask
            group = fields[2] if len(fields) == 3 and fields[2] else None
            entries.append(ManifestEntry(image, mask, group, label))
    return entries


def _format_cell(value):
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_report(rows, path):
    """Write evaluation rows as CSV with the documented header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row.get(col)) for col in REPORT_COLUMNS])


def read_report(path):
    """Read a report CSV back as a list of string-valued dicts."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REPORT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: report is missing columns {missing}")
        return list(reader)
