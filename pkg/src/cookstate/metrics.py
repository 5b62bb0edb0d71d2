"""Confusion matrices and the per-class precision/recall/F1 report.

Zero-denominator metrics are defined as 0 (a class never predicted has
precision 0, a class with no true samples has recall 0, and F1 of two zeros
is 0); reports carry a footnote when that convention fires. The summary row
is support-weighted; an unweighted macro average is emitted alongside,
clearly labeled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # K x K, rows = true class, columns = predicted
    class_names: list

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion_matrix(y_true, y_pred, k, class_names=None) -> ConfusionMatrix:
    """Count (true, predicted) pairs into a K x K grid."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError(f"label arrays disagree: {y_true.shape} vs {y_pred.shape}")
    counts = np.zeros((k, k), dtype=np.int64)
    if y_true.size:
        if y_true.min() < 0 or y_true.max() >= k or y_pred.min() < 0 or y_pred.max() >= k:
            raise DataError(f"labels outside [0, {k})")
        np.add.at(counts, (y_true, y_pred), 1)
    names = list(class_names) if class_names else [f"class{i}" for i in range(k)]
    if len(names) != k:
        raise DataError(f"{len(names)} class names for {k} classes")
    return ConfusionMatrix(counts, names)


def normalize_rows(cm: ConfusionMatrix) -> np.ndarray:
    """Row-wise percentages; all-zero rows stay zero (no NaN)."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    safe = np.where(sums == 0, 1.0, sums)
    out = counts / safe * 100.0
    out[sums[:, 0] == 0] = 0.0
    return out


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DomainError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


@dataclass
class ClassReport:
    class_names: list
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weighted_avg: tuple  # (precision, recall, f1)
    macro_avg: tuple
    degenerate: bool  # some metric hit the zero-denominator convention


def classification_report(cm: ConfusionMatrix) -> ClassReport:
    """Per-class precision/recall/F1 plus support-weighted and macro averages."""
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col == 0, 1, col), 0.0)
        recall = np.where(row > 0, diag / np.where(row == 0, 1, row), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr == 0, 1, pr), 0.0)
    support = row.astype(np.int64)
    total = support.sum()
    if total > 0:
        w = support / total
        weighted = (float(precision @ w), float(recall @ w), float(f1 @ w))
    else:
        weighted = (0.0, 0.0, 0.0)
    macro = (float(precision.mean()), float(recall.mean()), float(f1.mean()))
    degenerate = bool(np.any(col == 0) or np.any(row == 0))
    return ClassReport(list(cm.class_names), precision, recall, f1, support,
                       weighted, macro, degenerate)


# ---------------------------------------------------------------------------
# rendering


def report_text(report: ClassReport, digits: int = 2) -> str:
    """Aligned plain-text table: class, precision, recall, F1 score, support."""
    name_w = max(len(n) for n in report.class_names + ["average", "macro avg"])
    header = f"{'class':<{name_w}}  precision  recall  f1-score  support"
    lines = [header, "-" * len(header)]

    def fmt_row(name, p, r, f, s):
        return (f"{name:<{name_w}}  {p:>9.{digits}f}  {r:>6.{digits}f}  "
                f"{f:>8.{digits}f}  {s:>7d}")

    for i, name in enumerate(report.class_names):
        lines.append(fmt_row(name, report.precision[i], report.recall[i],
                             report.f1[i], int(report.support[i])))
    lines.append("-" * len(header))
    lines.append(fmt_row("average", *report.weighted_avg, int(report.support.sum())))
    lines.append(fmt_row("macro avg", *report.macro_avg, int(report.support.sum())))
    if report.degenerate:
        lines.append("note: metrics with a zero denominator are reported as 0")
    return "\n".join(lines) + "\n"


def report_csv(report: ClassReport) -> str:
    lines = ["class,precision,recall,f1,support"]
    for i, name in enumerate(report.class_names):
        lines.append(f"{name},{report.precision[i]:.6f},{report.recall[i]:.6f},"
                     f"{report.f1[i]:.6f},{int(report.support[i])}")
    lines.append(f"average,{report.weighted_avg[0]:.6f},{report.weighted_avg[1]:.6f},"
                 f"{report.weighted_avg[2]:.6f},{int(report.support.sum())}")
    lines.append(f"macro_avg,{report.macro_avg[0]:.6f},{report.macro_avg[1]:.6f},"
                 f"{report.macro_avg[2]:.6f},{int(report.support.sum())}")
    return "\n".join(lines) + "\n"


def matrix_csv(cm: ConfusionMatrix, normalized: bool = False) -> str:
    grid = normalize_rows(cm) if normalized else cm.counts
    lines = ["true\\pred," + ",".join(cm.class_names)]
    for i, name in enumerate(cm.class_names):
        if normalized:
            lines.append(name + "," + ",".join(f"{v:.4f}" for v in grid[i]))
        else:
            lines.append(name + "," + ",".join(str(int(v)) for v in grid[i]))
    return "\n".join(lines) + "\n"


def matrix_svg(cm: ConfusionMatrix, normalized: bool = True, cell: int = 56) -> str:
    """Heat-grid with per-cell labels; rows are true classes."""
    grid = normalize_rows(cm) if normalized else cm.counts.astype(np.float64)
    k = cm.k
    label_w = 110
    width = label_w + k * cell + 16
    height = label_w + k * cell + 16
    vmax = grid.max() if grid.max() > 0 else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(k):
        y = label_w + i * cell
        parts.append(f'<text x="{label_w - 6}" y="{y + cell / 2 + 4}" text-anchor="end" '
                     f'font-size="11">{cm.class_names[i]}</text>')
        xlab = label_w + i * cell + cell / 2
        parts.append(f'<text x="{xlab}" y="{label_w - 8}" text-anchor="middle" '
                     f'font-size="11" transform="rotate(-45 {xlab} {label_w - 8})">'
                     f'{cm.class_names[i]}</text>')
        for j in range(k):
            v = grid[i, j]
            x = label_w + j * cell
            shade = int(255 - 155 * (v / vmax))
            fill = f"rgb({shade},{shade},255)"
            text = f"{v:.1f}" if normalized else str(int(v))
            tcol = "black" if v / vmax < 0.6 else "white"
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{fill}" stroke="#888"/>')
            parts.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" '
                         f'text-anchor="middle" font-size="11" fill="{tcol}">{text}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
