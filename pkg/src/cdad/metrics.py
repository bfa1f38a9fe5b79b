"""Confusion counting and the four point-wise detection metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    fpr: float
    undefined: list[str]  # metrics whose denominator was zero
    run_id: str = ""
    fingerprint: str = ""


def confusion(pred, truth) -> Confusion:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    tn = int(np.sum((pred == 0) & (truth == 0)))
    return Confusion(tp, fp, fn, tn)


def compute_metrics(c: Confusion, run_id: str = "", fingerprint: str = "") -> MetricReport:
    """Precision, recall, F1, FPR; 0/0 cases yield 0 and are flagged rather
    than raising, so sweeps over degenerate thresholds never abort."""
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    if precision + recall == 0:
        undefined.append("f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    fpr = ratio(c.fp, c.fp + c.tn, "fpr")
    return MetricReport(precision, recall, f1, fpr, undefined, run_id, fingerprint)


def emit_report(reports: list[MetricReport], mode: str = "table") -> str:
    """Deterministic FPR, Precision, Recall, F1 column order."""
    if not reports:
        raise ValueError("no reports to emit")
    if mode == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["run_id", "fpr", "precision", "recall", "f1", "fingerprint"])
        for r in reports:
            writer.writerow(
                [r.run_id, f"{r.fpr:.6f}", f"{r.precision:.6f}", f"{r.recall:.6f}",
                 f"{r.f1:.6f}", r.fingerprint]
            )
        return buf.getvalue()
    if mode == "table":
        rows = [["Method", "FPR", "Precision", "Recall", "F1"]]
        for r in reports:
            rows.append(
                [r.run_id or "-", f"{100 * r.fpr:.2f}", f"{100 * r.precision:.2f}",
                 f"{100 * r.recall:.2f}", f"{100 * r.f1:.2f}"]
            )
        widths = [max(len(row[i]) for row in rows) for i in range(5)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown mode {mode!r}")


def parse_report_csv(text: str) -> list[MetricReport]:
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for row in reader:
        out.append(
            MetricReport(
                precision=float(row["precision"]),
                recall=float(row["recall"]),
                f1=float(row["f1"]),
                fpr=float(row["fpr"]),
                undefined=[],
                run_id=row["run_id"],
                fingerprint=row.get("fingerprint", ""),
            )
        )
    return out
