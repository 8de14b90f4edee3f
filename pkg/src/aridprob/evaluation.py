"""One-vs-rest confusion counts and per-class, per-year metrics.

KT labels are the ground truth.  For class c, tp counts pixels of class c
predicted as c, fp pixels of other classes predicted as c, fn pixels of
class c predicted otherwise, and tn the remaining pixels (neither truth
nor prediction is c), so tp + fp + fn + tn equals the number of pixels
evaluated.  Zero-denominator metrics are reported as undefined (None),
never NaN.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import UsageError, ValidationError
from .ktc import MISSING_CLASS, AridityClass

CSV_COLUMNS = ["class", "year", "precision", "recall", "f1", "tp", "fp", "fn", "tn"]

CLASS_NAMES = {
    AridityClass.ARID: "arid",
    AridityClass.SEMI_ARID: "semi_arid",
    AridityClass.NON_ARID: "non_arid",
}


@dataclass(frozen=True)
class ConfusionCounts:
    cls: AridityClass
    year: int
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsRow:
    cls: AridityClass
    year: int
    precision: float  # None when undefined
    recall: float
    f1: float
    counts: ConfusionCounts


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple                 # MetricsRow per (class, year)
    accuracy_by_year: dict      # year -> overall accuracy
    evaluated_by_year: dict     # year -> pixels evaluated
    class_means: dict           # class -> {"precision": ..., "recall": ..., "f1": ...}

    @property
    def overall_accuracy(self) -> float:
        correct = sum(a * n for a, n in
                      zip(self.accuracy_by_year.values(), self.evaluated_by_year.values()))
        total = sum(self.evaluated_by_year.values())
        return correct / total if total else float("nan")

    def row(self, cls, year) -> MetricsRow:
        for r in self.rows:
            if r.cls == cls and r.year == year:
                return r
        raise KeyError((cls, year))

    def f1_mean(self, cls) -> float:
        return self.class_means[AridityClass(cls)]["f1"]


def argmax_classify(probs) -> AridityClass:
    """Class of maximal probability; ties break toward the lowest class code."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (3,):
        raise ValidationError("argmax_classify expects a probability triple")
    return AridityClass(int(np.argmax(probs)) + 1)


def argmax_classify_array(probs: np.ndarray) -> np.ndarray:
    """Vectorized argmax over the trailing axis; NaN triples yield MISSING_CLASS."""
    probs = np.asarray(probs, dtype=np.float64)
    missing = np.isnan(probs).any(axis=-1)
    safe = np.where(np.isnan(probs), -np.inf, probs)
    out = (safe.argmax(axis=-1) + 1).astype(np.int8)
    out[missing] = MISSING_CLASS
    return out


def _check_aligned(truth, pred):
    if len(truth) != len(pred):
        raise UsageError("truth and prediction cover different numbers of years")
    for t, p in zip(truth, pred):
        if t.year != p.year:
            raise UsageError(f"year mismatch: truth {t.year} vs prediction {p.year}")
        if not t.spec.same_space(p.spec):
            raise UsageError("truth and prediction rasters live on different grids")


def confusion(truth, pred) -> list:
    """ConfusionCounts per class per year; missing pixels excluded pairwise."""
    _check_aligned(truth, pred)
    out = []
    for t, p in zip(truth, pred):
        valid = (t.classes != MISSING_CLASS) & (p.classes != MISSING_CLASS)
        y_true = t.classes[valid]
        y_pred = p.classes[valid]
        n = int(valid.sum())
        for cls in AridityClass:
            is_t = y_true == cls
            is_p = y_pred == cls
            tp = int(np.sum(is_t & is_p))
            fp = int(np.sum(~is_t & is_p))
            fn = int(np.sum(is_t & ~is_p))
            out.append(ConfusionCounts(
                cls=cls, year=t.year, tp=tp, fp=fp, fn=fn, tn=n - tp - fp - fn,
            ))
    return out


def metrics(counts: ConfusionCounts):
    """(precision, recall, f1); any 0/0 becomes None."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def evaluate(truth, pred, years=None) -> MetricsReport:
    """Per-(class, year) metrics, yearly accuracy, and per-class means."""
    if years is not None:
        years = set(years)
        truth = [t for t in truth if t.year in years]
        pred = [p for p in pred if p.year in years]
    _check_aligned(truth, pred)
    if not truth:
        raise UsageError("no overlapping years to evaluate")

    rows = []
    for c in confusion(truth, pred):
        precision, recall, f1 = metrics(c)
        rows.append(MetricsRow(
            cls=c.cls, year=c.year, precision=precision, recall=recall, f1=f1, counts=c,
        ))

    accuracy_by_year = {}
    evaluated_by_year = {}
    for t, p in zip(truth, pred):
        valid = (t.classes != MISSING_CLASS) & (p.classes != MISSING_CLASS)
        n = int(valid.sum())
        correct = int(np.sum((t.classes == p.classes) & valid))
        evaluated_by_year[t.year] = n
        accuracy_by_year[t.year] = correct / n if n else float("nan")

    class_means = {}
    for cls in AridityClass:
        means = {}
        for name in ("precision", "recall", "f1"):
            vals = [getattr(r, name) for r in rows
                    if r.cls == cls and getattr(r, name) is not None]
            means[name] = float(np.mean(vals)) if vals else None
        class_means[cls] = means
    return MetricsReport(
        rows=tuple(rows),
        accuracy_by_year=accuracy_by_year,
        evaluated_by_year=evaluated_by_year,
        class_means=class_means,
    )


def _fmt(value):
    return "" if value is None else repr(float(value))


def save_metrics_csv(report: MetricsReport, path) -> None:
    """Full-precision metrics CSV; undefined values serialize as empty fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow([
                int(r.cls), r.year, _fmt(r.precision), _fmt(r.recall), _fmt(r.f1),
                r.counts.tp, r.counts.fp, r.counts.fn, r.counts.tn,
            ])


def save_accuracy_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["year", "accuracy", "evaluated"])
        for year in sorted(report.accuracy_by_year):
            writer.writerow([
                year, repr(report.accuracy_by_year[year]), report.evaluated_by_year[year],
            ])
