"""Outbreak thresholding, forward-chained threshold tuning, investigation
allocation and its confusion-matrix evaluation.

Estimates and labels are plain mappings keyed by (county, day).  A county-day
is flagged as an outbreak when its growth rate estimate exceeds the threshold;
the threshold is tuned by maximizing F1 on a forward-chained validation range
and then scored once on the untouched test range.  The investigation allocator
ranks counties by estimated rate times current incident cases and recommends
the top ``capacity`` per decision point; ground truth for scoring is the set
of counties with the largest realized incident increase over the lookahead
window.  Under the stated accounting, every false positive pairs with exactly
one false negative (a lower bound on misses), so FN = FP by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

from casegrowth.errors import DomainError, TuningError

LN2 = math.log(2.0)


def doubling_time(rate: float) -> float:
    """Days for incident cases to double at ``rate``; ln(2)/rate.

    Zero rate returns ``inf`` (never doubles); negative rates give the halving
    time with a negative sign.
    """
    if rate == 0.0:
        return math.inf
    return LN2 / rate


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DomainError("confusion counts must be non-negative")

    def __add__(self, other):
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def precision(self):
        d = self.tp + self.fp
        return self.tp / d if d else None

    ppv = precision

    @property
    def recall(self):
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def tnr(self):
        d = self.tn + self.fp
        return self.tn / d if d else None

    def f1(self, variant: str = "standard"):
        """Standard F1 by default; ``variant="tpr-fpr"`` evaluates the rate-based
        formula some write-ups print, kept for fidelity experiments."""
        if variant == "standard":
            p, r = self.precision, self.recall
            if p is None or r is None or (p + r) == 0:
                return 0.0
            return 2 * p * r / (p + r)
        if variant == "tpr-fpr":
            tpr = self.recall or 0.0
            d = self.fp + self.tn
            fpr = self.fp / d if d else 0.0
            if tpr + fpr == 0:
                return 0.0
            return 2 * tpr * fpr / (tpr + fpr)
        raise DomainError(f"unknown F1 variant {variant!r}")


@dataclass(frozen=True)
class DetectionConfig:
    threshold: float
    lookahead: int = 7
    split: tuple | None = None  # ((lo, hi), (lo, hi), (lo, hi)) day ranges

    def __post_init__(self):
        if self.lookahead < 1:
            raise DomainError("lookahead must be >= 1")
        if self.split is not None:
            (t0, t1), (v0, v1), (s0, s1) = self.split
            if not (t0 <= t1 < v0 <= v1 < s0 <= s1):
                raise DomainError("split ranges must be ordered and disjoint")


@dataclass(frozen=True)
class ClassificationResult:
    predictions: dict  # (county, day) -> bool
    cm: ConfusionMatrix
    missing_labels: int


def classify_outbreaks(estimates: dict, labels: dict, threshold: float) -> ClassificationResult:
    """Flag cells with rate strictly above the threshold; tally against labels.

    Cells without a label are excluded from the confusion matrix and counted.
    """
    predictions = {}
    tp = fp = fn = tn = 0
    missing = 0
    for key in sorted(estimates):
        pred = estimates[key] > threshold
        predictions[key] = pred
        label = labels.get(key)
        if label is None:
            missing += 1
            continue
        if pred and label:
            tp += 1
        elif pred and not label:
            fp += 1
        elif not pred and label:
            fn += 1
        else:
            tn += 1
    return ClassificationResult(predictions, ConfusionMatrix(tp, fp, fn, tn), missing)


class GuardedSeries:
    """Day-range guard over a (county, day)-keyed mapping.

    Reads outside the allowed range return nothing and are tallied, mirroring
    the table views used by the estimators.
    """

    def __init__(self, data: dict, allowed: tuple):
        self._data = data
        self._lo, self._hi = allowed
        self.violations = 0

    def get(self, county, day):
        if not self._lo <= day <= self._hi:
            self.violations += 1
            return None
        return self._data.get((county, day))

    def keys_in(self, lo, hi):
        return sorted(k for k in self._data if lo <= k[1] <= hi)


@dataclass(frozen=True)
class TuningResult:
    config: DetectionConfig
    validation_cm: ConfusionMatrix
    validation_f1: float
    test_cm: ConfusionMatrix
    test_f1: float
    guard_violations: int


def tune_threshold(
    estimates: dict,
    labels: dict,
    config: DetectionConfig,
    grid,
    f1_variant: str = "standard",
) -> TuningResult:
    """Pick the threshold maximizing validation F1, then score the test range.

    The candidate evaluation runs behind a guard that cannot see past the
    validation range, so tuning structurally never reads test rows.
    """
    if config.split is None:
        raise TuningError("tuning needs a (train, validation, test) split")
    (t0, _t1), (v0, v1), (s0, s1) = config.split
    est_guard = GuardedSeries(estimates, (t0, v1))
    lab_guard = GuardedSeries(labels, (t0, v1))

    val_keys = est_guard.keys_in(v0, v1)
    val_labels = {k: lab_guard.get(*k) for k in val_keys}
    val_labels = {k: v for k, v in val_labels.items() if v is not None}
    if not any(val_labels.values()):
        raise TuningError("validation range has no positive labels")

    best_thr, best_f1, best_cm = None, -1.0, None
    for thr in sorted(grid):
        cells = {k: est_guard.get(*k) for k in val_labels}
        result = classify_outbreaks(cells, val_labels, thr)
        f1 = result.cm.f1(f1_variant)
        if f1 > best_f1:
            best_thr, best_f1, best_cm = thr, f1, result.cm

    test_cells = {k: v for k, v in estimates.items() if s0 <= k[1] <= s1}
    test_labels = {k: v for k, v in labels.items() if s0 <= k[1] <= s1}
    test_result = classify_outbreaks(test_cells, test_labels, best_thr)
    return TuningResult(
        config=replace(config, threshold=best_thr),
        validation_cm=best_cm,
        validation_f1=best_f1,
        test_cm=test_result.cm,
        test_f1=test_result.cm.f1(f1_variant),
        guard_violations=est_guard.violations + lab_guard.violations,
    )


@dataclass(frozen=True)
class DecisionPoint:
    day: int
    capacity: int
    excluded: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.capacity < 1:
            raise DomainError("decision point capacity must be >= 1")


@dataclass(frozen=True)
class Recommendation:
    day: int
    counties: tuple
    shortfall: int = 0


def allocate_investigations(estimates: dict, table, points) -> list:
    """Top-capacity counties per decision point by projected case increase.

    Score is rate times current incident cases; ties break toward the larger
    incident count and then the lexicographically smaller county id.  If fewer
    candidates than capacity exist, all are returned with a shortfall note.
    """
    out = []
    for point in points:
        t = point.day
        scored = []
        for ci, county in enumerate(table.counties):
            if county in point.excluded:
                continue
            rate = estimates.get((county, t))
            incident = table.incident_at(t, ci)
            if rate is None or not math.isfinite(incident):
                continue
            scored.append((-(rate * incident), -incident, county))
        scored.sort()
        chosen = tuple(c for _, _, c in scored[: point.capacity])
        out.append(
            Recommendation(day=t, counties=chosen, shortfall=max(0, point.capacity - len(chosen)))
        )
    return out


@dataclass(frozen=True)
class AllocationReport:
    cm: ConfusionMatrix
    skipped_points: int

    @property
    def ppv(self):
        return self.cm.ppv


def evaluate_allocation(recommendations, table, points, lookahead: int = 7) -> AllocationReport:
    """Score recommendations against realized incident increases.

    Per point, ground truth is the ``capacity`` non-excluded counties with the
    greatest increase in incident cases over the lookahead window; TP is the
    overlap, FP the remainder, FN = FP (the stated lower-bound accounting) and
    TN the rest of the candidate pool.  Points whose truth window leaves the
    data are skipped and counted.
    """
    by_day = {rec.day: rec for rec in recommendations}
    total = ConfusionMatrix()
    skipped = 0
    for point in points:
        rec = by_day.get(point.day)
        if rec is None:
            skipped += 1
            continue
        t = point.day
        horizon = t + lookahead
        if horizon > table.n_days:
            skipped += 1
            continue
        candidates = []
        for ci, county in enumerate(table.counties):
            if county in point.excluded:
                continue
            now = table.incident_at(t, ci)
            later = table.incident_at(horizon, ci)
            if math.isfinite(now) and math.isfinite(later):
                candidates.append((-(later - now), -now, county))
        if not candidates:
            skipped += 1
            continue
        candidates.sort()
        truth = {c for _, _, c in candidates[: point.capacity]}
        recommended = set(rec.counties)
        tp = len(recommended & truth)
        fp = len(recommended) - tp
        fn = fp
        tn = max(0, len(candidates) - len(recommended) - fn)
        total = total + ConfusionMatrix(tp, fp, fn, tn)
    return AllocationReport(cm=total, skipped_points=skipped)


def absolute_threshold_counts(estimates: dict, table, threshold: float, days=None) -> dict:
    """Per-day count of counties whose projected increase exceeds the threshold."""
    if days is None:
        days = sorted({d for _, d in estimates})
    counts = {}
    for t in days:
        n = 0
        for ci, county in enumerate(table.counties):
            rate = estimates.get((county, t))
            incident = table.incident_at(t, ci)
            if rate is None or not math.isfinite(incident):
                continue
            if rate * incident > threshold:
                n += 1
        counts[t] = n
    return counts


def load_decision_points(path) -> list:
    """Decision points from CSV: day, capacity, excluded ('|'-separated ids)."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "day" not in reader.fieldnames:
            raise DomainError(f"{path}: need columns day, capacity[, excluded]")
        for rec in reader:
            excluded = frozenset(
                c.strip() for c in (rec.get("excluded") or "").split("|") if c.strip()
            )
            points.append(
                DecisionPoint(
                    day=int(rec["day"]), capacity=int(rec.get("capacity") or 1), excluded=excluded
                )
            )
    return points
