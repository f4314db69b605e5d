"""Biometric and prediction-quality evaluation.

A comparison is a match iff ``score >= threshold``.  EER is read off the
(FMR, FNMR) polyline by linear interpolation where ``FMR - FNMR`` changes
sign.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, InputError
from .robust_stats import spearman

log = logging.getLogger(__name__)

DEVIATION_BUCKETS = ("0", "1", "2", "3+")


def fmr_fnmr(genuine, impostor, threshold: float) -> tuple[float, float]:
    g = np.asarray(genuine, dtype=float)
    i = np.asarray(impostor, dtype=float)
    if g.size == 0 or i.size == 0:
        raise InputError("genuine and impostor scores must be non-empty")
    return float((i >= threshold).sum() / i.size), float((g < threshold).sum() / g.size)


@dataclass(frozen=True)
class DetCurve:
    """Error rates at every distinct score plus the two infinite sentinels."""

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray
    eer: float

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.fmr.tolist(), self.fnmr.tolist()))


def interpolate_eer(fmr, fnmr) -> float:
    """EER from rate arrays ordered by increasing threshold."""
    d = np.asarray(fmr) - np.asarray(fnmr)
    k = int(np.argmax(d <= 0))
    if d[k] == 0 or k == 0:
        return float(fmr[k])
    t = d[k - 1] / (d[k - 1] - d[k])
    return float(fmr[k - 1] + t * (fmr[k] - fmr[k - 1]))


def det_curve(genuine, impostor) -> DetCurve:
    g = np.sort(np.asarray(genuine, dtype=float))
    i = np.sort(np.asarray(impostor, dtype=float))
    if g.size == 0 or i.size == 0:
        raise InputError("genuine and impostor scores must be non-empty")
    thr = np.unique(np.concatenate([g, i]))
    thr = np.concatenate([[-np.inf], thr, [np.inf]])
    # counts of scores < t, via binary search on the sorted pools
    fmr = (i.size - np.searchsorted(i, thr, side="left")) / i.size
    fnmr = np.searchsorted(g, thr, side="left") / g.size
    return DetCurve(thr, fmr, fnmr, interpolate_eer(fmr, fnmr))


def select_best_imprints(classes: Mapping, fingers: Sequence | None = None) -> dict:
    """Pick the best-classed imprint per finger; ties go to the lowest imprint.

    ``classes`` maps sample ids (with ``finger`` and ``imprint``) to class
    numbers.  Fingers listed in ``fingers`` without any labelled imprint are
    skipped with a log entry.
    """
    by_finger = defaultdict(list)
    for s, c in classes.items():
        by_finger[s.finger].append((int(c), s.imprint, s))
    if fingers is not None:
        missing = [f for f in fingers if f not in by_finger]
        if missing:
            log.warning("%d fingers have no labelled imprint and are skipped", len(missing))
        keep = set(fingers)
        by_finger = {f: v for f, v in by_finger.items() if f in keep}
    return {f: min(v)[2] for f, v in sorted(by_finger.items())}


def naive_selection(samples: Sequence, fingers: Sequence | None = None) -> dict:
    """Lowest imprint index per finger, ignoring quality."""
    return select_best_imprints({s: 1 for s in samples}, fingers)


def _pooled_scores(table, row_of: Mapping, selection: Mapping) -> tuple[np.ndarray, np.ndarray]:
    missing = [s for s in selection.values() if s not in row_of]
    if missing:
        raise DataError("no scores for selected samples: " + ", ".join(map(str, missing[:10])))
    rows = np.array([row_of[s] for s in selection.values()], dtype=np.int64)
    g = table.genuine[rows]
    return g[~np.isnan(g)], table.impostor[rows].ravel()


def quality_selected_det(table, selection: Mapping) -> DetCurve:
    """DET curve of the pooled scores of the selected imprints under ``table``'s matcher."""
    row_of = {s: i for i, s in enumerate(table.samples)}
    g, i = _pooled_scores(table, row_of, selection)
    return det_curve(g, i)


@dataclass(frozen=True)
class DeviationHistogram:
    counts: dict

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def fractions(self) -> dict:
        """Exact fractions; they sum to exactly 1."""
        n = self.total
        return {k: Fraction(v, n) for k, v in self.counts.items()}


def deviation_histogram(predicted, true) -> DeviationHistogram:
    p = np.asarray(predicted, dtype=np.int64)
    t = np.asarray(true, dtype=np.int64)
    if p.shape != t.shape:
        raise InputError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise InputError("no predictions")
    dev = np.minimum(np.abs(p - t), 3)
    return DeviationHistogram({b: int((dev == k).sum()) for k, b in enumerate(DEVIATION_BUCKETS)})


def correlation_table(stats: Mapping[str, Mapping]) -> tuple[list, np.ndarray]:
    """Pairwise Spearman coefficients of a per-sample statistic across matchers.

    ``stats`` maps matcher name to ``{sample: value}``; only samples present
    for every matcher are used.
    """
    names = list(stats)
    if len(names) < 2:
        raise InputError("a correlation table needs at least 2 matchers")
    common = sorted(set.intersection(*(set(stats[m]) for m in names)))
    cols = [np.array([stats[m][s] for s in common], dtype=float) for m in names]
    out = np.eye(len(names))
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            out[a, b] = out[b, a] = spearman(cols[a], cols[b])
    return names, out


def accuracy(predicted, true) -> float:
    p = np.asarray(predicted)
    return float((p == np.asarray(true)).mean())
