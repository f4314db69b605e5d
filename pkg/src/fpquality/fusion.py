"""Rank fusion across matchers and binning into quality classes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .robust_stats import average_ranks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassScheme:
    """Fraction of samples per class, best class first."""

    name: str
    fractions: tuple

    def __post_init__(self):
        if len(self.fractions) < 2:
            raise InputError("a class scheme needs at least 2 classes")
        if any(f <= 0 for f in self.fractions):
            raise InputError("class fractions must be positive")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-9:
            raise InputError(f"class fractions sum to {math.fsum(self.fractions)}, not 1")

    @property
    def class_count(self) -> int:
        return len(self.fractions)

    def boundaries(self, n: int) -> list[int]:
        """Last 1-based position of each class among ``n`` ordered samples."""
        cum = np.cumsum(self.fractions)
        # the tolerance keeps e.g. 10 * 0.7999999999999999 from flooring to 7
        out = [math.floor(n * c + 1e-9) for c in cum[:-1]]
        return out + [n]


UNIFORM10 = ClassScheme("uniform10", (0.1,) * 10)
UNIFORM5 = ClassScheme("uniform5", (0.2,) * 5)
# Non-normative default: only "more than 45% in class 1" is known for NFIQ.
NFIQ_LIKE5 = ClassScheme("nfiq5", (0.46, 0.22, 0.16, 0.10, 0.06))

SCHEMES = {s.name: s for s in (UNIFORM10, UNIFORM5, NFIQ_LIKE5)}


def scheme_by_name(name: str, fractions: Sequence[float] | None = None) -> ClassScheme:
    """Built-in scheme, optionally with overridden fractions."""
    if name not in SCHEMES:
        raise InputError(f"unknown class scheme {name!r}; choose from {sorted(SCHEMES)}")
    if fractions is not None:
        return ClassScheme(name, tuple(float(f) for f in fractions))
    return SCHEMES[name]


@dataclass(frozen=True)
class QualityLabel:
    sample: object
    fused_rank: float
    class_label: int


@dataclass
class FusionResult:
    fused: dict
    dropped: dict


def fuse_ranks(rank_maps: Sequence[Mapping]) -> FusionResult:
    """Mean of per-matcher ranks, re-ranked 1..N with average ranks on ties.

    Samples missing from any matcher's map are dropped and reported.
    """
    if not rank_maps:
        raise InputError("no rank maps to fuse")
    everyone = set().union(*(set(r) for r in rank_maps))
    common = set(rank_maps[0]).intersection(*rank_maps[1:])
    dropped = {s: "missing from %d of %d matchers" % (sum(s not in r for r in rank_maps), len(rank_maps))
               for s in everyone - common}
    if dropped:
        log.info("fusion dropped %d samples not ranked by every matcher", len(dropped))
    samples = sorted(common)
    if not samples:
        return FusionResult({}, dropped)
    ranks = np.array([[r[s] for r in rank_maps] for s in samples], dtype=float)
    # summing each sample's sorted ranks makes the mean bitwise independent of matcher order
    total = np.zeros(len(samples))
    for col in np.sort(ranks, axis=1).T:
        total += col
    mean = total / len(rank_maps)
    fused = average_ranks(mean)
    return FusionResult(dict(zip(samples, fused.tolist())), dropped)


def bin_classes(fused: Mapping, scheme: ClassScheme) -> list[QualityLabel]:
    """Label samples by fused rank; class 1 takes the best-ranked fraction.

    Samples sharing a fused rank across a class boundary all get the better
    class.
    """
    n = len(fused)
    if n < scheme.class_count:
        raise InputError(f"{n} samples cannot fill {scheme.class_count} classes")
    samples = sorted(fused, key=lambda s: (fused[s], s))
    bounds = scheme.boundaries(n)
    labels = []
    cls = 1
    prev_rank = None
    prev_cls = 1
    for pos, s in enumerate(samples, start=1):
        while pos > bounds[cls - 1]:
            cls += 1
        r = fused[s]
        label = prev_cls if r == prev_rank else cls
        labels.append(QualityLabel(s, float(r), label))
        prev_rank, prev_cls = r, label
    return labels
