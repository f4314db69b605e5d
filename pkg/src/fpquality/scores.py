"""Per-matcher normalized match scores and quality ranks.

For one matcher the procedure is

1. preliminary normalized match score from the arithmetic mean of *all*
   genuine scores, ranked over every sample of the data set;
2. per sample, the significant genuine scores: those against peer imprints
   whose preliminary rank is at most ``window`` positions worse;
3. the final score from the significant scores only, using the 15% quantile
   when at least ``min_quantile_scores`` are available and the median
   otherwise.  The two populations are ranked separately and merged.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataError, InputError, NotComputableError
from .robust_stats import average_ranks, hd_median, hd_quantile

log = logging.getLogger(__name__)

LOW_QUANTILE = 0.15
MIN_QUANTILE_SCORES = 4


@dataclass(frozen=True, order=True)
class SampleId:
    """One imprint of one finger; ``finger`` is unique across subjects."""

    subject: str
    finger: str
    imprint: int


class Variant(str, enum.Enum):
    O1 = "O1"  # median of significant genuine scores
    O3 = "O3"  # 15% quantile of significant genuine scores
    O2_SUM = "O2_SUM"  # median, impostor std + genuine std in the denominator
    O2_RSS = "O2_RSS"  # median, root of summed variances in the denominator


class MergeRule(str, enum.Enum):
    SLOTS = "slots"
    JOINT = "joint"
    PRELIMINARY = "preliminary"


@dataclass(frozen=True)
class ScoreSet:
    """Genuine and impostor scores of one sample under one matcher.

    ``genuine`` holds ``(peer_imprint, score)`` pairs.
    """

    sample: SampleId
    matcher: str
    genuine: tuple
    impostor: np.ndarray

    def genuine_scores(self) -> np.ndarray:
        return np.array([s for _, s in self.genuine], dtype=float)


class ImpostorMoments(NamedTuple):
    mu_n: float
    sigma_n: float
    degenerate: bool


@dataclass
class ScoreTable:
    """All score sets of one matcher in array form.

    ``genuine[i, j]`` is the score of sample ``i`` against imprint ``j`` of the
    same finger (NaN on the diagonal).  ``members[f, j]`` is the row of imprint
    ``j`` of finger ``f``.
    """

    matcher: str
    samples: list
    genuine: np.ndarray
    impostor: np.ndarray
    finger_index: np.ndarray
    members: np.ndarray

    @property
    def imprints_per_finger(self) -> int:
        return self.genuine.shape[1]

    def __len__(self):
        return len(self.samples)

    def score_set(self, i: int) -> ScoreSet:
        s = self.samples[i]
        gen = tuple((j, float(self.genuine[i, j])) for j in range(self.imprints_per_finger) if j != s.imprint)
        return ScoreSet(s, self.matcher, gen, self.impostor[i].copy())

    def score_sets(self):
        for i in range(len(self.samples)):
            yield self.score_set(i)

    @classmethod
    def from_arrays(cls, matcher, samples, genuine, impostor):
        """Build a table from rows already sorted by sample id."""
        samples = list(samples)
        genuine = np.asarray(genuine, dtype=float)
        impostor = np.asarray(impostor, dtype=float)
        n, m = genuine.shape
        fingers = {}
        finger_index = np.empty(n, dtype=np.int64)
        for i, s in enumerate(samples):
            if not 0 <= s.imprint < m:
                raise DataError(f"imprint {s.imprint} of finger {s.finger} outside 0..{m - 1}")
            finger_index[i] = fingers.setdefault(s.finger, len(fingers))
        members = np.full((len(fingers), m), -1, dtype=np.int64)
        for i, s in enumerate(samples):
            f = finger_index[i]
            if members[f, s.imprint] != -1:
                raise DataError(f"duplicate sample {s}")
            members[f, s.imprint] = i
        if (members < 0).any():
            f = int(np.argwhere(members < 0)[0][0])
            name = next(k for k, v in fingers.items() if v == f)
            raise DataError(f"finger {name} does not have all {m} imprints")
        return cls(matcher, samples, genuine, impostor, finger_index, members)

    @classmethod
    def from_score_sets(cls, sets: Iterable[ScoreSet], imprints_per_finger: int | None = None):
        sets = sorted(sets, key=lambda s: s.sample)
        if not sets:
            raise InputError("no score sets")
        matcher = sets[0].matcher
        m = imprints_per_finger or (len(sets[0].genuine) + 1)
        k = len(sets[0].impostor)
        genuine = np.full((len(sets), m), np.nan)
        impostor = np.empty((len(sets), k))
        for i, ss in enumerate(sets):
            if ss.matcher != matcher:
                raise DataError(f"mixed matchers {matcher!r} and {ss.matcher!r}")
            validate_score_set(ss, m, k)
            for j, v in ss.genuine:
                genuine[i, j] = v
            impostor[i] = ss.impostor
        return cls.from_arrays(matcher, [s.sample for s in sets], genuine, impostor)


def validate_score_set(ss: ScoreSet, imprints_per_finger: int, impostor_count: int) -> None:
    if len(ss.genuine) != imprints_per_finger - 1:
        raise DataError(f"{ss.sample}: expected {imprints_per_finger - 1} genuine scores, got {len(ss.genuine)}")
    if len(ss.impostor) != impostor_count:
        raise DataError(f"{ss.sample}: expected {impostor_count} impostor scores, got {len(ss.impostor)}")
    peers = [j for j, _ in ss.genuine]
    if ss.sample.imprint in peers or len(set(peers)) != len(peers):
        raise DataError(f"{ss.sample}: genuine peers must be distinct and exclude the sample itself")


def impostor_moments(scores) -> ImpostorMoments:
    """Mean and sample std of the impostor scores.

    ``scores`` is a :class:`ScoreSet` or a plain vector.  A sample whose
    impostor scores are all equal is flagged degenerate with ``sigma_n = 0``.
    """
    x = np.asarray(scores.impostor if isinstance(scores, ScoreSet) else scores, dtype=float)
    if x.size < 2:
        raise InputError("at least 2 impostor scores are required")
    if x.min() == x.max():
        return ImpostorMoments(float(x[0]), 0.0, True)
    return ImpostorMoments(float(x.mean()), float(x.std(ddof=1)), False)


def _all_moments(table: ScoreTable):
    mu = table.impostor.mean(axis=1)
    sigma = table.impostor.std(axis=1, ddof=1)
    degenerate = table.impostor.min(axis=1) == table.impostor.max(axis=1)
    mu[degenerate] = table.impostor[degenerate, 0]
    sigma[degenerate] = 0.0
    return mu, sigma, degenerate


@dataclass
class PreliminaryRanking:
    """Preliminary scores and ranks aligned with ``ScoreTable.samples``.

    Degenerate samples have NaN score and rank.
    """

    nms: np.ndarray
    rank: np.ndarray
    degenerate: np.ndarray

    @property
    def n_ranked(self) -> int:
        return int((~self.degenerate).sum())


def preliminary_rank(table: ScoreTable) -> PreliminaryRanking:
    """Rank samples by ``(mean(all genuine) - mu_n) / sigma_n``, rank 1 best."""
    mu, sigma, degenerate = _all_moments(table)
    gen_mean = np.nanmean(table.genuine, axis=1)
    nms = np.full(len(table), np.nan)
    ok = ~degenerate
    nms[ok] = (gen_mean[ok] - mu[ok]) / sigma[ok]
    rank = np.full(len(table), np.nan)
    if ok.any():
        rank[ok] = average_ranks(nms[ok], descending=True)
    if degenerate.any():
        log.info("matcher %s: %d degenerate samples excluded", table.matcher, int(degenerate.sum()))
    return PreliminaryRanking(nms, rank, degenerate)


def default_window(n_ranked: int) -> int:
    """Rank distance for significance: one sixth of the ranked population."""
    return max(1, math.ceil(n_ranked / 6))


def select_significant(ranks: Sequence[float], window: float) -> list[frozenset]:
    """Significant peers for every imprint of one finger.

    ``ranks[j]`` is the preliminary rank of imprint ``j`` (NaN when the imprint
    is unranked).  Peer ``j`` is significant for ``i`` iff
    ``rank[j] <= rank[i] + window``; unranked imprints neither have nor are
    significant peers.
    """
    r = [float(v) for v in ranks]
    out = []
    for i, ri in enumerate(r):
        if math.isnan(ri):
            out.append(frozenset())
            continue
        out.append(frozenset(j for j, rj in enumerate(r) if j != i and not math.isnan(rj) and rj <= ri + window))
    return out


def normalized_match_score(significant, mu_n: float, sigma_n: float, variant: Variant | str) -> float:
    """Normalized match score of one sample from its significant genuine scores.

    Raises:
        NotComputableError: too few significant scores for ``variant``, or a
            degenerate impostor spread.
    """
    variant = Variant(variant)
    g = np.asarray(significant, dtype=float).ravel()
    if not sigma_n > 0:
        raise NotComputableError("impostor standard deviation is zero")
    if g.size == 0:
        raise NotComputableError("no significant genuine scores")
    if variant is Variant.O3:
        return (hd_quantile(g, LOW_QUANTILE) - mu_n) / sigma_n
    centre = hd_median(g)
    if variant is Variant.O1:
        return (centre - mu_n) / sigma_n
    if g.size < 2:
        raise NotComputableError(f"{variant.value} needs at least 2 significant scores")
    sigma_m = float(g.std(ddof=1))
    if variant is Variant.O2_SUM:
        return (centre - mu_n) / (sigma_n + sigma_m)
    return (centre - mu_n) / math.sqrt(sigma_n ** 2 + sigma_m ** 2)


@dataclass(frozen=True)
class ScoreStatistics:
    """Everything computed for one sample under one matcher.

    ``significant_peers`` is the selected set; when it is empty the score is
    taken from the best-ranked peer alone and ``empty_fallback`` is set.
    """

    sample: SampleId
    matcher: str
    mu_n: float
    sigma_n: float
    significant_peers: frozenset
    mu_m_tilde: float | None
    q15_m: float | None
    nms: float
    nms_variant_used: Variant
    empty_fallback: bool = False


@dataclass
class MatcherQuality:
    """Final per-matcher quality ranking.

    ``rank`` holds ranks aligned with ``table.samples`` (NaN for excluded
    samples).  ``excluded`` maps excluded samples to a reason.
    """

    table: ScoreTable
    preliminary: PreliminaryRanking
    window: float
    statistics: dict
    rank: np.ndarray
    excluded: dict = field(default_factory=dict)

    @property
    def matcher(self) -> str:
        return self.table.matcher

    def rank_map(self) -> dict:
        return {s: float(r) for s, r in zip(self.table.samples, self.rank) if not math.isnan(r)}

    def value_map(self, name: str) -> dict:
        return {s: getattr(st, name) for s, st in self.statistics.items()}


def merge_population_ranks(slot_keys, values, use_o3, rule: MergeRule | str = MergeRule.SLOTS) -> np.ndarray:
    """Merge the quantile-ranked and median-ranked populations into one ranking.

    With the ``slots`` rule every sample keeps the position its preliminary
    rank gives it within the combined list, but each population's positions
    are reassigned in the order of its own score (higher is better); equal
    scores share the mean of their positions.  The ``joint`` rule ranks all
    samples by score directly; ``preliminary`` keeps the preliminary order.
    """
    rule = MergeRule(rule)
    values = np.asarray(values, dtype=float)
    use_o3 = np.asarray(use_o3, dtype=bool)
    n = values.size
    if rule is MergeRule.JOINT:
        return average_ranks(values, descending=True)
    if rule is MergeRule.PRELIMINARY:
        return average_ranks(np.asarray(slot_keys, dtype=float))
    # stable sort: equal preliminary ranks keep sample order
    order = np.argsort(np.asarray(slot_keys, dtype=float), kind="stable")
    position = np.empty(n)
    position[order] = np.arange(1, n + 1)
    out = np.empty(n)
    for pop in (use_o3, ~use_o3):
        idx = np.flatnonzero(pop)
        if idx.size == 0:
            continue
        slots = np.sort(position[idx])
        by_value = idx[np.lexsort((position[idx], -values[idx]))]
        v = values[by_value]
        start = 0
        while start < v.size:
            stop = start + 1
            while stop < v.size and v[stop] == v[start]:
                stop += 1
            out[by_value[start:stop]] = slots[start:stop].mean()
            start = stop
    return out


def per_matcher_quality_rank(
    table: ScoreTable,
    window: float | None = None,
    merge: MergeRule | str = MergeRule.SLOTS,
    min_quantile_scores: int = MIN_QUANTILE_SCORES,
) -> MatcherQuality:
    """Run the three-step procedure for one matcher and rank every usable sample."""
    prelim = preliminary_rank(table)
    if window is None:
        window = default_window(prelim.n_ranked)
    mu, sigma, _ = _all_moments(table)
    excluded = {table.samples[i]: "degenerate impostor scores" for i in np.flatnonzero(prelim.degenerate)}

    stats = {}
    nms = np.full(len(table), np.nan)
    use_o3 = np.zeros(len(table), dtype=bool)
    for f in range(table.members.shape[0]):
        rows = table.members[f]
        sig_sets = select_significant(prelim.rank[rows], window)
        for j, i in enumerate(rows):
            if prelim.degenerate[i]:
                continue
            sample = table.samples[i]
            peers = sig_sets[j]
            fallback = False
            used = sorted(peers)
            if not used:
                ranked = [p for p in range(len(rows)) if p != j and not prelim.degenerate[rows[p]]]
                if not ranked:
                    excluded[sample] = "no ranked peer imprints"
                    continue
                used = [min(ranked, key=lambda p: (prelim.rank[rows[p]], p))]
                fallback = True
            g = table.genuine[i, used]
            median = hd_median(g)
            q15 = hd_quantile(g, LOW_QUANTILE)
            if len(peers) >= min_quantile_scores:
                variant, value = Variant.O3, (q15 - mu[i]) / sigma[i]
                use_o3[i] = True
            else:
                variant, value = Variant.O1, (median - mu[i]) / sigma[i]
            nms[i] = value
            stats[sample] = ScoreStatistics(
                sample, table.matcher, float(mu[i]), float(sigma[i]), peers,
                median, q15, float(value), variant, fallback,
            )

    rank = np.full(len(table), np.nan)
    ok = ~np.isnan(nms)
    if ok.any():
        rank[ok] = merge_population_ranks(prelim.rank[ok], nms[ok], use_o3[ok], merge)
    return MatcherQuality(table, prelim, window, stats, rank, excluded)
