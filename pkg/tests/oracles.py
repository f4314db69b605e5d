"""Slow, direct reimplementations used as test oracles.

Nothing here imports the package's numeric code; quantiles come from scipy's
own Harrell-Davis routine, integrals from mpmath quadrature and everything
else is plain Python loops.
"""

import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy.stats.mstats import hdquantiles


def brute_ranks(values, descending=False):
    """Average ranks by counting, 1 = smallest (or largest if descending)."""
    vals = [-v if descending else v for v in values]
    out = []
    for v in vals:
        less = sum(1 for u in vals if u < v)
        equal = sum(1 for u in vals if u == v)
        out.append(less + (equal + 1) / 2)
    return out


def hd_q(scores, p):
    scores = [float(s) for s in scores]
    if len(scores) == 1:
        return scores[0]
    return float(hdquantiles(np.array(scores), [p])[0])


def moments(xs):
    xs = [float(x) for x in xs]
    mu = math.fsum(xs) / len(xs)
    var = math.fsum((x - mu) ** 2 for x in xs) / (len(xs) - 1)
    return mu, math.sqrt(var)


def table_rows(table):
    """Per sample: (sample, {peer_imprint: score}, impostor list)."""
    out = []
    for i, s in enumerate(table.samples):
        gen = {j: float(table.genuine[i, j]) for j in range(table.genuine.shape[1]) if j != s.imprint}
        out.append((s, gen, [float(v) for v in table.impostor[i]]))
    return out


def brute_preliminary(table):
    """{sample: preliminary rank} over non-degenerate samples, plus the degenerate set."""
    nms = {}
    degenerate = set()
    for s, gen, imp in table_rows(table):
        if min(imp) == max(imp):
            degenerate.add(s)
            continue
        mu, sd = moments(imp)
        nms[s] = (math.fsum(gen.values()) / len(gen) - mu) / sd
    keys = sorted(nms)
    ranks = brute_ranks([nms[k] for k in keys], descending=True)
    return dict(zip(keys, ranks)), degenerate


def brute_significant(prelim, table, window):
    """{sample: frozenset of significant peer imprints}; unranked samples absent."""
    by_finger = {}
    for s in table.samples:
        by_finger.setdefault(s.finger, {})[s.imprint] = s
    out = {}
    for s in table.samples:
        if s not in prelim:
            continue
        peers = set()
        for j, t in by_finger[s.finger].items():
            if j != s.imprint and t in prelim and prelim[t] <= prelim[s] + window:
                peers.add(j)
        out[s] = frozenset(peers)
    return out


def brute_slot_merge(prelim_rank, value, use_o3):
    """Slots merge: a population's members take its slots in order of decreasing value."""
    keys = sorted(prelim_rank, key=lambda s: (prelim_rank[s], s))
    slot_of = {s: pos for pos, s in enumerate(keys, start=1)}
    final = {}
    for flag in (True, False):
        members = [s for s in keys if use_o3[s] == flag]
        slots = sorted(slot_of[s] for s in members)
        ordered = sorted(members, key=lambda s: (-value[s], slot_of[s]))
        k = 0
        while k < len(ordered):
            group = [ordered[k]]
            while k + len(group) < len(ordered) and value[ordered[k + len(group)]] == value[ordered[k]]:
                group.append(ordered[k + len(group)])
            mean_slot = sum(slots[k:k + len(group)]) / len(group)
            for s in group:
                final[s] = mean_slot
            k += len(group)
    return final


def brute_quality_rank(table, window=None, min_scores=4):
    """Whole per-matcher procedure; returns ({sample: rank}, {sample: (variant, nms, peers)})."""
    prelim, degenerate = brute_preliminary(table)
    if window is None:
        window = max(1, math.ceil(len(prelim) / 6))
    sig = brute_significant(prelim, table, window)
    rows = {s: (gen, imp) for s, gen, imp in table_rows(table)}
    value, use_o3, info = {}, {}, {}
    for s in sorted(prelim):
        gen, imp = rows[s]
        peers = sig[s]
        used = sorted(peers)
        if not used:
            ranked = [j for j in gen if any(t.finger == s.finger and t.imprint == j for t in prelim)]
            if not ranked:
                continue
            rank_of = {t.imprint: r for t, r in prelim.items() if t.finger == s.finger}
            used = [min(ranked, key=lambda j: (rank_of[j], j))]
        scores = [gen[j] for j in used]
        mu, sd = moments(imp)
        if len(peers) >= min_scores:
            v, name = (hd_q(scores, 0.15) - mu) / sd, "O3"
        else:
            v, name = (hd_q(scores, 0.5) - mu) / sd, "O1"
        value[s], use_o3[s] = v, name == "O3"
        info[s] = (name, v, peers)
    final = brute_slot_merge({s: prelim[s] for s in value}, value, use_o3)
    return final, info


def brute_fuse(rank_maps):
    common = set(rank_maps[0])
    for r in rank_maps[1:]:
        common &= set(r)
    keys = sorted(common)
    means = [sum(Fraction(r[k]) for r in rank_maps) / len(rank_maps) for k in keys]
    return dict(zip(keys, brute_ranks(means)))


def brute_bins(fused, fractions):
    """Class per sample: walk samples by rank, boundaries floor(N * cumulative fraction)."""
    n = len(fused)
    cum = 0.0
    bounds = []
    for f in fractions:
        cum += f
        bounds.append(int(math.floor(n * cum + 1e-9)))
    bounds[-1] = n
    order = sorted(fused, key=lambda s: (fused[s], s))
    out = {}
    for pos, s in enumerate(order, start=1):
        c = next(k for k, b in enumerate(bounds, start=1) if pos <= b)
        out[s] = c
    # ties across a boundary take the better class
    for s in order:
        best = min(out[t] for t in order if fused[t] == fused[s])
        out[s] = best
    return out


def brute_rates(genuine, impostor, t):
    fmr = sum(1 for s in impostor if s >= t) / len(impostor)
    fnmr = sum(1 for s in genuine if s < t) / len(genuine)
    return fmr, fnmr


def brute_eer(genuine, impostor):
    """Sweep every distinct score (plus +-inf) and interpolate at the sign change."""
    thresholds = [-math.inf] + sorted(set(genuine) | set(impostor)) + [math.inf]
    prev = None
    for t in thresholds:
        fmr, fnmr = brute_rates(genuine, impostor, t)
        d = fmr - fnmr
        if d <= 0:
            if prev is None or d == 0:
                return fmr
            pf, pn = prev
            pd = pf - pn
            w = pd / (pd - d)
            return pf + w * (fmr - pf)
        prev = (fmr, fnmr)
    raise AssertionError("fmr - fnmr never reached 0")


def sweep_eer(genuine, impostor):
    """Same sweep as brute_eer with running counters, for large pools."""
    g, i = sorted(genuine), sorted(impostor)
    thresholds = [-math.inf] + sorted(set(g) | set(i)) + [math.inf]
    gk = ik = 0
    prev = None
    for t in thresholds:
        while gk < len(g) and g[gk] < t:
            gk += 1
        while ik < len(i) and i[ik] < t:
            ik += 1
        fmr, fnmr = (len(i) - ik) / len(i), gk / len(g)
        d = fmr - fnmr
        if d <= 0:
            if prev is None or d == 0:
                return fmr
            pf, pn = prev
            pd = pf - pn
            return pf + pd / (pd - d) * (fmr - pf)
        prev = (fmr, fnmr)
    raise AssertionError("fmr - fnmr never reached 0")


def brute_select(classes):
    """Per finger the imprint of lowest class, ties to the lowest imprint."""
    best = {}
    for s, c in classes.items():
        key = (c, s.imprint)
        if s.finger not in best or key < best[s.finger][0]:
            best[s.finger] = (key, s)
    return {f: v[1] for f, v in best.items()}


def _quad_beta(z, a, b):
    # Substitutions t = y**a near 0 and u = (1-y)**b near 1 remove the endpoint
    # singularities of the integrand so tanh-sinh quadrature stays accurate.
    z = mpmath.mpf(z)
    half = mpmath.mpf(1) / 2
    lo = min(z, half)
    total = mpmath.quad(lambda t: (1 - t ** (1 / a)) ** (b - 1), [0, lo ** a]) / a
    if z > half:
        total += mpmath.quad(lambda u: (1 - u ** (1 / b)) ** (a - 1), [(1 - z) ** b, half ** b]) / b
    return total


def quad_incomplete_beta(z, a, b):
    """Independent oracle: adaptive high-precision quadrature of the integrand."""
    with mpmath.workdps(30):
        return float(_quad_beta(z, mpmath.mpf(a), mpmath.mpf(b)))


def quad_hd_weights(n, alpha):
    with mpmath.workdps(30):
        a = (n + 1) * mpmath.mpf(alpha)
        b = (n + 1) * (1 - mpmath.mpf(alpha))
        total = _quad_beta(1, a, b)
        return [float((_quad_beta(mpmath.mpf(i) / n, a, b) - _quad_beta(mpmath.mpf(i - 1) / n, a, b)) / total)
                for i in range(1, n + 1)]
