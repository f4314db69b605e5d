"""Stage wiring: rank per matcher, fuse and bin, train, evaluate selections."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .evaluate import (
    DeviationHistogram,
    deviation_histogram,
    naive_selection,
    quality_selected_det,
    select_best_imprints,
)
from .fusion import ClassScheme, FusionResult, bin_classes, fuse_ranks
from .neuralnet import NetworkModel, TrainConfig, TrainResult, predict_class, prepare, train
from .scores import MatcherQuality, MergeRule, ScoreTable, per_matcher_quality_rank
from .synth import make_rng

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "monitor", "eval")
SPLIT_FRACTIONS = (0.25, 0.25, 0.5)


def rank_all(tables: Mapping[str, ScoreTable], window=None, merge=MergeRule.SLOTS) -> dict:
    """Quality ranking for every matcher, keyed by matcher name."""
    return {m: per_matcher_quality_rank(t, window=window, merge=merge) for m, t in tables.items()}


def fusion_matchers(names: Sequence[str], eval_matcher: str | None, include_eval: bool = False) -> list:
    names = list(names)
    if eval_matcher is not None and eval_matcher not in names:
        raise InputError(f"evaluation matcher {eval_matcher!r} not among {names}")
    out = [m for m in names if include_eval or m != eval_matcher]
    if not out:
        raise InputError("no matchers left for fusion after excluding the evaluation matcher")
    return out


def classify(qualities: Mapping[str, MatcherQuality], scheme: ClassScheme,
             matchers: Sequence[str] | None = None) -> tuple[list, FusionResult]:
    """Fuse the rankings of ``matchers`` (default: all) and bin them into classes."""
    names = list(qualities) if matchers is None else list(matchers)
    fused = fuse_ranks([qualities[m].rank_map() for m in names])
    return bin_classes(fused.fused, scheme), fused


def split_fingers(fingers: Sequence[str], seed: int, fractions=SPLIT_FRACTIONS) -> dict:
    """Seeded random partition of fingers into train / monitor / eval sets.

    All imprints of a finger land in the same set.
    """
    uniq = sorted(set(fingers))
    if len(uniq) < len(fractions):
        raise InputError(f"{len(uniq)} fingers cannot be split {len(fractions)} ways")
    perm = make_rng(seed).permutation(len(uniq))
    cuts = np.floor(np.cumsum(fractions) * len(uniq) + 1e-9).astype(int)
    cuts[-1] = len(uniq)
    out, start = {}, 0
    for name, stop in zip(SPLIT_NAMES, cuts):
        out[name] = sorted(uniq[k] for k in perm[start:stop])
        start = stop
    return out


def training_arrays(samples: Sequence, features: np.ndarray, labels: Mapping, fingers) -> tuple:
    """Rows of labelled samples whose finger is in ``fingers``."""
    keep = set(fingers)
    rows = [i for i, s in enumerate(samples) if s.finger in keep and s in labels]
    return features[rows], np.array([labels[samples[i]] for i in rows], dtype=np.int64), rows


def train_network(samples, features, labels: Mapping, split: Mapping, config: TrainConfig,
                  n_out: int, pattern_weights: Mapping | None = None) -> TrainResult:
    """Train on the ``train`` fingers and early-stop on the ``monitor`` fingers."""
    x, y, rows = training_arrays(samples, features, labels, split["train"])
    tx, ty, _ = training_arrays(samples, features, labels, split["monitor"])
    if len(y) == 0 or len(ty) == 0:
        raise InputError("training or monitor split has no labelled samples")
    pw = None
    if pattern_weights is not None:
        pw = np.array([pattern_weights.get(samples[i], 1.0) for i in rows], dtype=float)
    result = train(x, y, tx, ty, config, pattern_weights=pw, n_out=n_out)
    result.model.train_config_echo["split_fractions"] = list(SPLIT_FRACTIONS)
    result.model.train_config_echo["n_train"] = int(len(y))
    result.model.train_config_echo["n_monitor"] = int(len(ty))
    return result


def predict_all(model: NetworkModel, samples, features) -> dict:
    classes = predict_class(model, prepare(model, features))
    return dict(zip(samples, np.atleast_1d(classes).astype(int).tolist()))


@dataclass
class ExperimentResult:
    scheme: str
    eer: dict
    curves: dict
    histogram: DeviationHistogram | None
    accuracy: float | None
    train: TrainResult | None = None
    labels: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)


def evaluate_selections(table: ScoreTable, fingers, selections: Mapping[str, Mapping]) -> dict:
    """DET curve of the pooled scores for each named class assignment."""
    curves = {}
    for name, classes in selections.items():
        if classes is None:
            sel = naive_selection(table.samples, fingers)
        else:
            sel = select_best_imprints(classes, fingers)
        curves[name] = quality_selected_det(table, sel)
    return curves


def run_experiment(samples, features, tables: Mapping[str, ScoreTable], scheme: ClassScheme,
                   train_config: TrainConfig | None = None, eval_matcher: str = "m0",
                   include_eval_in_fusion: bool = False, split_seed: int = 0,
                   qualities: Mapping | None = None, window=None) -> ExperimentResult:
    """Full chain on in-memory data.

    Labels come from fusing every matcher except ``eval_matcher``; the network
    (if ``train_config`` is given) trains on the train fingers; all selections
    are scored on the eval fingers with the evaluation matcher.
    """
    if qualities is None:
        qualities = rank_all(tables, window=window)
    names = fusion_matchers(list(tables), eval_matcher, include_eval_in_fusion)
    labels_list, _ = classify(qualities, scheme, names)
    labels = {l.sample: l.class_label for l in labels_list}
    split = split_fingers([s.finger for s in samples], split_seed)
    eval_fingers = split["eval"]
    selections = {"perfect": labels, "naive": None}
    tr = None
    hist = None
    acc = None
    if train_config is not None:
        tr = train_network(samples, features, labels, split, train_config, scheme.class_count)
        keep = set(eval_fingers)
        rows = [i for i, s in enumerate(samples) if s.finger in keep]
        predicted = predict_all(tr.model, [samples[i] for i in rows], features[rows])
        selections["trained"] = predicted
        common = [s for s in predicted if s in labels]
        p = np.array([predicted[s] for s in common])
        t = np.array([labels[s] for s in common])
        hist = deviation_histogram(p, t)
        acc = float((p == t).mean())
    curves = evaluate_selections(tables[eval_matcher], eval_fingers, selections)
    return ExperimentResult(scheme.name, {k: c.eer for k, c in curves.items()}, curves, hist, acc, tr, labels, split)
