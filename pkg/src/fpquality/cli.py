"""Command-line interface.

Every option can also come from a flat ``key = value`` file given with
``--config``; flags on the command line win.  Exit codes: 0 success,
2 usage or configuration error, 3 inconsistent or malformed data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .errors import DataError, InputError
from .evaluate import correlation_table, deviation_histogram
from .fusion import scheme_by_name
from .neuralnet import TrainConfig, load_model, save_model, train
from .pipeline import (
    classify,
    evaluate_selections,
    fusion_matchers,
    predict_all,
    rank_all,
    split_fingers,
    training_arrays,
    SPLIT_FRACTIONS,
)
from .synth import SynthConfig, generate

log = logging.getLogger("fpquality")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

COMMANDS = ("synth", "rank", "classify", "train", "predict", "evaluate", "run")
PATH_KEYS = ("config", "scores", "features", "labels", "ranks", "predictions", "model", "init_model", "out_dir")

_SYNTH = SynthConfig()
DEFAULTS = {
    "seed": 42,
    "classes": "nfiq5",
    "class_fractions": None,
    "optimizer": "scg",
    "error_fn": "mse",
    "reg": 1e-4,
    "boltzmann_temp": 0.0,
    "eval_matcher": "m0",
    "include_eval_in_fusion": False,
    "window": None,
    "merge": "slots",
    "max_runs": 300,
    "patience": 5,
    "min_delta": 0.001,
    "hidden": 22,
    "subjects": _SYNTH.subjects,
    "fingers_per_subject": _SYNTH.fingers_per_subject,
    "imprints_per_finger": _SYNTH.imprints_per_finger,
    "matchers": _SYNTH.matchers,
    "impostors": _SYNTH.impostors_per_sample,
    "thresholding": _SYNTH.thresholding_matcher,
    "quality_noise": _SYNTH.quality_noise,
    "feature_noise": _SYNTH.feature_noise,
}


class ConfigError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _fractions(text):
    if isinstance(text, tuple):
        return text
    try:
        return tuple(float(t) for t in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="flat key=value file; flags override its values")
    a("--seed", type=int)
    a("--scores")
    a("--features")
    a("--labels")
    a("--ranks", help="ranks CSV (classify/evaluate read it instead of re-ranking)")
    a("--predictions")
    a("--model")
    a("--init-model", help="train: continue from this model file, e.g. BFGS after SCG")
    a("--out-dir")
    a("--classes", choices=["uniform10", "uniform5", "nfiq5"])
    a("--class-fractions", type=_fractions, help="comma-separated class shares overriding the scheme's")
    a("--optimizer", choices=["scg", "bfgs"])
    a("--error-fn", choices=["mse", "opt-mse"])
    a("--reg", type=float)
    a("--boltzmann-temp", type=float)
    a("--eval-matcher")
    a("--include-eval-in-fusion", action="store_const", const=True)
    a("--window", type=float, help="significance window override")
    a("--merge", choices=["slots", "joint", "preliminary"])
    a("--max-runs", type=int)
    a("--patience", type=int)
    a("--min-delta", type=float)
    a("--hidden", type=int)
    a("--subjects", type=int)
    a("--fingers-per-subject", type=int)
    a("--imprints-per-finger", type=int)
    a("--matchers", type=int)
    a("--impostors", type=int)
    a("--no-thresholding", dest="thresholding", action="store_const", const=False)
    a("--quality-noise", type=float)
    a("--feature-noise", type=float)
    a("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="fpquality", description="Fingerprint quality classes from matcher scores.")
    p.add_argument("--version", action="version", version=f"fpquality {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic scores/features/latent set",
        "rank": "per-matcher quality ranks from a scores file",
        "classify": "fuse ranks and bin them into quality classes",
        "train": "train the class network on features and labels",
        "predict": "predict classes for a features file",
        "evaluate": "DET curves, deviation histogram and correlation tables",
        "run": "synth, rank, classify, train, predict and evaluate in one go",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def read_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = s.split("=", 1)
        key = k.strip().replace("-", "_")
        if key not in DEFAULTS and key not in PATH_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {k.strip()!r}")
        out[key] = v.strip()
    return out


_TYPES = {
    "seed": int, "reg": float, "boltzmann_temp": float, "window": float, "max_runs": int, "patience": int,
    "min_delta": float, "hidden": int, "subjects": int, "fingers_per_subject": int, "imprints_per_finger": int,
    "matchers": int, "impostors": int, "quality_noise": float, "feature_noise": float,
    "include_eval_in_fusion": _bool, "thresholding": _bool, "class_fractions": _fractions,
}
_CHOICES = {
    "classes": ("uniform10", "uniform5", "nfiq5"), "optimizer": ("scg", "bfgs"),
    "error_fn": ("mse", "opt-mse"), "merge": ("slots", "joint", "preliminary"),
}


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then command-line flags."""
    file_values = read_config_file(args.config) if args.config else {}
    settings = dict(DEFAULTS)
    settings.update({k: None for k in PATH_KEYS})
    for k, v in file_values.items():
        try:
            settings[k] = _TYPES[k](v) if k in _TYPES else v
        except (ValueError, ConfigError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"config key {k}: {exc}") from None
    for k in list(settings):
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v
    for k, allowed in _CHOICES.items():
        if settings[k] not in allowed:
            raise ConfigError(f"{k} must be one of {', '.join(allowed)}")
    return settings


@dataclass
class Context:
    command: str
    settings: dict
    _scores: dict = field(default_factory=dict)

    def scores(self) -> dict:
        """Score tables from --scores, parsed once per path."""
        p = self.input("scores")
        if p not in self._scores:
            self._scores[p] = io.read_scores(p)
        return self._scores[p]

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])

    @property
    def header(self) -> str:
        cfg = {k: v for k, v in self.settings.items() if k not in PATH_KEYS and v is not None}
        return io.header_line(self.seed, cfg)

    def out_dir(self) -> Path:
        d = self.settings["out_dir"]
        if d is None:
            raise ConfigError(f"{self.command} needs --out-dir")
        p = Path(d)
        if not p.is_dir():
            raise ConfigError(f"output directory {d} does not exist")
        return p

    def input(self, key: str) -> Path:
        v = self.settings[key]
        if v is None:
            raise ConfigError(f"{self.command} needs --{key.replace('_', '-')}")
        p = Path(v)
        if not p.is_file():
            raise ConfigError(f"input file {v} does not exist")
        return p

    def has(self, key: str) -> bool:
        return self.settings[key] is not None


def synth_config(s: dict) -> SynthConfig:
    return SynthConfig(
        subjects=s["subjects"], fingers_per_subject=s["fingers_per_subject"],
        imprints_per_finger=s["imprints_per_finger"], matchers=s["matchers"],
        impostors_per_sample=s["impostors"], thresholding_matcher=s["thresholding"],
        quality_noise=s["quality_noise"], feature_noise=s["feature_noise"], seed=s["seed"],
    )


def train_config(s: dict) -> TrainConfig:
    return TrainConfig(
        optimizer=s["optimizer"], error_fn=s["error_fn"], regularization=s["reg"], max_runs=s["max_runs"],
        early_stop_patience=s["patience"], early_stop_min_delta=s["min_delta"],
        boltzmann_temperature=s["boltzmann_temp"], seed=s["seed"], n_hidden=s["hidden"],
    )


def scheme(s: dict):
    return scheme_by_name(s["classes"], s["class_fractions"])


# commands ------------------------------------------------------------------

def cmd_synth(ctx: Context) -> dict:
    out = ctx.out_dir()
    ds = generate(synth_config(ctx.settings))
    paths = {"scores": out / "scores.csv", "features": out / "features.csv", "latent": out / "latent.csv"}
    io.write_scores(paths["scores"], ds.samples, ds.score_tables(), ds.gallery, ctx.header)
    io.write_features(paths["features"], ds.samples, ds.features, ctx.header)
    io.write_latent(paths["latent"], ds.samples, ds.quality, ctx.header)
    return paths


def _qualities(ctx: Context, tables=None):
    if tables is None:
        tables = ctx.scores()
    return rank_all(tables, window=ctx.settings["window"], merge=ctx.settings["merge"])


def cmd_rank(ctx: Context) -> dict:
    out = ctx.out_dir()
    q = _qualities(ctx)
    for m, mq in q.items():
        if mq.excluded:
            log.info("matcher %s: %d samples excluded", m, len(mq.excluded))
    path = out / "ranks.csv"
    io.write_ranks(path, q, ctx.header)
    return {"ranks": path}


class _RankView:
    """Stand-in for a matcher ranking read back from a ranks file."""

    def __init__(self, ranks):
        self._ranks = ranks

    def rank_map(self):
        return dict(self._ranks)


def _rank_maps(ctx: Context):
    """``({matcher: ranking}, {matcher: {sample: nms}})`` from --ranks or --scores."""
    if ctx.has("ranks"):
        ranks, nms = io.read_ranks(ctx.input("ranks"))
        return {m: _RankView(r) for m, r in ranks.items()}, nms
    q = _qualities(ctx)
    return q, {m: mq.value_map("nms") for m, mq in q.items()}


def cmd_classify(ctx: Context) -> dict:
    out = ctx.out_dir()
    q, _ = _rank_maps(ctx)
    names = fusion_matchers(sorted(q), ctx.settings["eval_matcher"], ctx.settings["include_eval_in_fusion"])
    labels, fused = classify(q, scheme(ctx.settings), names)
    if fused.dropped:
        log.info("%d samples dropped from fusion", len(fused.dropped))
    path = out / "labels.csv"
    io.write_labels(path, labels, ctx.header)
    return {"labels": path}


def cmd_train(ctx: Context) -> dict:
    out = ctx.out_dir()
    samples, x = io.read_features(ctx.input("features"))
    labels = io.read_labels(ctx.input("labels"))
    known = set(samples)
    unknown = [s for s in labels if s not in known]
    if unknown:
        raise DataError(f"{len(unknown)} labelled samples have no features, e.g. {unknown[0]}")
    sch = scheme(ctx.settings)
    if max(labels.values()) > sch.class_count:
        raise DataError(f"labels use classes above {sch.class_count}; pass the matching --classes")
    split = split_fingers([s.finger for s in samples], ctx.seed)
    tx, ty, _ = training_arrays(samples, x, labels, split["train"])
    mx, my, _ = training_arrays(samples, x, labels, split["monitor"])
    if len(ty) == 0 or len(my) == 0:
        raise DataError("train or monitor split has no labelled samples")
    model0 = load_model(ctx.input("init_model")) if ctx.has("init_model") else None
    result = train(tx, ty, mx, my, train_config(ctx.settings), model0=model0, n_out=sch.class_count)
    model = result.model
    model.train_config_echo.update({
        "split_seed": ctx.seed, "split_fractions": list(SPLIT_FRACTIONS), "classes": ctx.settings["classes"],
        "n_train": int(len(ty)), "n_monitor": int(len(my)), "stop_reason": result.stop_reason,
        "best_run": int(result.best_run),
    })
    model_path = Path(ctx.settings["model"]) if ctx.has("model") else out / "model.json"
    save_model(model, model_path, header=ctx.header[2:])
    hist_path = out / "history.csv"
    io.write_history(hist_path, result.history, ctx.header)
    return {"model": model_path, "history": hist_path}


def cmd_predict(ctx: Context) -> dict:
    out = ctx.out_dir()
    samples, x = io.read_features(ctx.input("features"))
    model = load_model(ctx.input("model"))
    path = out / "predictions.csv"
    io.write_predictions(path, predict_all(model, samples, x), ctx.header)
    return {"predictions": path}


def cmd_evaluate(ctx: Context) -> dict:
    out = ctx.out_dir()
    tables = ctx.scores()
    labels = io.read_labels(ctx.input("labels"))
    em = ctx.settings["eval_matcher"]
    if em not in tables:
        raise DataError(f"evaluation matcher {em!r} not in the scores file ({', '.join(tables)})")
    fingers = sorted({s.finger for s in labels})
    predicted = None
    if ctx.has("model"):
        model = load_model(ctx.input("model"))
        samples, x = io.read_features(ctx.input("features"))
        seed = model.train_config_echo.get("split_seed")
        if seed is not None:
            fingers = split_fingers([s.finger for s in samples], int(seed))["eval"]
        keep = set(fingers)
        rows = [i for i, s in enumerate(samples) if s.finger in keep]
        predicted = predict_all(model, [samples[i] for i in rows], x[rows])
    elif ctx.has("predictions"):
        predicted = io.read_predictions(ctx.input("predictions"))
        fingers = sorted(set(fingers) & {s.finger for s in predicted})

    selections = {"perfect": labels, "naive": None}
    if predicted is not None:
        selections["trained"] = predicted
    curves = evaluate_selections(tables[em], fingers, selections)
    paths = {}
    for name, curve in curves.items():
        paths[f"det_{name}"] = out / f"det_{name}.csv"
        io.write_det(paths[f"det_{name}"], curve, ctx.header)
    names = list(curves)
    paths["eer"] = out / "eer.csv"
    io.write_csv(paths["eer"], ctx.header, {"selection": names,
                                            "eer": np.array([curves[n].eer for n in names], dtype=float)})
    if predicted is not None:
        common = sorted(s for s in predicted if s in labels and s.finger in set(fingers))
        if common:
            hist = deviation_histogram([predicted[s] for s in common], [labels[s] for s in common])
            paths["deviation"] = out / "deviation.csv"
            io.write_histogram(paths["deviation"], hist, ctx.header)
    q, nms = _rank_maps(ctx) if ctx.has("ranks") else (None, None)
    if nms is None:
        qual = _qualities(ctx, tables)
        nms = {m: mq.value_map("nms") for m, mq in qual.items()}
    if len(nms) >= 2:
        mnames, matrix = correlation_table(nms)
        paths["correlation"] = out / "correlation_nms.csv"
        io.write_matrix(paths["correlation"], mnames, matrix, ctx.header)
    return paths


def cmd_run(ctx: Context) -> dict:
    out = ctx.out_dir()
    s = ctx.settings
    paths = cmd_synth(ctx)
    s.update(scores=str(paths["scores"]), features=str(paths["features"]))
    paths.update(cmd_rank(ctx))
    s["ranks"] = str(paths["ranks"])
    paths.update(cmd_classify(ctx))
    s["labels"] = str(paths["labels"])
    if s["model"] is None:
        s["model"] = str(out / "model.json")
    paths.update(cmd_train(ctx))
    paths.update(cmd_predict(ctx))
    paths.update(cmd_evaluate(ctx))
    return paths


HANDLERS = {
    "synth": cmd_synth, "rank": cmd_rank, "classify": cmd_classify, "train": cmd_train,
    "predict": cmd_predict, "evaluate": cmd_evaluate, "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args.command, resolve_settings(args))
        paths = HANDLERS[args.command](ctx)
    except (ConfigError, InputError) as exc:
        print(f"fpquality: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"fpquality: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for name, p in paths.items():
        log.info("wrote %s: %s", name, p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
