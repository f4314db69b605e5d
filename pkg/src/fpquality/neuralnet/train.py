"""Training loop: batch optimizer steps, test-set early stopping, pruning."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError, TrainingDivergedError
from ..synth import make_rng
from .model import NetworkModel, forward, normalize_features, prepare
from .objective import MSE, OPT_MSE, Objective
from . import optim

log = logging.getLogger(__name__)

SCG = "scg"
BFGS = "bfgs"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = SCG
    error_fn: str = MSE
    regularization: float = 1e-4
    max_runs: int = 300
    early_stop_patience: int = 5
    early_stop_min_delta: float = 0.001
    boltzmann_temperature: float = 0.0
    seed: int = 42
    n_hidden: int = 22
    # None means (n_out + 1) / 3
    error_constant: float | None = None
    init_scale: float = 0.5
    restore_best: bool = True

    def validate(self):
        if self.optimizer not in (SCG, BFGS):
            raise InputError(f"unknown optimizer {self.optimizer!r}")
        if self.error_fn not in (MSE, OPT_MSE):
            raise InputError(f"unknown error function {self.error_fn!r}")
        if self.regularization < 0 or self.boltzmann_temperature < 0:
            raise InputError("regularization and boltzmann_temperature must be >= 0")
        if self.max_runs < 1 or self.early_stop_patience < 1 or self.n_hidden < 1:
            raise InputError("max_runs, early_stop_patience and n_hidden must be positive")

    def echo(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class RunRecord:
    phase: int
    run: int
    objective: float
    test_accuracy: float
    accepted: bool


@dataclass
class TrainResult:
    model: NetworkModel
    history: list = field(default_factory=list)
    best_run: int = 0
    stop_reason: str = ""


def _accuracy(model, x, y) -> float:
    act = forward(model, x)
    return float(((np.argmax(act, axis=1) + 1) == y).mean())


def _iterations(config: TrainConfig, fun, x0):
    if config.optimizer == SCG:
        return optim.scg(fun, x0)
    return optim.bfgs(fun, x0)


def _run_phase(model, x, y, pw, tx, ty, config, phase, history):
    obj = Objective(model, x, y, pw, config.error_fn, config.regularization, config.error_constant)
    mask = model.weight_mask()
    theta0 = model.params() * mask
    current = model.with_params(theta0)
    best, best_acc, best_run = current, _accuracy(current, tx, ty), 0
    stale = 0
    reason = "max_runs"
    for step in _iterations(config, obj, theta0):
        if not np.isfinite(step.f) or not np.all(np.isfinite(step.x)):
            raise TrainingDivergedError(f"objective became non-finite in run {step.iteration}",
                                        model=current, history=history)
        current = model.with_params(step.x * mask)
        acc = _accuracy(current, tx, ty)
        history.append(RunRecord(phase, step.iteration, float(step.f), acc, step.accepted))
        if acc > best_acc + config.early_stop_min_delta:
            best, best_acc, best_run, stale = current, acc, step.iteration, 0
        elif step.accepted:
            # a rejected step leaves the model unchanged, so it is not a check
            stale += 1
        if step.converged:
            reason = "converged"
            break
        if step.iteration >= config.max_runs:
            break
        if stale >= config.early_stop_patience:
            reason = "early_stop"
            break
    final = best if config.restore_best else current
    return final, best_run, reason


def boltzmann_prune(model: NetworkModel, temperature: float, seed=0) -> NetworkModel:
    """Zero and mask each connection weight with probability ``exp(-w^2 / T)``.

    Biases are never pruned.  Already pruned weights stay pruned.  ``seed``
    may be an integer or a numpy generator.
    """
    if not temperature > 0:
        raise InputError("Boltzmann temperature must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    masks = []
    for w, old in ((model.weights_ih, model.mask_ih), (model.weights_ho, model.mask_ho)):
        p = np.exp(-(w * w) / temperature)
        keep = rng.random(w.shape) >= p
        if old is not None:
            keep &= old
        masks.append(keep)
    out = model.with_params(model.params())
    out.mask_ih, out.mask_ho = masks
    out.weights_ih = np.where(out.mask_ih, out.weights_ih, 0.0)
    out.weights_ho = np.where(out.mask_ho, out.weights_ho, 0.0)
    return out


def train(features, classes, test_features, test_classes, config: TrainConfig = TrainConfig(),
          model0: NetworkModel | None = None, pattern_weights=None, n_out: int | None = None) -> TrainResult:
    """Train on raw ``features`` with 1-based ``classes``; early-stop on the test set.

    Features are standardized with a transform fitted on the training rows,
    unless ``model0`` already carries one.  One run is one optimizer
    iteration over the full batch.  With a positive Boltzmann temperature the
    trained network is pruned once and then retrained with the mask fixed.
    """
    config.validate()
    y = np.asarray(classes, dtype=np.int64)
    ty = np.asarray(test_classes, dtype=np.int64)
    raw = np.asarray(features, dtype=float)
    if raw.shape[0] == 0 or np.asarray(test_features).shape[0] == 0:
        raise InputError("training and test sets must be non-empty")
    rng = make_rng(config.seed)
    if model0 is None:
        n_out = int(n_out if n_out is not None else max(y.max(), ty.max()))
        model0 = NetworkModel.random(raw.shape[1], config.n_hidden, n_out, rng=rng, scale=config.init_scale)
    if model0.transform is None:
        # rows with zero pattern weight must not influence the model at all
        fit_rows = raw if pattern_weights is None else raw[np.asarray(pattern_weights, dtype=float) > 0]
        transform, _ = normalize_features(fit_rows)
        model0 = model0.with_params(model0.params())
        model0.transform = transform
    x = prepare(model0, raw)
    tx = prepare(model0, test_features)

    history: list = []
    model, best_run, reason = _run_phase(model0, x, y, pattern_weights, tx, ty, config, 0, history)
    if config.boltzmann_temperature > 0:
        pruned = boltzmann_prune(model, config.boltzmann_temperature, rng)
        n_pruned = int((~pruned.mask_ih).sum() + (~pruned.mask_ho).sum())
        log.info("pruned %d of %d connection weights", n_pruned, pruned.mask_ih.size + pruned.mask_ho.size)
        model, best_run, reason = _run_phase(pruned, x, y, pattern_weights, tx, ty, config, 1, history)
    model.train_config_echo = {**model.train_config_echo, **config.echo()}
    return TrainResult(model, history, best_run, reason)


def train_scg(features, classes, test_features, test_classes, config: TrainConfig = TrainConfig(), **kw) -> TrainResult:
    return train(features, classes, test_features, test_classes, dataclasses.replace(config, optimizer=SCG), **kw)


def train_bfgs(features, classes, test_features, test_classes, config: TrainConfig = TrainConfig(), **kw) -> TrainResult:
    return train(features, classes, test_features, test_classes, dataclasses.replace(config, optimizer=BFGS), **kw)
