"""Three-layer logistic network, feature standardization and the model file."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError, InputError

log = logging.getLogger(__name__)

FORMAT = "fpquality-network"
FORMAT_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class FeatureTransform:
    """Per-feature z-score parameters fitted on training data."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        return (x - self.mean) / self.std

    @classmethod
    def identity(cls, n: int) -> "FeatureTransform":
        return cls(np.zeros(n), np.ones(n))


def normalize_features(features) -> tuple[FeatureTransform, np.ndarray]:
    """Fit a z-score transform on ``features`` and apply it.

    Zero-variance features are only centred.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("normalize_features needs a 2-d array with at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=0)
    flat = std == 0
    if flat.any():
        log.warning("features %s have zero variance and are only centred", np.flatnonzero(flat).tolist())
        std = np.where(flat, 1.0, std)
    t = FeatureTransform(mean, std)
    return t, t.apply(x)


@dataclass
class NetworkModel:
    """Feed-forward network ``n_in -> n_hidden -> n_out`` with logistic units.

    ``mask_ih`` / ``mask_ho`` are boolean keep-masks (True = connection
    present); biases are never pruned.
    """

    weights_ih: np.ndarray
    bias_h: np.ndarray
    weights_ho: np.ndarray
    bias_o: np.ndarray
    transform: FeatureTransform | None = None
    mask_ih: np.ndarray | None = None
    mask_ho: np.ndarray | None = None
    train_config_echo: dict = field(default_factory=dict)

    @property
    def n_in(self) -> int:
        return self.weights_ih.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.weights_ih.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights_ho.shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_in, self.n_hidden, self.n_out]

    @property
    def n_params(self) -> int:
        return self.weights_ih.size + self.bias_h.size + self.weights_ho.size + self.bias_o.size

    @classmethod
    def zeros(cls, n_in=11, n_hidden=22, n_out=5) -> "NetworkModel":
        return cls(np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((n_out, n_hidden)), np.zeros(n_out))

    @classmethod
    def random(cls, n_in=11, n_hidden=22, n_out=5, rng=None, scale=0.5) -> "NetworkModel":
        """Weights and biases uniform in ``[-scale, scale]``."""
        if rng is None:
            from ..synth import make_rng

            rng = make_rng(0)
        m = cls.zeros(n_in, n_hidden, n_out)
        return m.with_params(rng.uniform(-scale, scale, size=m.n_params))

    # flat layout: weights_ih (row-major), bias_h, weights_ho (row-major), bias_o
    def params(self) -> np.ndarray:
        return np.concatenate([self.weights_ih.ravel(), self.bias_h, self.weights_ho.ravel(), self.bias_o])

    def _split(self, theta):
        h, i, o = self.n_hidden, self.n_in, self.n_out
        a = h * i
        b = a + h
        c = b + o * h
        return theta[:a].reshape(h, i), theta[a:b], theta[b:c].reshape(o, h), theta[c:]

    def with_params(self, theta) -> "NetworkModel":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise InputError(f"expected {self.n_params} parameters, got {theta.size}")
        w1, b1, w2, b2 = (a.copy() for a in self._split(theta))
        return NetworkModel(w1, b1, w2, b2, self.transform, self.mask_ih, self.mask_ho, dict(self.train_config_echo))

    def weight_mask(self) -> np.ndarray:
        """Flat 0/1 mask: 1 for free parameters, 0 for pruned connections."""
        ih = np.ones(self.weights_ih.shape) if self.mask_ih is None else self.mask_ih.astype(float)
        ho = np.ones(self.weights_ho.shape) if self.mask_ho is None else self.mask_ho.astype(float)
        return np.concatenate([ih.ravel(), np.ones(self.n_hidden), ho.ravel(), np.ones(self.n_out)])

    def regularized_mask(self) -> np.ndarray:
        """Flat 0/1 mask of the unpruned connection weights (biases excluded)."""
        m = self.weight_mask()
        m[self.weights_ih.size:self.weights_ih.size + self.n_hidden] = 0.0
        m[-self.n_out:] = 0.0
        return m

    @property
    def is_pruned(self) -> bool:
        return self.mask_ih is not None or self.mask_ho is not None


def forward(model: NetworkModel, features) -> np.ndarray:
    """Output activations for one feature vector or a batch (rows).

    Features must already be standardized; see :func:`prepare`.
    """
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != model.n_in:
        raise InputError(f"expected {model.n_in} features, got {x2.shape[1]}")
    hidden = sigmoid(x2 @ model.weights_ih.T + model.bias_h)
    out = sigmoid(hidden @ model.weights_ho.T + model.bias_o)
    return out[0] if single else out


def prepare(model: NetworkModel, raw_features) -> np.ndarray:
    """Apply the model's stored feature transform to raw features."""
    x = np.asarray(raw_features, dtype=float)
    return x if model.transform is None else model.transform.apply(x)


def predict_class(model: NetworkModel, features) -> np.ndarray | int:
    """1-based class of the largest activation; ties go to the lower class.

    ``features`` are standardized inputs (one vector or a batch).
    """
    act = forward(model, features)
    if act.ndim == 1:
        return int(np.argmax(act)) + 1
    return np.argmax(act, axis=1) + 1


def _mask_to_list(mask):
    return None if mask is None else mask.astype(int).tolist()


def model_to_dict(model: NetworkModel) -> dict:
    t = model.transform or FeatureTransform.identity(model.n_in)
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "layer_sizes": model.layer_sizes,
        "activation": "logistic",
        "feature_transform": {"mean": t.mean.tolist(), "std": t.std.tolist()},
        "weights": {
            "input_hidden": model.weights_ih.tolist(),
            "hidden_bias": model.bias_h.tolist(),
            "hidden_output": model.weights_ho.tolist(),
            "output_bias": model.bias_o.tolist(),
        },
        "pruned_mask": None if not model.is_pruned else {
            "input_hidden": _mask_to_list(model.mask_ih if model.mask_ih is not None else np.ones_like(model.weights_ih)),
            "hidden_output": _mask_to_list(model.mask_ho if model.mask_ho is not None else np.ones_like(model.weights_ho)),
        },
        "train_config_echo": model.train_config_echo,
    }


def model_from_dict(d: dict) -> NetworkModel:
    try:
        if d.get("format") != FORMAT:
            raise DataError(f"not a {FORMAT} document")
        if d.get("activation") != "logistic":
            raise DataError(f"unsupported activation {d.get('activation')!r}")
        w = d["weights"]
        model = NetworkModel(
            np.array(w["input_hidden"], dtype=float),
            np.array(w["hidden_bias"], dtype=float),
            np.array(w["hidden_output"], dtype=float),
            np.array(w["output_bias"], dtype=float),
            FeatureTransform(np.array(d["feature_transform"]["mean"], dtype=float),
                             np.array(d["feature_transform"]["std"], dtype=float)),
            train_config_echo=d.get("train_config_echo") or {},
        )
        mask = d.get("pruned_mask")
        if mask:
            model.mask_ih = np.array(mask["input_hidden"], dtype=bool)
            model.mask_ho = np.array(mask["hidden_output"], dtype=bool)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed model document: {exc}") from exc
    if model.layer_sizes != list(d["layer_sizes"]):
        raise DataError(f"layer_sizes {d['layer_sizes']} do not match the weight shapes {model.layer_sizes}")
    return model


def save_model(model: NetworkModel, path, header: str | None = None) -> None:
    """Write the model as JSON; float repr makes the round trip exact."""
    doc = model_to_dict(model)
    if header is not None:
        doc = {"header": header, **doc}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def load_model(path) -> NetworkModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc.msg}", line=exc.lineno, path=str(path)) from exc
    return model_from_dict(doc)
