"""Error functions and the pattern-weighted, regularized training objective."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from .model import NetworkModel, sigmoid

MSE = "mse"
OPT_MSE = "opt-mse"


def distance_constant(n_out: int) -> float:
    """Mean ``|i - j|`` over ordered class pairs ``i != j``: ``(n_out + 1) / 3``."""
    return (n_out + 1) / 3.0


def error_coefficients(true_class, n_out: int, error_fn: str = MSE, constant: float | None = None) -> np.ndarray:
    """Per-output weights ``c_j`` so that the error is ``sum_j c_j (t_j - x_j)^2``.

    ``true_class`` is 1-based (scalar or vector).
    """
    i = np.atleast_1d(np.asarray(true_class, dtype=np.int64))
    if (i < 1).any() or (i > n_out).any():
        raise InputError(f"true class outside 1..{n_out}")
    if error_fn == MSE:
        return np.ones((i.size, n_out))
    if error_fn != OPT_MSE:
        raise InputError(f"unknown error function {error_fn!r}")
    c = distance_constant(n_out) if constant is None else constant
    j = np.arange(1, n_out + 1)
    coef = np.abs(i[:, None] - j[None, :]).astype(float)
    coef[coef == 0] = 1.0
    return coef / c


def _one_hot(true_class, n_out):
    i = np.atleast_1d(np.asarray(true_class, dtype=np.int64))
    if i.size and (i.min() < 1 or i.max() > n_out):
        raise InputError(f"classes must lie in 1..{n_out}")
    t = np.zeros((i.size, n_out))
    t[np.arange(i.size), i - 1] = 1.0
    return t


def error_mse(activations, true_class: int) -> float:
    """``(1 - x_i)^2 + sum_{j != i} x_j^2``."""
    x = np.asarray(activations, dtype=float)
    t = _one_hot(true_class, x.size)[0]
    return float(((t - x) ** 2).sum())


def error_opt_mse(activations, true_class: int, constant: float | None = None) -> float:
    """Like :func:`error_mse`, but a wrong activation at ``j`` costs ``|i - j|`` times
    as much; the sum is divided by ``constant`` (default ``(n_out + 1) / 3``)."""
    x = np.asarray(activations, dtype=float)
    t = _one_hot(true_class, x.size)[0]
    coef = error_coefficients(true_class, x.size, OPT_MSE, constant)[0]
    return float((coef * (t - x) ** 2).sum())


class Objective:
    """Objective and analytic gradient over a fixed training batch.

    ``mean_k pw_k E(x_k) + reg * sum(w^2)`` where the mean is weighted by the
    pattern weights and the penalty runs over unpruned connection weights.
    Gradients of pruned connections are zero.
    """

    def __init__(self, template: NetworkModel, features, classes, pattern_weights=None,
                 error_fn: str = MSE, regularization: float = 0.0, constant: float | None = None):
        self.template = template
        self.x = np.asarray(features, dtype=float)
        self.classes = np.asarray(classes, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] == 0:
            raise InputError("training batch must be a non-empty 2-d array")
        if self.x.shape[1] != template.n_in:
            raise InputError(f"expected {template.n_in} features, got {self.x.shape[1]}")
        if self.classes.shape != (self.x.shape[0],):
            raise InputError("one class label per training row is required")
        pw = np.ones(self.x.shape[0]) if pattern_weights is None else np.asarray(pattern_weights, dtype=float)
        if pw.shape != self.classes.shape or (pw < 0).any():
            raise InputError("pattern weights must be non-negative, one per row")
        total = pw.sum()
        if not total > 0:
            raise InputError("all pattern weights are zero")
        self.sample_weight = pw / total
        n_out = template.n_out
        self.target = _one_hot(self.classes, n_out)
        self.coef = error_coefficients(self.classes, n_out, error_fn, constant)
        self.regularization = float(regularization)
        self.mask = template.weight_mask()
        self.reg_mask = template.regularized_mask()
        self.n_evals = 0

    def __call__(self, theta):
        """Return ``(objective, gradient)`` at flat parameters ``theta``."""
        self.n_evals += 1
        theta = np.asarray(theta, dtype=float) * self.mask
        w1, b1, w2, b2 = self.template._split(theta)
        hidden = sigmoid(self.x @ w1.T + b1)
        out = sigmoid(hidden @ w2.T + b2)
        diff = out - self.target
        per_sample = (self.coef * diff * diff).sum(axis=1)
        f = float(np.dot(self.sample_weight, per_sample))
        # back-propagate d(weighted error)/d(output pre-activation)
        d_out = (2.0 * self.sample_weight[:, None]) * self.coef * diff * out * (1.0 - out)
        g_w2 = d_out.T @ hidden
        g_b2 = d_out.sum(axis=0)
        d_hid = (d_out @ w2) * hidden * (1.0 - hidden)
        g_w1 = d_hid.T @ self.x
        g_b1 = d_hid.sum(axis=0)
        grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
        if self.regularization:
            wr = theta * self.reg_mask
            f += self.regularization * float(np.dot(wr, wr))
            grad += 2.0 * self.regularization * wr
        return f, grad * self.mask


def objective_and_gradient(model: NetworkModel, features, classes, pattern_weights=None,
                           error_fn: str = MSE, regularization: float = 0.0, constant: float | None = None):
    """Objective value and flat gradient for ``model`` on one batch."""
    obj = Objective(model, features, classes, pattern_weights, error_fn, regularization, constant)
    return obj(model.params())
