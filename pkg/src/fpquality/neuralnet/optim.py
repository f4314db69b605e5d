"""Batch optimizers: scaled conjugate gradient and BFGS.

Both are written as generators over iterations so the caller can inspect the
current point after every step (for early stopping).  ``fun(x)`` must return
``(value, gradient)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Step:
    """State after one optimizer iteration."""

    iteration: int
    x: np.ndarray
    f: float
    grad_norm: float
    accepted: bool
    converged: bool = False


def scg(fun, x0, sigma: float = 1e-4, lambda0: float = 1e-6, gtol: float = 1e-12, restart: int | None = None):
    """Scaled conjugate gradient iterations (Moller 1993).

    Curvature along the search direction comes from a gradient difference at
    distance ``sigma / |p|``; a Levenberg-Marquardt parameter keeps the local
    quadratic model positive definite and is adapted from the ratio of actual
    to predicted reduction.  Rejected steps keep the previous point.
    """
    w = np.array(x0, dtype=float)
    n = w.size if restart is None else restart
    f, g = fun(w)
    r = -g
    p = r.copy()
    lam = lambda0
    lam_bar = 0.0
    success = True
    delta = 0.0
    k = 0
    while True:
        k += 1
        pp = float(np.dot(p, p))
        if pp == 0.0 or math.sqrt(float(np.dot(r, r))) <= gtol:
            yield Step(k, w, f, math.sqrt(float(np.dot(r, r))), False, True)
            return
        if success:
            sigma_k = sigma / math.sqrt(pp)
            _, g_sigma = fun(w + sigma_k * p)
            s = (g_sigma + r) / sigma_k
            delta = float(np.dot(p, s))
        delta += (lam - lam_bar) * pp
        if delta <= 0.0:
            # make the Hessian approximation positive definite
            lam_bar = 2.0 * (lam - delta / pp)
            delta = -delta + lam * pp
            lam = lam_bar
        mu = float(np.dot(p, r))
        alpha = mu / delta
        w_new = w + alpha * p
        f_new, g_new = fun(w_new)
        comparison = 2.0 * delta * (f - f_new) / (mu * mu) if mu != 0.0 else -1.0
        if comparison >= 0.0 and np.isfinite(f_new):
            w, f = w_new, f_new
            r_new = -g_new
            lam_bar = 0.0
            success = True
            if k % n == 0:
                p = r_new.copy()
            else:
                beta = (float(np.dot(r_new, r_new)) - float(np.dot(r_new, r))) / mu
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam *= 0.25
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam += delta * (1.0 - comparison) / pp
        yield Step(k, w, f, math.sqrt(float(np.dot(r, r))), success)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through two points with slopes, or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def wolfe_line_search(fun, x, p, f0, g0, c1: float = 1e-4, c2: float = 0.9,
                      alpha0: float = 1.0, alpha_max: float = 1e10, max_iter: int = 40, polish: bool = True):
    """Line search for the strong Wolfe conditions (Nocedal & Wright, Alg. 3.5/3.6).

    With ``polish`` the accepted step is refined once by cubic interpolation
    and the refinement kept if it also satisfies the conditions and lowers the
    objective; on a quadratic this gives the exact line minimizer.

    Returns ``(alpha, f, g)`` or ``None`` when no acceptable step is found.
    """
    dphi0 = float(np.dot(g0, p))
    if dphi0 >= 0:
        return None

    def phi(a):
        fa, ga = fun(x + a * p)
        return fa, ga, float(np.dot(ga, p))

    def ok(a, fa, da):
        return np.isfinite(fa) and fa <= f0 + c1 * a * dphi0 and abs(da) <= c2 * abs(dphi0)

    def zoom(lo, flo, dlo, hi, fhi, dhi):
        for _ in range(max_iter):
            a = _cubic_min(lo, flo, dlo, hi, fhi, dhi)
            span = hi - lo
            if a is None or not (min(lo, hi) + 0.1 * abs(span) <= a <= max(lo, hi) - 0.1 * abs(span)):
                a = lo + 0.5 * span
            fa, ga, da = phi(a)
            if not np.isfinite(fa) or fa > f0 + c1 * a * dphi0 or fa >= flo:
                hi, fhi, dhi = a, fa, da
            else:
                if abs(da) <= c2 * abs(dphi0):
                    return a, fa, ga, da
                if da * (hi - lo) >= 0:
                    hi, fhi, dhi = lo, flo, dlo
                lo, flo, dlo = a, fa, da
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    found = None
    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    for i in range(max_iter):
        fa, ga, da = phi(a)
        if not np.isfinite(fa) or fa > f0 + c1 * a * dphi0 or (i > 0 and fa >= f_prev):
            found = zoom(a_prev, f_prev, d_prev, a, fa, da)
            break
        if abs(da) <= c2 * abs(dphi0):
            found = (a, fa, ga, da)
            break
        if da >= 0:
            found = zoom(a, fa, da, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, alpha_max)
    if found is None:
        return None
    a, fa, ga, da = found
    if polish and a > 0:
        t = _cubic_min(0.0, f0, dphi0, a, fa, da)
        if t is not None and t > 0 and np.isfinite(t) and t != a:
            ft, gt, dt = phi(t)
            if ok(t, ft, dt) and ft < fa:
                a, fa, ga = t, ft, gt
    return a, fa, ga


def bfgs(fun, x0, gtol: float = 1e-12, c1: float = 1e-4, c2: float = 0.9, polish: bool = True):
    """BFGS iterations on the inverse Hessian with a strong Wolfe line search.

    The initial inverse Hessian is the identity, rescaled by ``s.y / y.y``
    after the first step.  When the line search fails the iteration falls
    back to steepest descent; a second failure ends the iteration.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f, g = fun(x)
    H = np.eye(n)
    first = True
    k = 0
    while True:
        k += 1
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol:
            yield Step(k, x, f, gnorm, False, True)
            return
        p = -H @ g
        if float(np.dot(p, g)) >= 0:
            H = np.eye(n)
            p = -g
        res = wolfe_line_search(fun, x, p, f, g, c1, c2, polish=polish)
        if res is None:
            log.warning("BFGS line search failed at iteration %d; falling back to steepest descent", k)
            H = np.eye(n)
            p = -g
            res = wolfe_line_search(fun, x, p, f, g, c1, c2, alpha0=1.0 / max(gnorm, 1e-300), polish=polish)
            if res is None:
                log.warning("steepest-descent line search failed too; stopping")
                yield Step(k, x, f, gnorm, False, True)
                return
        alpha, f_new, g_new = res
        s = alpha * p
        y = g_new - g
        sy = float(np.dot(s, y))
        if first and sy > 0:
            H = (sy / float(np.dot(y, y))) * np.eye(n)
            first = False
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(np.dot(y, Hy)) + rho) * np.outer(s, s)
        x = x + s
        f, g = f_new, g_new
        yield Step(k, x, f, float(np.linalg.norm(g)), True)
