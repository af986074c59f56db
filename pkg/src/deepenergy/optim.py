"""Full-batch minimizers over a flat parameter vector.

``loss_fn(x) -> (loss, grad)`` must be deterministic.  A non-finite loss is
how the solver signals an inadmissible iterate: Adam aborts on it, the
L-BFGS line search treats it as +inf and backtracks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


class OptimizerAbort(RuntimeError):
    """Non-finite loss where the optimizer cannot recover."""


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 300

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("adam.lr must be positive")
        if self.epochs < 0:
            raise ValueError("adam.epochs must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")


@dataclass
class LBFGSConfig:
    history: int = 20
    tolerance_change: float = 1e-12
    tolerance_grad: float = 1e-10
    max_iter: int = 2000
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 50
    check_wolfe: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.history < 1 or self.max_iter < 0 or self.max_ls < 1:
            raise ValueError("lbfgs history/max_iter/max_ls out of range")


@dataclass
class OptimizerConfig:
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LBFGSConfig = field(default_factory=LBFGSConfig)


@dataclass
class RunResult:
    x: np.ndarray
    history: list[float]
    iterations: int
    status: str
    evaluations: int = 0

    @property
    def loss(self) -> float:
        return self.history[-1] if self.history else math.nan


def gd_step(x: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return x - lr * grad


def adam_run(loss_fn: LossFn, x0: np.ndarray, config: AdamConfig = AdamConfig()) -> RunResult:
    """Bias-corrected Adam for exactly ``config.epochs`` steps.

    The history holds the loss at each iterate before its update, then the
    loss at the final iterate.
    """
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    history = []
    b1, b2 = config.beta1, config.beta2
    for t in range(1, config.epochs + 1):
        f, g = loss_fn(x)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise OptimizerAbort(f"adam: non-finite loss at step {t} (|x| = {np.linalg.norm(x):.6e})")
        history.append(float(f))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        x = x - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
    if config.epochs:
        f, _ = loss_fn(x)
        if not math.isfinite(f):
            raise OptimizerAbort(f"adam: non-finite loss after final step (|x| = {np.linalg.norm(x):.6e})")
        history.append(float(f))
    return RunResult(x, history, config.epochs, "done", config.epochs + (1 if config.epochs else 0))


def _bounded_cubic(x1, f1, g1, x2, f2, g2):
    lo, hi = (x1, x2) if x1 <= x2 else (x2, x1)
    if not (math.isfinite(f1) and math.isfinite(f2)):
        return 0.5 * (lo + hi)
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    sq = d1 * d1 - g1 * g2
    if not (sq >= 0 and math.isfinite(sq)):
        return 0.5 * (lo + hi)
    d2 = math.sqrt(sq)
    if x1 <= x2:
        t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
    else:
        t = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
    if not math.isfinite(t):
        return 0.5 * (lo + hi)
    return min(max(t, lo), hi)


@dataclass
class _LineSearchResult:
    step: float
    f: float
    g: np.ndarray
    evals: int
    ok: bool


def strong_wolfe(phi, f0: float, d0: float, step: float, c1: float, c2: float, max_evals: int) -> _LineSearchResult:
    """Bracketing/zoom line search for the strong Wolfe conditions.

    ``phi(a)`` returns ``(f, g_vector, dphi)`` at ``x + a*d``.  Non-finite ``f``
    counts as a failed sufficient-decrease test.  On failure the best point
    with finite loss below ``f0`` is returned with ``ok=False`` (or step 0).
    """
    best = (0.0, f0, None)
    evals = 0
    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = step
    bracket = None
    while evals < max_evals:
        f, g, dphi = phi(a)
        evals += 1
        if math.isfinite(f) and f < best[1]:
            best = (a, f, g)
        if not math.isfinite(f) or f > f0 + c1 * a * d0 or (evals > 1 and f >= f_prev):
            bracket = [(a_prev, f_prev, d_prev), (a, f, dphi)]
            break
        if abs(dphi) <= -c2 * d0:
            return _LineSearchResult(a, f, g, evals, True)
        if dphi >= 0:
            bracket = [(a, f, dphi), (a_prev, f_prev, d_prev)]
            break
        a_prev, f_prev, d_prev = a, f, dphi
        a = 2.0 * a
    if bracket is None:
        return _LineSearchResult(best[0], best[1], best[2], evals, False)

    lo, hi = bracket  # lo satisfies sufficient decrease with the lowest f so far
    while evals < max_evals:
        a_lo, f_lo, d_lo = lo
        a_hi, f_hi, d_hi = hi
        width = abs(a_hi - a_lo)
        if width < 1e-14 * max(1.0, abs(a_lo)):
            break
        if math.isfinite(f_hi) and math.isfinite(d_hi):
            a = _bounded_cubic(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        else:
            a = 0.5 * (a_lo + a_hi)
        # keep trial points away from the bracket ends
        margin = 0.1 * width
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        if a - left < margin or right - a < margin:
            a = 0.5 * (a_lo + a_hi)
        f, g, dphi = phi(a)
        evals += 1
        if math.isfinite(f) and f < best[1]:
            best = (a, f, g)
        if not math.isfinite(f) or f > f0 + c1 * a * d0 or f >= f_lo:
            hi = (a, f, dphi)
        else:
            if abs(dphi) <= -c2 * d0:
                return _LineSearchResult(a, f, g, evals, True)
            if dphi * (a_hi - a_lo) >= 0:
                hi = lo
            lo = (a, f, dphi)
    return _LineSearchResult(best[0], best[1], best[2], evals, False)


def lbfgs_run(loss_fn: LossFn, x0: np.ndarray, config: LBFGSConfig = LBFGSConfig()) -> RunResult:
    """Limited-memory BFGS with a strong Wolfe line search.

    Stops on ``|f_k - f_{k-1}| <= tolerance_change``, ``|g|_inf <=
    tolerance_grad``, ``max_iter`` or a failed line search.  A failed search
    still moves to its lowest trial point when that point lowered the loss;
    only that final point may violate the Wolfe conditions.  ``status`` is one
    of ``converged-change``, ``converged-grad``, ``max-iter``,
    ``line-search-failed``.  The history starts with the initial loss and
    holds one entry per accepted iterate.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = loss_fn(x)
    evals = 1
    if not math.isfinite(f):
        raise OptimizerAbort(f"lbfgs: non-finite loss at start (|x| = {np.linalg.norm(x):.6e})")
    history = [float(f)]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max-iter"
    it = 0
    if np.max(np.abs(g), initial=0.0) <= config.tolerance_grad:
        return RunResult(x, history, 0, "converged-grad", evals)
    while it < config.max_iter:
        # two-loop recursion
        q = -g
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q = q - a * y
        if s_hist:
            gamma = np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
        else:
            gamma = min(1.0, 1.0 / np.sum(np.abs(g)))
        r = gamma * q
        for s, y, rho, a in zip(s_hist, y_hist, rho_hist, reversed(alphas)):
            b = rho * np.dot(y, r)
            r = r + (a - b) * s
        d = r
        d0 = float(np.dot(g, d))
        if not d0 < 0:
            # lost descent: restart from steepest descent
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            d = -min(1.0, 1.0 / np.sum(np.abs(g))) * g
            d0 = float(np.dot(g, d))

        def phi(a):
            fa, ga = loss_fn(x + a * d)
            da = float(np.dot(ga, d)) if np.all(np.isfinite(ga)) else math.nan
            return fa, ga, da

        ls = strong_wolfe(phi, f, d0, 1.0, config.c1, config.c2, config.max_ls)
        evals += ls.evals
        it += 1
        if not ls.ok:
            # keep the best trial point if it lowered the loss
            status = "line-search-failed"
            if ls.step > 0 and ls.f < f:
                x = x + ls.step * d
                f, g = ls.f, ls.g
                history.append(float(f))
            break
        if config.check_wolfe:
            assert ls.f <= f + config.c1 * ls.step * d0, "sufficient decrease violated"
            assert abs(np.dot(ls.g, d)) <= config.c2 * abs(d0), "curvature condition violated"
        s = ls.step * d
        y = ls.g - g
        x = x + s
        f_old = f
        f, g = ls.f, ls.g
        history.append(float(f))
        sy = float(np.dot(s, y))
        if sy > 1e-12 * float(np.dot(y, y)):
            if len(s_hist) == config.history:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        if np.max(np.abs(g)) <= config.tolerance_grad:
            status = "converged-grad"
            break
        if abs(f - f_old) <= config.tolerance_change:
            status = "converged-change"
            break
    log.debug("lbfgs: %s after %d iterations, loss %.12e", status, it, f)
    return RunResult(x, history, it, status, evals)
