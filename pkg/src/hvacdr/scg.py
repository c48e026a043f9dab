"""Scaled conjugate gradient minimizer (Moller, Neural Networks 6(4), 1993).

Operates on a flat parameter vector through a single loss-and-gradient
callback, so the same engine trains both the zone networks and the
schedule meta-predictor.  Reference defaults: sigma = 5e-5, lambda = 5e-7.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError


@dataclass
class ScgResult:
    w: np.ndarray
    loss: float
    grad_norm: float
    epochs: int
    converged: bool          # gradient tolerance reached before the epoch cap


def minimize(loss_and_grad, w0, max_epochs=2000, grad_tol=1e-6,
             sigma=5e-5, lambda_init=5e-7):
    """Minimize loss_and_grad(w) -> (loss, grad) starting from w0.

    Second-order information is approximated by a one-sided difference of
    gradients along the search direction; the Levenberg-style lambda term
    keeps the local quadratic model positive definite.
    """
    w = np.asarray(w0, dtype=float).copy()
    n = w.size
    loss, grad = loss_and_grad(w)
    if not math.isfinite(loss):
        raise TrainingDivergedError(0)
    r = -grad
    p = r.copy()
    lam, lam_bar = lambda_init, 0.0
    success = True
    delta = 0.0
    epochs = 0

    for k in range(1, max_epochs + 1):
        epochs = k
        norm_r = np.linalg.norm(r)
        if norm_r < grad_tol:
            return ScgResult(w, loss, norm_r, k - 1, True)

        norm_p2 = float(p @ p)
        if success:
            # curvature along p from a gradient difference
            sig = sigma / math.sqrt(norm_p2)
            _, grad_s = loss_and_grad(w + sig * p)
            s = (grad_s - grad) / sig
            delta = float(p @ s)

        delta = delta + (lam - lam_bar) * norm_p2
        if delta <= 0:                      # make the Hessian model definite
            lam_bar = 2.0 * (lam - delta / norm_p2)
            delta = -delta + lam * norm_p2
            lam = lam_bar

        mu = float(p @ r)
        alpha = mu / delta
        loss_new, grad_new = loss_and_grad(w + alpha * p)
        if not math.isfinite(loss_new):
            raise TrainingDivergedError(k)
        big_delta = 2.0 * delta * (loss - loss_new) / (mu * mu)

        if big_delta >= 0:                  # successful reduction
            w = w + alpha * p
            loss = loss_new
            grad = grad_new
            r_new = -grad
            lam_bar = 0.0
            success = True
            if k % n == 0:                  # periodic restart
                p = r_new.copy()
            else:
                beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
                p = r_new + beta * p
            r = r_new
            if big_delta >= 0.75:
                lam = 0.25 * lam
        else:
            lam_bar = lam
            success = False

        if big_delta < 0.25:
            lam = lam + delta * (1.0 - big_delta) / norm_p2
        if lam > 1e100:                     # direction has gone numerically stale
            p = r.copy()
            lam = lambda_init
            lam_bar = 0.0
            success = True

    return ScgResult(w, loss, float(np.linalg.norm(r)), epochs, False)
