"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

LossAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    loss_and_grad: LossAndGrad,
    theta: np.ndarray,
    probes: int = 20,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference partials.

    ``loss_and_grad(theta) -> (loss, grad)`` is evaluated at perturbed copies of
    ``theta``; ``probes`` coordinates are drawn without replacement.
    """
    theta = np.array(theta, dtype=np.float64)
    _, grad = loss_and_grad(theta)
    rng = np.random.default_rng(seed)
    coords = rng.choice(theta.size, size=min(probes, theta.size), replace=False)
    worst = 0.0
    for i in coords:
        old = theta[i]
        theta[i] = old + h
        plus, _ = loss_and_grad(theta)
        theta[i] = old - h
        minus, _ = loss_and_grad(theta)
        theta[i] = old
        worst = max(worst, relative_error(grad[i], (plus - minus) / (2.0 * h)))
    return worst


def bind(forward_backward, params, spec, x, targets) -> LossAndGrad:
    """Adapt ``mlp_backward``/``ct_backward`` to a function of the flat parameter vector."""

    def fn(theta):
        saved = params.theta
        params.theta = theta
        try:
            return forward_backward(params, spec, x, targets)
        finally:
            params.theta = saved

    return fn
