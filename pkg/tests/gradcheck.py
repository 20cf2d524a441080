"""Central finite-difference checker for the interval and squared losses."""
import numpy as np

from picalib.models import forward, loss_and_grad

STEP = 1e-5


def _pattern(params, X, y):
    # activation signs and hinge indicators; a change means the step crossed a kink
    out, cache = forward(params, X, return_cache=True)
    flags = [z > 0 for z in cache[1:-1]]
    if out.shape[1] == 2:
        flags += [out[:, 0] > y, y > out[:, 1]]
    return flags


def _same(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def check(params, X, y, lam, kind="interval"):
    """Return (max relative error, number of components compared)."""
    _, g = loss_and_grad(params, X, y, lam, kind)
    analytic = g.flatten()
    theta = params.flatten()
    base = _pattern(params, X, y)
    worst, used = 0.0, 0
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += STEP
        tm[k] -= STEP
        pp, pm = params.with_flat(tp), params.with_flat(tm)
        if not (_same(base, _pattern(pp, X, y)) and _same(base, _pattern(pm, X, y))):
            continue
        num = (loss_and_grad(pp, X, y, lam, kind)[0] - loss_and_grad(pm, X, y, lam, kind)[0]) / (2 * STEP)
        scale = max(abs(num), abs(analytic[k]), 1e-8)
        worst = max(worst, abs(num - analytic[k]) / scale)
        used += 1
    return worst, used
