"""Closed-form learning-theory calculators.

Every universal constant (``C``, ``C1``, ``C2``) is an explicit argument
defaulting to 1, so all values hold only up to those constants. Logarithms
are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, RegimeError


@dataclass(frozen=True)
class BoundResult:
    formula_id: str
    inputs: dict
    value: float
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {"formula_id": self.formula_id, "inputs": dict(self.inputs), "value": self.value,
                "flags": dict(self.flags)}


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise DomainError(f"{k} must be positive, got {v}")


def sensitivity_bound(t, alpha, gamma):
    """Width increase 6t / ((alpha - t) * gamma) when the target rises by t.

    ``gamma`` is the density lower-bound quantile at (alpha - t)/3, supplied by
    the caller; it depends on the unknown conditional density.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if t < 0 or t >= alpha:
        raise DomainError(f"need 0 <= t < alpha, got t={t}, alpha={alpha}")
    _positive(gamma=gamma)
    return 6.0 * t / ((alpha - t) * gamma)


def vc_margin_t(n, vc, eta, C=1.0, alpha=None) -> BoundResult:
    """Margin t for a VC-subgraph class; flags whether t <= alpha/4 when alpha is given."""
    _positive(n=n, vc=vc, C=C)
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    cv = C * vc
    if n < cv / 2:
        raise RegimeError(f"n={n} below C*vc/2={cv / 2}")
    t = math.sqrt(math.log(8.0 / eta) / n + (cv / n) * math.log(2.0 * math.e * n / cv))
    flags = {}
    if alpha is not None:
        flags["t_le_alpha_over_4"] = t <= alpha / 4
    return BoundResult("vc_margin_t", dict(n=n, vc=vc, eta=eta, C=C, alpha=alpha), t, flags)


def lipschitz_constant_product(diam_theta, d_cond, lip_l1):
    return 12.0 * diam_theta * d_cond * lip_l1


def lipschitz_margin_t(n, l, diam_theta, d_cond, lip_l1, eta, C=1.0) -> BoundResult:
    """Margin t for a class Lipschitz in its l-dimensional parameter.

    Uses C_H = 12 * diam(Theta) * sup density * ||Lipschitz fn||_1, which must exceed e.
    """
    _positive(n=n, C=C)
    if l < 0:
        raise DomainError("l must be >= 0")
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    c_h = lipschitz_constant_product(diam_theta, d_cond, lip_l1)
    if not c_h > math.e:
        raise DomainError(f"C_H={c_h} must exceed e so that log log C_H > 0")
    lc = math.log(c_h)
    t = math.sqrt(math.log(2.0 / eta) / n + (l / n) * 4.0 * C * lc * math.log(lc))
    inputs = dict(n=n, l=l, diam_theta=diam_theta, d_cond=d_cond, lip_l1=lip_l1, eta=eta, C=C)
    return BoundResult("lipschitz_margin_t", inputs, t, {"C_H": c_h})


def tree_vc_bound(S, d, C=1.0) -> BoundResult:
    """VC bound C * S^2 * (log S)^2 * log d for trees with at most S splits."""
    if S < 1 or d < 2:
        raise DomainError("need S >= 1 and d >= 2")
    _positive(C=C)
    value = C * S**2 * math.log(S) ** 2 * math.log(d)
    return BoundResult("tree_vc_bound", dict(S=S, d=d, C=C), value, {"degenerate": S == 1})


def nn_lipschitz_const(S, W, U, B, M, M0, x_norm, C=1.0):
    """C sqrt(S) (B M sqrt(W))^S (||x|| + M0 sqrt(U) + B M sqrt(W))."""
    _positive(S=S, W=W, U=U, B=B, M=M, C=C)
    if M0 < 0 or x_norm < 0:
        raise DomainError("M0 and x_norm must be nonnegative")
    bmw = B * M * math.sqrt(W)
    return C * math.sqrt(S) * bmw**S * (x_norm + M0 * math.sqrt(U) + bmw)


def nn_parameter_diameter(B, W):
    """Diameter 2 B sqrt(W) of the box [-B, B]^W."""
    return 2.0 * B * math.sqrt(W)


def calibration_epsilon(m, n_v, beta, alpha_min, alpha_under, C1=1.0, mode="normalized"):
    if mode == "normalized":
        rad = (alpha_under * (1 - alpha_under) / n_v + math.log(n_v * alpha_min) / n_v**2) * math.log(m / beta)
        dev = math.sqrt(max(rad, 0.0))
    elif mode == "unnormalized":
        dev = math.sqrt(math.log(m / beta) / n_v)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return max(alpha_min - alpha_under - C1 * dev, 0.0)


def calibration_confidence_bound(m, n_v, beta, alpha_min, alpha_under, alpha_tilde,
                                 C1=1.0, C2=1.0, mode="normalized") -> BoundResult:
    """Lower bound on the probability that every calibrated level is truly attained.

    ``alpha_under`` is one minus the best true candidate coverage, ``alpha_min``
    the smallest miscoverage target and ``alpha_tilde`` min(alpha_min, 1 - max alpha_k).
    The value is clamped to [0, 1]; the unclamped value is in ``flags["raw"]``.
    """
    if not 0 < beta < 0.5:
        raise DomainError("beta must lie in (0, 1/2)")
    if not 0 < alpha_tilde < 1:
        raise DomainError("alpha_tilde must lie in (0, 1)")
    if not 0 <= alpha_under < 1 or not 0 < alpha_min < 1:
        raise DomainError("alpha_under must lie in [0, 1) and alpha_min in (0, 1)")
    _positive(m=m, n_v=n_v, C1=C1, C2=C2)
    eps = calibration_epsilon(m, n_v, beta, alpha_min, alpha_under, C1, mode)
    poly = (math.log(m * n_v) ** 7 / (n_v * alpha_tilde)) ** (1.0 / 6.0)
    var = alpha_under * (1 - alpha_under)
    rate = eps if var == 0 else min(eps, eps**2 / var)
    raw = 1.0 - beta - C1 * (poly + math.exp(-C2 * n_v * rate))
    inputs = dict(m=m, n_v=n_v, beta=beta, alpha_min=alpha_min, alpha_under=alpha_under,
                  alpha_tilde=alpha_tilde, C1=C1, C2=C2, mode=mode)
    return BoundResult("calibration_confidence_bound", inputs, min(max(raw, 0.0), 1.0),
                       {"epsilon": eps, "raw": raw})


def linear_deviation_bound(epsilon, n, B, subg_norm, d, C=1.0):
    """2 exp(-eps^2 n / (C B^2 ||.||_psi2^2 log d)) for norm-bounded linear classes."""
    if d < 2:
        raise DomainError("d must be >= 2")
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    _positive(n=n, B=B, subg_norm=subg_norm, C=C)
    return 2.0 * math.exp(-(epsilon**2) * n / (C * B**2 * subg_norm**2 * math.log(d)))
