"""Candidate selection under Gaussian-supremum coverage margins, plus baselines."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import binom

from .dataio import LabeledDataset
from .errors import AllDegenerate, NoValidAlphaPrime
from .models import IntervalModel, TrainConfig, _as_2d, forward, train_single
from .seeding import derive_seed

REPORT_SCHEMA = "calibration-report/1"
MC_CHUNK = 100_000


class Mode(str, enum.Enum):
    NORMALIZED = "normalized"
    UNNORMALIZED = "unnormalized"
    PAV = "pav"


class WidthSource(str, enum.Enum):
    POOLED = "pooled"
    CALIBRATION = "calibration"


def coverage_matrix(pool, val: LabeledDataset) -> np.ndarray:
    """(n_v, m) int8 matrix; entry (i, j) is 1 iff L_j(x_i) <= y_i <= U_j(x_i)."""
    if val.n < 2:
        raise ValueError("validation set needs n_v >= 2")
    cols = []
    for model in pool:
        lo, hi = model.predict(val.features)
        cols.append((lo <= val.targets) & (val.targets <= hi))
    return np.column_stack(cols).astype(np.int8)


def empirical_coverage(cm) -> np.ndarray:
    return np.asarray(cm, dtype=float).mean(axis=0)


def sample_covariance(cm) -> np.ndarray:
    """Covariance of coverage indicators with 1/n_v normalization."""
    I = np.asarray(cm, dtype=float)
    if I.ndim != 2 or I.shape[0] < 2:
        raise ValueError("coverage matrix needs at least 2 rows")
    C = I - I.mean(axis=0)
    S = C.T @ C / I.shape[0]
    return (S + S.T) / 2


def psd_factor(cov) -> np.ndarray:
    """Symmetric square root of ``cov`` after clipping negative eigenvalues to 0."""
    w, V = np.linalg.eigh(np.asarray(cov, dtype=float))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class QuantileEstimate:
    q: float
    mode: Mode
    beta: float
    mc_draws: int
    mc_seed: int
    std_error: float


def _nearest_rank(p, n):
    # small slack keeps e.g. 0.9 * 2_000_000 from rounding up a rank
    return min(max(math.ceil(p * n - 1e-9), 1), n)


def gaussian_sup_quantile(cov, beta, mode=Mode.NORMALIZED, mc_draws=200_000, mc_seed=0) -> QuantileEstimate:
    """Monte Carlo (1 - beta)-quantile of max_j Z_j (or max_j Z_j / sigma_j), Z ~ N(0, cov).

    Draws come in fixed-size chunks, each seeded from ``(mc_seed, chunk)``, so
    the estimate does not depend on how the work is scheduled.
    """
    mode = Mode(mode)
    if mode is Mode.PAV:
        raise ValueError("PAV uses no Gaussian quantile")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    active = sigma > 0
    if mode is Mode.NORMALIZED and not active.any():
        raise AllDegenerate("every candidate has zero coverage variance")
    A = psd_factor(cov)
    m = cov.shape[0]
    stats = np.empty(mc_draws)
    for c, start in enumerate(range(0, mc_draws, MC_CHUNK)):
        k = min(MC_CHUNK, mc_draws - start)
        rng = np.random.default_rng(derive_seed(mc_seed, c))
        Z = rng.standard_normal((k, m)) @ A
        if mode is Mode.NORMALIZED:
            stats[start:start + k] = (Z[:, active] / sigma[active]).max(axis=1)
        else:
            stats[start:start + k] = Z.max(axis=1)
    p = 1.0 - beta
    r = _nearest_rank(p, mc_draws)
    s = math.sqrt(mc_draws * p * (1 - p))
    lo_r = min(max(int(math.floor(r - s)), 1), mc_draws)
    hi_r = min(max(int(math.ceil(r + s)), 1), mc_draws)
    part = np.partition(stats, sorted({r - 1, lo_r - 1, hi_r - 1}))
    q = float(part[r - 1])
    se = float(part[hi_r - 1] - part[lo_r - 1]) / 2
    return QuantileEstimate(q, mode, float(beta), int(mc_draws), int(mc_seed), se)


def model_margins(mode, cov, n_v, q=None) -> np.ndarray:
    """Per-model coverage margin: q*sigma_j/sqrt(n_v), q/sqrt(n_v), or 0 for PAV.

    In normalized mode a model with sigma_j = 0 gets margin 0.
    """
    mode = Mode(mode)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    m = cov.shape[0]
    if mode is Mode.PAV:
        return np.zeros(m)
    if q is None:
        raise ValueError(f"{mode.value} margins need a quantile")
    q = q.q if isinstance(q, QuantileEstimate) else float(q)
    if mode is Mode.UNNORMALIZED:
        return np.full(m, q / math.sqrt(n_v))
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return np.where(sigma > 0, q * sigma / math.sqrt(n_v), 0.0)


@dataclass(frozen=True)
class LevelSelection:
    target: float
    selected_index: int | None
    margin: float | None
    empirical_coverage: float | None
    pooled_width: float | None
    infeasible: bool
    fallback_index: int | None

    @property
    def chosen_index(self):
        """Selected model, or the fallback when the level is infeasible."""
        return self.selected_index if self.selected_index is not None else self.fallback_index

    def to_dict(self):
        return {
            "target": self.target,
            "selected_index": self.selected_index,
            "margin": self.margin,
            "empirical_coverage": self.empirical_coverage,
            "pooled_width": self.pooled_width,
            "infeasible": self.infeasible,
            "fallback_index": self.fallback_index,
        }


@dataclass(frozen=True)
class CalibrationReport:
    mode: Mode
    beta: float | None
    mc_draws: int | None
    mc_seed: int | None
    levels: tuple[LevelSelection, ...]
    quantile: float | None = None
    quantile_std_error: float | None = None
    degenerate_models: tuple[int, ...] = ()
    width_source: WidthSource = WidthSource.POOLED

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "mode": self.mode.value,
            "beta": self.beta,
            "mc_draws": self.mc_draws,
            "mc_seed": self.mc_seed,
            "quantile": self.quantile,
            "quantile_std_error": self.quantile_std_error,
            "degenerate_models": list(self.degenerate_models),
            "width_source": self.width_source.value,
            "levels": [lv.to_dict() for lv in self.levels],
        }

    @classmethod
    def from_dict(cls, d) -> CalibrationReport:
        return cls(
            Mode(d["mode"]), d["beta"], d["mc_draws"], d["mc_seed"],
            tuple(LevelSelection(**lv) for lv in d["levels"]),
            d.get("quantile"), d.get("quantile_std_error"),
            tuple(d.get("degenerate_models", ())), WidthSource(d.get("width_source", "pooled")),
        )

    def selection(self, target) -> LevelSelection:
        for lv in self.levels:
            if math.isclose(lv.target, target, rel_tol=0, abs_tol=1e-12):
                return lv
        raise KeyError(f"level {target} not in report")


def select_intervals(cr_hat, margins, widths, levels, fallback=True) -> tuple[LevelSelection, ...]:
    """Per level, the narrowest model with cr_hat_j >= level + margin_j (ties -> lowest index)."""
    cr_hat = np.asarray(cr_hat, dtype=float)
    margins = np.broadcast_to(np.asarray(margins, dtype=float), cr_hat.shape)
    widths = np.asarray(widths, dtype=float)
    if widths.shape != cr_hat.shape:
        raise ValueError("one width per candidate required")
    out = []
    for level in levels:
        level = float(level)
        if not 0 < level < 1:
            raise ValueError(f"target level {level} outside (0, 1)")
        feasible = np.flatnonzero(cr_hat >= level + margins)
        if feasible.size:
            # argmin returns the first minimum, which is the lowest feasible index
            j = int(feasible[np.argmin(widths[feasible])])
            out.append(LevelSelection(level, j, float(margins[j]), float(cr_hat[j]), float(widths[j]), False, None))
        else:
            fb = int(np.argmax(cr_hat)) if fallback else None
            out.append(LevelSelection(
                level, None,
                None if fb is None else float(margins[fb]),
                None if fb is None else float(cr_hat[fb]),
                None if fb is None else float(widths[fb]),
                True, fb,
            ))
    return tuple(out)


def pooled_widths(pool, train: LabeledDataset | None, val: LabeledDataset) -> np.ndarray:
    """Mean width of each model over train and val rows together (val only if train is None)."""
    X = val.features if train is None else np.vstack([train.features, val.features])
    return np.array([float(np.mean(model.width(X))) for model in pool])


def calibrate(
    pool,
    train: LabeledDataset | None,
    val: LabeledDataset,
    levels,
    beta=0.1,
    mode=Mode.NORMALIZED,
    mc_draws=200_000,
    mc_seed=0,
    width_source=WidthSource.POOLED,
    fallback=True,
) -> CalibrationReport:
    mode = Mode(mode)
    width_source = WidthSource(width_source)
    cm = coverage_matrix(pool, val)
    cr = empirical_coverage(cm)
    cov = sample_covariance(cm)
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    degenerate = tuple(int(j) for j in np.flatnonzero(sigma == 0))
    qe = None
    if mode is Mode.NORMALIZED and len(degenerate) == len(pool):
        # every margin is 0 by convention, so no quantile is needed
        margins = np.zeros(len(pool))
    elif mode is Mode.PAV:
        margins = np.zeros(len(pool))
    else:
        qe = gaussian_sup_quantile(cov, beta, mode, mc_draws, mc_seed)
        margins = model_margins(mode, cov, val.n, qe)
    widths = pooled_widths(pool, train if width_source is WidthSource.POOLED else None, val)
    sel = select_intervals(cr, margins, widths, levels, fallback)
    uses_mc = mode is not Mode.PAV
    return CalibrationReport(
        mode,
        float(beta) if uses_mc else None,
        int(mc_draws) if uses_mc else None,
        int(mc_seed) if uses_mc else None,
        sel,
        None if qe is None else qe.q,
        None if qe is None else qe.std_error,
        degenerate if mode is Mode.NORMALIZED else (),
        width_source,
    )


# ---------------------------------------------------------------------------
# split conformal with binomial correction


def corrected_alpha(n_v, alpha, beta, require_finite=False):
    """Largest alpha' = k/(10 n_v) with binom_cdf(floor(alpha'(n_v+1) - 1); n_v, alpha) <= beta.

    Returns ``(alpha_prime, rank)`` where ``rank = ceil((1 - alpha')(n_v + 1))``.
    A rank above ``n_v`` means only an infinite interval meets the correction;
    with ``require_finite`` that raises NoValidAlphaPrime instead. The search
    uses integer arithmetic on the grid so floors and ceilings are exact.
    """
    if n_v < 1:
        raise ValueError("n_v must be >= 1")
    denom = 10 * n_v
    best = 0  # alpha' = 0 always satisfies the condition (cdf at -1 is 0)
    # the cdf is non-decreasing in k, so scan until the condition first fails
    for k in range(1, denom + 1):
        idx = (k * (n_v + 1)) // denom - 1
        if idx >= 0 and binom.cdf(idx, n_v, alpha) > beta:
            break
        best = k
    rank = -((-(denom - best) * (n_v + 1)) // denom)
    if require_finite and rank > n_v:
        raise NoValidAlphaPrime(f"no alpha' on the grid gives a finite interval for n_v={n_v}")
    return best / denom, rank


class PointIntervalModel(IntervalModel):
    """f(x) -/+ radius around a one-output network prediction."""

    def __init__(self, params, radius, alpha_prime=None, rank=None):
        self.params = params
        self.radius = float(radius)
        self.alpha_prime = alpha_prime
        self.rank = rank

    @property
    def infinite(self):
        return math.isinf(self.radius)

    def raw_bounds(self, X):
        f = forward(self.params, _as_2d(X))[:, 0]
        return f - self.radius, f + self.radius


def conformal_radius(residuals, rank):
    """``rank``-th smallest residual (1-based); infinite when rank exceeds n."""
    r = np.sort(np.asarray(residuals, dtype=float))
    return math.inf if rank > r.size else float(r[rank - 1])


def split_conformal(train: LabeledDataset, cal: LabeledDataset, alpha, beta, config: TrainConfig,
                    params=None) -> PointIntervalModel:
    """Point network on ``train``, absolute-residual radius from ``cal`` at the corrected level.

    Pass ``params`` to reuse an already trained point predictor.
    """
    if cal.n < 2:
        raise ValueError("calibration set needs n_v >= 2")
    if params is None:
        params = train_point_model(train, config)
    alpha_prime, rank = corrected_alpha(cal.n, alpha, beta)
    res = np.abs(forward(params, cal.features)[:, 0] - cal.targets)
    return PointIntervalModel(params, conformal_radius(res, rank), alpha_prime, rank)


def train_point_model(train: LabeledDataset, config: TrainConfig):
    return train_single(train, replace(config, lam=0.0), kind="squared")
