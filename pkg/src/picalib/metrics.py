"""Coverage and width metrics for single and simultaneous prediction intervals."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrialResult:
    coverage: float
    width: float

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")
        if not np.isfinite(self.width):
            raise ValueError("width must be finite")


def coverage_rate(model, test):
    lo, hi = model.predict(test.features)
    y = test.targets
    return float(np.mean((lo <= y) & (y <= hi)))


def interval_width(model, test):
    lo, hi = model.predict(test.features)
    return float(np.mean(hi - lo))


def evaluate(model, test) -> TrialResult:
    return TrialResult(coverage_rate(model, test), interval_width(model, test))


def ep(crs, pl):
    """Fraction of repetitions whose coverage is at least ``pl``."""
    crs = np.asarray(crs, dtype=float)
    if crs.size == 0:
        raise ValueError("ep needs at least one repetition")
    return float(np.mean(crs >= pl))


def mep(cr_table, pls):
    """Fraction of repetitions (rows) where every level k meets ``pls[k]``."""
    cr = np.atleast_2d(np.asarray(cr_table, dtype=float))
    pls = np.asarray(pls, dtype=float)
    if cr.shape[1] != pls.shape[0]:
        raise ValueError(f"table has {cr.shape[1]} levels but {pls.shape[0]} targets")
    return float(np.mean(np.all(cr >= pls, axis=1)))


def miw(width_table):
    """Grand mean of per-trial mean widths; each (trial, level) cell has equal weight."""
    return float(np.mean(np.asarray(width_table, dtype=float)))
