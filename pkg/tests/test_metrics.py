import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from picalib.dataio import LabeledDataset
from picalib.metrics import TrialResult, coverage_rate, ep, evaluate, interval_width, mep, miw
from picalib.models import FunctionIntervalModel


def _data(x, y):
    return LabeledDataset(np.asarray(x, float).reshape(-1, 1), np.asarray(y, float))


def _affine(a, b, w):
    return FunctionIntervalModel(lambda X: a * X[:, 0] + b - w, lambda X: a * X[:, 0] + b + w)


def test_coverage_examples():
    d = _data([0, 1, 2], [0, 1, 2])
    assert coverage_rate(_affine(0, 0, 100), d) == 1.0
    assert coverage_rate(_affine(0, 50, 1), d) == 0.0


def test_width_examples():
    d = _data([0, 1], [0, 0])
    assert interval_width(_affine(0, 0, 1), d) == 2.0
    m = FunctionIntervalModel(lambda X: 0.0, lambda X: 1 + 2 * X[:, 0])
    assert interval_width(m, d) == 2.0


def test_ep_examples():
    assert ep([0.96, 0.94, 0.97], 0.95) == pytest.approx(2 / 3)
    assert ep([0.95], 0.95) == 1.0
    assert ep([0.1, 0.2], 0.95) == 0.0


def test_mep_examples():
    cr = np.array([[0.96], [0.9], [0.99]])
    assert mep(cr, [0.95]) == ep(cr[:, 0], 0.95)
    assert mep([[0.96, 0.5], [0.97, 0.99]], [0.95, 0.9]) == 0.5


def test_miw_examples():
    assert miw(np.full((3, 2), 2.0)) == 2.0
    assert miw([[1, 3], [2, 2]]) == 2.0


def test_trial_result_validation():
    with pytest.raises(ValueError):
        TrialResult(1.2, 1.0)
    with pytest.raises(ValueError):
        TrialResult(0.5, float("inf"))


def brute(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    x, y = rng.normal(size=n), rng.normal(size=n)
    a, b, w = rng.normal(), rng.normal(), abs(rng.normal())
    model = _affine(a, b, w)
    hits = 0
    total = 0.0
    for xi, yi in zip(x, y):
        lo, hi = a * xi + b - w, a * xi + b + w
        hits += lo <= yi <= hi
        total += hi - lo
    return model, _data(x, y), hits / n, total / n


def _brute_tables(rng):
    N, K = int(rng.integers(1, 12)), int(rng.integers(1, 5))
    # coarse grid so that exact ties with the levels occur
    cr = rng.integers(80, 101, size=(N, K)) / 100
    pls = rng.integers(85, 100, size=K) / 100
    widths = rng.uniform(0, 5, size=(N, K))
    return cr, pls, widths


@pytest.mark.parametrize("seed", range(100))
def test_against_brute_force(seed):
    model, d, cr_ref, iw_ref = brute(seed)
    res = evaluate(model, d)
    assert abs(res.coverage - cr_ref) <= 1e-12
    assert abs(res.width - iw_ref) <= 1e-12
    rng = np.random.default_rng(10_000 + seed)
    cr, pls, widths = _brute_tables(rng)
    N, K = cr.shape
    for k in range(K):
        assert abs(ep(cr[:, k], pls[k]) - sum(c >= pls[k] for c in cr[:, k]) / N) <= 1e-12
    rows = sum(all(cr[i, k] >= pls[k] for k in range(K)) for i in range(N))
    assert abs(mep(cr, pls) - rows / N) <= 1e-12
    assert abs(miw(widths) - sum(sum(r) for r in widths) / (N * K)) <= 1e-12


tables = st.integers(0, 2**31).map(lambda s: _brute_tables(np.random.default_rng(s)))


@given(t=tables, bump=st.floats(0, 0.1))
@settings(max_examples=100)
def test_monotone_in_levels(t, bump):
    cr, pls, _ = t
    assert ep(cr[:, 0], pls[0] + bump) <= ep(cr[:, 0], pls[0])
    assert mep(cr, pls + bump) <= mep(cr, pls)


@given(t=tables)
@settings(max_examples=100)
def test_mep_below_each_ep(t):
    cr, pls, _ = t
    assert mep(cr, pls) <= min(ep(cr[:, k], pls[k]) for k in range(len(pls)))


@given(t=tables, seed=st.integers(0, 1000))
@settings(max_examples=100)
def test_permutation_invariant(t, seed):
    cr, pls, widths = t
    p = np.random.default_rng(seed).permutation(cr.shape[0])
    assert mep(cr[p], pls) == mep(cr, pls)
    assert ep(cr[p, 0], pls[0]) == ep(cr[:, 0], pls[0])
    assert miw(widths[p]) == pytest.approx(miw(widths), rel=1e-15)
