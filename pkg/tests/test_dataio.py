import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from picalib.dataio import (
    Family, LabeledDataset, Scaler, SplitSpec, SyntheticSpec, gen_synthetic, load_csv, split,
    standardize, uni_median, write_csv,
)
from picalib.errors import EmptyFile, FractionSum, MissingColumn, ParseError, ZeroVariance


@pytest.mark.parametrize("family", list(Family))
def test_shapes(family):
    data = gen_synthetic(SyntheticSpec(family, 1, 2), 5)
    assert data.features.shape == (5, family.dimension)
    assert data.targets.shape == (5,)


def test_multi1_shape():
    data = gen_synthetic(SyntheticSpec(Family.MULTI1), 5)
    assert data.features.shape == (5, 10)
    assert len(data.targets) == 5


def test_deterministic():
    spec = SyntheticSpec(Family.MULTI2, 3, 4)
    a, b = gen_synthetic(spec, 50), gen_synthetic(spec, 50)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.targets, b.targets)


def test_noise_seed_changes_sample():
    a = gen_synthetic(SyntheticSpec(Family.MULTI1, 0, 1), 20)
    b = gen_synthetic(SyntheticSpec(Family.MULTI1, 0, 2), 20)
    assert not np.array_equal(a.targets, b.targets)


def test_zero_coefficients_mean():
    spec = SyntheticSpec(Family.MULTI1, noise_seed=11, coefficients=(0.0,) * 10)
    y = gen_synthetic(spec, 100_000).targets
    se = y.std(ddof=1) / np.sqrt(y.size)
    assert abs(y.mean()) < 3 * se


def test_coefficients_fixed_by_seed():
    a = SyntheticSpec(Family.MULTI1, 5, 0).coefficient_vector()
    b = SyntheticSpec(Family.MULTI1, 5, 99).coefficient_vector()
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= 2)


def test_coefficient_override_length():
    with pytest.raises(ValueError):
        SyntheticSpec(Family.MULTI1, coefficients=(1.0, 2.0))


@pytest.mark.parametrize("family", [Family.UNI1, Family.UNI2, Family.UNI3])
def test_uni_design_range(family):
    x = gen_synthetic(SyntheticSpec(family, noise_seed=8), 5000).features[:, 0]
    assert x.min() >= -3 and x.max() <= 3


def test_uni_median_splits_mass():
    data = gen_synthetic(SyntheticSpec(Family.UNI3, noise_seed=3), 40_000)
    x, y = data.features[:, 0], data.targets
    frac = np.mean(y <= uni_median(Family.UNI3, x))
    assert abs(frac - 0.5) < 0.01


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv(tmp_path):
    p = _write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
    data = load_csv(p, "y")
    assert data.features.shape == (3, 2)
    assert data.feature_names == ("a", "b")
    assert np.array_equal(data.targets, [3, 6, 9])


def test_load_csv_target_in_middle(tmp_path):
    data = load_csv(_write(tmp_path, "a,y,b\n1,2,3\n"), "y")
    assert data.feature_names == ("a", "b")
    assert np.array_equal(data.features, [[1, 3]])


def test_load_csv_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), "y")


def test_load_csv_parse_error(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path, "a,y\n1,2\nabc,3\n"), "y")
    assert info.value.row == 2 and info.value.col == "a"


@pytest.mark.parametrize("cell", ["nan", "inf"])
def test_load_csv_rejects_nonfinite(tmp_path, cell):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, f"a,y\n{cell},1\n"), "y")


@pytest.mark.parametrize("text", ["", "a,y\n"])
def test_load_csv_empty(tmp_path, text):
    with pytest.raises(EmptyFile):
        load_csv(_write(tmp_path, text), "y")


def test_csv_round_trip(tmp_path):
    data = gen_synthetic(SyntheticSpec(Family.MULTI3, 1, 1), 30)
    p = tmp_path / "r.csv"
    write_csv(data, p)
    back = load_csv(p, "y")
    assert np.array_equal(back.features, data.features)
    assert np.array_equal(back.targets, data.targets)


def _toy(n):
    return LabeledDataset(np.arange(n, dtype=float).reshape(-1, 1), np.arange(n, dtype=float))


@pytest.mark.parametrize("fractions", [(0.6, 0.2, 0.2), (0.55, 0.25, 0.20)])
def test_split_sizes(fractions):
    parts = split(_toy(10), SplitSpec(*fractions, shuffle_seed=1))
    assert [p.n for p in parts] == [6, 2, 2]


def test_split_deterministic():
    a = split(_toy(50), SplitSpec(shuffle_seed=4))
    b = split(_toy(50), SplitSpec(shuffle_seed=4))
    for p, q in zip(a, b):
        assert np.array_equal(p.targets, q.targets)


def test_split_empty_partition():
    with pytest.raises(ValueError):
        split(_toy(3), SplitSpec(0.5, 0.25, 0.25))


@given(n=st.integers(10, 200), seed=st.integers(0, 2**31), tr=st.floats(0.1, 0.8))
@settings(max_examples=60, deadline=None)
def test_split_is_partition(n, seed, tr):
    rest = 1.0 - tr
    parts = split(_toy(n), SplitSpec(tr, rest / 2, rest / 2, seed))
    ids = np.concatenate([p.targets for p in parts])
    assert sorted(ids.tolist()) == list(range(n))


@pytest.mark.parametrize("fractions", [(0.5, 0.2, 0.2), (0.0, 0.5, 0.5), (1.2, -0.1, -0.1)])
def test_split_bad_fractions(fractions):
    with pytest.raises(FractionSum):
        SplitSpec(*fractions)


def test_standardize_small():
    train = LabeledDataset(np.array([[1.0], [2.0], [3.0]]), np.array([1.0, 2.0, 3.0]))
    (out,), _ = standardize(train)
    assert np.allclose(out.features[:, 0], [-1, 0, 1])
    assert np.allclose(out.targets, [-1, 0, 1])


def test_standardize_moments_and_inverse():
    train = gen_synthetic(SyntheticSpec(Family.MULTI1, 0, 1), 200)
    test = gen_synthetic(SyntheticSpec(Family.MULTI1, 0, 2), 50)
    (tr, te), scaler = standardize(train, test)
    assert np.allclose(tr.features.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(tr.features.std(axis=0, ddof=1), 1, atol=1e-9)
    assert abs(tr.targets.std(ddof=1) - 1) < 1e-9
    back = scaler.inverse(te)
    assert np.allclose(back.features, test.features, atol=1e-9)
    assert np.allclose(back.targets, test.targets, atol=1e-9)
    again = Scaler.from_dict(scaler.to_dict())
    assert np.array_equal(again.transform(test).targets, te.targets)


def test_zero_variance():
    train = LabeledDataset(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), np.array([1.0, 2.0, 4.0]))
    with pytest.raises(ZeroVariance) as info:
        standardize(train)
    assert info.value.column == "x2"


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.nan]]), np.array([1.0]))
