"""Datasets: synthetic generators, CSV loading, splitting and standardization."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyFile, FractionSum, MissingColumn, ParseError, ZeroVariance


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or y.shape[0] < 1:
            raise ValueError(f"features {X.shape} and targets {y.shape} do not describe n >= 1 rows")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match number of columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.targets.shape[0]

    @property
    def n(self):
        return self.targets.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def take(self, idx) -> LabeledDataset:
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.features[idx], self.targets[idx], self.feature_names)


class Family(str, enum.Enum):
    MULTI1 = "multi1"
    MULTI2 = "multi2"
    MULTI3 = "multi3"
    UNI1 = "uni1"
    UNI2 = "uni2"
    UNI3 = "uni3"

    @property
    def dimension(self):
        return _DIMENSIONS[self]

    @property
    def is_multi(self):
        return self.value.startswith("multi")


_DIMENSIONS = {
    Family.MULTI1: 10,
    Family.MULTI2: 7,
    Family.MULTI3: 9,
    Family.UNI1: 1,
    Family.UNI2: 1,
    Family.UNI3: 1,
}

# (low, high) of the uniform noise for the univariate families
UNI_NOISE = {
    Family.UNI1: (-2.0, 2.0),
    Family.UNI2: (-2.0, 2.0),
    Family.UNI3: (-1.0, 2.0),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """A synthetic generative family with its seeds.

    ``coefficients`` overrides the random draw of ``c`` (Multi families only).
    """

    family: Family
    coefficient_seed: int = 0
    noise_seed: int = 0
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.coefficients is not None:
            c = tuple(float(v) for v in self.coefficients)
            if len(c) != self.family.dimension:
                raise ValueError(f"{self.family.value} needs {self.family.dimension} coefficients")
            object.__setattr__(self, "coefficients", c)

    @property
    def dimension(self):
        return self.family.dimension

    def coefficient_vector(self) -> np.ndarray:
        if self.coefficients is not None:
            return np.array(self.coefficients)
        rng = np.random.default_rng(self.coefficient_seed)
        return rng.uniform(-2.0, 2.0, size=self.family.dimension)


def uni_median(family, x):
    """Conditional median of Y given x for a univariate family."""
    family = Family(family)
    lo, hi = UNI_NOISE[family]
    x = np.asarray(x, dtype=float)
    return _uni_mean_part(family, x) + x * (lo + hi) / 2


def _uni_mean_part(family, x):
    if family is Family.UNI1:
        return np.sin(x)
    if family is Family.UNI2:
        return x**2 / 2 + np.cos(x)
    return x**2 + np.sin(x) / 8


def gen_synthetic(spec: SyntheticSpec, n: int) -> LabeledDataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    fam = spec.family
    rng = np.random.default_rng(spec.noise_seed)
    d = fam.dimension
    if fam.is_multi:
        c = spec.coefficient_vector()
        X = rng.standard_normal((n, d))
        eps = rng.standard_normal(n)
        s = X @ c
        noise = np.linalg.norm(X, axis=1) / 10 * eps
        if fam is Family.MULTI1:
            y = s / 2 + 10 * np.sin(s / 8)
        elif fam is Family.MULTI2:
            y = s**2 * np.sin(s) / 8
        else:
            y = 0.5 * s * np.cos(s) ** 2
        y = y + noise
    else:
        X = rng.uniform(-3.0, 3.0, size=(n, 1))
        lo, hi = UNI_NOISE[fam]
        eps = rng.uniform(lo, hi, size=n)
        x = X[:, 0]
        y = _uni_mean_part(fam, x) + x * eps
    return LabeledDataset(X, y)


def load_csv(path, target_column: str) -> LabeledDataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise MissingColumn(target_column)
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ParseError(i, None, ",".join(row))
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(i, header[j], cell) from None
            if not math.isfinite(v):
                raise ParseError(i, header[j], cell)
            values[i - 1, j] = v
    t = header.index(target_column)
    keep = [j for j in range(len(header)) if j != t]
    return LabeledDataset(values[:, keep], values[:, t], tuple(header[j] for j in keep))


def write_csv(data: LabeledDataset, path, target_name="y"):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*data.feature_names, target_name])
        for x, y in zip(data.features, data.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    shuffle_seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not (0.0 < f < 1.0) for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise FractionSum(f"fractions must lie in (0,1) and sum to 1, got {fr}")

    def sizes(self, n):
        # tiny slack so that e.g. 0.29 * 100 floors to 29
        n_val = math.floor(self.val_fraction * n + 1e-9)
        n_test = math.floor(self.test_fraction * n + 1e-9)
        return n - n_val - n_test, n_val, n_test


def split(data: LabeledDataset, spec: SplitSpec):
    n = data.n
    if n < 3:
        raise ValueError("split needs at least 3 rows")
    n_train, n_val, n_test = spec.sizes(n)
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"fractions leave an empty partition for n={n}: {(n_train, n_val, n_test)}")
    perm = np.random.default_rng(spec.shuffle_seed).permutation(n)
    return (
        data.take(perm[:n_train]),
        data.take(perm[n_train:n_train + n_val]),
        data.take(perm[n_train + n_val:]),
    )


@dataclass(frozen=True)
class Scaler:
    """Affine standardization fitted on a training set."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float
    feature_names: tuple[str, ...] = field(default=())

    @classmethod
    def fit(cls, train: LabeledDataset) -> Scaler:
        if train.n < 2:
            raise ValueError("standardize needs at least 2 training rows")
        mu = train.features.mean(axis=0)
        sd = train.features.std(axis=0, ddof=1)
        for name, s in zip(train.feature_names, sd):
            if not s > 0:
                raise ZeroVariance(name)
        ty = float(train.targets.std(ddof=1))
        if not ty > 0:
            raise ZeroVariance("<target>")
        return cls(mu, sd, float(train.targets.mean()), ty, train.feature_names)

    def transform(self, data: LabeledDataset) -> LabeledDataset:
        return LabeledDataset(
            (data.features - self.feature_mean) / self.feature_std,
            (data.targets - self.target_mean) / self.target_std,
            data.feature_names,
        )

    def transform_features(self, X):
        return (np.asarray(X, dtype=float) - self.feature_mean) / self.feature_std

    def inverse(self, data: LabeledDataset) -> LabeledDataset:
        return LabeledDataset(
            data.features * self.feature_std + self.feature_mean,
            data.targets * self.target_std + self.target_mean,
            data.feature_names,
        )

    def to_dict(self):
        return {
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d) -> Scaler:
        return cls(
            np.asarray(d["feature_mean"], dtype=float),
            np.asarray(d["feature_std"], dtype=float),
            float(d["target_mean"]),
            float(d["target_std"]),
            tuple(d.get("feature_names", ())),
        )


def standardize(train: LabeledDataset, *others: LabeledDataset):
    """Standardize ``train`` and apply its statistics to ``others``.

    Returns ``(datasets, scaler)`` with ``datasets[0]`` the standardized train.
    """
    scaler = Scaler.fit(train)
    return [scaler.transform(train), *(scaler.transform(o) for o in others)], scaler
