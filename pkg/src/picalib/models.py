"""Interval models and two-output ReLU networks trained with the width/miscoverage loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import LabeledDataset, Scaler
from .errors import NonFiniteLoss
from .seeding import derive_seed

POOL_SCHEMA = "interval-pool/1"

# ---------------------------------------------------------------------------
# interval model abstraction


class IntervalModel:
    """A pair of functions (L, U). ``predict`` always returns lower <= upper."""

    def raw_bounds(self, X):
        raise NotImplementedError

    def predict(self, X):
        X = _as_2d(X)
        a, b = self.raw_bounds(X)
        return np.minimum(a, b), np.maximum(a, b)

    def width(self, X):
        lo, hi = self.predict(X)
        return hi - lo


class FunctionIntervalModel(IntervalModel):
    """Wraps two vectorized callables mapping an (n, d) array to n bounds."""

    def __init__(self, lower, upper, name=None):
        self.lower = lower
        self.upper = upper
        self.name = name

    def raw_bounds(self, X):
        n = X.shape[0]
        lo = np.broadcast_to(np.asarray(self.lower(X), dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(self.upper(X), dtype=float), (n,))
        return lo, hi


def _as_2d(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return X


# ---------------------------------------------------------------------------
# multilayer perceptron


@dataclass
class MlpParams:
    """Weights map row-vector activations: ``h_next = relu(h @ W + b)``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {i}: weight {W.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i}: shapes do not chain")

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def arrays(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> MlpParams:
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, theta) -> MlpParams:
        theta = np.asarray(theta, dtype=float)
        Ws, bs, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[k:k + W.size].reshape(W.shape))
            k += W.size
            bs.append(theta[k:k + b.size].copy())
            k += b.size
        return MlpParams(Ws, bs)

    def to_dict(self):
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d) -> MlpParams:
        sizes = d["layer_sizes"]
        Ws = [np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1]) for i, w in enumerate(d["weights"])]
        bs = [np.asarray(b, dtype=float) for b in d["biases"]]
        return cls(Ws, bs)


def init_params(layer_sizes, rng) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    Ws, bs = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        r = math.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpParams(Ws, bs)


def forward(params: MlpParams, X, return_cache=False):
    h = _as_2d(X)
    cache = [h]
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        h = z if i == last else np.maximum(z, 0.0)
        cache.append(z)
    return (h, cache) if return_cache else h


def _backward(params: MlpParams, cache, d_out):
    """Backpropagate ``d_out`` (gradient wrt the linear output) through the cached pass."""
    n_layers = len(params.weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    delta = d_out
    for i in range(n_layers - 1, -1, -1):
        z_prev = cache[i]
        a_prev = z_prev if i == 0 else np.maximum(z_prev, 0.0)
        gW[i] = a_prev.T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            # ReLU subgradient 0 at the kink
            delta = (delta @ params.weights[i].T) * (z_prev > 0)
    return MlpParams(gW, gb)


# ---------------------------------------------------------------------------
# losses


def pi_loss(lower, upper, y, lam):
    """(U-L)^2 + lam * (max(L-y, 0) + max(y-U, 0))^2, elementwise on raw outputs."""
    lower, upper, y = np.asarray(lower, float), np.asarray(upper, float), np.asarray(y, float)
    miss = np.maximum(lower - y, 0.0) + np.maximum(y - upper, 0.0)
    out = (upper - lower) ** 2 + lam * miss**2
    return float(out) if out.ndim == 0 else out


def loss_and_grad(params: MlpParams, X, y, lam=0.0, kind="interval"):
    """Batch-mean loss and its gradient.

    ``kind="interval"`` uses the two-output interval loss, ``kind="squared"``
    the one-output squared error used for conformal point predictors.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    out, cache = forward(params, X, return_cache=True)
    n = y.shape[0]
    if kind == "interval":
        lo, hi = out[:, 0], out[:, 1]
        below = lo > y
        above = y > hi
        miss = np.where(below, lo - y, 0.0) + np.where(above, y - hi, 0.0)
        width = hi - lo
        loss = float(np.mean(width**2 + lam * miss**2))
        d = np.empty_like(out)
        d[:, 0] = -2 * width + 2 * lam * miss * below
        d[:, 1] = 2 * width - 2 * lam * miss * above
    elif kind == "squared":
        r = out[:, 0] - y
        loss = float(np.mean(r**2))
        d = (2 * r).reshape(-1, 1)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    return loss, _backward(params, cache, d / n)


def pi_loss_gradient(params: MlpParams, X, y, lam):
    return loss_and_grad(params, X, y, lam, "interval")[1]


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 10.0
    learning_rate: float = 5e-3
    epochs: int = 100
    batch_size: int = 64
    ensemble_size: int = 1
    hidden_sizes: tuple[int, ...] = (50, 50)
    init_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.ensemble_size < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("ensemble_size and batch_size must be >= 1, epochs >= 0")
        if not self.learning_rate > 0 or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("learning_rate must be > 0 and hidden sizes >= 1")


class Adam:
    def __init__(self, params: MlpParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: MlpParams, grads: MlpParams):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train_single(train: LabeledDataset, config: TrainConfig, kind="interval") -> MlpParams:
    n_out = 2 if kind == "interval" else 1
    rng = np.random.default_rng(config.init_seed)
    params = init_params([train.d, *config.hidden_sizes, n_out], rng)
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    X, y = train.features, train.targets
    n, bs = train.n, config.batch_size
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = loss_and_grad(params, X[idx], y[idx], config.lam, kind)
            if not math.isfinite(loss):
                raise NonFiniteLoss("training loss became non-finite; lower the learning rate", config.lam)
            opt.step(params, grads)
    return params


def mean_loss(params: MlpParams, data: LabeledDataset, lam, kind="interval"):
    return loss_and_grad(params, data.features, data.targets, lam, kind)[0]


# ---------------------------------------------------------------------------
# ensembles and pools


def combine_ensemble(lowers, uppers):
    """Combine member outputs of shape (e, n): mean -/+ 1.96 * sum of squared deviations / (e-1)."""
    lowers = np.atleast_2d(np.asarray(lowers, dtype=float))
    uppers = np.atleast_2d(np.asarray(uppers, dtype=float))
    e = lowers.shape[0]
    lo_bar, hi_bar = lowers.mean(axis=0), uppers.mean(axis=0)
    if e > 1:
        s_lo = ((lowers - lo_bar) ** 2).sum(axis=0) / (e - 1)
        s_hi = ((uppers - hi_bar) ** 2).sum(axis=0) / (e - 1)
    else:
        s_lo = s_hi = 0.0
    return lo_bar - 1.96 * s_lo, hi_bar + 1.96 * s_hi


def ensemble_predict(members, x):
    """Ensemble (lower, upper) for a feature vector or an (n, d) matrix."""
    X = _as_2d(x)
    outs = [forward(p, X) for p in members]
    lo, hi = combine_ensemble([o[:, 0] for o in outs], [o[:, 1] for o in outs])
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    if np.ndim(x) == 1:
        return float(lo[0]), float(hi[0])
    return lo, hi


@dataclass
class EnsembleIntervalModel(IntervalModel):
    members: list[MlpParams]
    lam: float = 0.0
    seeds: tuple[int, ...] = ()

    @property
    def ensemble_size(self):
        return len(self.members)

    def raw_bounds(self, X):
        outs = [forward(p, X) for p in self.members]
        return combine_ensemble([o[:, 0] for o in outs], [o[:, 1] for o in outs])

    def to_dict(self):
        return {"lambda": self.lam, "seeds": list(self.seeds), "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, d):
        return cls([MlpParams.from_dict(m) for m in d["members"]], float(d["lambda"]), tuple(d["seeds"]))


@dataclass
class CandidatePool:
    """Ordered candidate interval models; position in ``models`` is the model index."""

    models: list[IntervalModel]
    scaler: Scaler | None = None
    config: TrainConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.models:
            raise ValueError("a candidate pool needs at least one model")

    def __len__(self):
        return len(self.models)

    def __getitem__(self, j):
        return self.models[j]

    def __iter__(self):
        return iter(self.models)

    def to_dict(self):
        for m in self.models:
            if not isinstance(m, EnsembleIntervalModel):
                raise TypeError("only network ensembles can be serialized")
        return {
            "schema": POOL_SCHEMA,
            "models": [m.to_dict() for m in self.models],
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "train_config": None if self.config is None else _config_dict(self.config),
        }

    @classmethod
    def from_dict(cls, d) -> CandidatePool:
        if d.get("schema") != POOL_SCHEMA:
            raise ValueError(f"unsupported pool schema {d.get('schema')!r}")
        scaler = None if d.get("scaler") is None else Scaler.from_dict(d["scaler"])
        cfg = d.get("train_config")
        cfg = None if cfg is None else TrainConfig(**cfg)
        return cls([EnsembleIntervalModel.from_dict(m) for m in d["models"]], scaler, cfg)


def _config_dict(cfg: TrainConfig):
    out = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    out["hidden_sizes"] = list(cfg.hidden_sizes)
    return out


def member_seed(init_seed, lam_index, member_index):
    return derive_seed(init_seed, lam_index, member_index)


def train_ensemble(train: LabeledDataset, config: TrainConfig, lam_index=0) -> EnsembleIntervalModel:
    seeds = tuple(member_seed(config.init_seed, lam_index, k) for k in range(config.ensemble_size))
    members = [train_single(train, replace(config, init_seed=s)) for s in seeds]
    return EnsembleIntervalModel(members, config.lam, seeds)


def train_pool(train: LabeledDataset, lambda_grid, base_config: TrainConfig, scaler=None) -> CandidatePool:
    grid = list(lambda_grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    models = []
    for j, lam in enumerate(grid):
        try:
            models.append(train_ensemble(train, replace(base_config, lam=float(lam)), j))
        except NonFiniteLoss as exc:
            raise NonFiniteLoss("training diverged", lam) from exc
    return CandidatePool(models, scaler, base_config)


def log_lambda_grid(low=1.0, high=3000.0, count=15):
    return np.geomspace(low, high, count).tolist()
