"""Repeated experiments: data -> candidate pool -> calibration per method -> test metrics."""

from __future__ import annotations

import csv
import enum
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import calib, metrics
from .dataio import Family, LabeledDataset, SplitSpec, SyntheticSpec, gen_synthetic, load_csv, split, standardize
from .errors import ConfigError, PicalibError
from .models import TrainConfig, train_pool
from .seeding import derive_seed

RESULT_SCHEMA = "result-table/1"


class Method(str, enum.Enum):
    NORMALIZED = "normalized"
    UNNORMALIZED = "unnormalized"
    PAV = "pav"
    SPLIT_CONFORMAL = "split_conformal"


@dataclass(frozen=True)
class SyntheticSource:
    family: Family = Family.MULTI1
    coefficient_seed: int = 0
    n_train: int = 800
    n_val: int = 350
    n_test: int = 3000

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if min(self.n_train, self.n_val, self.n_test) < 2:
            raise ConfigError("synthetic train/val/test sizes must each be >= 2")


@dataclass(frozen=True)
class CsvSource:
    path: str
    target: str = "y"
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2

    def split_spec(self, seed) -> SplitSpec:
        return SplitSpec(self.train_fraction, self.val_fraction, self.test_fraction, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    data: SyntheticSource | CsvSource = field(default_factory=SyntheticSource)
    lambda_grid: tuple[float, ...] = (300.0, 688.0, 1580.0, 3620.0, 8290.0, 19000.0, 43600.0, 100000.0)
    train: TrainConfig = field(default_factory=TrainConfig)
    levels: tuple[float, ...] = (0.95,)
    beta: float = 0.1
    methods: tuple[Method, ...] = (Method.NORMALIZED, Method.UNNORMALIZED, Method.PAV)
    repetitions: int = 1
    master_seed: int = 0
    mc_draws: int = 200_000
    width_source: calib.WidthSource = calib.WidthSource.POOLED
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        object.__setattr__(self, "width_source", calib.WidthSource(self.width_source))
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.levels or any(not 0 < v < 1 for v in self.levels):
            raise ConfigError("levels must be nonempty and inside (0, 1)")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly increasing")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)")
        if not self.lambda_grid:
            raise ConfigError("lambda grid is empty")

    def to_dict(self):
        d = {
            "data": {"source": "csv" if isinstance(self.data, CsvSource) else "synthetic", **asdict(self.data)},
            "train": asdict(self.train),
            "lambda_grid": list(self.lambda_grid),
            "levels": list(self.levels),
            "beta": self.beta,
            "methods": [m.value for m in self.methods],
            "repetitions": self.repetitions,
            "master_seed": self.master_seed,
            "mc_draws": self.mc_draws,
            "width_source": self.width_source.value,
            "standardize": self.standardize,
        }
        if isinstance(self.data, SyntheticSource):
            d["data"]["family"] = self.data.family.value
        d["train"]["hidden_sizes"] = list(self.train.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d) -> ExperimentConfig:
        data = dict(d["data"])
        source = data.pop("source", "synthetic")
        data = CsvSource(**data) if source == "csv" else SyntheticSource(**data)
        rest = {k: v for k, v in d.items() if k not in ("data", "train")}
        return cls(data=data, train=TrainConfig(**d["train"]), **rest)


@dataclass(frozen=True)
class TrialRecord:
    coverage: float
    width: float
    selected_index: int | None = None
    val_coverage: float | None = None
    infeasible: bool = False


@dataclass
class MethodResult:
    method: Method
    levels: tuple[float, ...]
    trials: list[list[TrialRecord]]  # repetitions x levels

    def coverage_table(self):
        return np.array([[t.coverage for t in row] for row in self.trials])

    def width_table(self):
        return np.array([[t.width for t in row] for row in self.trials])

    @property
    def ep(self):
        cov = self.coverage_table()
        return [metrics.ep(cov[:, k], pl) for k, pl in enumerate(self.levels)]

    @property
    def iw(self):
        return self.width_table().mean(axis=0).tolist()

    @property
    def mep(self):
        return metrics.mep(self.coverage_table(), self.levels)

    @property
    def miw(self):
        return metrics.miw(self.width_table())

    def to_dict(self):
        return {
            "levels": list(self.levels),
            "ep": self.ep,
            "iw": self.iw,
            "mep": self.mep,
            "miw": self.miw,
            "trials": [[asdict(t) for t in row] for row in self.trials],
        }

    @classmethod
    def from_dict(cls, method, d):
        trials = [[TrialRecord(**t) for t in row] for row in d["trials"]]
        return cls(Method(method), tuple(d["levels"]), trials)


@dataclass
class ResultTable:
    config: dict
    methods: dict[str, MethodResult]
    wall_seconds: float | None = field(default=None, compare=False)

    def to_dict(self, include_timing=False):
        d = {
            "schema": RESULT_SCHEMA,
            "config": self.config,
            "methods": {name: r.to_dict() for name, r in self.methods.items()},
        }
        if include_timing:
            d["wall_seconds"] = self.wall_seconds
        return d

    @classmethod
    def from_dict(cls, d) -> ResultTable:
        if d.get("schema") != RESULT_SCHEMA:
            raise ValueError(f"unsupported result schema {d.get('schema')!r}")
        methods = {k: MethodResult.from_dict(k, v) for k, v in d["methods"].items()}
        return cls(d["config"], methods, d.get("wall_seconds"))


class RepetitionError(PicalibError):
    def __init__(self, repetition, method, cause):
        self.repetition, self.method, self.cause = repetition, method, cause
        super().__init__(f"repetition {repetition}, {method}: {cause}")


def _load_repetition_data(config: ExperimentConfig, rep_seed):
    src = config.data
    if isinstance(src, SyntheticSource):
        spec = SyntheticSpec(src.family, src.coefficient_seed, derive_seed(rep_seed, 1))
        tv = gen_synthetic(spec, src.n_train + src.n_val)
        train = tv.take(np.arange(src.n_train))
        val = tv.take(np.arange(src.n_train, src.n_train + src.n_val))
        test = gen_synthetic(replace(spec, noise_seed=derive_seed(rep_seed, 5)), src.n_test)
    else:
        train, val, test = split(load_csv(src.path, src.target), src.split_spec(derive_seed(rep_seed, 2)))
    if config.standardize:
        (train, val, test), _ = standardize(train, val, test)
    return train, val, test


def run_repetition(config: ExperimentConfig, i):
    """All methods for repetition ``i``: {method: [TrialRecord per level]}."""
    rep_seed = derive_seed(config.master_seed, i)
    method = "data"
    try:
        train, val, test = _load_repetition_data(config, rep_seed)
        out = {}
        modes = [m for m in config.methods if m is not Method.SPLIT_CONFORMAL]
        if modes:
            method = "training"
            pool = train_pool(train, config.lambda_grid, replace(config.train, init_seed=derive_seed(rep_seed, 3)))
            for m in modes:
                method = m.value
                report = calib.calibrate(pool, train, val, config.levels, config.beta, m.value,
                                         config.mc_draws, derive_seed(rep_seed, 4), config.width_source)
                out[m] = [_record(pool[sel.chosen_index], test, sel) for sel in report.levels]
        if Method.SPLIT_CONFORMAL in config.methods:
            method = Method.SPLIT_CONFORMAL.value
            out[Method.SPLIT_CONFORMAL] = _conformal_records(config, train, val, test, derive_seed(rep_seed, 6))
        return out
    except PicalibError as exc:
        raise RepetitionError(i, method, exc) from exc


def _record(model, test, sel):
    res = metrics.evaluate(model, test)
    return TrialRecord(res.coverage, res.width, sel.chosen_index, sel.empirical_coverage, sel.infeasible)


def _conformal_records(config, train, val, test, seed):
    params = calib.train_point_model(train, replace(config.train, init_seed=seed))
    rows = []
    for level in config.levels:
        model = calib.split_conformal(train, val, 1.0 - level, config.beta, config.train, params=params)
        if model.infinite:
            rows.append(TrialRecord(1.0, float("inf")))
        else:
            res = metrics.evaluate(model, test)
            rows.append(TrialRecord(res.coverage, res.width))
    return rows


def run_experiment(config: ExperimentConfig, threads=1) -> ResultTable:
    t0 = time.perf_counter()
    reps = range(config.repetitions)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(lambda i: run_repetition(config, i), reps))
    else:
        per_rep = [run_repetition(config, i) for i in reps]
    methods = {
        m.value: MethodResult(m, config.levels, [rep[m] for rep in per_rep])
        for m in config.methods
    }
    return ResultTable(config.to_dict(), methods, time.perf_counter() - t0)


CSV_COLUMNS = ["method", "level", "EP", "IW", "MEP", "MIW", "N"]


def export_results(table: ResultTable, fmt, path, include_timing=False):
    path = Path(path)
    if fmt == "json":
        path.write_text(dumps(table, include_timing) + "\n", encoding="utf-8")
    elif fmt == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for name, r in table.methods.items():
                ep, iw, mep_, miw_ = r.ep, r.iw, r.mep, r.miw
                for k, level in enumerate(r.levels):
                    w.writerow([name, repr(level), repr(ep[k]), repr(iw[k]), repr(mep_), repr(miw_), len(r.trials)])
    else:
        raise ValueError(f"unknown format {fmt!r}")


def dumps(table: ResultTable, include_timing=False):
    return json.dumps(table.to_dict(include_timing), indent=2, sort_keys=False)


def import_results(path) -> ResultTable:
    return ResultTable.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
