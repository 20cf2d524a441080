import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from picalib import calib, metrics
from picalib.dataio import Family
from picalib.errors import ConfigError
from picalib.harness import (
    ExperimentConfig, Method, MethodResult, ResultTable, SyntheticSource, TrialRecord, dumps,
    export_results, import_results, run_experiment, _load_repetition_data,
)
from picalib.models import TrainConfig, train_pool
from picalib.seeding import derive_seed


def small_config(**kw):
    base = dict(
        data=SyntheticSource(Family.MULTI1, 0, 120, 80, 200),
        lambda_grid=(30.0, 300.0, 3000.0),
        train=TrainConfig(epochs=4, hidden_sizes=(8,), ensemble_size=2),
        levels=(0.6, 0.8, 0.9),
        methods=(Method.NORMALIZED, Method.UNNORMALIZED, Method.PAV, Method.SPLIT_CONFORMAL),
        repetitions=3,
        mc_draws=20_000,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def table():
    return run_experiment(small_config())


def test_shapes(table):
    assert set(table.methods) == {"normalized", "unnormalized", "pav", "split_conformal"}
    for r in table.methods.values():
        assert len(r.trials) == 3 and all(len(row) == 3 for row in r.trials)


def test_single_pav_repetition():
    cfg = small_config(methods=(Method.PAV,), repetitions=1, lambda_grid=(100.0,), levels=(0.9,))
    t = run_experiment(cfg)
    assert t.methods["pav"].ep[0] in (0.0, 1.0)


def test_deterministic(table):
    again = run_experiment(small_config())
    assert dumps(again) == dumps(table)


def test_threads_do_not_change_results(table):
    assert dumps(run_experiment(small_config(), threads=3)) == dumps(table)


def test_timing_only_on_request(table):
    assert "wall_seconds" not in json.loads(dumps(table))
    assert json.loads(dumps(table, include_timing=True))["wall_seconds"] > 0


def test_aggregates_match_metrics(table):
    for r in table.methods.values():
        cov, wid = r.coverage_table(), r.width_table()
        for k, pl in enumerate(r.levels):
            assert r.ep[k] == metrics.ep(cov[:, k], pl)
        assert r.mep == metrics.mep(cov, r.levels)
        if np.isfinite(wid).all():
            assert r.miw == pytest.approx(wid.mean(), rel=1e-15)


def test_json_round_trip(table, tmp_path):
    p = tmp_path / "r.json"
    export_results(table, "json", p)
    back = import_results(p)
    assert back == table
    assert json.loads(p.read_text())["schema"] == "result-table/1"


def test_csv_rows(table, tmp_path):
    p = tmp_path / "r.csv"
    export_results(table, "csv", p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["method", "level", "EP", "IW", "MEP", "MIW", "N"]
    assert len(rows) - 1 == 4 * 3
    assert all(r[-1] == "3" for r in rows[1:])


def test_csv_header_only(tmp_path):
    empty = ResultTable({}, {})
    p = tmp_path / "e.csv"
    export_results(empty, "csv", p)
    assert p.read_text() == "method,level,EP,IW,MEP,MIW,N\n"


def test_unknown_format(table, tmp_path):
    with pytest.raises(ValueError):
        export_results(table, "xml", tmp_path / "x")


def test_coverage_ordering_by_brute_force():
    # re-derive each repetition's selections and check margin nesting directly
    cfg = small_config(repetitions=4, levels=(0.5, 0.6, 0.7, 0.8, 0.9, 0.95))
    for i in range(cfg.repetitions):
        rep_seed = derive_seed(cfg.master_seed, i)
        train, val, _ = _load_repetition_data(cfg, rep_seed)
        pool = train_pool(train, cfg.lambda_grid, replace(cfg.train, init_seed=derive_seed(rep_seed, 3)))
        reports = {m: calib.calibrate(pool, train, val, cfg.levels, cfg.beta, m, cfg.mc_draws,
                                      derive_seed(rep_seed, 4)) for m in ("normalized", "unnormalized", "pav")}
        for m in ("normalized", "unnormalized"):
            for lv, lp in zip(reports[m].levels, reports["pav"].levels):
                if not lv.infeasible:
                    assert not lp.infeasible
                    assert lv.empirical_coverage >= lp.empirical_coverage


def test_infinite_conformal_width_recorded():
    cfg = small_config(data=SyntheticSource(Family.UNI1, 0, 40, 10, 50), methods=(Method.SPLIT_CONFORMAL,),
                       levels=(0.95,), repetitions=1)
    rec = run_experiment(cfg).methods["split_conformal"].trials[0][0]
    assert rec.coverage == 1.0 and rec.width == float("inf")


def test_config_round_trip():
    cfg = small_config()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("kw", [dict(repetitions=0), dict(levels=()), dict(levels=(0.9, 0.8)),
                                dict(beta=1.0), dict(lambda_grid=())])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        small_config(**kw)


def test_method_result_from_records():
    r = MethodResult(Method.PAV, (0.9,), [[TrialRecord(0.95, 1.0)], [TrialRecord(0.85, 3.0)]])
    assert r.ep == [0.5] and r.iw == [2.0] and r.mep == 0.5 and r.miw == 2.0
