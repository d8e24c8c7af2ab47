import csv
import json

import pytest

from fedcontrib.config import config_from_dict
from fedcontrib.experiment import (ERRORS_HEADER, LEDGER_HEADER, SCORES_HEADER, execute, ledger_rows,
                                   run_experiment, scores_rows, sweep)

SMALL = {
    "dataset": {"source": "synthetic", "num_classes": 5, "dim": 12, "per_class": 120,
                "validation_per_class": 30, "spread": 0.3, "seed": 1},
    "clients": [
        {"id": 1, "num_samples": 40, "classes": [0, 1, 2]},
        {"id": 2, "num_samples": 40, "classes": [1, 2]},
        {"id": 3, "num_samples": 40, "classes": [3, 4]},
    ],
    "hyper": {"batch_size": 20, "local_epochs": 1, "learning_rate": 0.25, "rounds": 3},
    "model": {"hidden": [8]},
    "methods": ["naive", "swc", "h1", "h2"],
    "seeds": [0, 1],
}


def cfg(**changes):
    return config_from_dict({**SMALL, **changes})


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_heuristics_only_runs_no_training(tmp_path):
    result = run_experiment(cfg(methods=["h1", "h2"]), tmp_path)
    assert result.trainings == 0
    assert set(result.aggregate) == {"h1", "h2"}
    assert result.seeds[0].ledgers == {}


def test_naive_and_swc_train_c_plus_one_times():
    result = execute(cfg(methods=["naive", "swc"], seeds=[0]))
    assert result.trainings == 4


def test_outputs_and_schemas(tmp_path):
    result = run_experiment(cfg(), tmp_path)
    for name in ("results.json", "scores.csv", "ledger.csv", "reconciliation.json"):
        assert (tmp_path / name).exists()
    scores = read_csv(tmp_path / "scores.csv")
    assert scores[0] == SCORES_HEADER == ["seed", "method", "client_id", "raw_gain", "score", "normalized",
                                          "degenerate_flag"]
    # 2 seeds + averaged rows, 4 methods, 3 clients
    assert len(scores) - 1 == 3 * 4 * 3
    assert read_csv(tmp_path / "ledger.csv")[0] == LEDGER_HEADER
    assert result.reconciliation_passed
    recon = json.loads((tmp_path / "reconciliation.json").read_text())
    assert recon["passed"] and recon["seeds"][0]["reduction"]["equal"]


def test_results_json_rederives_csvs(tmp_path):
    run_experiment(cfg(), tmp_path)
    doc = json.loads((tmp_path / "results.json").read_text())
    assert read_csv(tmp_path / "scores.csv")[1:] == scores_rows(doc)
    assert read_csv(tmp_path / "ledger.csv")[1:] == ledger_rows(doc)
    for row in read_csv(tmp_path / "scores.csv")[1:]:
        if row[0] == "mean":
            continue
        rep = next(s for s in doc["seeds"] if str(s["seed"]) == row[0])["reports"][row[1]]
        k = rep["client_ids"].index(int(row[2]))
        assert float(row[3]) == rep["raw_gains"][k] and float(row[4]) == rep["scores"][k]


def test_deterministic_outputs(tmp_path):
    run_experiment(cfg(), tmp_path / "a")
    run_experiment(cfg(), tmp_path / "b", jobs=3)
    for name in ("scores.csv", "ledger.csv", "results.json", "reconciliation.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ledger_rows_match_formulas(tmp_path):
    result = execute(cfg(seeds=[0]))
    s = result.seeds[0]
    r_end, c = 3, 3
    # ceil(40 / 20) * 1 epoch per round
    assert s.ledgers["fl_baseline"].client_sgd_steps[1] == r_end * 2
    assert s.ledgers["swc"].server_aggregations == r_end * (1 + c)
    assert s.ledgers["naive"].server_aggregations == r_end * (1 + c)
    assert s.ledgers["naive_without_2"].client_sgd_steps[2] == 0


def test_capacity_error_propagates():
    from fedcontrib.errors import CapacityError
    with pytest.raises(CapacityError, match="client 1"):
        execute(cfg(clients=[{"id": 1, "num_samples": 500, "classes": [0]},
                             {"id": 2, "num_samples": 10, "classes": [1]}]))


def test_sweep_rows(tmp_path):
    result = sweep(cfg(methods=["swc", "h1", "h2"], seeds=[0]), tmp_path, values=[10, 20, 30])
    rows = read_csv(tmp_path / "errors.csv")
    assert rows[0] == ERRORS_HEADER == ["d1", "d2", "seed", "method", "error_unit", "error_percent"]
    data = [r for r in rows[1:] if r[0] != "all"]
    summary = [r for r in rows[1:] if r[0] == "all"]
    assert len(data) == 27
    assert [r[3] for r in summary] == ["swc", "h1", "h2"]
    assert {(r[0], r[1]) for r in data} == {(str(a), str(b)) for a in (10, 20, 30) for b in (10, 20, 30)}
    for r in data:
        if r[4] != "nan":
            assert float(r[5]) == pytest.approx(100 * float(r[4]))
    assert (tmp_path / "cells" / "d1_10_d2_30" / "scores.csv").exists()
    assert len(result.cells) == 9
