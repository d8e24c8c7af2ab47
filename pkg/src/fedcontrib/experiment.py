"""Experiment orchestration: per-seed runs, multi-seed averaging, D-grid sweeps, file output.

Output files of ``run_experiment`` (all deterministic for a given config):

* ``results.json``        full detail; every CSV value is re-derivable from it
* ``scores.csv``          seed, method, client_id, raw_gain, score, normalized, degenerate_flag
* ``ledger.csv``          seed, ledger, counter, client_id, value
* ``reconciliation.json`` measured vs predicted overhead per seed

``timing.json`` carries wall-clock seconds per training; it is the only
output that varies between identical runs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .config import ExperimentConfig, IdxSource, SyntheticSource
from .contribution import (ContributionReport, FLSetup, METHODS, average_reports, heuristic1, heuristic2,
                           metric_error, run_naive, swc_scores)
from .costing import (CostLedger, ReconciliationReport, cost_units, measured_reduction, overhead_reduction,
                      predict_naive_overhead, predict_swc_overhead, reconcile)
from .data import LabeledDataset, generate_synthetic, load_idx, partition_noniid, split_per_class
from .engine import derive_seed
from .errors import ConfigError, ContractViolation
from .nn import Architecture

log = logging.getLogger(__name__)

SCORES_HEADER = ["seed", "method", "client_id", "raw_gain", "score", "normalized", "degenerate_flag"]
LEDGER_HEADER = ["seed", "ledger", "counter", "client_id", "value"]
ERRORS_HEADER = ["d1", "d2", "seed", "method", "error_unit", "error_percent"]
AGGREGATE_SEED = "mean"
SUMMARY_KEY = "all"

PARTITION_STREAM = 1
TRAINING_STREAM = 2


def load_data(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Training pool and validation set for ``cfg``; client classes are checked against the class count."""
    ds = cfg.dataset
    if isinstance(ds, SyntheticSource):
        full = generate_synthetic(ds.num_classes, ds.dim, ds.per_class + ds.validation_per_class, ds.spread, ds.seed)
        pool, validation = split_per_class(full, ds.validation_per_class)
    else:
        assert isinstance(ds, IdxSource)
        pool = load_idx(ds.train_images, ds.train_labels, ds.num_classes)
        validation = load_idx(ds.test_images, ds.test_labels, pool.num_classes)
        if ds.train_limit is not None and ds.train_limit < len(pool):
            pool = pool.subset(range(ds.train_limit))
        if ds.validation_limit is not None and ds.validation_limit < len(validation):
            validation = validation.subset(range(ds.validation_limit))
    for i, spec in enumerate(cfg.clients):
        try:
            spec.check_classes(pool.num_classes)
        except ConfigError as exc:
            raise ConfigError(str(exc), f"clients[{i}].classes") from exc
    return pool, validation


def architecture(cfg: ExperimentConfig, pool: LabeledDataset) -> Architecture:
    return Architecture((pool.dim, *cfg.hidden, pool.num_classes))


@dataclass
class SeedResult:
    seed: int
    reports: dict[str, ContributionReport]
    ledgers: dict[str, CostLedger]
    reconciliation: list[ReconciliationReport]
    reduction: dict[str, Any] | None
    histories: dict[str, Any]
    trainings: int
    errors: dict[str, float | None]
    timing: dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    arch: Architecture
    seeds: list[SeedResult]
    aggregate: dict[str, ContributionReport]
    aggregate_errors: dict[str, float | None]

    @property
    def trainings(self) -> int:
        return sum(s.trainings for s in self.seeds)

    @property
    def reconciliation_passed(self) -> bool:
        return all(r.passed for s in self.seeds for r in s.reconciliation) and all(
            s.reduction["equal"] for s in self.seeds if s.reduction is not None
        )


def safe_error(reference: ContributionReport, candidate: ContributionReport) -> float | None:
    """``metric_error``; ``None`` when exactly one side is degenerate."""
    try:
        return metric_error(reference, candidate)
    except ContractViolation:
        return None


def errors_vs_naive(reports: dict[str, ContributionReport]) -> dict[str, float | None]:
    if "naive" not in reports:
        return {}
    ref = reports["naive"]
    return {m: safe_error(ref, r) for m, r in reports.items() if m != "naive"}


def run_seed(cfg: ExperimentConfig, pool: LabeledDataset, validation: LabeledDataset, seed: int,
             jobs: int = 1) -> SeedResult:
    specs = list(cfg.clients)
    arch = architecture(cfg, pool)
    reports: dict[str, ContributionReport] = {}
    ledgers: dict[str, CostLedger] = {}
    recon: list[ReconciliationReport] = []
    histories: dict[str, Any] = {}
    timing: dict[str, float] = {}
    reduction = None
    trainings = 0
    methods = set(cfg.methods)

    if methods & {"naive", "swc"}:
        parts = partition_noniid(pool, specs, derive_seed(seed, PARTITION_STREAM), cfg.allow_overlap)
        setup = FLSetup({s.id: d for s, d in zip(specs, parts)}, arch, cfg.hyper, validation,
                        derive_seed(seed, TRAINING_STREAM), cfg.weighting, cfg.score_basis)
        ids = setup.client_ids
        c, r_end = len(ids), cfg.hyper.rounds
        units = cost_units(specs, cfg.hyper, arch)

        t0 = time.perf_counter()
        full_history, full_ledger = setup.train(ids, track_loo="swc" in methods)
        timing["full"] = time.perf_counter() - t0
        trainings += 1
        ledgers["fl_baseline"] = full_history.baseline_ledger
        histories["full"] = full_history.to_dict()

        if "swc" in methods:
            reports["swc"] = swc_scores(full_history, cfg.score_basis)
            ledgers["swc"] = full_ledger
            recon.append(reconcile(full_ledger, predict_swc_overhead(c, r_end, units.c_server),
                                   full_history.baseline_ledger, units.c_server, label="swc"))
        if "naive" in methods:
            t0 = time.perf_counter()
            naive = run_naive(setup, full=(full_history, full_ledger), jobs=jobs)
            timing["naive_leave_one_out"] = time.perf_counter() - t0
            trainings += len(naive.leave_one_out)
            reports["naive"] = naive.report
            ledgers["naive"] = naive.ledger
            for i, led in naive.loo_ledgers.items():
                ledgers[f"naive_without_{i}"] = led
            histories["naive_without"] = {str(i): h.to_dict() for i, h in naive.leave_one_out.items()}
            pred = predict_naive_overhead(c, r_end, units.c_server, [units.c_ud[i] for i in ids],
                                          [units.theta] * c)
            recon.append(reconcile(naive.ledger, pred, full_history.baseline_ledger, units.c_server, label="naive"))
        if {"naive", "swc"} <= methods:
            by_label = {r.label: r for r in recon}
            measured = measured_reduction(by_label["swc"], by_label["naive"])
            formula = overhead_reduction(c, units.c_server, [units.c_ud[i] for i in ids], exact=True)
            reduction = {"measured": str(measured), "formula": str(formula), "value": float(formula),
                         "equal": measured == formula}

    if "h1" in methods:
        reports["h1"] = heuristic1(specs)
    if "h2" in methods:
        reports["h2"] = heuristic2(specs)
    reports = {m: reports[m] for m in METHODS if m in reports}
    return SeedResult(seed, reports, ledgers, recon, reduction, histories, trainings,
                      errors_vs_naive(reports), timing)


def execute(cfg: ExperimentConfig, jobs: int = 1, data: tuple[LabeledDataset, LabeledDataset] | None = None
            ) -> ExperimentResult:
    """Run every seed of ``cfg`` and average raw gains across seeds, without writing files."""
    pool, validation = data if data is not None else load_data(cfg)
    arch = architecture(cfg, pool)
    seeds = []
    for seed in cfg.seeds:
        log.info("seed %d: methods %s", seed, ",".join(cfg.methods))
        seeds.append(run_seed(cfg, pool, validation, seed, jobs))
    aggregate = {m: average_reports([s.reports[m] for s in seeds]) for m in seeds[0].reports}
    return ExperimentResult(cfg, arch, seeds, aggregate, errors_vs_naive(aggregate))


def _fmt(x: float | None) -> str:
    return "nan" if x is None else repr(float(x))


def results_document(result: ExperimentResult) -> dict:
    cfg = result.config
    units = cost_units(list(cfg.clients), cfg.hyper, result.arch)
    return {
        "schema_version": 1,
        "config": cfg.to_dict(),
        "architecture": list(result.arch.layer_sizes),
        "cost_units": {
            "c_ud": {str(k): v for k, v in units.c_ud.items()},
            "c_server": units.c_server,
            "theta_bytes": units.theta,
            "client_unit": "minibatch SGD steps",
            "server_unit": "aggregate+validate event pair",
        },
        "notes": {
            "naive_init": "all naive trainings share the initial model and per-round seeds of the full run",
            "multi_seed": "aggregate reports average raw gains over seeds, then normalize",
        },
        "trainings": result.trainings,
        "seeds": [
            {
                "seed": s.seed,
                "trainings": s.trainings,
                "reports": {m: r.to_dict() for m, r in s.reports.items()},
                "errors_vs_naive": {m: _error_pair(e) for m, e in s.errors.items()},
                "ledgers": {name: led.to_dict() for name, led in s.ledgers.items()},
                "histories": s.histories,
            }
            for s in result.seeds
        ],
        "aggregate": {
            "reports": {m: r.to_dict() for m, r in result.aggregate.items()},
            "errors_vs_naive": {m: _error_pair(e) for m, e in result.aggregate_errors.items()},
        },
    }


def _error_pair(e: float | None) -> dict:
    return {"unit": e, "percent": None if e is None else 100.0 * e}


def reconciliation_document(result: ExperimentResult) -> dict:
    return {
        "passed": result.reconciliation_passed,
        "seeds": [
            {"seed": s.seed, "methods": [r.to_dict() for r in s.reconciliation], "reduction": s.reduction}
            for s in result.seeds
        ],
    }


def _report_rows(seed: Any, report: dict) -> Iterable[list[str]]:
    for cid, g, sc in zip(report["client_ids"], report["raw_gains"], report["scores"]):
        yield [str(seed), report["method"], str(cid), _fmt(g), _fmt(sc),
               str(report["normalized"]).lower(), str(report["degenerate"]).lower()]


def scores_rows(doc: dict) -> list[list[str]]:
    """scores.csv body re-derived from a results.json document."""
    rows = []
    for s in doc["seeds"]:
        for report in s["reports"].values():
            rows.extend(_report_rows(s["seed"], report))
    for report in doc["aggregate"]["reports"].values():
        rows.extend(_report_rows(AGGREGATE_SEED, report))
    return rows


def ledger_rows(doc: dict) -> list[list[str]]:
    """ledger.csv body re-derived from a results.json document."""
    rows = []
    for s in doc["seeds"]:
        for name, led in s["ledgers"].items():
            rows.append([str(s["seed"]), name, "server_aggregations", "", str(led["server_aggregations"])])
            rows.append([str(s["seed"]), name, "server_validations", "", str(led["server_validations"])])
            for cid, counters in led["clients"].items():
                for counter in ("sgd_steps", "bytes_down", "bytes_up"):
                    rows.append([str(s["seed"]), name, counter, cid, str(counters[counter])])
    return rows


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = results_document(result)
    paths = {
        "results": out / "results.json",
        "scores": out / "scores.csv",
        "ledger": out / "ledger.csv",
        "reconciliation": out / "reconciliation.json",
        "timing": out / "timing.json",
    }
    _write_json(paths["results"], doc)
    _write_csv(paths["scores"], SCORES_HEADER, scores_rows(doc))
    _write_csv(paths["ledger"], LEDGER_HEADER, ledger_rows(doc))
    _write_json(paths["reconciliation"], reconciliation_document(result))
    _write_json(paths["timing"], {str(s.seed): s.timing for s in result.seeds})
    return paths


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, jobs: int = 1) -> ExperimentResult:
    """Execute ``cfg`` and write its output files to ``out_dir`` (default: the configured directory)."""
    result = execute(cfg, jobs=jobs)
    write_outputs(result, out_dir if out_dir is not None else cfg.output_dir)
    return result


@dataclass
class SweepCell:
    d1: int
    d2: int
    result: ExperimentResult


@dataclass
class SweepResult:
    cells: list[SweepCell]
    methods: tuple[str, ...]

    def error_rows(self) -> list[list[str]]:
        rows = []
        for cell in self.cells:
            for s in cell.result.seeds:
                for m in self.methods:
                    e = s.errors.get(m)
                    rows.append([str(cell.d1), str(cell.d2), str(s.seed), m, _fmt(e),
                                 _fmt(None if e is None else 100.0 * e)])
        return rows

    def summary(self) -> dict[str, float | None]:
        """Per-method mean error (unit scale) over every cell and seed; degenerate cells skipped."""
        out = {}
        for m in self.methods:
            vals = [s.errors[m] for c in self.cells for s in c.result.seeds if s.errors.get(m) is not None]
            out[m] = math.fsum(vals) / len(vals) if vals else None
        return out

    def summary_rows(self) -> list[list[str]]:
        return [[SUMMARY_KEY, SUMMARY_KEY, SUMMARY_KEY, m, _fmt(e), _fmt(None if e is None else 100.0 * e)]
                for m, e in self.summary().items()]


def sweep(cfg: ExperimentConfig, out_dir: str | Path | None = None, values: Sequence[int] | None = None,
          jobs: int = 1) -> SweepResult:
    """Vary the sample counts of the first two clients over ``values`` x ``values``.

    The naive method is always run, since every error is measured against it.
    Each cell's full output goes to ``cells/d1_<d1>_d2_<d2>/``; ``errors.csv``
    and ``sweep.json`` summarize the grid.
    """
    if len(cfg.clients) < 2:
        raise ConfigError("a sweep needs at least 2 clients", "clients")
    grid_values = tuple(values if values is not None else cfg.sweep_values)
    methods = tuple(m for m in METHODS if m in cfg.methods and m != "naive")
    cell_cfg = cfg.with_overrides(methods=("naive", *methods))
    data = load_data(cfg)
    first, second = cfg.clients[0].id, cfg.clients[1].id
    grid = [(d1, d2) for d1 in grid_values for d2 in grid_values]

    def run_cell(d: tuple[int, int]) -> SweepCell:
        d1, d2 = d
        log.info("sweep cell D1=%d D2=%d", d1, d2)
        c = cell_cfg.with_client_sizes({first: d1, second: d2})
        return SweepCell(d1, d2, execute(c, jobs=1, data=data))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            cells = list(ex.map(run_cell, grid))
    else:
        cells = [run_cell(d) for d in grid]
    result = SweepResult(cells, methods)

    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for cell in cells:
        write_outputs(cell.result, out / "cells" / f"d1_{cell.d1}_d2_{cell.d2}")
    _write_csv(out / "errors.csv", ERRORS_HEADER, result.error_rows() + result.summary_rows())
    _write_json(out / "sweep.json", {
        "values": list(grid_values),
        "methods": list(methods),
        "summary_unit": result.summary(),
        "cells": [
            {"d1": c.d1, "d2": c.d2,
             "aggregate_errors": {m: _error_pair(e) for m, e in c.result.aggregate_errors.items()},
             "reconciliation_passed": c.result.reconciliation_passed}
            for c in cells
        ],
    })
    return result

