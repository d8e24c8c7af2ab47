"""Estimate individual client contributions in federated learning.

Four scores are available: naive leave-one-out retraining, step-wise
contribution accumulated inside a single training, and two data-size
heuristics. Every run also carries an exact cost ledger that is reconciled
against the analytic overhead model.
"""

from .contribution import (ContributionReport, FLSetup, average_reports, heuristic1, heuristic2, metric_error,
                           naive_scores, run_naive, swc_scores)
from .costing import (CostLedger, cost_units, overhead_reduction, predict_naive_overhead, predict_swc_overhead,
                      reconcile)
from .data import ClientSpec, LabeledDataset, generate_synthetic, load_idx, partition_noniid
from .engine import aggregate, run_federated, run_round
from .nn import Architecture, Hyper, ModelParams, PerfScore, evaluate, forward, init_model, local_train, loss_and_grad

__version__ = "0.1.0"

__all__ = [
    "Architecture", "ClientSpec", "ContributionReport", "CostLedger", "FLSetup", "Hyper", "LabeledDataset",
    "ModelParams", "PerfScore", "aggregate", "average_reports", "cost_units", "evaluate", "forward",
    "generate_synthetic", "heuristic1", "heuristic2", "init_model", "load_idx", "local_train", "loss_and_grad",
    "metric_error", "naive_scores", "overhead_reduction", "partition_noniid", "predict_naive_overhead",
    "predict_swc_overhead", "reconcile", "run_federated", "run_naive", "run_round", "swc_scores",
]
