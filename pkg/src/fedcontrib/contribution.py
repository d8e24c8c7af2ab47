"""Per-client contribution scores: naive leave-one-out, step-wise, and two data-size heuristics.

All four produce a ``ContributionReport``: raw per-client gains and their
normalized shares. Gains are oriented so that higher means more helpful:
``P(with) - P(without)`` for accuracy, ``L(without) - L(with)`` for loss.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .costing import CostLedger, merge_all
from .data import ClientSpec, LabeledDataset
from .engine import TrainingHistory, run_federated
from .errors import ConfigError, ContractViolation
from .nn import Architecture, Hyper, PerfScore

METHODS = ("naive", "swc", "h1", "h2")
SCORE_BASES = ("accuracy", "loss")
DEGENERATE_EPS = 1e-9


@dataclass(frozen=True)
class ContributionReport:
    method: str
    client_ids: tuple[int, ...]
    raw_gains: tuple[float, ...]
    scores: tuple[float, ...]
    normalized: bool
    score_basis: str = "accuracy"

    @property
    def degenerate(self) -> bool:
        return not self.normalized

    def score_of(self, client_id: int) -> float:
        return self.scores[self.client_ids.index(client_id)]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "client_ids": list(self.client_ids),
            "raw_gains": list(self.raw_gains),
            "scores": list(self.scores),
            "normalized": self.normalized,
            "degenerate": self.degenerate,
            "score_basis": self.score_basis,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ContributionReport:
        return cls(d["method"], tuple(d["client_ids"]), tuple(d["raw_gains"]), tuple(d["scores"]),
                   bool(d["normalized"]), d["score_basis"])


def make_report(method: str, client_ids: Sequence[int], raw_gains: Sequence[float],
                score_basis: str = "accuracy") -> ContributionReport:
    """Normalize ``raw_gains`` by their sum.

    Negative gains are kept (and normalized) as long as the sum is away from
    zero; when ``|sum| < 1e-9`` the raw gains are returned unnormalized.
    """
    gains = tuple(float(g) for g in raw_gains)
    if len(gains) != len(client_ids):
        raise ContractViolation("one gain per client required")
    total = math.fsum(gains)
    if abs(total) < DEGENERATE_EPS:
        return ContributionReport(method, tuple(client_ids), gains, gains, False, score_basis)
    return ContributionReport(method, tuple(client_ids), gains, tuple(g / total for g in gains), True, score_basis)


def gain(with_client: PerfScore, without_client: PerfScore, basis: str) -> float:
    if basis == "accuracy":
        return with_client.accuracy - without_client.accuracy
    if basis == "loss":
        return without_client.mean_loss - with_client.mean_loss
    raise ConfigError(f"unknown score basis {basis!r}; expected one of {SCORE_BASES}")


def average_reports(reports: Sequence[ContributionReport]) -> ContributionReport:
    """Average raw gains over repeated runs (e.g. seeds), then normalize once."""
    if not reports:
        raise ContractViolation("nothing to average")
    first = reports[0]
    if any(r.client_ids != first.client_ids or r.method != first.method for r in reports):
        raise ContractViolation("reports must share method and client ids")
    mean = np.mean([r.raw_gains for r in reports], axis=0)
    return make_report(first.method, first.client_ids, mean.tolist(), first.score_basis)


@dataclass(frozen=True)
class FLSetup:
    """Everything a federated training needs besides the participant set."""

    client_data: Mapping[int, LabeledDataset]
    arch: Architecture
    hyper: Hyper
    validation: LabeledDataset
    seed: int
    weighting: str = "samples"
    score_basis: str = "accuracy"

    @property
    def client_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.client_data))

    def train(self, participants: Sequence[int], track_loo: bool) -> tuple[TrainingHistory, CostLedger]:
        return run_federated(participants, self.client_data, self.arch, self.hyper, self.validation,
                             track_loo, self.seed, weighting=self.weighting)


@dataclass
class NaiveRun:
    report: ContributionReport
    ledger: CostLedger
    full: TrainingHistory
    leave_one_out: dict[int, TrainingHistory] = field(default_factory=dict)
    loo_ledgers: dict[int, CostLedger] = field(default_factory=dict)


def run_naive(setup: FLSetup, full: tuple[TrainingHistory, CostLedger] | None = None,
              jobs: int = 1) -> NaiveRun:
    """Naive leave-one-out scoring: one training with everyone plus one without each client.

    ``full`` may supply an already finished all-client training (with or
    without leave-one-out tracking); only its plain-FL events are charged to
    the returned ledger. The c leave-one-out trainings run on up to ``jobs``
    threads.
    """
    ids = setup.client_ids
    if len(ids) < 2:
        raise ContractViolation("naive scoring needs at least 2 clients")
    if full is None:
        full = setup.train(ids, track_loo=False)
    full_history = full[0]

    def leave_out(i: int) -> tuple[TrainingHistory, CostLedger]:
        return setup.train([j for j in ids if j != i], track_loo=False)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(leave_out, ids))
    else:
        outcomes = [leave_out(i) for i in ids]

    loo_hist = {i: h for i, (h, _) in zip(ids, outcomes)}
    loo_ledgers = {i: led for i, (_, led) in zip(ids, outcomes)}
    gains = [gain(full_history.final_score, loo_hist[i].final_score, setup.score_basis) for i in ids]
    report = make_report("naive", ids, gains, setup.score_basis)
    ledger = merge_all([full_history.baseline_ledger, *loo_ledgers.values()])
    return NaiveRun(report, ledger, full_history, loo_hist, loo_ledgers)


def naive_scores(setup: FLSetup, jobs: int = 1) -> tuple[ContributionReport, CostLedger]:
    """Run the c+1 trainings of the naive metric and return its report and total cost."""
    run = run_naive(setup, jobs=jobs)
    return run.report, run.ledger


def swc_scores(history: TrainingHistory, score_basis: str = "accuracy") -> ContributionReport:
    """Step-wise contribution: per-client gains of every round's full aggregate over its leave-one-out one, summed."""
    if not history.tracks_loo:
        raise ContractViolation("step-wise scoring needs a history recorded with leave-one-out tracking")
    ids = history.participants
    gains = [
        math.fsum(gain(rec.full_score, rec.loo_scores[i], score_basis) for rec in history.records)
        for i in ids
    ]
    return make_report("swc", ids, gains, score_basis)


def heuristic1(specs: Sequence[ClientSpec]) -> ContributionReport:
    """Share of the total sample count."""
    return make_report("h1", [s.id for s in specs], [float(s.num_samples) for s in specs], "data")


def heuristic2(specs: Sequence[ClientSpec]) -> ContributionReport:
    """Share of sample count times class variety."""
    return make_report("h2", [s.id for s in specs], [float(s.num_samples * s.variety) for s in specs], "data")


def metric_error(reference: ContributionReport, candidate: ContributionReport) -> float:
    """Euclidean distance between two score vectors on the [0, 1] share scale.

    Multiply by 100 for the percent scale.
    """
    if reference.client_ids != candidate.client_ids:
        raise ContractViolation(
            f"client ids differ: {list(reference.client_ids)} vs {list(candidate.client_ids)}"
        )
    if reference.normalized != candidate.normalized:
        raise ContractViolation("cannot compare a normalized report with an unnormalized one")
    diff = np.subtract(reference.scores, candidate.scores)
    return float(np.sqrt(np.dot(diff, diff)))
