"""Single-process federated training: broadcast, local update, weighted aggregation.

Every round can additionally build the c leave-one-out aggregates (all client
models except one) and validate them. Those aggregates are never broadcast,
so tracking them changes the cost ledger but not the training trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .costing import CostLedger, model_bytes
from .data import LabeledDataset
from .errors import ConfigError, ContractViolation
from .nn import Architecture, Hyper, ModelParams, PerfScore, evaluate, init_model, local_train

WEIGHTINGS = ("samples", "uniform")


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


@dataclass(frozen=True)
class RoundRecord:
    round: int
    full_score: PerfScore
    loo_scores: dict[int, PerfScore] | None
    client_sgd_steps: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "full": _score_dict(self.full_score),
            "loo": None if self.loo_scores is None
            else {str(cid): _score_dict(s) for cid, s in self.loo_scores.items()},
            "client_sgd_steps": {str(cid): n for cid, n in self.client_sgd_steps.items()},
        }


@dataclass
class TrainingHistory:
    """Outcome of one federated training over ``participants``.

    ``baseline_ledger`` holds only the plain-FL protocol events of the run
    (what the same run costs without leave-one-out tracking).
    """

    participants: tuple[int, ...]
    records: list[RoundRecord]
    final_model: ModelParams
    baseline_ledger: CostLedger = field(default_factory=CostLedger)

    @property
    def tracks_loo(self) -> bool:
        return bool(self.records) and all(r.loo_scores is not None for r in self.records)

    @property
    def final_score(self) -> PerfScore:
        return self.records[-1].full_score

    def to_dict(self) -> dict:
        return {
            "participants": list(self.participants),
            "rounds": [r.to_dict() for r in self.records],
        }


def _score_dict(s: PerfScore) -> dict:
    return {"accuracy": s.accuracy, "mean_loss": s.mean_loss}


def aggregate(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Coordinate-wise weighted average; weights are normalized to sum to one."""
    if not models:
        raise ContractViolation("aggregate needs at least one model")
    if len(weights) != len(models):
        raise ContractViolation(f"{len(models)} models but {len(weights)} weights")
    arch = models[0].arch
    if any(m.arch != arch for m in models):
        raise ContractViolation("cannot aggregate models with different architectures")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ContractViolation("aggregation weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ContractViolation("aggregation weights sum to zero")
    w = w / total
    out = np.zeros(arch.param_count)
    for wi, m in zip(w, models):
        out += wi * m.values
    return ModelParams(arch, out)


def _weights(client_ids: Sequence[int], client_data: Mapping[int, LabeledDataset], weighting: str) -> list[float]:
    if weighting == "samples":
        return [float(len(client_data[i])) for i in client_ids]
    if weighting == "uniform":
        return [1.0] * len(client_ids)
    raise ConfigError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")


def run_round(global_model: ModelParams, client_data: Mapping[int, LabeledDataset], h: Hyper,
              validation: LabeledDataset, track_loo: bool, ledger: CostLedger, round_seed: int,
              round_index: int = 1, weighting: str = "samples",
              loo_ledger: CostLedger | None = None) -> tuple[ModelParams, RoundRecord]:
    """One FL round over every client in ``client_data``.

    Client ``i`` trains with seed ``derive_seed(round_seed, i)``. Leave-one-out
    aggregation and validation events are charged to ``loo_ledger`` when it is
    given, otherwise to ``ledger``.
    """
    if not client_data:
        raise ContractViolation("run_round needs at least one client")
    if len(validation) == 0:
        raise ContractViolation("validation set is empty")
    ids = sorted(client_data)
    for cid in ids:
        if len(client_data[cid]) == 0:
            raise ContractViolation(f"client {cid} has no data")
    if track_loo and len(ids) < 2:
        raise ContractViolation("leave-one-out tracking needs at least 2 clients")
    theta = model_bytes(global_model.arch)

    updated: dict[int, ModelParams] = {}
    steps: dict[int, int] = {}
    for cid in ids:
        ledger.record_transfer(cid, theta)
        updated[cid], steps[cid] = local_train(global_model, client_data[cid], h, derive_seed(round_seed, cid))
        ledger.record_update(cid, steps[cid])

    weights = _weights(ids, client_data, weighting)
    new_global = aggregate([updated[i] for i in ids], weights)
    ledger.record_aggregation()
    full_score = evaluate(new_global, validation)
    ledger.record_validation()

    loo_scores = None
    if track_loo:
        extra = loo_ledger if loo_ledger is not None else ledger
        loo_scores = {}
        for k, left_out in enumerate(ids):
            keep = [j for j in range(len(ids)) if j != k]
            m = aggregate([updated[ids[j]] for j in keep], [weights[j] for j in keep])
            extra.record_aggregation()
            loo_scores[left_out] = evaluate(m, validation)
            extra.record_validation()

    return new_global, RoundRecord(round_index, full_score, loo_scores, steps)


def run_federated(participants: Sequence[int], client_data: Mapping[int, LabeledDataset], arch: Architecture,
                  h: Hyper, validation: LabeledDataset, track_loo: bool, seed: int,
                  weighting: str = "samples", init_seed: int | None = None) -> tuple[TrainingHistory, CostLedger]:
    """Train from a fresh initial model for exactly ``h.rounds`` rounds.

    Only the clients listed in ``participants`` take part; the others in
    ``client_data`` are ignored. Per-round seeds depend on ``seed`` and the
    round number only, and client seeds on the client id, so a client sees
    the same shuffles no matter who else participates.
    """
    members = tuple(sorted(set(participants)))
    if not members:
        raise ContractViolation("participant set is empty")
    missing = [i for i in members if i not in client_data]
    if missing:
        raise ContractViolation(f"no data for participants {missing}")
    data = {i: client_data[i] for i in members}
    model = init_model(arch, seed if init_seed is None else init_seed)

    base = CostLedger()
    loo = CostLedger()
    records = []
    for r in range(1, h.rounds + 1):
        model, rec = run_round(model, data, h, validation, track_loo, base, derive_seed(seed, r),
                               round_index=r, weighting=weighting, loo_ledger=loo)
        records.append(rec)
    history = TrainingHistory(members, records, model, baseline_ledger=base.copy())
    return history, base.merge(loo)
