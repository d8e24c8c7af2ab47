"""Exact event counters for FL runs and the analytic overhead model they are checked against.

Cost units:

* client update cost ``C_ud``: minibatch SGD steps;
* server cost ``C_server``: one (aggregate, validate) event pair, weight 1;
* model size ``theta``: parameter count times 4 bytes (float32 on the wire).

With these units every predicted overhead is an integer and measured
counters must match it exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .data import ClientSpec
from .errors import ContractViolation, ReconciliationError
from .nn import Architecture, Hyper

BYTES_PER_PARAM = 4
SERVER_UNIT = 1


@dataclass
class CostLedger:
    """Per-run event counters. Only ever incremented inside a run."""

    client_sgd_steps: Counter = field(default_factory=Counter)
    bytes_down: Counter = field(default_factory=Counter)
    bytes_up: Counter = field(default_factory=Counter)
    server_aggregations: int = 0
    server_validations: int = 0

    def record_update(self, client_id: int, steps: int) -> None:
        self.client_sgd_steps[client_id] += steps

    def record_transfer(self, client_id: int, theta: int) -> None:
        self.bytes_down[client_id] += theta
        self.bytes_up[client_id] += theta

    def record_aggregation(self) -> None:
        self.server_aggregations += 1

    def record_validation(self) -> None:
        self.server_validations += 1

    @property
    def total_sgd_steps(self) -> int:
        return sum(self.client_sgd_steps.values())

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes_down.values()) + sum(self.bytes_up.values())

    def merge(self, other: CostLedger) -> CostLedger:
        """Sum of two ledgers (associative and commutative); neither input is modified."""
        return CostLedger(
            client_sgd_steps=self.client_sgd_steps + other.client_sgd_steps,
            bytes_down=self.bytes_down + other.bytes_down,
            bytes_up=self.bytes_up + other.bytes_up,
            server_aggregations=self.server_aggregations + other.server_aggregations,
            server_validations=self.server_validations + other.server_validations,
        )

    def __add__(self, other: CostLedger) -> CostLedger:
        return self.merge(other)

    def copy(self) -> CostLedger:
        return self.merge(CostLedger())

    def to_dict(self) -> dict:
        ids = sorted(i for i in set(self.client_sgd_steps) | set(self.bytes_down) | set(self.bytes_up)
                     if self.client_sgd_steps[i] or self.bytes_down[i] or self.bytes_up[i])
        return {
            "server_aggregations": self.server_aggregations,
            "server_validations": self.server_validations,
            "clients": {
                str(i): {
                    "sgd_steps": self.client_sgd_steps[i],
                    "bytes_down": self.bytes_down[i],
                    "bytes_up": self.bytes_up[i],
                }
                for i in ids
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CostLedger:
        ledger = cls(server_aggregations=int(d["server_aggregations"]),
                     server_validations=int(d["server_validations"]))
        for key, row in d["clients"].items():
            cid = int(key)
            ledger.client_sgd_steps[cid] = int(row["sgd_steps"])
            ledger.bytes_down[cid] = int(row["bytes_down"])
            ledger.bytes_up[cid] = int(row["bytes_up"])
        return ledger

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CostLedger):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def merge_all(ledgers: Iterable[CostLedger]) -> CostLedger:
    total = CostLedger()
    for ledger in ledgers:
        total = total.merge(ledger)
    return total


@dataclass(frozen=True)
class CostUnits:
    c_ud: dict[int, int]
    c_server: int
    theta: int


@dataclass(frozen=True)
class OverheadPrediction:
    """Predicted extra cost of a contribution method over plain FL.

    ``comp_units = server_units * C_server + client_steps``.
    """

    comp_units: float
    traffic_bytes: int
    server_units: int
    client_steps: int


def model_bytes(arch: Architecture) -> int:
    return arch.param_count * BYTES_PER_PARAM


def update_cost(num_samples: int, h: Hyper) -> int:
    return h.local_epochs * h.steps_per_epoch(num_samples)


def cost_units(specs: Sequence[ClientSpec], h: Hyper, arch: Architecture) -> CostUnits:
    return CostUnits(
        c_ud={s.id: update_cost(s.num_samples, h) for s in specs},
        c_server=SERVER_UNIT,
        theta=model_bytes(arch),
    )


def predict_naive_overhead(c: int, r_end: int, c_server: float, c_ud: Sequence[int],
                           theta: Sequence[int]) -> OverheadPrediction:
    """Extra cost of the c leave-one-out trainings needed by the naive metric."""
    if c < 2:
        raise ContractViolation("naive overhead needs at least 2 clients")
    if len(c_ud) != c or len(theta) != c:
        raise ContractViolation("c_ud and theta must have one entry per client")
    total_ud = sum(c_ud)
    total_theta = sum(theta)
    # sum over i of the sum over j != i of x_j is (c - 1) * sum(x)
    client_steps = r_end * (c - 1) * total_ud
    server_units = r_end * c
    return OverheadPrediction(
        comp_units=server_units * c_server + client_steps,
        traffic_bytes=r_end * (c - 1) * 2 * total_theta,
        server_units=server_units,
        client_steps=client_steps,
    )


def predict_swc_overhead(c: int, r_end: int, c_server: float) -> OverheadPrediction:
    """Extra cost of step-wise scoring: c leave-one-out (aggregate, validate) pairs per round."""
    if c < 2:
        raise ContractViolation("step-wise overhead needs at least 2 clients")
    return OverheadPrediction(comp_units=r_end * c * c_server, traffic_bytes=0,
                              server_units=r_end * c, client_steps=0)


def overhead_reduction(c: int, c_server: float, c_ud: Sequence[int], exact: bool = False) -> float | Fraction:
    """Step-wise overhead as a fraction of naive overhead, per round.

    With ``exact=True`` and integer inputs the result is a ``Fraction``.
    """
    if len(c_ud) != c:
        raise ContractViolation("c_ud must have one entry per client")
    num = c * (Fraction(c_server) if exact else c_server)
    den = num + (c - 1) * sum(c_ud)
    if den <= 0 or num <= 0:
        raise ContractViolation("overhead reduction undefined for a non-positive denominator")
    return num / den if exact else float(num / den)


@dataclass(frozen=True)
class FieldCheck:
    name: str
    measured: float | None
    predicted: float

    @property
    def ok(self) -> bool:
        return self.measured == self.predicted

    def to_dict(self) -> dict:
        return {"name": self.name, "measured": self.measured, "predicted": self.predicted,
                "delta": None if self.measured is None else self.measured - self.predicted,
                "ok": self.ok}


@dataclass(frozen=True)
class ReconciliationReport:
    label: str
    checks: tuple[FieldCheck, ...]
    extra_aggregations: int
    extra_validations: int
    c_server: float

    @property
    def extra_pairs(self) -> int:
        return min(self.extra_aggregations, self.extra_validations)

    @property
    def measured_comp_units(self) -> float:
        return next(ch.measured for ch in self.checks if ch.name == "comp_units")

    @property
    def passed(self) -> bool:
        return all(ch.ok for ch in self.checks)

    @property
    def failed_fields(self) -> list[str]:
        return [ch.name for ch in self.checks if not ch.ok]

    def check(self) -> ReconciliationReport:
        if not self.passed:
            raise ReconciliationError(
                f"{self.label}: measured overhead differs from prediction in {self.failed_fields}",
                self.failed_fields,
            )
        return self

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "passed": self.passed,
            "units": {
                "client": "minibatch SGD steps",
                "server": "aggregate+validate event pairs",
                "c_server": self.c_server,
                "bytes_per_param": BYTES_PER_PARAM,
            },
            "pair_accounting": {
                "extra_aggregations": self.extra_aggregations,
                "extra_validations": self.extra_validations,
                "extra_pairs": self.extra_pairs,
            },
            "checks": [ch.to_dict() for ch in self.checks],
        }


def reconcile(ledger: CostLedger, prediction: OverheadPrediction, baseline: CostLedger,
              c_server: float = SERVER_UNIT, label: str = "") -> ReconciliationReport:
    """Compare ``ledger - baseline`` against ``prediction`` field by field, with zero tolerance.

    Call ``.check()`` on the result to raise on any mismatch.
    """
    extra_agg = ledger.server_aggregations - baseline.server_aggregations
    extra_val = ledger.server_validations - baseline.server_validations
    extra_steps = ledger.total_sgd_steps - baseline.total_sgd_steps
    extra_bytes = ledger.total_bytes - baseline.total_bytes
    # a server unit only exists as a matched (aggregate, validate) pair
    pairs = extra_agg if extra_agg == extra_val else None
    checks = (
        FieldCheck("server_aggregations", extra_agg, prediction.server_units),
        FieldCheck("server_validations", extra_val, prediction.server_units),
        FieldCheck("server_units", pairs, prediction.server_units),
        FieldCheck("client_sgd_steps", extra_steps, prediction.client_steps),
        FieldCheck("traffic_bytes", extra_bytes, prediction.traffic_bytes),
        FieldCheck("comp_units", None if pairs is None else pairs * c_server + extra_steps,
                   prediction.comp_units),
    )
    return ReconciliationReport(label=label, checks=checks, extra_aggregations=extra_agg,
                                extra_validations=extra_val, c_server=c_server)


def measured_reduction(swc: ReconciliationReport, naive: ReconciliationReport) -> Fraction:
    """Measured step-wise / naive computation overhead, as an exact ratio."""
    return Fraction(int(swc.measured_comp_units)) / Fraction(int(naive.measured_comp_units))
