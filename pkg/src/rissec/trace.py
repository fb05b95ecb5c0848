"""Per-iteration run records shared by the optimizers and the harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Tuple


@dataclass
class TraceRow:
    iteration: int
    bound_objective: float
    true_wmsr: float
    zeta: float
    wall_ms: float


@dataclass
class RunTrace:
    rows: List[TraceRow] = field(default_factory=list)
    status: str = "running"
    iterations: int = 0
    total_ms: float = 0.0
    flags: List[str] = field(default_factory=list)
    # (iteration, block, objective before, objective after) at fixed zeta and aux
    blocks: List[Tuple[int, str, float, float]] = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._t0) * 1e3

    def record(self, bound: float, true_wmsr: float, zeta: float) -> TraceRow:
        row = TraceRow(len(self.rows) + 1, float(bound), float(true_wmsr), float(zeta), self.elapsed_ms())
        self.rows.append(row)
        self.iterations = row.iteration
        return row

    def finish(self, status: str) -> "RunTrace":
        self.status = status
        self.total_ms = self.elapsed_ms()
        return self

    def flag(self, message: str) -> None:
        self.flags.append(message)
