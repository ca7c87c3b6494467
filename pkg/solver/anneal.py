# solver/anneal.py
"""Temperature schedules for projected-gradient loss minimization.

Type 1: tau = 10^-floor(t / 1000).
Type 2: tau <- 0.8 tau.
Type 3: tau <- tau + 0.1 * L / min(dL/dtau, -L).
Constant: tau never changes.

A Type 1-3 step only happens after at least ``min_iters_per_temp``
iterations at the current temperature and once the loss is at most
``loss_threshold`` (None drops the loss requirement). Results are clamped to ``min_temperature`` and never
exceed the current temperature.
"""
import math
from dataclasses import dataclass
from typing import Optional

SCHEDULE_TYPES = (1, 2, 3)
_DENOM_TOL = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    kind: Optional[int] = 1  # None means constant
    tau0: float = 1.0
    ratio: float = 0.8
    step_scale: float = 0.1
    min_temperature: float = 1e-2
    min_iters_per_temp: int = 50
    loss_threshold: Optional[float] = 1e-1

    def __post_init__(self):
        if self.kind is not None and self.kind not in SCHEDULE_TYPES:
            raise ValueError(f"anneal type must be one of {SCHEDULE_TYPES} or None, got {self.kind}")
        if self.tau0 < 0:
            raise ValueError(f"tau0 must be >= 0, got {self.tau0}")

    @property
    def constant(self) -> bool:
        return self.kind is None

    @property
    def needs_slope(self) -> bool:
        return self.kind == 3


@dataclass
class AnnealState:
    t: int
    tau: float
    iters_at_tau: int
    last_loss: float
    dloss_dtau: Optional[float] = None


def gates_open(schedule: AnnealSchedule, state: AnnealState) -> bool:
    if state.iters_at_tau < schedule.min_iters_per_temp:
        return False
    return schedule.loss_threshold is None or state.last_loss <= schedule.loss_threshold


def anneal_step(schedule: AnnealSchedule, state: AnnealState) -> float:
    tau = state.tau
    if schedule.constant or not gates_open(schedule, state):
        return tau

    if schedule.kind == 1:
        proposed = 10.0 ** (-math.floor(state.t / 1000))
    elif schedule.kind == 2:
        proposed = schedule.ratio * tau
    else:
        if state.dloss_dtau is None:
            return tau
        denom = min(state.dloss_dtau, -state.last_loss)
        if abs(denom) < _DENOM_TOL:
            return tau
        proposed = tau + schedule.step_scale * state.last_loss / denom

    return min(tau, max(proposed, schedule.min_temperature))
