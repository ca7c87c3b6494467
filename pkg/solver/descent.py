# solver/descent.py
"""Projected-gradient loss minimization with annealing, plus the Sim and RR baselines."""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from game.spec import GameSpec
from solver.adam import Adam
from solver.anneal import AnnealSchedule, AnnealState, anneal_step, gates_open
from solver.exploitability import exploitability
from solver.pgl import own_utility_and_gradient, pgl_loss, pgl_loss_and_gradient
from solver.policies import LogitProfile, initial_logits, to_policy
from utils.errors import NumericError

logger = logging.getLogger(__name__)

DEFAULT_STRIDE = 10
SLOPE_STEP = 1e-4


@dataclass
class TraceRow:
    iter: int
    tau: float
    loss: float
    bound: float
    epsilon: Optional[float]
    wallclock_ms: float


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow):
        if self.rows and row.iter <= self.rows[-1].iter:
            raise ValueError(f"iterações do trace devem crescer: {row.iter} depois de {self.rows[-1].iter}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class SolveResult:
    policy: tuple[np.ndarray, ...]
    trace: RunTrace
    logits: LogitProfile
    tau: float
    anneal_events: int = 0
    last_policy: Optional[tuple[np.ndarray, ...]] = None


def _free_players(spec: GameSpec, fixed: dict) -> list[int]:
    return [i for i in range(spec.n_players) if i not in fixed]


def _compose(spec: GameSpec, logits, fixed: dict) -> tuple[np.ndarray, ...]:
    free = to_policy(logits)
    return tuple(np.asarray(fixed[j], dtype=np.float64) if j in fixed else free[j] for j in range(spec.n_players))


def _prepare(spec: GameSpec, init: Optional[Sequence[np.ndarray]], init_style: str, seed: int) -> LogitProfile:
    if init is None:
        return initial_logits(spec, init_style, seed)
    return [np.array(theta, dtype=np.float64, copy=True) for theta in init]


def _exact_epsilon(spec, utilities, profile, players, eps_tol) -> float:
    started = time.monotonic()
    report = exploitability(spec, utilities, profile, tol=eps_tol, players=players)
    logger.info("📏 epsilon exato %.3e (%.0fms)", report.epsilon, (time.monotonic() - started) * 1000)
    return report.epsilon


def pgl_minimize(
    spec: GameSpec,
    utilities,
    init: Optional[Sequence[np.ndarray]],
    schedule: AnnealSchedule,
    lr: float,
    T: int,
    seed: int = 0,
    init_style: str = "zeros",
    stride: int = DEFAULT_STRIDE,
    eps_cadence: int = 0,
    eps_tol: float = 1e-6,
    fixed: Optional[dict] = None,
    on_anneal: Optional[Callable[[int, float], None]] = None,
) -> SolveResult:
    """Adam on the free logits of L^tau with the temperature annealed by ``schedule``.

    ``eps_cadence`` > 0 evaluates the exact exploitability at the first trace
    row after every ``eps_cadence`` anneal events and at the final row.
    """
    if T < 0:
        raise ValueError(f"orçamento de iterações deve ser >= 0, recebido {T}")
    fixed = fixed or {}
    players = _free_players(spec, fixed)
    logits = _prepare(spec, init, init_style, seed)
    optimizer = Adam(lr)
    trace = RunTrace()
    tau = schedule.tau0
    iters_at_tau = 0
    anneal_events = 0
    eps_pending = False
    started = time.monotonic()

    logger.info("🚀 PGL iniciado: T=%d lr=%g schedule=%s tau0=%g", T, lr, schedule.kind, tau)
    for t in range(T):
        try:
            report, grads = pgl_loss_and_gradient(spec, utilities, logits, tau, players=players, fixed=fixed)
        except NumericError as exc:
            raise NumericError(f"PGL abortado na iteração {t}: {exc}", trace=trace) from exc
        if not (math.isfinite(report.total) and all(np.all(np.isfinite(g)) for g in grads)):
            raise NumericError(f"PGL abortado na iteração {t}: loss não finita {report.total}", trace=trace)

        if t % stride == 0:
            epsilon = None
            if eps_pending:
                epsilon = _exact_epsilon(spec, utilities, _compose(spec, logits, fixed), players, eps_tol)
                eps_pending = False
            trace.append(TraceRow(t, tau, report.total, report.bound, epsilon, (time.monotonic() - started) * 1000))
            logger.debug("iter=%d tau=%.4g loss=%.3e bound=%.3e", t, tau, report.total, report.bound)

        free = [i for i in range(spec.n_players) if i not in fixed]
        stepped = optimizer.step([logits[i] for i in free], [grads[i] for i in free])
        for i, theta in zip(free, stepped):
            logits[i] = theta
        iters_at_tau += 1

        if schedule.constant:
            continue
        state = AnnealState(t=t, tau=tau, iters_at_tau=iters_at_tau, last_loss=report.total)
        if schedule.needs_slope and gates_open(schedule, state):
            # forward difference in tau
            profile = _compose(spec, logits, fixed)
            h = SLOPE_STEP * max(tau, schedule.min_temperature)
            here = pgl_loss(spec, utilities, profile, tau, players=players).total
            ahead = pgl_loss(spec, utilities, profile, tau + h, players=players).total
            state.dloss_dtau = (ahead - here) / h
        new_tau = anneal_step(schedule, state)
        if new_tau < tau:
            anneal_events += 1
            logger.info("🌡️ anneal #%d na iteração %d: tau %.4g -> %.4g (loss %.3e)", anneal_events, t, tau, new_tau, report.total)
            tau = new_tau
            iters_at_tau = 0
            if on_anneal is not None:
                on_anneal(t, tau)
            if eps_cadence > 0 and anneal_events % eps_cadence == 0:
                eps_pending = True

    policy = _compose(spec, logits, fixed)
    final = pgl_loss(spec, utilities, policy, tau, players=players)
    if not math.isfinite(final.total):
        raise NumericError(f"PGL abortado no iterado final: loss não finita {final.total}", trace=trace)
    epsilon = _exact_epsilon(spec, utilities, policy, players, eps_tol) if eps_cadence > 0 else None
    trace.append(TraceRow(T, tau, final.total, final.bound, epsilon, (time.monotonic() - started) * 1000))
    logger.info("✅ PGL concluído: loss=%.3e tau=%.4g anneals=%d", final.total, tau, anneal_events)
    logger.info("⏱️ Tempo total: %.2fs", time.monotonic() - started)
    return SolveResult(policy=policy, trace=trace, logits=logits, tau=tau, anneal_events=anneal_events, last_policy=policy)


def _baseline_row(spec, utilities, profile, players, t, started) -> TraceRow:
    report = pgl_loss(spec, utilities, profile, 0.0, players=players)
    return TraceRow(t, 0.0, report.total, report.bound, None, (time.monotonic() - started) * 1000)


def _descent(spec, utilities, init, lr, T, seed, init_style, stride, fixed, cyclic: bool) -> SolveResult:
    if T < 0:
        raise ValueError(f"orçamento de iterações deve ser >= 0, recebido {T}")
    fixed = fixed or {}
    players = _free_players(spec, fixed)
    logits = _prepare(spec, init, init_style, seed)
    optimizers = {i: Adam(lr) for i in players}
    trace = RunTrace()
    started = time.monotonic()
    running = [np.zeros_like(pi) for pi in _compose(spec, logits, fixed)]
    name = "RR" if cyclic else "Sim"

    logger.info("🚀 descida %s iniciada: T=%d lr=%g", name, T, lr)
    for t in range(T):
        if t % stride == 0:
            trace.append(_baseline_row(spec, utilities, _compose(spec, logits, fixed), players, t, started))
        try:
            if cyclic:
                for i in players:
                    _, grad = own_utility_and_gradient(spec, utilities, logits, i, fixed=fixed)
                    logits[i] = optimizers[i].step([logits[i]], [-grad])[0]
            else:
                grads = {i: own_utility_and_gradient(spec, utilities, logits, i, fixed=fixed)[1] for i in players}
                for i in players:
                    logits[i] = optimizers[i].step([logits[i]], [-grads[i]])[0]
        except NumericError as exc:
            raise NumericError(f"descida {name} abortada na iteração {t}: {exc}", trace=trace) from exc
        if not all(np.all(np.isfinite(logits[i])) for i in players):
            raise NumericError(f"descida {name} abortada na iteração {t}: logits não finitos", trace=trace)
        for j, pi in enumerate(_compose(spec, logits, fixed)):
            running[j] += pi

    last = _compose(spec, logits, fixed)
    if T == 0:
        average = last
    else:
        average = tuple(r / r.sum(axis=1, keepdims=True) for r in running)
    result_policy = last if cyclic else average
    trace.append(_baseline_row(spec, utilities, result_policy, players, T, started))
    logger.info("✅ descida %s concluída em %.2fs", name, time.monotonic() - started)
    return SolveResult(policy=result_policy, trace=trace, logits=logits, tau=0.0, last_policy=last)


def sim_descent(
    spec: GameSpec,
    utilities,
    init: Optional[Sequence[np.ndarray]],
    lr: float,
    T: int,
    seed: int = 0,
    init_style: str = "zeros",
    stride: int = DEFAULT_STRIDE,
    fixed: Optional[dict] = None,
) -> SolveResult:
    """Every player ascends its own utility at once; returns the running-average policy."""
    return _descent(spec, utilities, init, lr, T, seed, init_style, stride, fixed, cyclic=False)


def rr_descent(
    spec: GameSpec,
    utilities,
    init: Optional[Sequence[np.ndarray]],
    lr: float,
    T: int,
    seed: int = 0,
    init_style: str = "zeros",
    stride: int = DEFAULT_STRIDE,
    fixed: Optional[dict] = None,
) -> SolveResult:
    """Players ascend one at a time in cyclic order; one round per iteration."""
    return _descent(spec, utilities, init, lr, T, seed, init_style, stride, fixed, cyclic=True)
