# game/spec.py
"""Convex Markov game data model and validation."""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from utils.errors import ConfigError, SpecValidationError

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
MAX_LISTED_INDICES = 50

# Per-player [n_states, action_counts[i]] matrices.
PolicyProfile = tuple[np.ndarray, ...]
Occupancy = np.ndarray


def _frozen(array, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GameSpec:
    """n-player cMG.

    ``transition`` is indexed ``[s_next, s, a_1, ..., a_n]``.
    """

    n_players: int
    n_states: int
    action_counts: tuple[int, ...]
    transition: np.ndarray
    gamma: float
    mu0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action_counts", tuple(int(a) for a in self.action_counts))
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "mu0", _frozen(self.mu0))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_arrays(cls, transition, gamma: float, mu0) -> "GameSpec":
        transition = np.asarray(transition, dtype=np.float64)
        if transition.ndim < 3:
            raise ConfigError(
                f"transition precisa de pelo menos 3 eixos [s_next, s, a_1...], recebeu {transition.ndim}"
            )
        return cls(
            n_players=transition.ndim - 2,
            n_states=transition.shape[1],
            action_counts=transition.shape[2:],
            transition=transition,
            gamma=gamma,
            mu0=mu0,
        )

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    @property
    def joint_action_shape(self) -> tuple[int, ...]:
        return self.action_counts


@dataclass(frozen=True)
class Violation:
    invariant: str
    message: str
    index: Optional[tuple] = None

    def __str__(self) -> str:
        if self.index is None:
            return self.message
        return f"{self.message} at {self.index}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def add(self, invariant: str, message: str, index: Optional[tuple] = None):
        self.violations.append(Violation(invariant, message, index))

    def messages(self) -> list[str]:
        return [str(v) for v in self.violations]


def _list_bad_indices(report: ValidationReport, invariant: str, mask: np.ndarray, values: np.ndarray, fmt: str):
    bad = np.argwhere(mask)
    for idx in bad[:MAX_LISTED_INDICES]:
        key = tuple(int(k) for k in idx)
        report.add(invariant, fmt.format(value=float(values[key])), key)
    if len(bad) > MAX_LISTED_INDICES:
        report.add(invariant, f"{len(bad) - MAX_LISTED_INDICES} further {invariant} violations omitted")


def validate_spec(spec: GameSpec) -> ValidationReport:
    """Check every GameSpec invariant and report all violations with tensor indices."""
    report = ValidationReport()

    if spec.n_players < 1:
        report.add("n_players", f"n_players must be positive, got {spec.n_players}")
    if spec.n_states < 1:
        report.add("n_states", f"n_states must be positive, got {spec.n_states}")
    if len(spec.action_counts) != spec.n_players:
        report.add(
            "action_counts",
            f"action_counts has {len(spec.action_counts)} entries for {spec.n_players} players",
        )
    for i, count in enumerate(spec.action_counts):
        if count < 1:
            report.add("action_counts", f"player {i} has {count} actions", (i,))

    if not 0.0 <= spec.gamma:
        report.add("gamma", f"gamma must be >= 0, got {spec.gamma}")
    if not spec.gamma < 1.0:
        report.add("gamma", f"gamma strictly less than 1 (got {spec.gamma})")

    expected = (spec.n_states, spec.n_states, *spec.action_counts)
    transition = spec.transition
    if transition.shape != expected:
        report.add(
            "transition_shape",
            f"transition shape {transition.shape} does not match declared counts {expected}",
        )
    elif not np.all(np.isfinite(transition)):
        _list_bad_indices(
            report, "transition_finite", ~np.isfinite(transition), transition, "non-finite transition entry {value}"
        )
    else:
        _list_bad_indices(
            report, "transition_nonnegative", transition < 0.0, transition, "negative transition probability {value}"
        )
        # column index is (s, a_1, ..., a_n); s_next is summed out
        sums = transition.sum(axis=0)
        _list_bad_indices(
            report,
            "transition_stochastic",
            np.abs(sums - 1.0) > STOCHASTIC_TOL,
            sums,
            "transition column sums to {value!r}, expected 1",
        )

    mu0 = spec.mu0
    if mu0.shape != (spec.n_states,):
        report.add("mu0_shape", f"mu0 shape {mu0.shape} does not match n_states={spec.n_states}")
    elif not np.all(np.isfinite(mu0)):
        report.add("mu0_finite", "mu0 has non-finite entries")
    else:
        _list_bad_indices(report, "mu0_nonnegative", mu0 < 0.0, mu0, "negative mu0 entry {value}")
        total = float(mu0.sum())
        if abs(total - 1.0) > STOCHASTIC_TOL:
            report.add("mu0_stochastic", f"mu0 sums to {total!r}, expected 1")

    return report


def check_spec(spec: GameSpec) -> GameSpec:
    report = validate_spec(spec)
    if not report.ok:
        raise SpecValidationError(report.messages())
    return spec


def check_profile_shapes(spec: GameSpec, profile: Sequence[np.ndarray]) -> PolicyProfile:
    """Shape-only profile check used by the occupancy algebra."""
    if len(profile) != spec.n_players:
        raise ConfigError(f"profile has {len(profile)} players, spec has {spec.n_players}")
    out = []
    for i, pi in enumerate(profile):
        pi = np.asarray(pi, dtype=np.float64)
        expected = (spec.n_states, spec.action_counts[i])
        if pi.shape != expected:
            raise ConfigError(f"policy of player {i} has shape {pi.shape}, expected {expected}")
        out.append(pi)
    return tuple(out)


def check_profile(spec: GameSpec, profile: Sequence[np.ndarray], tol: float = STOCHASTIC_TOL) -> PolicyProfile:
    """Full PolicyProfile check: shapes, nonnegative rows summing to 1."""
    profile = check_profile_shapes(spec, profile)
    for i, pi in enumerate(profile):
        if not np.all(np.isfinite(pi)):
            raise ConfigError(f"policy of player {i} has non-finite entries")
        if np.any(pi < 0.0):
            s, a = np.argwhere(pi < 0.0)[0]
            raise ConfigError(f"policy of player {i} is negative at state {s}, action {a}")
        row_err = np.abs(pi.sum(axis=1) - 1.0)
        if np.any(row_err > tol):
            s = int(np.argmax(row_err))
            raise ConfigError(f"policy of player {i} row {s} sums to {pi[s].sum()!r}, expected 1")
    return profile


def uniform_profile(spec: GameSpec) -> PolicyProfile:
    return tuple(np.full((spec.n_states, a), 1.0 / a) for a in spec.action_counts)
