# game/occupancy.py
"""Occupancy-measure linear algebra for convex Markov games."""
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from game.spec import GameSpec, PolicyProfile, check_profile_shapes
from utils.errors import NumericError
from utils.validation import validate_player_index

logger = logging.getLogger(__name__)

RANK_TOL = 1e-9
ZERO_MASS_TOL = 1e-12
_PIVOT_TOL = 1e-14


def contract_players(tensor: np.ndarray, factors: Mapping[int, np.ndarray], n_players: int, lead: int) -> np.ndarray:
    """Contract per-player action axes of ``tensor`` against state-indexed factors.

    ``tensor`` has shape ``[*lead_axes, S, A_1, ..., A_n]``; each factor is an
    ``[S, A_j]`` matrix sharing the state axis. Players without a factor keep
    their action axis, in player order, after the state axis.
    """
    state_axis = lead
    operands: list = [tensor, list(range(tensor.ndim))]
    for j, factor in sorted(factors.items()):
        operands += [factor, [state_axis, lead + 1 + j]]
    kept = [lead + 1 + j for j in range(n_players) if j not in factors]
    return np.einsum(*operands, list(range(lead + 1)) + kept, optimize=True)


def joint_kernel(spec: GameSpec, profile: Sequence[np.ndarray]) -> np.ndarray:
    """P^pi[s_next, s] = sum_a P(s_next | s, a) prod_j pi_j(a_j | s)."""
    profile = check_profile_shapes(spec, profile)
    return contract_players(spec.transition, dict(enumerate(profile)), spec.n_players, lead=1)


def marginal_kernel(spec: GameSpec, profile: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Player i's kernel [s_next, s, a_i] with opponents marginalized out."""
    validate_player_index(i, spec.n_players)
    profile = check_profile_shapes(spec, profile)
    factors = {j: pi for j, pi in enumerate(profile) if j != i}
    return contract_players(spec.transition, factors, spec.n_players, lead=1)


@dataclass(frozen=True)
class OccupancySolve:
    """Factorized resolvent ``I - gamma P^pi`` and the state occupancy it yields."""

    kernel: np.ndarray
    lu: tuple
    state: np.ndarray
    gamma: float

    def solve(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        return linalg.lu_solve(self.lu, rhs, trans=1 if transpose else 0, check_finite=False)


def solve_occupancy(spec: GameSpec, profile: Sequence[np.ndarray], mu0: np.ndarray | None = None) -> OccupancySolve:
    kernel = joint_kernel(spec, profile)
    n = spec.n_states
    resolvent = np.eye(n) - spec.gamma * kernel
    if not np.all(np.isfinite(resolvent)):
        raise NumericError("I - gamma P^pi has non-finite entries")
    lu, piv = linalg.lu_factor(resolvent, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < _PIVOT_TOL:
        raise NumericError(
            f"I - gamma P^pi is singular (min pivot {pivots.min():.3e}, gamma={spec.gamma})"
        )
    start = spec.mu0 if mu0 is None else np.asarray(mu0, dtype=np.float64)
    state = (1.0 - spec.gamma) * linalg.lu_solve((lu, piv), start, check_finite=False)
    if not np.all(np.isfinite(state)):
        raise NumericError("state occupancy solve produced non-finite values")
    return OccupancySolve(kernel=kernel, lu=(lu, piv), state=np.maximum(state, 0.0), gamma=spec.gamma)


def state_occupancy(spec: GameSpec, profile: Sequence[np.ndarray], mu0: np.ndarray | None = None) -> np.ndarray:
    """(1 - gamma) [I - gamma P^pi]^{-1} mu0."""
    return solve_occupancy(spec, profile, mu0).state


def player_occupancy(
    spec: GameSpec, profile: Sequence[np.ndarray], i: int, mu0: np.ndarray | None = None
) -> np.ndarray:
    validate_player_index(i, spec.n_players)
    profile = check_profile_shapes(spec, profile)
    d = state_occupancy(spec, profile, mu0)
    return d[:, None] * profile[i]


def all_occupancies(spec: GameSpec, profile: PolicyProfile, mu0: np.ndarray | None = None) -> list[np.ndarray]:
    d = state_occupancy(spec, profile, mu0)
    return [d[:, None] * np.asarray(pi) for pi in profile]


@dataclass(frozen=True)
class FlowMatrix:
    """Bellman-flow equality ``matrix @ mu_i.ravel() == rhs``; columns follow ``(s, a_i)`` row-major."""

    matrix: np.ndarray
    rhs: np.ndarray

    def residual(self, mu: np.ndarray) -> float:
        return float(np.max(np.abs(self.matrix @ np.ravel(mu) - self.rhs)))

    def smallest_singular_value(self) -> float:
        return float(linalg.svdvals(self.matrix).min())

    def certify_rank(self, tol: float = RANK_TOL) -> "FlowMatrix":
        sigma = self.smallest_singular_value()
        if sigma <= tol:
            raise NumericError(f"flow matrix lost row rank (smallest singular value {sigma:.3e})")
        return self


def flow_matrix_from_kernel(kernel_i: np.ndarray, gamma: float, mu0: np.ndarray) -> FlowMatrix:
    n_states, _, n_actions = kernel_i.shape
    identity = np.broadcast_to(np.eye(n_states)[:, :, None], kernel_i.shape)
    matrix = (identity - gamma * kernel_i).reshape(n_states, n_states * n_actions)
    return FlowMatrix(matrix=matrix, rhs=(1.0 - gamma) * np.asarray(mu0, dtype=np.float64))


def flow_matrix(spec: GameSpec, profile: Sequence[np.ndarray], i: int, mu0: np.ndarray | None = None) -> FlowMatrix:
    """A(pi_{-i}): block for action a_i is I - gamma P_i(.|., a_i)."""
    start = spec.mu0 if mu0 is None else mu0
    return flow_matrix_from_kernel(marginal_kernel(spec, profile, i), spec.gamma, start)


def policy_from_occupancy(mu: np.ndarray) -> np.ndarray:
    """pi(a|s) = mu(s,a) / sum_a' mu(s,a'); uniform at states without mass."""
    mu = np.asarray(mu, dtype=np.float64)
    mass = mu.sum(axis=1, keepdims=True)
    uniform = np.full_like(mu, 1.0 / mu.shape[1])
    positive = mass > ZERO_MASS_TOL
    safe_mass = np.where(positive, mass, 1.0)
    return np.where(positive, mu / safe_mass, uniform)


def d_occupancy_d_policy(spec: GameSpec, profile: Sequence[np.ndarray], i: int, j: int) -> np.ndarray:
    """Jacobian d mu_i(x, y) / d pi_j(x', y') as a ``[S, A_i, S, A_j]`` tensor.

    Direct term ``delta_ij delta(x,x') delta(y,y') d(x)`` plus the resolvent term
    ``pi_i(x,y) * gamma * sum_s' R[x,s'] K_j[s',x',y'] d(x')`` with
    ``R = [I - gamma P^pi]^{-1}``.
    """
    validate_player_index(i, spec.n_players)
    validate_player_index(j, spec.n_players)
    profile = check_profile_shapes(spec, profile)
    occ = solve_occupancy(spec, profile)
    n = spec.n_states
    d = occ.state
    kernel_j = marginal_kernel(spec, profile, j)
    a_j = spec.action_counts[j]

    resolvent_k = occ.solve(kernel_j.reshape(n, n * a_j)).reshape(n, n, a_j)
    dd = spec.gamma * resolvent_k * d[None, :, None]
    jac = profile[i][:, :, None, None] * dd[:, None, :, :]

    if i == j:
        a_i = spec.action_counts[i]
        for x in range(n):
            jac[x, np.arange(a_i), x, np.arange(a_i)] += d[x]
    return jac
