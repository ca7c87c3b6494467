# solver/pgl.py
"""Projected-gradient loss over occupancy measures and its policy gradient.

For each player the regularized utility gradient g_i is projected onto the
null space of the Bellman-flow matrix A(pi_-i). The loss is the sum of the
squared projected norms; its gradient with respect to the free logits is
computed in reverse mode through the projection, the kernels, the state
occupancy solve and the softmax.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from game.occupancy import OccupancySolve, contract_players, flow_matrix_from_kernel, marginal_kernel, solve_occupancy
from game.spec import GameSpec
from game.utilities import (
    LinearReward,
    annealed_terms,
    reward_vector,
    utility_gradient,
    utility_hvp,
    utility_value,
)
from solver.policies import softmax_vjp, to_policy
from utils.errors import NumericError

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-14
MU_FLOOR = 1e-12


def tangent_projection(A: np.ndarray) -> np.ndarray:
    """Pi = I - A^T (A A^T)^{-1} A via a Cholesky factorization of A A^T."""
    A = np.asarray(A, dtype=np.float64)
    gram = A @ A.T
    smallest = float(np.linalg.eigvalsh(gram).min())
    if smallest < EIGEN_TOL:
        raise NumericError(
            f"A A^T is near-singular (smallest eigenvalue {smallest:.3e}, shape {A.shape})"
        )
    factor = linalg.cho_factor(gram, check_finite=False)
    return np.eye(A.shape[1]) - A.T @ linalg.cho_solve(factor, A, check_finite=False)


def entropy_bound_scale(spec: GameSpec) -> float:
    return math.log(spec.n_states * spec.max_actions)


def exploitability_bound(spec: GameSpec, tau: float, loss: float) -> float:
    """tau log(|S| max_i |A_i|) + sqrt(2 n L)."""
    return tau * entropy_bound_scale(spec) + math.sqrt(2.0 * spec.n_players * max(loss, 0.0))


@dataclass
class LossReport:
    total: float
    norms: list[float]
    tau: float
    bound: float
    projected: list[np.ndarray] = field(default_factory=list, repr=False)


@dataclass
class _PlayerPass:
    terms: tuple
    kernel: np.ndarray
    mu: np.ndarray
    gradient: np.ndarray
    lam: np.ndarray
    projected: np.ndarray


def _total_reward(spec: GameSpec, terms) -> Optional[np.ndarray]:
    total = None
    for term in terms:
        if isinstance(term, LinearReward):
            total = term.reward if total is None else total + term.reward
    return total


def _player_pass(spec: GameSpec, terms, profile, occ: OccupancySolve, i: int, tau: float) -> _PlayerPass:
    kernel = marginal_kernel(spec, profile, i)
    flow = flow_matrix_from_kernel(kernel, spec.gamma, spec.mu0)
    mu = np.maximum(occ.state[:, None] * profile[i], MU_FLOOR)
    grad = utility_gradient(terms, mu, reward_vector(spec, terms, profile, i), tau).ravel()
    A = flow.matrix
    gram = A @ A.T
    smallest = float(np.linalg.eigvalsh(gram).min())
    if smallest < EIGEN_TOL:
        raise NumericError(f"flow matrix of player {i} lost row rank (eigenvalue {smallest:.3e})")
    factor = linalg.cho_factor(gram, check_finite=False)
    lam = linalg.cho_solve(factor, A @ grad, check_finite=False)
    projected = grad - A.T @ lam
    return _PlayerPass(terms=terms, kernel=kernel, mu=mu, gradient=grad, lam=lam, projected=projected)


def _forward(spec, utilities, profile, tau, players):
    occ = solve_occupancy(spec, profile)
    passes = {}
    for i in players:
        passes[i] = _player_pass(spec, annealed_terms(utilities[i]), profile, occ, i, tau)
    return occ, passes


def _report(spec, passes, tau) -> LossReport:
    norms = []
    projected = []
    for i in sorted(passes):
        v = passes[i].projected
        norms.append(float(np.linalg.norm(v)))
        projected.append(v)
    total = float(sum(n * n for n in norms))
    return LossReport(total=total, norms=norms, tau=tau, bound=exploitability_bound(spec, tau, total), projected=projected)


def _resolve_players(spec: GameSpec, players: Optional[Sequence[int]]) -> list[int]:
    return list(range(spec.n_players)) if players is None else sorted(players)


def pgl_loss(
    spec: GameSpec,
    utilities,
    profile: Sequence[np.ndarray],
    tau: float,
    players: Optional[Sequence[int]] = None,
) -> LossReport:
    """L^tau = sum_i ||Pi_i grad u_i^tau(mu_i)||^2 over ``players`` (default all)."""
    profile = tuple(np.asarray(p, dtype=np.float64) for p in profile)
    _, passes = _forward(spec, utilities, profile, tau, _resolve_players(spec, players))
    return _report(spec, passes, tau)


def _pair_kernel_vjp(spec: GameSpec, profile, i: int, j: int, upstream_k: np.ndarray) -> np.ndarray:
    """Pull dL/dK_i[s', s, a_i] back to pi_j[s, b] for an opponent j."""
    factors = {k: profile[k] for k in range(spec.n_players) if k not in (i, j)}
    pair = contract_players(spec.transition, factors, spec.n_players, lead=1)
    if i < j:
        return np.einsum("xsab,xsa->sb", pair, upstream_k, optimize=True)
    return np.einsum("xsba,xsa->sb", pair, upstream_k, optimize=True)


def _reward_vjp(spec: GameSpec, reward: np.ndarray, profile, i: int, j: int, upstream_r: np.ndarray) -> np.ndarray:
    factors = {k: profile[k] for k in range(spec.n_players) if k not in (i, j)}
    factors[i] = upstream_r
    return contract_players(reward, factors, spec.n_players, lead=0)


def _occupancy_vjp(spec: GameSpec, profile, occ: OccupancySolve, upstream_d: np.ndarray, grads: list[np.ndarray]):
    """Accumulate dL/dpi_j from dL/dd through d = (1 - gamma)(I - gamma P^pi)^{-1} mu0."""
    y = occ.solve(upstream_d, transpose=True)
    upstream_p = spec.gamma * np.outer(y, occ.state)
    for j in range(spec.n_players):
        kernel_j = marginal_kernel(spec, profile, j)
        grads[j] += np.einsum("xs,xsb->sb", upstream_p, kernel_j, optimize=True)


def pgl_loss_and_gradient(
    spec: GameSpec,
    utilities,
    logits: Sequence[np.ndarray],
    tau: float,
    players: Optional[Sequence[int]] = None,
    fixed: Optional[dict] = None,
) -> tuple[LossReport, list[np.ndarray]]:
    """Loss and its exact gradient with respect to every player's free logits.

    ``fixed`` maps player index to a policy matrix that replaces that player's
    softmax; fixed players get a zero logit gradient. ``tau`` is a constant.
    """
    fixed = fixed or {}
    free_profile = to_policy(logits)
    profile = tuple(fixed.get(j, free_profile[j]) for j in range(spec.n_players))
    active = _resolve_players(spec, players)
    occ, passes = _forward(spec, utilities, profile, tau, active)
    report = _report(spec, passes, tau)

    n_states = spec.n_states
    policy_grads = [np.zeros_like(pi) for pi in profile]
    upstream_d = np.zeros(n_states)

    for i, ps in passes.items():
        a_i = spec.action_counts[i]
        upstream_g = 2.0 * ps.projected
        upstream_k = 2.0 * spec.gamma * np.outer(ps.lam, ps.projected).reshape(n_states, n_states, a_i)
        upstream_mu = utility_hvp(ps.terms, ps.mu, upstream_g.reshape(n_states, a_i), tau)

        reward = _total_reward(spec, ps.terms)
        for j in range(spec.n_players):
            if j == i:
                continue
            policy_grads[j] += _pair_kernel_vjp(spec, profile, i, j, upstream_k)
            if reward is not None:
                policy_grads[j] += _reward_vjp(spec, reward, profile, i, j, upstream_g.reshape(n_states, a_i))

        policy_grads[i] += occ.state[:, None] * upstream_mu
        upstream_d += np.sum(upstream_mu * profile[i], axis=1)

    _occupancy_vjp(spec, profile, occ, upstream_d, policy_grads)

    logit_grads = []
    for j, theta in enumerate(logits):
        if j in fixed:
            logit_grads.append(np.zeros_like(np.asarray(theta, dtype=np.float64)))
        else:
            logit_grads.append(softmax_vjp(profile[j], policy_grads[j]))
    return report, logit_grads


def pgl_loss_gradient(spec: GameSpec, utilities, logits: Sequence[np.ndarray], tau: float, **kwargs) -> list[np.ndarray]:
    return pgl_loss_and_gradient(spec, utilities, logits, tau, **kwargs)[1]


def own_utility_and_gradient(
    spec: GameSpec, utilities, logits: Sequence[np.ndarray], i: int, tau: float = 0.0, fixed: Optional[dict] = None
) -> tuple[float, np.ndarray]:
    """u_i(mu_i(pi), pi_-i) and its gradient with respect to player i's own free logits."""
    fixed = fixed or {}
    free_profile = to_policy(logits)
    profile = tuple(fixed.get(j, free_profile[j]) for j in range(spec.n_players))
    occ = solve_occupancy(spec, profile)
    terms = utilities[i]
    mu = np.maximum(occ.state[:, None] * profile[i], MU_FLOOR)
    r_vec = reward_vector(spec, terms, profile, i)
    value = utility_value(terms, mu, r_vec, tau)
    upstream_mu = utility_gradient(terms, mu, r_vec, tau)

    grads = [np.zeros_like(pi) for pi in profile]
    grads[i] += occ.state[:, None] * upstream_mu
    upstream_d = np.sum(upstream_mu * profile[i], axis=1)
    y = occ.solve(upstream_d, transpose=True)
    upstream_p = spec.gamma * np.outer(y, occ.state)
    grads[i] += np.einsum("xs,xsb->sb", upstream_p, marginal_kernel(spec, profile, i), optimize=True)
    return value, softmax_vjp(profile[i], grads[i])
