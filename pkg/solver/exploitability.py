# solver/exploitability.py
"""Exact exploitability via Frank-Wolfe over the occupancy polytope.

The linear oracle over a player's occupancy polytope (opponents fixed) is a
single-agent MDP solve; its deterministic greedy policy gives a vertex.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from game.occupancy import all_occupancies, marginal_kernel
from game.spec import GameSpec, check_profile_shapes
from game.utilities import is_quadratic, reward_vector, utility_gradient, utility_hvp, utility_value
from utils.errors import NumericError
from utils.validation import validate_player_index

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 100_000
DEFAULT_STALL_ITERS = 2_000
GRAD_FLOOR = 1e-12
TIE_TOL = 1e-12
VI_RESIDUAL = 1e-12
GOLDEN_POINTS = 20
NEWTON_STEPS = 8
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


# ============================================================
# Linear oracle
# ============================================================


def _greedy(q: np.ndarray) -> np.ndarray:
    """Lowest action index within TIE_TOL of the row maximum."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - TIE_TOL, axis=1)


def _evaluate(kernel: np.ndarray, reward: np.ndarray, actions: np.ndarray, gamma: float) -> np.ndarray:
    n = kernel.shape[0]
    states = np.arange(n)
    p_pi = kernel[:, states, actions]  # [s_next, s]
    r_pi = reward[states, actions]
    return np.linalg.solve(np.eye(n) - gamma * p_pi.T, r_pi)


def _q_values(kernel: np.ndarray, reward: np.ndarray, value: np.ndarray, gamma: float) -> np.ndarray:
    return reward + gamma * np.einsum("xsa,x->sa", kernel, value, optimize=True)


def solve_linear_mdp(
    kernel: np.ndarray, reward: np.ndarray, gamma: float, method: str = "value_iteration", max_iters: int = 100_000
) -> np.ndarray:
    """Greedy deterministic policy (action per state) of the MDP (kernel [s', s, a], reward [s, a])."""
    n_states = kernel.shape[1]
    scale = max(1.0, float(np.abs(reward).max()))
    value = np.zeros(n_states)

    if method == "value_iteration":
        for _ in range(max_iters):
            updated = _q_values(kernel, reward, value, gamma).max(axis=1)
            residual = float(np.abs(updated - value).max())
            value = updated
            if residual <= VI_RESIDUAL * scale:
                break
    elif method != "policy_iteration":
        raise ValueError(f"unknown MDP method '{method}'")

    # exact policy evaluation until the greedy policy is stable
    actions = _greedy(_q_values(kernel, reward, value, gamma))
    for _ in range(max(10, 4 * n_states * kernel.shape[2])):
        value = _evaluate(kernel, reward, actions, gamma)
        updated = _greedy(_q_values(kernel, reward, value, gamma))
        if np.array_equal(updated, actions):
            break
        actions = updated
    return actions


def deterministic_occupancy(kernel: np.ndarray, actions: np.ndarray, gamma: float, mu0: np.ndarray) -> np.ndarray:
    n_states, _, n_actions = kernel.shape
    states = np.arange(n_states)
    p_pi = kernel[:, states, actions]
    d = (1.0 - gamma) * np.linalg.solve(np.eye(n_states) - gamma * p_pi, mu0)
    mu = np.zeros((n_states, n_actions))
    mu[states, actions] = np.maximum(d, 0.0)
    return mu


def linear_best_response(
    spec: GameSpec,
    profile: Sequence[np.ndarray],
    i: int,
    reward_vec: np.ndarray,
    mu0: Optional[np.ndarray] = None,
    method: str = "value_iteration",
) -> np.ndarray:
    """argmax over player i's occupancy polytope of reward_vec^T mu."""
    validate_player_index(i, spec.n_players)
    kernel = marginal_kernel(spec, profile, i)
    start = spec.mu0 if mu0 is None else np.asarray(mu0, dtype=np.float64)
    actions = solve_linear_mdp(kernel, np.asarray(reward_vec, dtype=np.float64), spec.gamma, method)
    return deterministic_occupancy(kernel, actions, spec.gamma, start)


# ============================================================
# Frank-Wolfe best response
# ============================================================


@dataclass
class BestResponseResult:
    mu: np.ndarray
    utility: float
    gap: float
    iterations: int
    certified: bool


class _ActiveSet:
    """Convex weights over visited atoms (the start point and oracle vertices)."""

    def __init__(self, start: np.ndarray):
        self.atoms: list[np.ndarray] = [start]
        self.keys: list[Optional[bytes]] = [None]
        self.weights: list[float] = [1.0]

    def add(self, vertex: np.ndarray) -> int:
        key = np.round(vertex, 14).tobytes()
        for k, existing in enumerate(self.keys):
            if existing == key:
                return k
        self.atoms.append(vertex)
        self.keys.append(key)
        self.weights.append(0.0)
        return len(self.atoms) - 1

    def toward(self, k: int, step: float):
        self.weights = [(1.0 - step) * w for w in self.weights]
        self.weights[k] += step
        self._prune()

    def away(self, k: int, step: float):
        self.weights = [(1.0 + step) * w for w in self.weights]
        self.weights[k] -= step
        self._prune()

    def _prune(self):
        keep = [k for k, w in enumerate(self.weights) if w > 1e-15]
        self.atoms = [self.atoms[k] for k in keep]
        self.keys = [self.keys[k] for k in keep]
        self.weights = [self.weights[k] for k in keep]


def _golden(phi, max_step: float) -> tuple[float, float, float, float]:
    lo, hi = 0.0, max_step
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = phi(x1), phi(x2)
    for _ in range(GOLDEN_POINTS - 2):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = phi(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = phi(x1)
    return x1, f1, x2, f2


def _line_search(phi, slope_at, curvature_at, max_step: float, default: float, quadratic: bool) -> float:
    """Step in [0, max_step] maximizing the concave phi.

    Exact for quadratic phi. Otherwise a golden-section bracket, polished by
    safeguarded Newton steps, competes with the open-loop step ``default``.
    """
    if quadratic:
        slope, curvature = slope_at(0.0), curvature_at(0.0)
        if curvature < 0.0:
            return float(np.clip(-slope / curvature, 0.0, max_step))
        return max_step if slope > 0.0 else 0.0

    x1, f1, x2, f2 = _golden(phi, max_step)
    default = min(default, max_step)
    candidates = [(0.0, phi(0.0)), (x1, f1), (x2, f2), (max_step, phi(max_step)), (default, phi(default))]
    eta, best = max(candidates, key=lambda c: c[1])
    for _ in range(NEWTON_STEPS):
        curvature = curvature_at(eta)
        if not curvature < 0.0:
            break
        trial = float(np.clip(eta - slope_at(eta) / curvature, 0.0, max_step))
        value = phi(trial)
        if not value > best:
            break
        eta, best = trial, value
    return eta


def best_response(
    spec: GameSpec,
    utilities,
    profile: Sequence[np.ndarray],
    i: int,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    tau: float = 0.0,
    mu0: Optional[np.ndarray] = None,
    stall_iters: int = DEFAULT_STALL_ITERS,
    method: str = "policy_iteration",
) -> BestResponseResult:
    """Maximize player i's utility over its occupancy polytope with the opponents fixed.

    Away-step Frank-Wolfe from the profile's own occupancy. The returned gap
    bounds ``max u - utility`` from above.
    """
    validate_player_index(i, spec.n_players)
    profile = check_profile_shapes(spec, profile)
    terms = utilities[i]
    start_dist = spec.mu0 if mu0 is None else np.asarray(mu0, dtype=np.float64)
    r_vec = reward_vector(spec, terms, profile, i)
    quadratic = is_quadratic(terms)

    def value(mu):
        return utility_value(terms, mu, r_vec, tau)

    mu = all_occupancies(spec, profile, start_dist)[i]
    active = _ActiveSet(mu.copy())
    current = value(mu)
    best_seen = current
    since_improvement = 0
    gap = np.inf

    for k in range(max_iters):
        grad = utility_gradient(terms, np.maximum(mu, GRAD_FLOOR), r_vec, tau)
        vertex = linear_best_response(spec, profile, i, grad, start_dist, method=method)
        toward_dir = vertex - mu
        gap = float(np.sum(grad * toward_dir))
        if gap <= tol:
            return BestResponseResult(mu=mu, utility=current, gap=max(gap, 0.0), iterations=k, certified=True)

        away_scores = [float(np.sum(grad * (mu - atom))) for atom in active.atoms]
        away_k = int(np.argmax(away_scores))
        use_away = away_scores[away_k] > gap and len(active.atoms) > 1
        if use_away:
            direction = mu - active.atoms[away_k]
            weight = active.weights[away_k]
            max_step = weight / (1.0 - weight) if weight < 1.0 else 1.0
        else:
            direction = toward_dir
            max_step = 1.0

        def slope_at(eta, base=mu, direction=direction):
            point = np.maximum(base + eta * direction, GRAD_FLOOR)
            return float(np.sum(utility_gradient(terms, point, r_vec, tau) * direction))

        def curvature_at(eta, base=mu, direction=direction):
            point = np.maximum(base + eta * direction, GRAD_FLOOR)
            return float(np.sum(direction * utility_hvp(terms, point, direction, tau)))

        step = _line_search(
            lambda eta: value(mu + eta * direction),
            slope_at,
            curvature_at,
            max_step,
            2.0 / (k + 2.0),
            quadratic,
        )
        if step > 0.0:
            mu = mu + step * direction
            if use_away:
                active.away(away_k, step)
            else:
                active.toward(active.add(vertex), step)
            current = value(mu)

        if current > best_seen + 1e-15:
            best_seen = current
            since_improvement = 0
        else:
            since_improvement += 1
        if since_improvement >= stall_iters:
            logger.debug("Frank-Wolfe stalled for player %d after %d iterations (gap %.3e)", i, k + 1, gap)
            return BestResponseResult(mu=mu, utility=current, gap=gap, iterations=k + 1, certified=False)

    logger.warning("⚠️ Frank-Wolfe hit max_iters=%d for player %d with gap %.3e", max_iters, i, gap)
    return BestResponseResult(mu=mu, utility=current, gap=gap, iterations=max_iters, certified=False)


# ============================================================
# Exploitability
# ============================================================


@dataclass
class ExploitabilityReport:
    per_player: list[float]
    epsilon: float
    upper: list[float]
    certified: list[bool]
    utilities: list[float] = field(default_factory=list)


def exploitability(
    spec: GameSpec,
    utilities,
    profile: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    tau: float = 0.0,
    mu0: Optional[np.ndarray] = None,
    players: Optional[Sequence[int]] = None,
) -> ExploitabilityReport:
    """eps_i = max u_i - u_i(mu_i(profile)); eps = max_i eps_i."""
    profile = check_profile_shapes(spec, profile)
    start_dist = spec.mu0 if mu0 is None else np.asarray(mu0, dtype=np.float64)
    occupancies = all_occupancies(spec, profile, start_dist)
    chosen = range(spec.n_players) if players is None else sorted(players)

    per_player, upper, certified, achieved = [], [], [], []
    for i in chosen:
        terms = utilities[i]
        r_vec = reward_vector(spec, terms, profile, i)
        own = utility_value(terms, occupancies[i], r_vec, tau)
        result = best_response(spec, utilities, profile, i, tol=tol, max_iters=max_iters, tau=tau, mu0=start_dist)
        eps_i = result.utility - own
        if eps_i < -tol:
            raise NumericError(f"best response for player {i} is worse than the profile by {-eps_i:.3e}")
        per_player.append(max(eps_i, 0.0))
        upper.append(max(eps_i, 0.0) + result.gap)
        certified.append(result.certified)
        achieved.append(own)
        if not result.certified:
            logger.warning("⚠️ best response of player %d not certified (gap %.3e)", i, result.gap)

    return ExploitabilityReport(
        per_player=per_player,
        epsilon=max(per_player) if per_player else 0.0,
        upper=upper,
        certified=certified,
        utilities=achieved,
    )


@dataclass
class PerStateReport:
    per_state: np.ndarray  # [S], max over players
    per_state_player: np.ndarray  # [S, n_players]
    epsilon: float
    certified: bool


def per_state_exploitability(
    spec: GameSpec,
    utilities,
    profile: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    tau: float = 0.0,
    players: Optional[Sequence[int]] = None,
) -> PerStateReport:
    """Exploitability with mu0 replaced by each point mass."""
    rows = []
    certified = True
    for s in range(spec.n_states):
        point = np.zeros(spec.n_states)
        point[s] = 1.0
        report = exploitability(spec, utilities, profile, tol=tol, max_iters=max_iters, tau=tau, mu0=point, players=players)
        rows.append(report.per_player)
        certified = certified and all(report.certified)
    table = np.asarray(rows, dtype=np.float64)
    per_state = table.max(axis=1)
    return PerStateReport(per_state=per_state, per_state_player=table, epsilon=float(per_state.max()), certified=certified)
