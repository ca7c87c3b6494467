# game/utilities.py
"""Concave utility terms over a player's own occupancy.

A player's utility is the sum of its terms. The linear part enters through
``r_vec`` (the expected reward against the opponents' policies), every other
term is a function of the player's own occupancy ``mu`` of shape ``[S, A_i]``.
Entropy and KL weights set to ``None`` follow the solver's live temperature.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from game.occupancy import contract_players
from game.spec import GameSpec, check_profile_shapes
from utils.errors import ConfigError
from utils.validation import validate_player_index


def _entropy(mu: np.ndarray) -> float:
    positive = mu[mu > 0.0]
    return float(-np.sum(positive * np.log(positive)))


@dataclass(frozen=True)
class LinearReward:
    reward: np.ndarray  # [S, A_1, ..., A_n]

    def __post_init__(self):
        reward = np.array(self.reward, dtype=np.float64, copy=True)
        reward.setflags(write=False)
        object.__setattr__(self, "reward", reward)


@dataclass(frozen=True)
class EntropyBonus:
    tau: Optional[float] = None

    def __post_init__(self):
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"EntropyBonus tau must be >= 0, got {self.tau}")

    def weight(self, live_tau: float) -> float:
        return live_tau if self.tau is None else self.tau

    def value(self, mu, live_tau):
        return self.weight(live_tau) * _entropy(mu)

    def gradient(self, mu, live_tau):
        weight = self.weight(live_tau)
        if weight == 0.0:
            return np.zeros_like(mu)
        return weight * (-np.log(mu) - 1.0)

    def hvp(self, mu, vec, live_tau):
        weight = self.weight(live_tau)
        if weight == 0.0:
            return np.zeros_like(mu)
        return -weight * vec / mu


@dataclass(frozen=True)
class KLPenalty:
    mu_ref: np.ndarray
    tau: Optional[float] = None

    def __post_init__(self):
        mu_ref = np.array(self.mu_ref, dtype=np.float64, copy=True)
        if mu_ref.ndim != 2:
            raise ConfigError(f"KLPenalty mu_ref must be [S, A_i], got shape {mu_ref.shape}")
        if not np.all(mu_ref > 0.0):
            s, a = np.argwhere(~(mu_ref > 0.0))[0]
            raise ConfigError(f"KLPenalty mu_ref must be strictly positive, zero at state {s}, action {a}")
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"KLPenalty tau must be >= 0, got {self.tau}")
        mu_ref.setflags(write=False)
        object.__setattr__(self, "mu_ref", mu_ref)

    def weight(self, live_tau: float) -> float:
        return live_tau if self.tau is None else self.tau

    def value(self, mu, live_tau):
        positive = mu > 0.0
        kl = np.sum(mu[positive] * np.log(mu[positive] / self.mu_ref[positive]))
        return -self.weight(live_tau) * float(kl)

    def gradient(self, mu, live_tau):
        weight = self.weight(live_tau)
        if weight == 0.0:
            return np.zeros_like(mu)
        return -weight * (np.log(mu / self.mu_ref) + 1.0)

    def hvp(self, mu, vec, live_tau):
        weight = self.weight(live_tau)
        if weight == 0.0:
            return np.zeros_like(mu)
        return -weight * vec / mu


@dataclass(frozen=True)
class FairnessPenalty:
    s_plus: int
    s_minus: int
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError(f"FairnessPenalty weight must be >= 0, got {self.weight}")

    def gap(self, mu) -> float:
        return float(mu[self.s_plus].sum() - mu[self.s_minus].sum())

    def _direction(self, mu):
        direction = np.zeros_like(mu)
        direction[self.s_plus] += 1.0
        direction[self.s_minus] -= 1.0
        return direction

    def value(self, mu, live_tau):
        return -self.weight * self.gap(mu) ** 2

    def gradient(self, mu, live_tau):
        return -2.0 * self.weight * self.gap(mu) * self._direction(mu)

    def hvp(self, mu, vec, live_tau):
        direction = self._direction(mu)
        return -2.0 * self.weight * float(np.sum(direction * vec)) * direction


@dataclass(frozen=True)
class HingePenalty:
    state: int
    action: int
    threshold: float
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError(f"HingePenalty weight must be >= 0, got {self.weight}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"HingePenalty threshold must be in [0, 1], got {self.threshold}")

    def overshoot(self, mu) -> float:
        return float(mu[self.state, self.action] - self.threshold)

    def value(self, mu, live_tau):
        return -self.weight * max(0.0, self.overshoot(mu))

    def gradient(self, mu, live_tau):
        grad = np.zeros_like(mu)
        # zero subgradient at the kink
        if self.overshoot(mu) > 0.0:
            grad[self.state, self.action] = -self.weight
        return grad

    def hvp(self, mu, vec, live_tau):
        return np.zeros_like(mu)


@dataclass(frozen=True)
class InfNormSafety:
    """-(max(0, |mu_a - t_a|_inf - r_a) + max(0, |mu_s - t_s|_inf - r_s)).

    ``mu_a`` is the action marginal (sum over states), ``mu_s`` the state
    marginal (sum over actions).
    """

    t_a: np.ndarray
    t_s: np.ndarray
    r_a: float = 1.0 / 20.0
    r_s: float = 1.0 / 4.0

    def __post_init__(self):
        for name in ("t_a", "t_s"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if arr.ndim != 1:
                raise ConfigError(f"InfNormSafety {name} must be a vector, got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.r_a < 0 or self.r_s < 0:
            raise ConfigError("InfNormSafety radii must be >= 0")

    def excesses(self, mu) -> tuple[float, float]:
        dev_a = np.abs(mu.sum(axis=0) - self.t_a)
        dev_s = np.abs(mu.sum(axis=1) - self.t_s)
        return float(dev_a.max() - self.r_a), float(dev_s.max() - self.r_s)

    def value(self, mu, live_tau):
        over_a, over_s = self.excesses(mu)
        return -(max(0.0, over_a) + max(0.0, over_s))

    def gradient(self, mu, live_tau):
        grad = np.zeros_like(mu)
        diff_a = mu.sum(axis=0) - self.t_a
        diff_s = mu.sum(axis=1) - self.t_s
        over_a, over_s = self.excesses(mu)
        if over_a > 0.0:
            k = int(np.argmax(np.abs(diff_a)))
            grad[:, k] -= np.sign(diff_a[k])
        if over_s > 0.0:
            k = int(np.argmax(np.abs(diff_s)))
            grad[k, :] -= np.sign(diff_s[k])
        return grad

    def hvp(self, mu, vec, live_tau):
        return np.zeros_like(mu)


UtilityTerm = Union[LinearReward, EntropyBonus, KLPenalty, FairnessPenalty, HingePenalty, InfNormSafety]
# Per-player tuple of terms.
UtilitySpec = tuple[tuple[UtilityTerm, ...], ...]

TERM_KINDS = {
    "linear_reward": LinearReward,
    "entropy": EntropyBonus,
    "kl_ref": KLPenalty,
    "fairness_pair": FairnessPenalty,
    "hinge": HingePenalty,
    "infnorm_safety": InfNormSafety,
}
KIND_OF = {cls: kind for kind, cls in TERM_KINDS.items()}


def _own_terms(terms: Sequence[UtilityTerm]):
    return [t for t in terms if not isinstance(t, LinearReward)]


def has_live_regularizer(terms: Sequence[UtilityTerm]) -> bool:
    return any(isinstance(t, (EntropyBonus, KLPenalty)) and t.tau is None for t in terms)


def is_quadratic(terms: Sequence[UtilityTerm]) -> bool:
    """True when the utility restricted to any segment is a polynomial of degree <= 2."""
    return all(isinstance(t, (LinearReward, FairnessPenalty)) for t in terms)


def expected_reward_vector(spec: GameSpec, reward: np.ndarray, profile: Sequence[np.ndarray], i: int) -> np.ndarray:
    """r_i(pi_{-i})[s, a_i] = E_{a_-i ~ pi_-i}[r_i(s, a_i, a_-i)]."""
    validate_player_index(i, spec.n_players)
    profile = check_profile_shapes(spec, profile)
    reward = np.asarray(reward, dtype=np.float64)
    expected = (spec.n_states, *spec.action_counts)
    if reward.shape != expected:
        raise ConfigError(f"reward shape {reward.shape} does not match {expected}")
    factors = {j: pi for j, pi in enumerate(profile) if j != i}
    return contract_players(reward, factors, spec.n_players, lead=0)


def reward_vector(spec: GameSpec, terms: Sequence[UtilityTerm], profile: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Sum of the expected reward vectors of every LinearReward term."""
    r_vec = np.zeros((spec.n_states, spec.action_counts[i]))
    for term in terms:
        if isinstance(term, LinearReward):
            r_vec = r_vec + expected_reward_vector(spec, term.reward, profile, i)
    return r_vec


def utility_value(terms: Sequence[UtilityTerm], mu_i: np.ndarray, r_vec: np.ndarray, tau: float = 0.0) -> float:
    mu_i = np.asarray(mu_i, dtype=np.float64)
    total = float(np.sum(r_vec * mu_i))
    for term in _own_terms(terms):
        total += term.value(mu_i, tau)
    return total


def utility_gradient(terms: Sequence[UtilityTerm], mu_i: np.ndarray, r_vec: np.ndarray, tau: float = 0.0) -> np.ndarray:
    mu_i = np.asarray(mu_i, dtype=np.float64)
    grad = np.array(r_vec, dtype=np.float64, copy=True)
    for term in _own_terms(terms):
        grad = grad + term.gradient(mu_i, tau)
    return grad


def utility_hvp(terms: Sequence[UtilityTerm], mu_i: np.ndarray, vec: np.ndarray, tau: float = 0.0) -> np.ndarray:
    """Hessian-vector product of the own-occupancy terms (the Hessian is symmetric)."""
    out = np.zeros_like(mu_i, dtype=np.float64)
    for term in _own_terms(terms):
        out = out + term.hvp(mu_i, vec, tau)
    return out


def annealed_terms(terms: Sequence[UtilityTerm]) -> tuple:
    """Terms of u_i^tau: live entropy/KL terms carry tau; otherwise +tau H is appended."""
    terms = tuple(terms)
    if has_live_regularizer(terms):
        return terms
    return terms + (EntropyBonus(tau=None),)


def check_utilities(spec: GameSpec, utilities: Sequence[Sequence[UtilityTerm]]) -> UtilitySpec:
    if len(utilities) != spec.n_players:
        raise ConfigError(f"utilities list {len(utilities)} players, spec has {spec.n_players}")
    out = []
    for i, terms in enumerate(utilities):
        own_shape = (spec.n_states, spec.action_counts[i])
        for term in terms:
            if isinstance(term, LinearReward):
                expected = (spec.n_states, *spec.action_counts)
                if term.reward.shape != expected:
                    raise ConfigError(f"player {i}: reward shape {term.reward.shape}, expected {expected}")
            elif isinstance(term, KLPenalty):
                if term.mu_ref.shape != own_shape:
                    raise ConfigError(f"player {i}: mu_ref shape {term.mu_ref.shape}, expected {own_shape}")
            elif isinstance(term, FairnessPenalty):
                for s in (term.s_plus, term.s_minus):
                    if not 0 <= s < spec.n_states:
                        raise ConfigError(f"player {i}: fairness state {s} out of range")
            elif isinstance(term, HingePenalty):
                if not (0 <= term.state < spec.n_states and 0 <= term.action < spec.action_counts[i]):
                    raise ConfigError(f"player {i}: hinge cell ({term.state}, {term.action}) out of range")
            elif isinstance(term, InfNormSafety):
                if term.t_a.shape != (spec.action_counts[i],) or term.t_s.shape != (spec.n_states,):
                    raise ConfigError(f"player {i}: infnorm targets do not match the player's shape {own_shape}")
            elif not isinstance(term, EntropyBonus):
                raise ConfigError(f"player {i}: unknown utility term {type(term).__name__}")
        out.append(tuple(terms))
    return tuple(out)
