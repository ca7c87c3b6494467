# game/domains.py
"""Built-in domains: iterated normal-form games, safety grid worlds, imitation."""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from game.occupancy import all_occupancies, player_occupancy
from game.spec import GameSpec, check_spec
from game.utilities import (
    FairnessPenalty,
    HingePenalty,
    InfNormSafety,
    KLPenalty,
    LinearReward,
    UtilitySpec,
    check_utilities,
    reward_vector,
    utility_value,
)
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

ITERATED_GAMMA = 0.99
REF_FLOOR = 1e-9

# ============================================================
# Catalog entry
# ============================================================


@dataclass(frozen=True)
class SolverDefaults:
    lr: float
    anneal: Optional[int]  # None means constant temperature
    iters: int
    tau0: float = 1.0
    init: str = "zeros"  # "zeros" | "normal"
    min_tau: float = 1e-2
    loss_gate: Optional[float] = 1e-1  # None anneals on the iteration count alone


@dataclass(frozen=True)
class DomainCatalogEntry:
    name: str
    spec: GameSpec
    utilities: UtilitySpec
    defaults: SolverDefaults
    description: str = ""
    state_labels: tuple[str, ...] = ()
    action_labels: tuple[tuple[str, ...], ...] = ()
    reference: dict = field(default_factory=dict)
    metrics: dict[str, Callable] = field(default_factory=dict)
    fixed_players: dict[int, np.ndarray] = field(default_factory=dict)


# ============================================================
# Iterated normal-form games
# ============================================================


def build_iterated_nfg(payoffs: Sequence[np.ndarray], n_players: int, gamma: float = ITERATED_GAMMA) -> GameSpec:
    """Markov game whose state is the previous joint action.

    ``payoffs[i]`` has shape ``[A_1, ..., A_n]``. States enumerate joint actions
    in row-major order (player 1 most significant) and mu0 is uniform.
    """
    if len(payoffs) != n_players:
        raise ConfigError(f"expected {n_players} payoff tensors, got {len(payoffs)}")
    shape = np.shape(payoffs[0])
    if len(shape) != n_players:
        raise ConfigError(f"payoff tensor has {len(shape)} axes for {n_players} players")
    for i, payoff in enumerate(payoffs):
        if np.shape(payoff) != shape:
            raise ConfigError(f"payoff tensor of player {i} has shape {np.shape(payoff)}, expected {shape}")

    n_states = int(np.prod(shape))
    transition = np.zeros((n_states, n_states, *shape))
    for joint in itertools.product(*(range(a) for a in shape)):
        s_next = int(np.ravel_multi_index(joint, shape))
        transition[(s_next, slice(None), *joint)] = 1.0
    spec = GameSpec.from_arrays(transition, gamma, np.full(n_states, 1.0 / n_states))
    return check_spec(spec)


def iterated_rewards(payoffs: Sequence[np.ndarray], n_states: int) -> list[np.ndarray]:
    """Per-player reward tensors [S, A_1..A_n] that ignore the state."""
    return [np.broadcast_to(np.asarray(p, dtype=np.float64), (n_states, *np.shape(p))).copy() for p in payoffs]


def _joint_state_labels(action_labels: Sequence[Sequence[str]]) -> tuple[str, ...]:
    return tuple("".join(combo) for combo in itertools.product(*action_labels))


def ipd_payoffs() -> list[np.ndarray]:
    # raw (-1,-1), (-3,0), (0,-3), (-2,-2) shifted by 3 and divided by 3
    row = np.array([[2.0 / 3.0, 0.0], [1.0, 1.0 / 3.0]])
    return [row, row.T.copy()]


def bach_stravinsky_payoffs() -> list[np.ndarray]:
    return [np.array([[3.0, 0.0], [0.0, 2.0]]), np.array([[2.0, 0.0], [0.0, 3.0]])]


def ipgg_payoffs(n_players: int = 3, multiplier: float = 1.3, endowment: float = 1.0) -> list[np.ndarray]:
    """Profit of contributing all (1) or none (0) of a unit endowment."""
    shape = (2,) * n_players
    payoffs = [np.zeros(shape) for _ in range(n_players)]
    for joint in itertools.product((0, 1), repeat=n_players):
        pot = multiplier * endowment * sum(joint)
        for i in range(n_players):
            payoffs[i][joint] = pot / n_players - endowment * joint[i]
    return payoffs


def elfarol_payoffs(n_players: int = 3, capacity: int = 3) -> list[np.ndarray]:
    """Action 0 stays home (1), action 1 goes out: 2 if fewer than ``capacity`` attend, else 0."""
    shape = (2,) * n_players
    payoffs = [np.zeros(shape) for _ in range(n_players)]
    for joint in itertools.product((0, 1), repeat=n_players):
        attendance = sum(joint)
        for i in range(n_players):
            if joint[i] == 0:
                payoffs[i][joint] = 1.0
            else:
                payoffs[i][joint] = 2.0 if attendance < capacity else 0.0
    return payoffs


def _iterated_entry(name, payoffs, action_labels, defaults, description, reference=None, extra_terms=None, metrics=None):
    n_players = len(payoffs)
    spec = build_iterated_nfg(payoffs, n_players)
    rewards = iterated_rewards(payoffs, spec.n_states)
    utilities = []
    for i in range(n_players):
        terms = [LinearReward(rewards[i])]
        if extra_terms is not None:
            terms.extend(extra_terms(i, spec))
        utilities.append(tuple(terms))
    return DomainCatalogEntry(
        name=name,
        spec=spec,
        utilities=check_utilities(spec, utilities),
        defaults=defaults,
        description=description,
        state_labels=_joint_state_labels(action_labels),
        action_labels=tuple(tuple(a) for a in action_labels),
        reference=reference or {},
        metrics={"mean_utility": mean_utility, **(metrics or {})},
    )


def build_ipd() -> DomainCatalogEntry:
    return _iterated_entry(
        "ipd",
        ipd_payoffs(),
        [("C", "D"), ("C", "D")],
        SolverDefaults(lr=1e-1, anneal=1, iters=8000),
        "Iterated prisoner's dilemma, normalized payoffs, entropy annealing",
        # regularized fixed points play CD and DC alike; the DC entry is not reachable
        reference={"argmax": ["C", "D", "C", "D"], "utility": 0.47},
    )


def build_ipgg() -> DomainCatalogEntry:
    labels = [("N", "A")] * 3
    return _iterated_entry(
        "ipgg",
        ipgg_payoffs(),
        labels,
        SolverDefaults(lr=1e-1, anneal=1, iters=8000),
        "Iterated public goods game, 3 players, multiplier 1.3, profits",
        reference={"argmax": ["N", "N", "N", "A", "N", "A", "A", "A"], "utility": 0.03},
    )


def build_elfarol() -> DomainCatalogEntry:
    labels = [("H", "B")] * 3
    return _iterated_entry(
        "elfarol",
        elfarol_payoffs(),
        labels,
        SolverDefaults(lr=1e-1, anneal=1, iters=8000),
        "Iterated El Farol bar, 3 players, bar crowded at 3",
    )


def build_bach_stravinsky() -> DomainCatalogEntry:
    return _iterated_entry(
        "bach-stravinsky",
        bach_stravinsky_payoffs(),
        [("B", "S"), ("B", "S")],
        SolverDefaults(lr=1e-1, anneal=1, iters=1000),
        "Iterated Bach-Stravinsky coordination game",
    )


def build_bach_stravinsky_fair(weight: float = 1.0) -> DomainCatalogEntry:
    labels = [("B", "S"), ("B", "S")]
    state_labels = _joint_state_labels(labels)
    s_plus, s_minus = state_labels.index("BB"), state_labels.index("SS")
    return _iterated_entry(
        "bach-stravinsky-fair",
        bach_stravinsky_payoffs(),
        labels,
        SolverDefaults(lr=1e-1, anneal=None, iters=1000, tau0=0.0, init="normal"),
        "Bach-Stravinsky with a quadratic penalty on unequal BB/SS attendance",
        reference={"favored_probability": 0.60, "favored_action": [0, 1]},
        extra_terms=lambda i, spec: [FairnessPenalty(s_plus=s_plus, s_minus=s_minus, weight=weight)],
        metrics={
            "attendance_gap": lambda entry, profile: attendance_gap(entry, profile, s_plus, s_minus),
            "favored_probability": favored_probability,
        },
    )


# ============================================================
# Imitation
# ============================================================

HUMAN_IPD_POLICY = {
    # state: probability of cooperating for the player who moved first in the label
    "CC": 0.86,
    "CD": 1.0 - 0.65,
    "DC": 1.0 - 0.55,
    "DD": 1.0 - 0.87,
}


def human_ipd_profile() -> tuple[np.ndarray, np.ndarray]:
    """Symmetric human profile; player 2 at (a1, a2) acts like player 1 at (a2, a1)."""
    labels = ("CC", "CD", "DC", "DD")
    p1 = np.array([[HUMAN_IPD_POLICY[s], 1.0 - HUMAN_IPD_POLICY[s]] for s in labels])
    p2 = np.array([[HUMAN_IPD_POLICY[s[::-1]], 1.0 - HUMAN_IPD_POLICY[s[::-1]]] for s in labels])
    return p1, p2


def reference_occupancy(spec: GameSpec, profile, i: int, floor: float = REF_FLOOR) -> np.ndarray:
    mu = np.maximum(player_occupancy(spec, profile, i), floor)
    return mu / mu.sum()


def build_imitation_ipd() -> DomainCatalogEntry:
    base = build_ipd()
    human = human_ipd_profile()
    utilities = []
    for i, terms in enumerate(base.utilities):
        utilities.append(tuple(terms) + (KLPenalty(mu_ref=reference_occupancy(base.spec, human, i), tau=None),))
    return DomainCatalogEntry(
        name="ipd-imitation",
        spec=base.spec,
        utilities=check_utilities(base.spec, utilities),
        defaults=SolverDefaults(lr=1e-2, anneal=1, iters=8000, min_tau=1e-4),
        description="IPD with an annealed KL penalty towards human play",
        state_labels=base.state_labels,
        action_labels=base.action_labels,
        reference={"utility": 0.48, "human_utility": 0.46, "human_state_epsilon": 0.047},
        metrics=dict(base.metrics),
    )


# ============================================================
# Safety grid worlds
# ============================================================

SYNTHETIC_TARGET_ACTIONS = (0.52, 0.48)
SYNTHETIC_TARGET_STATES = (0.6, 0.4)


def synthetic_safety_transition(epsilon: float = 0.0) -> np.ndarray:
    """Swap states iff both players coordinate on action 0."""
    transition = np.zeros((2, 2, 2, 2))
    transition[1, 0, 0, 0] = 1 - epsilon
    transition[1, 0, 0, 1] = epsilon
    transition[1, 0, 1, 0] = epsilon
    transition[1, 0, 1, 1] = 0
    transition[0, 1, 0, 0] = 1 - epsilon
    transition[0, 1, 0, 1] = epsilon
    transition[0, 1, 1, 0] = epsilon
    transition[0, 1, 1, 1] = 0
    transition[0, 0, :, :] = 1 - transition[1, 0, :, :]
    transition[1, 1, :, :] = 1 - transition[0, 1, :, :]
    return transition


def synthetic_opponent_policy() -> np.ndarray:
    return np.array([[0.40, 0.60], [0.80, 0.20]])


def build_synthetic_safety(
    t_a: Sequence[float] = SYNTHETIC_TARGET_ACTIONS,
    t_s: Sequence[float] = SYNTHETIC_TARGET_STATES,
    fix_opponent: bool = False,
) -> DomainCatalogEntry:
    spec = check_spec(GameSpec.from_arrays(synthetic_safety_transition(), 0.95, np.full(2, 0.5)))
    zero = np.zeros((spec.n_states, *spec.action_counts))
    utilities = [
        (LinearReward(zero), InfNormSafety(t_a=np.asarray(t_a), t_s=np.asarray(t_s))),
        (LinearReward(zero), InfNormSafety(t_a=np.asarray(t_a), t_s=np.asarray(t_s))),
    ]
    return DomainCatalogEntry(
        name="synthetic-safety",
        spec=spec,
        utilities=check_utilities(spec, utilities),
        defaults=SolverDefaults(lr=1e-1, anneal=2, iters=8000),
        description="2-state coordination game with inf-norm safety losses, no rewards",
        state_labels=("s0", "s1"),
        action_labels=(("a0", "a1"), ("a0", "a1")),
        reference={"epsilon": 0.0},
        metrics={"safety_violation": safety_violation, "mean_utility": mean_utility},
        fixed_players={1: synthetic_opponent_policy()} if fix_opponent else {},
    )


WAREHOUSE_PARAMS = {
    "p_reset": 1.0,
    "p_drop_alone_slow": 0.7,
    "p_drop_alone_fast": 0.8,
    "p_low": 0.2,
    "p_mid": 0.5,
    "p_high": 0.8,
}
WAREHOUSE_STATES = ("pickup-pickup", "pickup-dropoff", "dropoff-pickup", "dropoff-dropoff")
JOINT_PICKUP = 0
FAST = 1


def warehouse_reward() -> np.ndarray:
    """[player, s, a_1, a_2]; +1 for a slow drop-off, +2 for a fast one."""
    reward = np.zeros((2, 4, 2, 2))
    reward[1, 1, :, 0] = 1.0
    reward[1, 1, :, 1] = 2.0
    reward[0, 2, 0, :] = 1.0
    reward[0, 2, 1, :] = 2.0
    reward[0, 3, 0, :] = 1.0
    reward[0, 3, 1, :] = 2.0
    reward[1, 3, :, 0] = 1.0
    reward[1, 3, :, 1] = 2.0
    return reward


def _complement(transition: np.ndarray, s_next: int, s: int):
    for a1, a2 in itertools.product(range(2), range(2)):
        value = 1.0 - transition[:, s, a1, a2].sum()
        transition[s_next, s, a1, a2] = 0.0 if abs(value) < 1e-15 else value


def warehouse_transition(params: Optional[dict] = None) -> np.ndarray:
    p = {**WAREHOUSE_PARAMS, **(params or {})}
    p_reset, slow, fast = p["p_reset"], p["p_drop_alone_slow"], p["p_drop_alone_fast"]
    p_low, p_mid, p_high = p["p_low"], p["p_mid"], p["p_high"]
    t = np.zeros((4, 4, 2, 2))

    # s'=0 (pickup, pickup); the s=0 column is completed last
    t[0, 1, 0, :] = (1.0 - slow) * p_reset
    t[0, 1, 1, :] = (1.0 - fast) * p_reset
    t[0, 2, :, 0] = p_reset * (1.0 - slow)
    t[0, 2, :, 1] = p_reset * (1.0 - fast)
    t[0, 3, :, :] = p_reset

    # s'=1 (pickup, dropoff)
    t[1, 0, 0, 0] = (1 - p_mid) * p_mid
    t[1, 0, 0, 1] = p_high
    t[1, 0, 1, 0] = p_low
    t[1, 0, 1, 1] = p_low
    t[1, 1, 0, :] = (1 - slow) * (1.0 - p_reset)
    t[1, 1, 1, :] = (1 - fast) * (1.0 - p_reset)
    t[1, 2, :, 0] = p_reset * slow
    t[1, 2, :, 1] = p_reset * fast
    t[1, 3, :, :] = p_reset * (1.0 - p_reset)

    # s'=2 (dropoff, pickup)
    t[2, 0, 0, 0] = p_mid * (1 - p_mid)
    t[2, 0, 0, 1] = p_low
    t[2, 0, 1, 0] = p_high
    t[2, 0, 1, 1] = p_low
    t[2, 1, 0, :] = slow * p_reset
    t[2, 1, 1, :] = fast * p_reset
    t[2, 2, :, 0] = (1.0 - p_reset) * (1.0 - slow)
    t[2, 2, :, 1] = (1.0 - p_reset) * (1.0 - fast)
    t[2, 3, :, :] = (1.0 - p_reset) * p_reset

    # s'=3 (dropoff, dropoff)
    t[3, 0, 0, 0] = p_mid
    t[3, 0, 0, 1] = p_low
    t[3, 0, 1, 0] = p_low
    t[3, 0, 1, 1] = p_low
    for s in (1, 2, 3):
        _complement(t, 3, s)
    _complement(t, 0, 0)

    # Mixed speeds at (pickup, pickup) can push the leaving mass past 1; the
    # derived self-loop is then negative. Clip it and renormalize the column.
    negative = t < 0.0
    if np.any(negative):
        for idx in np.argwhere(negative):
            logger.warning("⚠️ transição do warehouse %s = %.3f truncada em 0", tuple(int(k) for k in idx), t[tuple(idx)])
        t = np.maximum(t, 0.0)
        t = t / t.sum(axis=0, keepdims=True)
    return t


def build_warehouse(with_safety: bool = False, params: Optional[dict] = None) -> DomainCatalogEntry:
    spec = check_spec(GameSpec.from_arrays(warehouse_transition(params), ITERATED_GAMMA, np.full(4, 0.25)))
    reward = warehouse_reward()
    utilities = []
    for i in range(2):
        terms = [LinearReward(reward[i])]
        if with_safety:
            terms.append(HingePenalty(state=JOINT_PICKUP, action=FAST, threshold=0.10, weight=100.0))
        utilities.append(tuple(terms))
    name = "warehouse-safe" if with_safety else "warehouse"
    return DomainCatalogEntry(
        name=name,
        spec=spec,
        utilities=check_utilities(spec, utilities),
        # plain warehouse anneals on the iteration count alone
        defaults=SolverDefaults(lr=1e-2, anneal=2, iters=8000, loss_gate=0.1 if with_safety else None),
        description="Two robots sharing a pickup cell" + (", fast-at-pickup penalty" if with_safety else ""),
        state_labels=WAREHOUSE_STATES,
        action_labels=(("slow", "fast"), ("slow", "fast")),
        reference={"fast_frequency": 0.42 if with_safety else 0.69, "epsilon": 3.4e-2 if with_safety else 1e-3},
        metrics={"fast_frequency_at_joint_pickup": fast_frequency_at_joint_pickup, "mean_utility": mean_utility},
    )


# ============================================================
# Metrics
# ============================================================


def mean_utility(entry: DomainCatalogEntry, profile) -> list[float]:
    """Per-player utility at temperature 0."""
    occupancies = all_occupancies(entry.spec, profile)
    return [
        utility_value(terms, occupancies[i], reward_vector(entry.spec, terms, profile, i), tau=0.0)
        for i, terms in enumerate(entry.utilities)
    ]


def attendance_gap(entry: DomainCatalogEntry, profile, s_plus: int, s_minus: int) -> float:
    occupancies = all_occupancies(entry.spec, profile)
    return max(abs(float(mu[s_plus].sum() - mu[s_minus].sum())) for mu in occupancies)


def favored_probability(entry: DomainCatalogEntry, profile) -> list[list[float]]:
    favored = entry.reference.get("favored_action", [0] * len(profile))
    return [[float(p) for p in np.asarray(pi)[:, favored[i]]] for i, pi in enumerate(profile)]


def fast_frequency_at_joint_pickup(entry: DomainCatalogEntry, profile) -> list[float]:
    return [float(np.asarray(pi)[JOINT_PICKUP, FAST]) for pi in profile]


def safety_violation(entry: DomainCatalogEntry, profile) -> list[list[float]]:
    occupancies = all_occupancies(entry.spec, profile)
    out = []
    for mu, terms in zip(occupancies, entry.utilities):
        for term in terms:
            if isinstance(term, InfNormSafety):
                out.append([max(0.0, v) for v in term.excesses(mu)])
    return out


# ============================================================
# Catalog
# ============================================================

CATALOG: dict[str, Callable[[], DomainCatalogEntry]] = {
    "ipd": build_ipd,
    "ipd-imitation": build_imitation_ipd,
    "ipgg": build_ipgg,
    "elfarol": build_elfarol,
    "bach-stravinsky": build_bach_stravinsky,
    "bach-stravinsky-fair": build_bach_stravinsky_fair,
    "synthetic-safety": build_synthetic_safety,
    "warehouse": lambda: build_warehouse(with_safety=False),
    "warehouse-safe": lambda: build_warehouse(with_safety=True),
}


def domain_names() -> list[str]:
    return sorted(CATALOG)


def get_domain(name: str, **overrides) -> DomainCatalogEntry:
    if name not in CATALOG:
        raise ConfigError(f"Domínio desconhecido: '{name}' (disponíveis: {', '.join(domain_names())})")
    if overrides:
        if name != "synthetic-safety":
            raise ConfigError(f"domain '{name}' takes no options")
        return build_synthetic_safety(**overrides)
    return CATALOG[name]()
