import numpy as np

from game.spec import GameSpec
from solver.anneal import AnnealSchedule


def make_random_spec(rng, n_players=2, n_states=3, actions=(2, 2), gamma=0.9) -> GameSpec:
    shape = (n_states, n_states, *actions)
    transition = rng.random(shape) + 0.05
    transition /= transition.sum(axis=0, keepdims=True)
    mu0 = rng.random(n_states) + 0.1
    return GameSpec(
        n_players=n_players,
        n_states=n_states,
        action_counts=tuple(actions),
        transition=transition,
        gamma=gamma,
        mu0=mu0 / mu0.sum(),
    )


def make_random_profile(rng, spec: GameSpec, floor: float = 0.05):
    profile = []
    for a in spec.action_counts:
        pi = rng.random((spec.n_states, a)) + floor
        profile.append(pi / pi.sum(axis=1, keepdims=True))
    return tuple(profile)


def single_state_spec(n_actions=2, gamma=0.9) -> GameSpec:
    return GameSpec.from_arrays(np.ones((1, 1, n_actions)), gamma, np.ones(1))


def default_schedule(defaults) -> AnnealSchedule:
    return AnnealSchedule(
        kind=defaults.anneal,
        tau0=defaults.tau0,
        min_temperature=defaults.min_tau,
        loss_threshold=defaults.loss_gate,
    )
