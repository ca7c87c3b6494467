import itertools

import numpy as np
import pytest

from game.domains import get_domain
from game.occupancy import marginal_kernel, player_occupancy
from game.utilities import EntropyBonus, FairnessPenalty, LinearReward, expected_reward_vector
from solver.exploitability import (
    best_response,
    deterministic_occupancy,
    exploitability,
    linear_best_response,
    per_state_exploitability,
)
from tests.helpers import make_random_profile, make_random_spec, single_state_spec


def _enumerate_deterministic(spec, profile, i, reward_vec):
    kernel = marginal_kernel(spec, profile, i)
    best = -np.inf
    for actions in itertools.product(range(spec.action_counts[i]), repeat=spec.n_states):
        mu = deterministic_occupancy(kernel, np.array(actions), spec.gamma, spec.mu0)
        best = max(best, float(np.sum(reward_vec * mu)))
    return best


@pytest.mark.parametrize("method", ["value_iteration", "policy_iteration"])
def test_linear_best_response_matches_enumeration(rng, method):
    for _ in range(5):
        spec = make_random_spec(rng, n_states=3, actions=(3, 2))
        profile = make_random_profile(rng, spec)
        reward_vec = rng.normal(size=(3, 3))
        mu = linear_best_response(spec, profile, 0, reward_vec, method=method)
        assert float(np.sum(reward_vec * mu)) == pytest.approx(
            _enumerate_deterministic(spec, profile, 0, reward_vec), abs=1e-10
        )
        assert mu.sum() == pytest.approx(1.0)


def test_zero_reward_game_has_zero_exploitability(rng):
    spec = make_random_spec(rng)
    utilities = [(LinearReward(np.zeros((3, 2, 2))),) for _ in range(2)]
    report = exploitability(spec, utilities, make_random_profile(rng, spec))
    assert report.epsilon == 0.0
    assert all(report.certified)


def _grid_maximum(utility, steps=2001):
    grid = np.linspace(1e-9, 1.0 - 1e-9, steps)
    return max(utility(p) for p in grid)


def test_frank_wolfe_gap_on_entropy_bandit():
    spec = single_state_spec(n_actions=2)
    utilities = [(LinearReward(np.array([[0.3, 0.0]])), EntropyBonus(tau=0.2))]

    def utility(p):
        return 0.3 * p + 0.2 * -(p * np.log(p) + (1 - p) * np.log(1 - p))

    result = best_response(spec, utilities, [np.array([[0.5, 0.5]])], 0)

    assert result.certified
    assert result.utility >= _grid_maximum(utility) - 1e-6
    assert result.utility <= 0.2 * np.log(np.exp(1.5) + 1.0) + 1e-9


def test_frank_wolfe_certifies_concave_two_state_problem(rng):
    spec = make_random_spec(rng, n_players=1, n_states=2, actions=(2,))
    reward = 0.3 * rng.normal(size=(2, 2))
    utilities = [(LinearReward(reward), EntropyBonus(tau=0.2), FairnessPenalty(s_plus=0, s_minus=1, weight=0.5))]

    result = best_response(spec, utilities, make_random_profile(rng, spec), 0)

    # brute force over stationary policies, one mixing weight per state
    best = -np.inf
    for p0 in np.linspace(0.001, 0.999, 121):
        for p1 in np.linspace(0.001, 0.999, 121):
            pi = np.array([[p0, 1 - p0], [p1, 1 - p1]])
            mu = player_occupancy(spec, (pi,), 0)
            r_vec = expected_reward_vector(spec, reward, (pi,), 0)
            value = float(np.sum(r_vec * mu)) - 0.2 * np.sum(mu * np.log(mu)) - 0.5 * (mu[0].sum() - mu[1].sum()) ** 2
            best = max(best, value)

    assert result.certified
    assert result.utility >= best - 1e-6
    assert best <= result.utility + result.gap + 1e-9
    assert result.utility <= best + 1e-2


def test_ipd_all_defect_is_an_equilibrium():
    entry = get_domain("ipd")
    defect = np.tile([0.0, 1.0], (4, 1))
    report = exploitability(entry.spec, entry.utilities, (defect, defect))
    assert report.epsilon == pytest.approx(0.0, abs=1e-9)


def test_ipd_all_cooperate_is_exploited_by_defection():
    entry = get_domain("ipd")
    cooperate = np.tile([1.0, 0.0], (4, 1))
    report = exploitability(entry.spec, entry.utilities, (cooperate, cooperate))
    assert report.per_player[0] == pytest.approx(1.0 / 3.0, abs=1e-6)
    assert report.epsilon == pytest.approx(report.per_player[1], abs=1e-9)


def test_players_subset(rng):
    spec = make_random_spec(rng)
    utilities = [(LinearReward(rng.normal(size=(3, 2, 2))),) for _ in range(2)]
    profile = make_random_profile(rng, spec)
    full = exploitability(spec, utilities, profile)
    only_first = exploitability(spec, utilities, profile, players=[0])
    assert len(only_first.per_player) == 1
    assert only_first.per_player[0] == pytest.approx(full.per_player[0], abs=1e-9)


def test_per_state_report_shapes(rng):
    spec = make_random_spec(rng)
    utilities = [(LinearReward(rng.normal(size=(3, 2, 2))),) for _ in range(2)]
    report = per_state_exploitability(spec, utilities, make_random_profile(rng, spec))
    assert report.per_state.shape == (3,)
    assert report.per_state_player.shape == (3, 2)
    assert report.epsilon == pytest.approx(report.per_state.max())
    assert np.all(report.per_state >= 0.0)
