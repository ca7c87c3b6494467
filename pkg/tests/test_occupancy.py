import numpy as np
import pytest

from game.domains import domain_names, get_domain, synthetic_safety_transition
from game.occupancy import (
    all_occupancies,
    d_occupancy_d_policy,
    flow_matrix,
    joint_kernel,
    marginal_kernel,
    player_occupancy,
    policy_from_occupancy,
    state_occupancy,
)
from game.spec import GameSpec, uniform_profile
from tests.helpers import make_random_profile, make_random_spec, single_state_spec


def test_single_state_kernel_is_identity():
    spec = single_state_spec(n_actions=3)
    kernel = joint_kernel(spec, [np.array([[0.2, 0.3, 0.5]])])
    np.testing.assert_allclose(kernel, [[1.0]])


def test_synthetic_coordination_swaps_states():
    spec = GameSpec.from_arrays(synthetic_safety_transition(), 0.95, np.full(2, 0.5))
    always_zero = np.array([[1.0, 0.0], [1.0, 0.0]])
    kernel = joint_kernel(spec, [always_zero, always_zero])
    np.testing.assert_allclose(kernel, [[0.0, 1.0], [1.0, 0.0]])


def test_marginal_kernel_columns_are_stochastic(rng):
    spec = make_random_spec(rng, n_players=3, n_states=3, actions=(2, 3, 2))
    profile = make_random_profile(rng, spec)
    for i in range(3):
        kernel = marginal_kernel(spec, profile, i)
        assert kernel.shape == (3, 3, spec.action_counts[i])
        np.testing.assert_allclose(kernel.sum(axis=0), 1.0, atol=1e-12)


def test_state_occupancy_matches_truncated_series(rng):
    for _ in range(5):
        spec = make_random_spec(rng)
        profile = make_random_profile(rng, spec)
        kernel = joint_kernel(spec, profile)

        series = np.zeros(spec.n_states)
        term = spec.mu0.copy()
        for t in range(2000):
            series += (1 - spec.gamma) * term
            term = spec.gamma * kernel @ term

        np.testing.assert_allclose(state_occupancy(spec, profile), series, atol=1e-8)


def test_joint_kernel_matches_sampled_transitions(rng):
    spec = make_random_spec(rng, n_players=3, n_states=3, actions=(2, 3, 2))
    profile = make_random_profile(rng, spec)
    kernel = joint_kernel(spec, profile)
    n = 1_000_000

    for s in range(spec.n_states):
        actions = [rng.choice(len(pi[s]), size=n, p=pi[s]) for pi in profile]
        columns = spec.transition[(slice(None), s, *actions)]  # [S, n]
        cumulative = np.cumsum(columns, axis=0)
        s_next = np.minimum((rng.random(n)[None, :] > cumulative).sum(axis=0), spec.n_states - 1)
        frequencies = np.bincount(s_next, minlength=spec.n_states) / n
        np.testing.assert_allclose(frequencies, kernel[:, s], atol=3e-3)


def test_ipd_occupancy_matches_discounted_rollouts(rng):
    spec = get_domain("ipd").spec
    profile = make_random_profile(rng, spec, floor=0.1)
    p0, p1 = profile
    n = 50_000

    # stopping with probability 1 - gamma samples (s_t, a_t) from the occupancy
    state = rng.choice(spec.n_states, size=n, p=spec.mu0)
    stopped_state = np.zeros(n, dtype=int)
    stopped_action = np.zeros(n, dtype=int)
    active = np.arange(n)
    while active.size:
        s = state[active]
        a0 = (rng.random(active.size) >= p0[s, 0]).astype(int)
        a1 = (rng.random(active.size) >= p1[s, 0]).astype(int)
        stop = rng.random(active.size) < 1.0 - spec.gamma
        stopped_state[active[stop]] = s[stop]
        stopped_action[active[stop]] = a0[stop]
        state[active] = 2 * a0 + a1
        active = active[~stop]

    frequencies = np.zeros((spec.n_states, 2))
    np.add.at(frequencies, (stopped_state, stopped_action), 1.0)
    np.testing.assert_allclose(frequencies / n, player_occupancy(spec, profile, 0), atol=1e-2)


def test_occupancy_is_feasible(rng):
    spec = make_random_spec(rng, n_players=2, n_states=4, actions=(3, 2))
    profile = make_random_profile(rng, spec)
    for i, mu in enumerate(all_occupancies(spec, profile)):
        assert mu.min() >= 0.0
        assert mu.sum() == pytest.approx(1.0, abs=1e-10)
        assert flow_matrix(spec, profile, i).residual(mu) <= 1e-8


def test_policy_recovery(rng):
    spec = make_random_spec(rng)
    profile = make_random_profile(rng, spec)
    mu = player_occupancy(spec, profile, 1)
    np.testing.assert_allclose(policy_from_occupancy(mu), profile[1], atol=1e-10)

    empty_row = np.array([[0.2, 0.8], [0.0, 0.0]])
    np.testing.assert_allclose(policy_from_occupancy(empty_row), [[0.2, 0.8], [0.5, 0.5]])


@pytest.mark.parametrize("i,j", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_occupancy_jacobian_matches_finite_differences(rng, i, j):
    spec = make_random_spec(rng, n_players=2, n_states=3, actions=(2, 3))
    profile = make_random_profile(rng, spec)
    jac = d_occupancy_d_policy(spec, profile, i, j)

    h = 1e-6
    fd = np.zeros_like(jac)
    for x in range(spec.n_states):
        for y in range(spec.action_counts[j]):
            up = [p.copy() for p in profile]
            down = [p.copy() for p in profile]
            up[j][x, y] += h
            down[j][x, y] -= h
            fd[:, :, x, y] = (player_occupancy(spec, up, i) - player_occupancy(spec, down, i)) / (2 * h)

    np.testing.assert_allclose(jac, fd, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("name", domain_names())
def test_flow_matrix_has_full_row_rank_on_catalog(name):
    entry = get_domain(name)
    profile = uniform_profile(entry.spec)
    for i in range(entry.spec.n_players):
        flow = flow_matrix(entry.spec, profile, i).certify_rank()
        assert flow.matrix.shape == (entry.spec.n_states, entry.spec.n_states * entry.spec.action_counts[i])
