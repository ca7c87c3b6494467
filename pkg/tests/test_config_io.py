import json

import numpy as np
import pytest

from game.config_io import load_spec, load_spec_file, parse_document, save_spec, spec_to_document
from game.domains import get_domain
from game.utilities import EntropyBonus, KLPenalty, LinearReward
from utils.errors import ConfigError, SpecValidationError


def _bandit_document(**overrides):
    document = {
        "players": 1,
        "states": 1,
        "actions": [2],
        "gamma": 0.9,
        "mu0": [1.0],
        "transition": [1.0, 1.0],
        "utilities": [[{"kind": "linear_reward", "params": {"reward": [1.0, 0.0]}}]],
    }
    document.update(overrides)
    return document


def test_ipd_round_trip_is_stable(tmp_path):
    entry = get_domain("ipd")
    path = tmp_path / "ipd.json"
    first = save_spec(entry.spec, entry.utilities, path, name="ipd", state_labels=entry.state_labels)

    spec, utilities = load_spec_file(path)
    second = save_spec(spec, utilities, name="ipd", state_labels=entry.state_labels)

    assert first == second
    np.testing.assert_array_equal(spec.transition, entry.spec.transition)
    assert spec.gamma == entry.spec.gamma
    assert "reward" in json.loads(first)


def test_warehouse_reward_survives_serialization():
    entry = get_domain("warehouse")
    spec, utilities = load_spec(save_spec(entry.spec, entry.utilities))
    for original, loaded in zip(entry.utilities, utilities):
        a = next(t for t in original if isinstance(t, LinearReward))
        b = next(t for t in loaded if isinstance(t, LinearReward))
        np.testing.assert_array_equal(a.reward, b.reward)
    assert spec.action_counts == entry.spec.action_counts


def test_bandit_document_loads():
    spec, utilities = load_spec(_bandit_document())
    assert spec.n_states == 1
    np.testing.assert_array_equal(utilities[0][0].reward, [[1.0, 0.0]])


@pytest.mark.parametrize("text", ["", "   \n", b""])
def test_empty_document(text):
    with pytest.raises(ConfigError, match="vazio"):
        parse_document(text)


def test_bad_json_reports_position():
    with pytest.raises(ConfigError, match="linha 2"):
        parse_document('{"players": 1,\n  "states": }')


def test_non_object_document():
    with pytest.raises(ConfigError):
        parse_document("[1, 2]")


def test_unknown_term_kind():
    doc = _bandit_document(utilities=[[{"kind": "lexicographic", "params": {}}]])
    with pytest.raises(ConfigError, match="Config inválida"):
        load_spec(doc)


def test_wrong_transition_length():
    with pytest.raises(ConfigError, match="transition has 3 entries, expected 2"):
        load_spec(_bandit_document(transition=[1.0, 1.0, 1.0]))


def test_unknown_and_missing_params():
    unknown = _bandit_document(utilities=[[{"kind": "entropy", "params": {"temperature": 1.0}}]])
    with pytest.raises(ConfigError, match="unknown params"):
        load_spec(unknown)
    missing = _bandit_document(utilities=[[{"kind": "kl_ref", "params": {}}]])
    with pytest.raises(ConfigError, match="missing params"):
        load_spec(missing)


def _hinge_document(state, action):
    hinge = {"kind": "hinge", "params": {"state": state, "action": action, "threshold": 0.1, "weight": 1.0}}
    return _bandit_document(
        utilities=[[{"kind": "linear_reward", "params": {"reward": [1.0, 0.0]}}, hinge]]
    )


@pytest.mark.parametrize("state,action", [(0, 0.5), (0.0, "1"), (True, 1), (0, float("inf"))])
def test_index_params_must_be_integers(state, action):
    with pytest.raises(ConfigError, match="must be an integer"):
        load_spec(_hinge_document(state, action))


def test_integral_floats_are_accepted_as_indices():
    _, utilities = load_spec(_hinge_document(0.0, 1.0))
    hinge = utilities[0][1]
    assert (hinge.state, hinge.action) == (0, 1)
    assert isinstance(hinge.action, int)


def test_fairness_pair_rejects_fractional_states():
    fairness = {"kind": "fairness_pair", "params": {"s_plus": 1.5, "s_minus": 0}}
    with pytest.raises(ConfigError, match="s_plus must be an integer"):
        load_spec(_bandit_document(utilities=[[fairness]]))


def test_live_tau_and_fixed_tau():
    doc = _bandit_document(
        utilities=[
            [
                {"kind": "linear_reward", "params": {"reward": [1.0, 0.0]}},
                {"kind": "entropy", "params": {"tau": "live"}},
                {"kind": "kl_ref", "params": {"mu_ref": [0.5, 0.5], "tau": 0.25}},
            ]
        ]
    )
    _, utilities = load_spec(doc)
    entropy, kl = utilities[0][1], utilities[0][2]
    assert isinstance(entropy, EntropyBonus) and entropy.tau is None
    assert isinstance(kl, KLPenalty) and kl.tau == 0.25

    saved = spec_to_document(*load_spec(doc))
    assert saved["utilities"][0][1]["params"]["tau"] == "live"


def test_bad_tau_value():
    doc = _bandit_document(utilities=[[{"kind": "entropy", "params": {"tau": "hot"}}]])
    with pytest.raises(ConfigError, match="tau must be a number"):
        load_spec(doc)


def test_top_level_reward_is_used_when_params_are_empty():
    doc = _bandit_document(
        utilities=[[{"kind": "linear_reward", "params": {}}]],
        reward=[0.0, 2.0],
    )
    _, utilities = load_spec(doc)
    np.testing.assert_array_equal(utilities[0][0].reward, [[0.0, 2.0]])


def test_linear_reward_without_any_reward():
    doc = _bandit_document(utilities=[[{"kind": "linear_reward", "params": {}}]])
    with pytest.raises(ConfigError, match="no top-level reward"):
        load_spec(doc)


def test_inline_reward_when_a_player_has_no_linear_term():
    entry_doc = _bandit_document(utilities=[[{"kind": "entropy", "params": {"tau": 0.5}}]])
    saved = spec_to_document(*load_spec(entry_doc))
    assert "reward" not in saved


def test_non_stochastic_transition_is_a_spec_violation():
    with pytest.raises(SpecValidationError):
        load_spec(_bandit_document(transition=[0.5, 1.0]))


def test_gamma_out_of_range_is_a_spec_violation():
    with pytest.raises(SpecValidationError):
        load_spec(_bandit_document(gamma=1.0))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_spec_file(tmp_path / "nope.json")
