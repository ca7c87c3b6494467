import json

import numpy as np
import pytest

from cli.main import build_parser, main
from game.domains import domain_names
from storage.artifacts import get_json, read_trace_csv


def _bandit_config(path, reward):
    document = {
        "name": "bandit",
        "players": 1,
        "states": 1,
        "actions": [2],
        "gamma": 0.9,
        "mu0": [1.0],
        "transition": [1.0, 1.0],
        "utilities": [[{"kind": "linear_reward", "params": {"reward": reward}}]],
    }
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_list_domains_is_sorted(capsys):
    assert main(["list-domains"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.strip().splitlines()]
    assert names == sorted(names)
    assert {"ipd", "warehouse"} <= set(names)


def test_list_domains_json(capsys):
    assert main(["list-domains", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [row["name"] for row in rows] == domain_names()
    ipd = next(row for row in rows if row["name"] == "ipd")
    assert (ipd["lr"], ipd["anneal"], ipd["iters"]) == (0.1, 1, 8000)
    assert (ipd["min_tau"], ipd["loss_gate"]) == (0.01, 0.1)
    imitation = next(row for row in rows if row["name"] == "ipd-imitation")
    assert imitation["min_tau"] == 1e-4
    warehouse = next(row for row in rows if row["name"] == "warehouse")
    assert warehouse["loss_gate"] is None


def test_parser_requires_a_source():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve"])


def test_solve_zero_iterations_writes_uniform_policy(tmp_path):
    out = tmp_path / "runs"
    assert main(["solve", "--domain", "ipd", "--iters", "0", "--out", str(out)]) == 0

    run_dir = out / "ipd" / "pgl-seed0"
    policy = get_json(run_dir / "policy.json")
    summary = get_json(run_dir / "summary.json")
    trace = read_trace_csv(run_dir / "trace.csv")

    for player in policy["players"]:
        np.testing.assert_allclose(player["probs"], 0.5)
    assert policy["state_labels"] == ["CC", "CD", "DC", "DD"]
    assert summary["status"] == "ok"
    assert summary["iters"] == 0
    assert summary["epsilon"] >= 0.0
    assert set(summary["per_state_epsilon"]) == {"CC", "CD", "DC", "DD"}
    assert [row["iter"] for row in trace] == [0]
    assert trace[0]["epsilon"] == pytest.approx(summary["epsilon"], abs=1e-9)

    lines = (out / "events.ndjson").read_text(encoding="utf-8").splitlines()
    events = [json.loads(line) for line in lines]
    assert [e["state"] for e in events] == ["queued", "running", "done"]


def test_summary_epsilon_matches_exploitability_command(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["solve", "--domain", "ipd", "--iters", "30", "--seed", "0", "1", "--jobs", "2", "--out", str(out)]) == 0
    capsys.readouterr()

    for seed in (0, 1):
        run_dir = out / "ipd" / f"pgl-seed{seed}"
        summary = get_json(run_dir / "summary.json")
        assert main(["exploitability", "--domain", "ipd", "--policy", str(run_dir / "policy.json"), "--out", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["epsilon"] == pytest.approx(summary["epsilon"], abs=1e-6)


def test_sim_baseline_from_config_document(tmp_path):
    config = _bandit_config(tmp_path / "bandit.json", [1.0, 0.0])
    out = tmp_path / "runs"
    assert main(["solve", "--config", str(config), "--algo", "sim", "--iters", "500", "--out", str(out)]) == 0

    summary = get_json(out / "bandit" / "sim-seed0" / "summary.json")
    policy = get_json(out / "bandit" / "sim-seed0" / "policy.json")
    assert summary["algo"] == "sim"
    assert policy["players"][0]["argmax"] == ["a0"]
    assert summary["epsilon"] < 0.1


def test_dump_config_round_trip(tmp_path):
    dumped = tmp_path / "ipd.json"
    out = tmp_path / "runs"
    assert main(["solve", "--domain", "ipd", "--dump-config", str(dumped), "--out", str(out)]) == 0
    assert dumped.exists()
    assert not out.exists()

    assert main(["solve", "--config", str(dumped), "--iters", "0", "--out", str(out)]) == 0
    summary = get_json(out / "ipd" / "pgl-seed0" / "summary.json")
    assert summary["status"] == "ok"


def test_human_profile(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["exploitability", "--domain", "ipd", "--human-profile", "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["policy"] == "human-profile"
    assert report["utilities"][0] == pytest.approx(0.46, abs=0.01)
    assert report["per_state_max"] == pytest.approx(0.047, abs=2e-3)
    assert min(state["max"] for state in report["per_state"].values()) > 0.04
    assert (out / "ipd" / "epsilon.json").exists()


def test_human_profile_only_for_ipd(tmp_path):
    assert main(["exploitability", "--domain", "warehouse", "--human-profile", "--out", str(tmp_path)]) == 1


def test_missing_config_file_exits_with_config_error(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


def test_invalid_config_document_exits_with_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"players": 1,', encoding="utf-8")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_unsafe_domain_name_is_rejected(tmp_path):
    assert main(["solve", "--domain", "../etc", "--out", str(tmp_path)]) == 1


def test_non_finite_reward_exits_with_numeric_error(tmp_path):
    config = _bandit_config(tmp_path / "nan.json", [float("nan"), 0.0])
    out = tmp_path / "runs"
    assert main(["solve", "--config", str(config), "--iters", "5", "--out", str(out)]) == 2
    summary = get_json(out / "bandit" / "pgl-seed0" / "summary.json")
    assert summary["status"] == "numeric_abort"


def test_config_name_cannot_leave_the_output_root(tmp_path):
    (tmp_path / "a" / "b").mkdir(parents=True)
    config = _bandit_config(tmp_path / "a" / "b" / "g.json", [1.0, 0.0])
    document = json.loads(config.read_text(encoding="utf-8"))
    document["name"] = "../../escaped"
    config.write_text(json.dumps(document), encoding="utf-8")
    out = tmp_path / "a" / "b" / "out"

    assert main(["solve", "--config", str(config), "--iters", "0", "--out", str(out)]) == 1
    assert not (tmp_path / "a" / "escaped").exists()
    assert not out.exists()


def test_config_without_name_uses_a_folded_file_stem(tmp_path):
    config = tmp_path / "My_Bandit.json"
    document = json.loads(_bandit_config(tmp_path / "seed.json", [1.0, 0.0]).read_text(encoding="utf-8"))
    del document["name"]
    config.write_text(json.dumps(document), encoding="utf-8")
    out = tmp_path / "runs"

    assert main(["solve", "--config", str(config), "--iters", "0", "--out", str(out)]) == 0
    assert (out / "my-bandit" / "pgl-seed0" / "summary.json").exists()
