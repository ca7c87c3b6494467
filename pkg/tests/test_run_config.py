import pytest

from models.run_config import RunConfig
from utils import settings
from utils.errors import ConfigError


def test_defaults_come_from_settings(monkeypatch):
    monkeypatch.setattr(settings, "OUTPUT_DIR", "/tmp/cmg-out")
    monkeypatch.setattr(settings, "JOBS", 3)
    cfg = RunConfig.from_values(domain="ipd")
    assert cfg.out == "/tmp/cmg-out"
    assert cfg.jobs == 3
    assert cfg.algo == "pgl"
    assert cfg.seeds == [0]
    assert cfg.iters is None and cfg.lr is None and cfg.anneal is None


def test_source_name():
    assert RunConfig.from_values(domain="warehouse").source_name == "warehouse"
    assert RunConfig.from_values(config="games/my_game.json").source_name == "my_game"


@pytest.mark.parametrize(
    "values",
    [
        {},
        {"domain": "ipd", "config": "x.json"},
        {"domain": "../etc"},
        {"domain": "ipd", "iters": -1},
        {"domain": "ipd", "lr": 0.0},
        {"domain": "ipd", "anneal": 4},
        {"domain": "ipd", "stride": 0},
        {"domain": "ipd", "jobs": 0},
        {"domain": "ipd", "eps_cadence": -1},
        {"domain": "ipd", "seeds": []},
        {"domain": "ipd", "seeds": [1, 1]},
        {"domain": "ipd", "algo": "adam"},
        {"domain": "ipd", "fix_opponent": True},
        {"domain": "ipd", "unknown": 1},
    ],
)
def test_invalid_run_configs(values):
    with pytest.raises(ConfigError, match="RunConfig inválida"):
        RunConfig.from_values(**values)


def test_fix_opponent_on_synthetic_safety():
    cfg = RunConfig.from_values(domain="synthetic-safety", fix_opponent=True, algo="sim", seeds=[0, 1])
    assert cfg.fix_opponent
    assert cfg.seeds == [0, 1]
