# game/config_io.py
"""Game config documents: JSON text <-> (GameSpec, UtilitySpec).

Tensors are flattened row-major. ``transition`` follows ``[s_next, s, a_1..a_n]``
and the top-level ``reward`` follows ``[player, s, a_1..a_n]``. A ``tau`` of
``"live"`` binds an entropy or KL term to the solver's temperature.
"""
import json
import logging
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from pydantic import ValidationError

from game.spec import GameSpec, check_spec
from game.utilities import (
    KIND_OF,
    EntropyBonus,
    FairnessPenalty,
    HingePenalty,
    InfNormSafety,
    KLPenalty,
    LinearReward,
    UtilitySpec,
    check_utilities,
)
from models.game_config import GameConfigDocument, UtilityTermDoc
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

LIVE = "live"

_ALLOWED_PARAMS = {
    "linear_reward": {"reward"},
    "entropy": {"tau"},
    "kl_ref": {"mu_ref", "tau"},
    "fairness_pair": {"s_plus", "s_minus", "weight"},
    "hinge": {"state", "action", "threshold", "weight"},
    "infnorm_safety": {"t_a", "t_s", "r_a", "r_s"},
}
_REQUIRED_PARAMS = {
    "kl_ref": {"mu_ref"},
    "fairness_pair": {"s_plus", "s_minus"},
    "hinge": {"state", "action", "threshold", "weight"},
    "infnorm_safety": {"t_a", "t_s"},
}


# ============================================================
# Parsing
# ============================================================


def parse_document(document: Union[str, bytes, dict]) -> GameConfigDocument:
    """Structural validation of a config document."""
    if isinstance(document, (str, bytes)):
        text = document.decode("utf-8") if isinstance(document, bytes) else document
        if not text.strip():
            raise ConfigError("Documento de configuração vazio")
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"Config JSON inválido (linha {exc.lineno}, coluna {exc.colno}): {exc.msg}"
            ) from exc
    else:
        payload = document
    if not payload:
        raise ConfigError("Documento de configuração vazio")
    if not isinstance(payload, dict):
        raise ConfigError(f"config document must be a JSON object, got {type(payload).__name__}")
    try:
        return GameConfigDocument.model_validate(payload)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"Config inválida: {problems}") from exc


def _tau(value: Any, where: str) -> Optional[float]:
    if value is None or value == LIVE:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: tau must be a number or \"{LIVE}\", got {value!r}")
    return float(value)


def _int_param(params: dict, key: str, where: str) -> int:
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
        raise ConfigError(f"{where}: {key} must be an integer, got {value!r}")
    return int(value)


def _reshape(values, shape: tuple, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ConfigError(f"{where}: expected {int(np.prod(shape))} values for shape {shape}, got {arr.size}")
    return arr.reshape(shape)


def _build_term(doc: GameConfigDocument, i: int, k: int, term: UtilityTermDoc, rewards: Optional[np.ndarray]):
    where = f"utilities[{i}][{k}] ({term.kind})"
    params = term.params
    unknown = set(params) - _ALLOWED_PARAMS[term.kind]
    if unknown:
        raise ConfigError(f"{where}: unknown params {sorted(unknown)}")
    missing = _REQUIRED_PARAMS.get(term.kind, set()) - set(params)
    if missing:
        raise ConfigError(f"{where}: missing params {sorted(missing)}")

    own_shape = (doc.states, doc.actions[i])
    try:
        if term.kind == "linear_reward":
            if "reward" in params:
                return LinearReward(_reshape(params["reward"], (doc.states, *doc.actions), where))
            if rewards is None:
                raise ConfigError(f"{where}: no inline reward and no top-level reward")
            return LinearReward(rewards[i])
        if term.kind == "entropy":
            return EntropyBonus(tau=_tau(params.get("tau"), where))
        if term.kind == "kl_ref":
            return KLPenalty(_reshape(params["mu_ref"], own_shape, where), tau=_tau(params.get("tau"), where))
        if term.kind == "fairness_pair":
            return FairnessPenalty(
                _int_param(params, "s_plus", where),
                _int_param(params, "s_minus", where),
                float(params.get("weight", 1.0)),
            )
        if term.kind == "hinge":
            return HingePenalty(
                _int_param(params, "state", where),
                _int_param(params, "action", where),
                float(params["threshold"]),
                float(params["weight"]),
            )
        extra = {key: float(params[key]) for key in ("r_a", "r_s") if key in params}
        return InfNormSafety(np.asarray(params["t_a"], dtype=np.float64), np.asarray(params["t_s"], dtype=np.float64), **extra)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def document_to_game(doc: GameConfigDocument) -> tuple[GameSpec, UtilitySpec]:
    shape = (doc.states, doc.states, *doc.actions)
    spec = GameSpec(
        n_players=doc.players,
        n_states=doc.states,
        action_counts=tuple(doc.actions),
        transition=_reshape(doc.transition, shape, "transition"),
        gamma=doc.gamma,
        mu0=np.asarray(doc.mu0, dtype=np.float64),
    )
    check_spec(spec)
    rewards = None
    if doc.reward is not None:
        rewards = _reshape(doc.reward, (doc.players, doc.states, *doc.actions), "reward")
    utilities = tuple(
        tuple(_build_term(doc, i, k, term, rewards) for k, term in enumerate(terms))
        for i, terms in enumerate(doc.utilities)
    )
    return spec, check_utilities(spec, utilities)


def load_spec(document: Union[str, bytes, dict]) -> tuple[GameSpec, UtilitySpec]:
    """Parse and validate a config document (JSON text or an already-decoded dict)."""
    return document_to_game(parse_document(document))


def load_spec_file(path: Union[str, Path]) -> tuple[GameSpec, UtilitySpec]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config não encontrada: {path}")
    logger.info("Loading game config from %s", path)
    return load_spec(path.read_text(encoding="utf-8"))


# ============================================================
# Serialization
# ============================================================


def _flat(array: np.ndarray) -> list[float]:
    return [float(x) for x in np.asarray(array, dtype=np.float64).ravel()]


def _tau_out(tau: Optional[float]):
    return LIVE if tau is None else float(tau)


def _term_doc(term, inline_reward: bool) -> dict:
    kind = KIND_OF[type(term)]
    if isinstance(term, LinearReward):
        params = {"reward": _flat(term.reward)} if inline_reward else {}
    elif isinstance(term, EntropyBonus):
        params = {"tau": _tau_out(term.tau)}
    elif isinstance(term, KLPenalty):
        params = {"mu_ref": _flat(term.mu_ref), "tau": _tau_out(term.tau)}
    elif isinstance(term, FairnessPenalty):
        params = {"s_plus": term.s_plus, "s_minus": term.s_minus, "weight": float(term.weight)}
    elif isinstance(term, HingePenalty):
        params = {
            "state": term.state,
            "action": term.action,
            "threshold": float(term.threshold),
            "weight": float(term.weight),
        }
    else:
        params = {"t_a": _flat(term.t_a), "t_s": _flat(term.t_s), "r_a": float(term.r_a), "r_s": float(term.r_s)}
    return {"kind": kind, "params": params}


def spec_to_document(spec: GameSpec, utilities: UtilitySpec, **meta) -> dict:
    """Inverse of ``load_spec``; ``meta`` may carry name, description and labels."""
    linear_counts = [sum(isinstance(t, LinearReward) for t in terms) for terms in utilities]
    shared_reward = all(count == 1 for count in linear_counts)

    document: dict[str, Any] = {}
    for key in ("name", "description"):
        if meta.get(key):
            document[key] = meta[key]
    document.update(
        players=spec.n_players,
        states=spec.n_states,
        actions=list(spec.action_counts),
        gamma=spec.gamma,
        mu0=_flat(spec.mu0),
        transition=_flat(spec.transition),
        utilities=[[_term_doc(t, inline_reward=not shared_reward) for t in terms] for terms in utilities],
    )
    if shared_reward:
        rewards = [next(t for t in terms if isinstance(t, LinearReward)).reward for terms in utilities]
        document["reward"] = _flat(np.stack(rewards))
    if meta.get("state_labels"):
        document["state_labels"] = list(meta["state_labels"])
    if meta.get("action_labels"):
        document["action_labels"] = [list(labels) for labels in meta["action_labels"]]
    return document


def save_spec(spec: GameSpec, utilities: UtilitySpec, path: Optional[Union[str, Path]] = None, **meta) -> str:
    """Serialize to JSON text (floats at full precision) and optionally write it to ``path``."""
    text = json.dumps(spec_to_document(spec, utilities, **meta), indent=2)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info("✅ Config salva em %s", path)
    return text
