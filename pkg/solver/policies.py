# solver/policies.py
"""Fixed-last-logit softmax parameterization of policy profiles."""
from typing import Sequence

import numpy as np

from game.spec import GameSpec
from utils.errors import NumericError
from utils.rng import named_stream

# Per-player [n_states, action_counts[i] - 1] free logits.
LogitProfile = list[np.ndarray]


def softmax_with_zero(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    full = np.concatenate([logits, np.zeros((logits.shape[0], 1))], axis=1)
    full = full - full.max(axis=1, keepdims=True)
    weights = np.exp(full)
    return weights / weights.sum(axis=1, keepdims=True)


def to_policy(logits: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Per state, softmax over the free logits extended with a trailing 0."""
    profile = []
    for i, theta in enumerate(logits):
        theta = np.asarray(theta, dtype=np.float64)
        if not np.all(np.isfinite(theta)):
            raise NumericError(f"non-finite logits for player {i}")
        profile.append(softmax_with_zero(theta))
    return tuple(profile)


def softmax_vjp(policy: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pull a gradient over policy entries back to the free logits."""
    inner = np.sum(policy * upstream, axis=1, keepdims=True)
    return (policy * (upstream - inner))[:, :-1]


def logits_from_policy(policy: np.ndarray, floor: float = 1e-300) -> np.ndarray:
    """Inverse of to_policy for strictly positive rows."""
    logp = np.log(np.maximum(np.asarray(policy, dtype=np.float64), floor))
    return logp[:, :-1] - logp[:, -1:]


def zero_logits(spec: GameSpec) -> LogitProfile:
    return [np.zeros((spec.n_states, a - 1)) for a in spec.action_counts]


def normal_logits(spec: GameSpec, seed: int) -> LogitProfile:
    rng = named_stream(seed, "init")
    return [rng.standard_normal((spec.n_states, a - 1)) for a in spec.action_counts]


def initial_logits(spec: GameSpec, style: str = "zeros", seed: int = 0) -> LogitProfile:
    if style == "zeros":
        return zero_logits(spec)
    if style == "normal":
        return normal_logits(spec, seed)
    raise ValueError(f"unknown init style '{style}'")
