from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TermKind = Literal["linear_reward", "entropy", "kl_ref", "fairness_pair", "hinge", "infnorm_safety"]


class UtilityTermDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: TermKind
    params: dict[str, Any] = Field(default_factory=dict)


class GameConfigDocument(BaseModel):
    """Estrutura do documento de configuração de um jogo (JSON)."""

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    description: Optional[str] = None
    players: int = Field(ge=1)
    states: int = Field(ge=1)
    actions: list[int]
    gamma: float
    mu0: list[float]
    transition: list[float]  # row-major [s_next, s, a_1..a_n]
    utilities: list[list[UtilityTermDoc]]
    reward: Optional[list[float]] = None  # row-major [player, s, a_1..a_n]
    state_labels: Optional[list[str]] = None
    action_labels: Optional[list[list[str]]] = None

    @field_validator("actions")
    @classmethod
    def _positive_actions(cls, value: list[int]) -> list[int]:
        if any(a < 1 for a in value):
            raise ValueError(f"actions must all be >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def _check_lengths(self) -> "GameConfigDocument":
        if len(self.actions) != self.players:
            raise ValueError(f"actions lists {len(self.actions)} players, expected {self.players}")
        if len(self.utilities) != self.players:
            raise ValueError(f"utilities lists {len(self.utilities)} players, expected {self.players}")
        if len(self.mu0) != self.states:
            raise ValueError(f"mu0 has {len(self.mu0)} entries, expected {self.states}")
        joint = 1
        for a in self.actions:
            joint *= a
        expected = self.states * self.states * joint
        if len(self.transition) != expected:
            raise ValueError(f"transition has {len(self.transition)} entries, expected {expected}")
        if self.reward is not None and len(self.reward) != self.players * self.states * joint:
            raise ValueError(
                f"reward has {len(self.reward)} entries, expected {self.players * self.states * joint}"
            )
        if self.state_labels is not None and len(self.state_labels) != self.states:
            raise ValueError(f"state_labels has {len(self.state_labels)} entries, expected {self.states}")
        if self.action_labels is not None and [len(x) for x in self.action_labels] != self.actions:
            raise ValueError("action_labels do not match actions")
        return self
