from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils import settings
from utils.errors import ConfigError
from utils.validation import validate_safe_id

Algorithm = Literal["pgl", "sim", "rr"]


class RunConfig(BaseModel):
    """One CLI invocation. ``None`` for iters, lr or anneal means the domain default."""

    model_config = ConfigDict(extra="forbid")

    domain: Optional[str] = None
    config: Optional[str] = None
    algo: Algorithm = "pgl"
    seeds: list[int] = Field(default_factory=lambda: [0])
    iters: Optional[int] = None
    lr: Optional[float] = None
    anneal: Optional[int] = None
    stride: int = 10
    eps_cadence: int = 10
    eps_tol: float = 1e-6
    out: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    jobs: int = Field(default_factory=lambda: settings.JOBS)
    fix_opponent: bool = False

    @field_validator("domain")
    @classmethod
    def _safe_domain(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            validate_safe_id(value, "domain")
        return value

    @field_validator("iters")
    @classmethod
    def _non_negative_iters(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 0:
            raise ValueError(f"iters must be >= 0, got {value}")
        return value

    @field_validator("lr")
    @classmethod
    def _positive_lr(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError(f"lr must be > 0, got {value}")
        return value

    @field_validator("anneal")
    @classmethod
    def _known_schedule(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value not in (1, 2, 3):
            raise ValueError(f"anneal must be 1, 2 or 3, got {value}")
        return value

    @field_validator("stride", "jobs")
    @classmethod
    def _at_least_one(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be >= 1, got {value}")
        return value

    @field_validator("eps_cadence")
    @classmethod
    def _non_negative_cadence(cls, value: int) -> int:
        if value < 0:
            raise ValueError(f"eps_cadence must be >= 0, got {value}")
        return value

    @field_validator("seeds")
    @classmethod
    def _some_seed(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("at least one seed is required")
        if len(set(value)) != len(value):
            raise ValueError(f"duplicate seeds: {value}")
        return value

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "RunConfig":
        if (self.domain is None) == (self.config is None):
            raise ValueError("exactly one of domain/config must be set")
        if self.fix_opponent and self.domain != "synthetic-safety":
            raise ValueError("fix_opponent only applies to the synthetic-safety domain")
        return self

    @property
    def source_name(self) -> str:
        if self.domain is not None:
            return self.domain
        return Path(self.config).stem

    @classmethod
    def from_values(cls, **values) -> "RunConfig":
        """Build a RunConfig, reporting validation failures as ConfigError."""
        try:
            return cls(**values)
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or 'run'}: {err['msg']}" for err in exc.errors()
            )
            raise ConfigError(f"RunConfig inválida: {problems}") from exc
