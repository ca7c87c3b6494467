import re

from utils.errors import ConfigError

# Allows lowercase alphanumeric and hyphens, 1-64 chars, no leading/trailing hyphens
SAFE_ID_REGEX = re.compile(r"^[a-z0-9]([a-z0-9\-]{0,62}[a-z0-9])?$")


def validate_safe_id(value: str, field_name: str) -> str:
    """
    Validates that an identifier (domain name, run name) is safe for use in
    file paths. Prevents path traversal through --domain or run labels.

    Format: lowercase letters (a-z), digits (0-9), and hyphens (-).
    Length: 1-64 characters. Must not start or end with a hyphen.

    Raises ConfigError if invalid.
    """
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{field_name} inválido")

    if ".." in value or "/" in value or "\\" in value:
        raise ConfigError(f"{field_name} contém caracteres proibidos")

    if not SAFE_ID_REGEX.match(value):
        raise ConfigError(
            f"{field_name} deve conter apenas letras minúsculas, números e hífens",
        )

    return value


def validate_player_index(i: int, n_players: int) -> int:
    if not isinstance(i, (int,)) or isinstance(i, bool):
        raise ConfigError(f"player index must be an int, got {type(i).__name__}")
    if i < 0 or i >= n_players:
        raise ConfigError(f"player index {i} out of range [0, {n_players})")
    return i
