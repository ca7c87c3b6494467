class ConfigError(ValueError):
    """Invalid game document, run configuration or CLI input."""


class SpecValidationError(ConfigError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        head = "; ".join(self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"GameSpec inválido: {head}{more}")


class NumericError(RuntimeError):
    """Fatal numerical failure (singular solve, rank loss, non-finite loss).

    ``trace`` holds the partial RunTrace when the failure happened inside a
    solver loop.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
