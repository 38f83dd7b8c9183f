from datetime import UTC, datetime


class HiberryError(Exception):
    """Base class for every failure surfaced by the engine.

    Each subclass carries the process exit code the CLI uses when the error
    escapes a command.
    """

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
        self.occurred_at = datetime.now(UTC)
        self.name = self.__class__.__name__


class ConfigError(HiberryError):
    exit_code = 2

    def __init__(self, message: str | None = None):
        super().__init__(message or "Invalid configuration")


class UnknownModelError(ConfigError):
    def __init__(self, name: str):
        super().__init__(f"Unknown model '{name}'")
        self.model = name


class GeometryError(ConfigError):
    def __init__(self, message: str | None = None):
        super().__init__(message or "Incompatible lattice geometry")


class GapClosedError(HiberryError):
    exit_code = 3

    def __init__(self, energies: tuple[float, float], message: str | None = None):
        e0, e1 = energies
        super().__init__(message or f"Spectral gap closed: E0={e0:.6g}, E1={e1:.6g}")
        self.energies = energies


class SolverError(HiberryError):
    exit_code = 4

    def __init__(self, message: str | None = None, level: object = None):
        text = message or "Solver failed"
        if level is not None:
            text = f"{text} (level {level})"
        super().__init__(text)
        self.level = level


class ConfinementError(HiberryError):
    exit_code = 5

    def __init__(self, message: str | None = None):
        super().__init__(message or "Chain is not confined near the requested region")


class ConfinementWarning(UserWarning):
    """Issued when a decay fit or truncation estimate looks unreliable."""
