"""Higher Berry invariants of gapped lattice families.

Quickstart::

    from hiberry import load_config, InvariantService, RuntimeConfig

    service = InvariantService(RuntimeConfig())
    result = service.run(load_config("pump.json"))
    print(result.integer)

The CLI (``hiberry compute``, ``hiberry verify-flux``, ``hiberry selftest``)
resolves the same services through :class:`HiberryModule`.
"""

from .config import FamilyConfig, RuntimeConfig, load_config, parse_config
from .errors import (
    ConfigError,
    ConfinementError,
    GapClosedError,
    GeometryError,
    HiberryError,
    SolverError,
    UnknownModelError,
)
from .module import HiberryModule
from .results import RunResult, compare
from .usecases import ComputeData, ComputeInvariantUsecase, InvariantService

__all__ = [
    "ComputeData",
    "ComputeInvariantUsecase",
    "ConfigError",
    "ConfinementError",
    "FamilyConfig",
    "GapClosedError",
    "GeometryError",
    "HiberryError",
    "HiberryModule",
    "InvariantService",
    "RunResult",
    "RuntimeConfig",
    "SolverError",
    "UnknownModelError",
    "compare",
    "load_config",
    "parse_config",
]
