import hashlib
import json
import os
from collections.abc import Callable
from pathlib import Path
from typing import Any, Literal

from dijay import injectable
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .lattice import DENSE_SITE_CAP

SCHEMA_VERSION = 1

INVARIANTS = (
    "berry",
    "higher-berry",
    "thouless-1d",
    "thouless-2d",
    "hall",
    "cech-1d",
    "cech-2d",
    "verify-flux",
)


def _get_env_bool(key: str, default: bool) -> Callable[[], bool]:
    def wrapper() -> bool:
        return bool(os.getenv(key, str(default)).lower() == "true")

    return wrapper


def _default_threads() -> int:
    value = os.getenv("HIBERRY_THREADS")
    if value is None:
        return os.cpu_count() or 1
    return max(1, int(value))


@injectable()
class RuntimeConfig(BaseModel):
    threads: int = Field(
        default_factory=_default_threads,
        description="Worker count for mesh sweeps",
    )
    log_level: str = Field(
        default_factory=lambda: os.getenv("HIBERRY_LOG_LEVEL", "WARNING"),
        description="Root log level used by the CLI",
    )
    dense_site_cap: int = Field(
        default_factory=lambda: int(os.getenv("HIBERRY_DENSE_SITE_CAP", 12)),
        description="Largest support stored as a dense matrix",
    )
    emit_csv: bool = Field(
        default_factory=_get_env_bool("HIBERRY_EMIT_CSV", False),
        description="Write per-cell plot data next to the JSON result",
    )


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpectralConfig(_Strict):
    backend: Literal["dense", "iterative"] = "dense"
    generator: Literal["kato", "filtered"] = "kato"
    filter_gamma: float = Field(default=0.1, gt=0)
    gap_threshold: float = Field(default=1e-6, gt=0)
    purity_tol: float = Field(default=1e-12, gt=0)
    dense_site_cap: int = Field(default=DENSE_SITE_CAP, ge=1, le=DENSE_SITE_CAP)
    dense_dim_cap: int = 2**12
    iterative_dim_cap: int = 2**20


class DescentConfig(_Strict):
    homotopy: Literal["brick", "anchored"] = "brick"
    least_squares: bool = False
    ls_weight_power: int = 4
    ls_radius: int = 1
    ls_max_iter: int = 2000
    pairing_window: int | None = 1
    psi_tol: float = 1e-9
    psi_samples: int = 64


class LatticeConfig(_Strict):
    dimension: Literal[1, 2] = 1
    extent: tuple[int, ...] = (8,)
    boundary: Literal["open", "periodic"] = "open"
    local_dim: int = Field(default=2, ge=2)
    origin: tuple[int, ...] | None = None

    @field_validator("extent")
    @classmethod
    def _check_extent(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(n < 2 for n in value):
            raise ValueError("every axis needs at least two sites")
        return value


class MeshConfig(_Strict):
    manifold: Literal["point", "S1", "S2", "S3", "T2", "S2xS1"] = "S2"
    resolution: tuple[int, ...] = (8,)
    flux_resolution: int = Field(default=8, ge=4)


class ModelConfig(_Strict):
    name: str
    params: dict[str, Any] = Field(default_factory=dict)


class FamilyConfig(_Strict):
    """One run: a model family, its mesh and every solver knob."""

    schema_version: int = SCHEMA_VERSION
    model: ModelConfig
    lattice: LatticeConfig | None = None
    mesh: MeshConfig | None = None
    charge: list[int] | None = None
    disentangler: str | None = None
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    descent: DescentConfig = Field(default_factory=DescentConfig)
    invariant: str = "berry"
    seed: int = 0

    @field_validator("schema_version")
    @classmethod
    def _check_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {value}")
        return value

    @field_validator("invariant")
    @classmethod
    def _check_invariant(cls, value: str) -> str:
        if value not in INVARIANTS:
            raise ValueError(f"unknown invariant '{value}'")
        return value

    @field_validator("charge")
    @classmethod
    def _check_charge(cls, value: list[int] | None) -> list[int] | None:
        if value is not None and any(int(q) != q for q in value):
            raise ValueError("charge assignment must be integral per site")
        return value

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def load_config(path: str | Path, **overrides: Any) -> FamilyConfig:
    """Read and validate a run configuration.

    Args:
        path: JSON document on disk.
        **overrides: Top-level keys replacing the file's values
                     (``invariant`` from the command line, for example).

    Returns:
        The validated :class:`FamilyConfig`.

    Raises:
        ConfigError: The file is missing, is not JSON or fails validation.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config is not valid JSON: {exc.msg}") from exc
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(raw)


def parse_config(raw: dict[str, Any]) -> FamilyConfig:
    try:
        return FamilyConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}") from exc
