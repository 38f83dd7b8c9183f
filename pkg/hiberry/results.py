"""Run results: JSON documents, per-cell CSV plot data and comparison."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
from collections.abc import Mapping
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import scipy
from pydantic import BaseModel, Field

from .config import FamilyConfig
from .errors import ConfigError
from .mesh import DiscreteForm

logger = logging.getLogger(__name__)

ROUNDING_LIMIT = 0.25


class IntegerEstimate(BaseModel):
    """An integer with the value it was rounded from.

    ``value`` is ``None`` when the estimate sits farther than
    ``ROUNDING_LIMIT`` from every integer.
    """

    value: int | None
    estimate: float
    distance: float
    tolerance: float = ROUNDING_LIMIT


def round_estimate(estimate: float, limit: float = ROUNDING_LIMIT) -> IntegerEstimate:
    nearest = round(estimate)
    distance = abs(estimate - nearest)
    if distance > limit:
        logger.warning("refusing to round %.4f (distance %.3f)", estimate, distance)
        return IntegerEstimate(value=None, estimate=estimate, distance=distance, tolerance=limit)
    return IntegerEstimate(value=int(nearest), estimate=estimate, distance=distance, tolerance=limit)


class Provenance(BaseModel):
    config_digest: str
    versions: dict[str, str]
    seconds: float = 0.0


class CellValue(BaseModel):
    cell: tuple[int, ...]
    real: float
    imag: float


def _versions() -> dict[str, str]:
    try:
        own = metadata.version("hiberry")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {
        "hiberry": own,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "scipy": scipy.__version__,
    }


class RunResult(BaseModel):
    """Everything one ``compute`` run reports."""

    invariant: str
    model: str
    periods: dict[str, tuple[float, float]] = Field(default_factory=dict)
    integer: IntegerEstimate | None = None
    residuals: dict[str, float] = Field(default_factory=dict)
    form: list[CellValue] = Field(default_factory=list)
    extra: dict[str, Any] = Field(default_factory=dict)
    provenance: Provenance

    @classmethod
    def build(
        cls,
        config: FamilyConfig,
        *,
        periods: Mapping[str, complex] | None = None,
        estimate: float | None = None,
        residuals: Mapping[str, float] | None = None,
        form: DiscreteForm | None = None,
        extra: Mapping[str, Any] | None = None,
        seconds: float = 0.0,
    ) -> RunResult:
        return cls(
            invariant=config.invariant,
            model=config.model.name,
            periods={k: (float(v.real), float(v.imag)) for k, v in (periods or {}).items()},
            integer=round_estimate(estimate) if estimate is not None else None,
            residuals={k: float(v) for k, v in (residuals or {}).items()},
            form=_cells(form) if form is not None else [],
            extra=dict(extra or {}),
            provenance=Provenance(
                config_digest=config.digest(), versions=_versions(), seconds=seconds
            ),
        )

    def to_json(self, *, timing: bool = True) -> str:
        """Deterministic JSON: sorted keys, and no timing when ``timing`` is off."""
        payload = self.model_dump(mode="json")
        if not timing:
            payload["provenance"].pop("seconds", None)
        return json.dumps(payload, sort_keys=True, indent=2)

    def write(self, path: str | Path, *, csv_data: bool = False) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.to_json() + "\n")
        if csv_data and self.form:
            write_csv(self.form, out.with_suffix(".csv"))
        logger.info("wrote %s", out)
        return out

    @classmethod
    def read(cls, path: str | Path) -> RunResult:
        try:
            return cls.model_validate_json(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"result file not found: {path}") from exc


def _cells(form: DiscreteForm) -> list[CellValue]:
    out = []
    for cell in sorted(form.values):
        v = complex(form.values[cell])
        out.append(CellValue(cell=cell, real=v.real, imag=v.imag))
    return out


def write_csv(cells: list[CellValue], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "real", "imag"])
        for c in cells:
            writer.writerow([" ".join(str(v) for v in c.cell), repr(c.real), repr(c.imag)])


class Comparison(BaseModel):
    period_differences: dict[str, float]
    integers_agree: bool | None
    residual_ratios: dict[str, float]


def compare(a: RunResult, b: RunResult) -> Comparison:
    """Period differences, integer agreement and residual ratios of two runs.

    Raises:
        ConfigError: The runs computed different invariants.
    """
    if a.invariant != b.invariant:
        raise ConfigError(f"cannot compare '{a.invariant}' with '{b.invariant}'")
    diffs = {}
    for name in sorted(set(a.periods) & set(b.periods)):
        (ar, ai), (br, bi) = a.periods[name], b.periods[name]
        diffs[name] = math.hypot(ar - br, ai - bi)
    agree = None
    if a.integer is not None and b.integer is not None:
        agree = a.integer.value is not None and a.integer.value == b.integer.value
    ratios = {}
    for name in sorted(set(a.residuals) & set(b.residuals)):
        denom = b.residuals[name]
        ratios[name] = a.residuals[name] / denom if denom else (0.0 if not a.residuals[name] else math.inf)
    return Comparison(period_differences=diffs, integers_agree=agree, residual_ratios=ratios)
