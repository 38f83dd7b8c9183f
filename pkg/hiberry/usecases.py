from __future__ import annotations

import asyncio
import logging
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Literal

import numpy as np
from dijay import injectable
from pydantic import BaseModel

from .cech import cech_1d, line_bundle_2d
from .chains import (
    bracket,
    chain_distance,
    contracting_homotopy,
    differential,
    graded_sign,
    random_chain,
)
from .config import FamilyConfig, RuntimeConfig, SpectralConfig
from .descent import (
    DescentSolution,
    berry_2form,
    hall_conductance,
    hall_value,
    higher_berry_3form,
    solve_equivariant,
    solve_mc,
    thouless_1d,
    thouless_2d,
)
from .errors import ConfigError
from .families import (
    ChernPump,
    ConstantFamily,
    Family,
    GaugedFamily,
    RingPump,
    SpinFamily,
    berry_flux_oracle,
    build_family,
    charge_transport_oracle,
    default_mesh_for,
    random_gauge,
)
from .flux import build_flux_family, excess_berry
from .lattice import Lattice
from .mesh import ParamMesh, build_mesh, circle, good_cover, integrate, sphere
from .results import RunResult
from .spectral import gauge_transform
from .transport import (
    Connection,
    connection_form,
    curvature_form,
    generator_flux,
    generator_seminorm,
    parallelism_defect,
)

logger = logging.getLogger(__name__)

TWO_PI_I = 2j * np.pi


class Usecase[TResult, TInput = None](ABC):
    @abstractmethod
    async def execute(self, *, data: TInput = None) -> TResult:
        raise NotImplementedError


def _periods(form: Any, mesh: ParamMesh) -> dict[str, complex]:
    out = {}
    for name, cycle in mesh.cycles.items():
        if all(len(s) == form.form.degree + 1 for s in cycle):
            out[name] = form.period(cycle)
    return out


@injectable()
class InvariantService:
    """Builds the family, its mesh and connection, and runs one invariant."""

    def __init__(self, runtime: RuntimeConfig):
        self.runtime = runtime

    def family_and_mesh(self, config: FamilyConfig) -> tuple[Family, ParamMesh]:
        family = build_family(config)
        if config.mesh is None:
            mesh = default_mesh_for(family)
        else:
            mesh = build_mesh(config.mesh.manifold, config.mesh.resolution)
        family.check_mesh(mesh)
        return family, mesh

    def spectral(self, config: FamilyConfig) -> SpectralConfig:
        """The run's spectral settings with the dense cap lowered to the runtime's."""
        cap = min(config.spectral.dense_site_cap, self.runtime.dense_site_cap)
        return config.spectral.model_copy(update={"dense_site_cap": cap})

    def connection(
        self, family: Family, mesh: ParamMesh, spectral: SpectralConfig
    ) -> Connection:
        return Connection.from_family(family, mesh, spectral, self.runtime.threads)

    def _charge(self, family: Family) -> Any:
        q1 = family.charge_chain()
        if q1 is None:
            raise ConfigError(f"model '{family.name}' declares no U(1) charge")
        return q1

    def run(self, config: FamilyConfig) -> RunResult:
        started = time.perf_counter()
        spectral = self.spectral(config)
        family, mesh = self.family_and_mesh(config)
        conn = self.connection(family, mesh, spectral)
        threads = self.runtime.threads
        window = config.descent.pairing_window
        kind = config.invariant
        logger.info("computing %s for %s over %s", kind, family.name, mesh.manifold)

        extra: dict[str, Any] = {}
        residuals: dict[str, float] = {}
        estimate: float | None = None
        periods: dict[str, complex] = {}
        form = None

        match kind:
            case "berry":
                solution = DescentSolution(conn, connection_form(conn), curvature_form(conn))
                inv = berry_2form(solution)
                periods = _periods(inv, mesh)
                estimate = _normalized(periods, TWO_PI_I)
                residuals["closedness"] = inv.closedness
                extra["generator-seminorm"] = generator_seminorm(solution.G)
                form = inv.form
            case "higher-berry":
                solution = solve_mc(conn, 2, config.descent, threads)
                inv = higher_berry_3form(solution, window)
                periods = _periods(inv, mesh)
                estimate = _normalized(periods, TWO_PI_I)
                residuals.update(solution.residual_table())
                residuals.update(closedness=inv.closedness, truncation=inv.truncation)
                if isinstance(family, ChernPump):
                    extra["oracle"] = _pair(berry_flux_oracle(family) / TWO_PI_I)
                form = inv.form
            case "thouless-1d":
                eq = solve_equivariant(conn, self._charge(family), 2, config.descent, threads, 1)
                inv = thouless_1d(eq, window)
                extra["generator-seminorm"] = generator_seminorm(connection_form(conn))
                periods = _periods(inv, mesh)
                estimate = _normalized(periods, 1j)
                residuals.update(eq.residual_table())
                residuals.update(closedness=inv.closedness, truncation=inv.truncation)
                if isinstance(family, RingPump):
                    extra["oracle"] = charge_transport_oracle(family, mesh, spectral)
                form = inv.form
            case "thouless-2d":
                eq = solve_equivariant(conn, self._charge(family), 3, config.descent, threads, 1)
                inv = thouless_2d(eq, window)
                periods = _periods(inv, mesh)
                estimate = _normalized(periods, TWO_PI_I)
                residuals.update(eq.residual_table())
                residuals.update(closedness=inv.closedness, truncation=inv.truncation)
                form = inv.form
            case "hall":
                eq = solve_equivariant(conn, self._charge(family), 3, config.descent, threads, 2)
                inv = hall_conductance(eq, window)
                value = hall_value(inv)
                periods = {"point": value}
                estimate = float((value / TWO_PI_I).real)
                residuals.update(eq.residual_table())
                residuals.update(spread=inv.closedness, truncation=inv.truncation)
                form = inv.form
            case "cech-1d":
                solution = solve_mc(conn, 2, config.descent, threads)
                data = cech_1d(conn, solution, good_cover(mesh), config=config.descent)
                assert data.zigzag is not None and data.omega is not None
                estimate = float(data.zigzag.integer)
                extra["integral"] = data.zigzag.estimate
                residuals.update(data.residuals)
                residuals.update(solution.residual_table())
                form = data.omega
            case "cech-2d":
                q1 = self._charge(family)
                eq = solve_equivariant(conn, q1, 3, config.descent, threads, 1)
                n_theta = config.mesh.flux_resolution if config.mesh else 8
                bundle = line_bundle_2d(conn, q1, good_cover(mesh), n_theta, eq, window)
                assert bundle.zigzag is not None
                estimate = float(bundle.zigzag.integer)
                extra["integral"] = bundle.zigzag.estimate
                residuals.update(bundle.residuals)
                form = bundle.omega
            case "verify-flux":
                q1 = self._charge(family)
                eq = solve_equivariant(conn, q1, 3, config.descent, threads, 1)
                n_theta = config.mesh.flux_resolution if config.mesh else 8
                flux = build_flux_family(eq, n_theta, threads)
                report = excess_berry(flux, config.descent)
                fiber, eta = report.periods()
                periods = {"fiber": fiber, "eta": eta}
                estimate = float((eta / TWO_PI_I).real)
                residuals.update(report.residuals)
                residuals["mismatch"] = report.mismatch
                residuals["period-gap"] = abs(fiber - eta)
                form = report.fiber
            case _:
                raise ConfigError(f"unknown invariant '{kind}'")

        return RunResult.build(
            config,
            periods=periods,
            estimate=estimate,
            residuals=residuals,
            form=form,
            extra=extra,
            seconds=time.perf_counter() - started,
        )


def _normalized(periods: dict[str, complex], unit: complex) -> float | None:
    if "fundamental" not in periods:
        return None
    return float((periods["fundamental"] / unit).real)


def _pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


class ComputeData(BaseModel):
    config: FamilyConfig
    out: Path | None = None


@injectable()
class ComputeInvariantUsecase(Usecase[RunResult, ComputeData]):
    def __init__(self, service: InvariantService, runtime: RuntimeConfig):
        self.service = service
        self.runtime = runtime

    async def execute(self, *, data: ComputeData) -> RunResult:
        result = await asyncio.to_thread(self.service.run, data.config)
        if data.out is not None:
            result.write(data.out, csv_data=self.runtime.emit_csv)
        return result


@injectable()
class VerifyFluxUsecase(Usecase[RunResult, ComputeData]):
    def __init__(self, service: InvariantService):
        self.service = service

    async def execute(self, *, data: ComputeData) -> RunResult:
        config = data.config.model_copy(update={"invariant": "verify-flux"})
        result = await asyncio.to_thread(self.service.run, config)
        if data.out is not None:
            result.write(data.out)
        return result


class SelftestData(BaseModel):
    level: Literal["quick", "full"] = "quick"
    seed: int = 0


class CheckOutcome(BaseModel):
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def check_dg_lie(rng: np.random.Generator, trials: int) -> float:
    """``d^2 = 0``, graded antisymmetry and graded Jacobi on random chains."""
    lat = Lattice.chain(5)
    worst = 0.0
    for _ in range(trials):
        p, q, r = (int(k) for k in rng.integers(1, 3, size=3))
        f, g, h = (random_chain(lat, k, rng) for k in (p, q, r))
        if p >= 2:
            worst = max(worst, differential(differential(f)).max_norm())
        anti = bracket(f, g) + bracket(g, f).scale(graded_sign(f, g))
        worst = max(worst, anti.max_norm())
        jacobi = (
            bracket(f, bracket(g, h)).scale((-1) ** (p * r))
            + bracket(g, bracket(h, f)).scale((-1) ** (q * p))
            + bracket(h, bracket(f, g)).scale((-1) ** (r * q))
        )
        worst = max(worst, jacobi.max_norm())
    return worst


def check_homotopy(rng: np.random.Generator, trials: int) -> float:
    """``K d + d K = 1`` for the brick homotopy."""
    lat = Lattice.chain(5)
    worst = 0.0
    for _ in range(trials):
        degree = int(rng.integers(1, 3))
        f = random_chain(lat, degree, rng)
        back = contracting_homotopy(differential(f)) + differential(contracting_homotopy(f))
        worst = max(worst, chain_distance(back, f))
    return worst


def check_constant_family() -> float:
    lat = Lattice.chain(4)
    family = ConstantFamily(lat)
    conn = Connection.from_family(family, sphere(2, 2))
    return berry_2form(DescentSolution(conn, connection_form(conn), curvature_form(conn))).form.max_abs()


def check_single_spin(resolution: int) -> float:
    """Distance of the anti-aligned spin's Berry number from ``-1``."""
    family = SpinFamily()
    conn = Connection.from_family(family, sphere(2, resolution))
    inv = berry_2form(DescentSolution(conn, connection_form(conn), curvature_form(conn)))
    return abs(inv.period() / TWO_PI_I + 1)


def check_ring_oracle() -> float:
    family = RingPump()
    return abs(charge_transport_oracle(family, circle(16)) - 1.0)


def check_gauge_invariance(rng: np.random.Generator) -> float:
    """Berry number and parallelism survive a random local regauging of the spin."""
    family = SpinFamily()
    mesh = sphere(2, 2)
    conn = Connection.from_family(family, mesh)
    gauge = random_gauge(family.lattice, rng, family.lattice.sites)
    moved = gauge_transform(
        connection_form(conn), {v: gauge(p) for v, p in enumerate(mesh.points)}
    )
    gauged = Connection.from_family(GaugedFamily(family, lambda p: gauge(p).inverse()), mesh)
    before = integrate(generator_flux(connection_form(conn), conn))
    after = integrate(generator_flux(moved, gauged))
    return max(abs(after - before) / (2 * np.pi), parallelism_defect(moved, gauged))


@injectable()
class SelftestUsecase(Usecase[list[CheckOutcome], SelftestData]):
    async def execute(self, *, data: SelftestData) -> list[CheckOutcome]:
        return await asyncio.to_thread(self.run, data)

    def run(self, data: SelftestData) -> list[CheckOutcome]:
        rng = np.random.default_rng(data.seed)
        trials = 20 if data.level == "quick" else 100
        out = [
            CheckOutcome(name="dg-lie", residual=check_dg_lie(rng, trials), tolerance=1e-10),
            CheckOutcome(name="homotopy", residual=check_homotopy(rng, trials), tolerance=1e-9),
            CheckOutcome(name="constant-family", residual=check_constant_family(), tolerance=1e-12),
        ]
        if data.level == "full":
            out.append(CheckOutcome(name="single-spin", residual=check_single_spin(4), tolerance=1e-6))
            out.append(CheckOutcome(name="ring-oracle", residual=check_ring_oracle(), tolerance=1e-9))
            out.append(
                CheckOutcome(
                    name="gauge-invariance", residual=check_gauge_invariance(rng), tolerance=1e-6
                )
            )
        for o in out:
            logger.info("selftest %s: %.3g (tol %.1g)", o.name, o.residual, o.tolerance)
        return out
