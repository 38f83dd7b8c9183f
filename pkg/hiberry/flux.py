"""Flux insertion: the 2d pump form from the higher Berry form of a family
with a threaded U(1) flux.

A 2d U(1)-invariant family over ``M`` becomes a family over ``M x S^1`` by
rotating every ground state with ``rho(theta)``, the ordered exponential of
``d res_{H1} q`` over the flux angle. The counterterm connection
``G = rho(G_M - dtheta (x) d res_{H1}(q - t^(1)))`` keeps the rotated states
parallel, and the descent along it is ``g^(2) = rho(g_M^(2) - dtheta (x) f^(2))``.
Pairing the excess across the boundary of ``H2`` and integrating over the
flux circle reproduces ``2 pi`` times the pump form of the original family.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed

from .chains import (
    Chain,
    boundary_commutator,
    bracket,
    chain_distance,
    chain_from_derivation,
    confinement_profile,
    differential,
    pair_hyperplane,
    pair_point,
    restrict,
)
from .config import DescentConfig
from .descent import EquivariantSolution
from .errors import GeometryError, SolverError
from .lattice import Lattice, Observable, commutator
from .mesh import DiscreteForm, Simplex, angle_form, circle, fiber_integrate, integrate, product
from .spectral import (
    Automorphism,
    Block,
    GroundData,
    apply_local,
    apply_to_vector,
    derivation_exponential,
    join_partition,
    lga_integrate,
)
from .transport import Connection, covariant_coboundary, state_overlap

logger = logging.getLogger(__name__)


def flux_rotations(rotation: Chain, n_theta: int) -> tuple[list[Automorphism], Automorphism]:
    """``rho(2 pi k / n_theta)`` for every fiber node, and ``rho(2 pi)``.

    ``rotation`` is the derivation ``d res_{H1} q``; each fiber step
    integrates ``d rho / d theta = rotation rho``.
    """
    fiber = circle(n_theta)
    dtheta = angle_form(fiber)
    gform = DiscreteForm(
        fiber, 1, {e: rotation.scale(-dtheta[e]) for e in fiber.cells(1)}, "rotation"
    )
    rho = [lga_integrate(gform, tuple(range(k + 1))) for k in range(n_theta)]
    return rho, lga_integrate(gform, (*range(n_theta), 0))


def rotate_ground(psi: GroundData, alpha: Automorphism) -> GroundData:
    """``alpha`` applied block by block.

    Raises:
        GeometryError: A factor straddles two blocks.
    """
    vectors = [b.vector for b in psi.blocks]
    for f in alpha.factors:
        owners = {psi.block_of[s] for s in f.sites}
        if len(owners) != 1:
            raise GeometryError(f"rotation factor on {f.sites} straddles ground-state blocks")
        i = owners.pop()
        vectors[i] = apply_local(vectors[i], psi.blocks[i].sites, f)
    blocks = tuple(
        Block(b.sites, v, b.energy, b.gap) for b, v in zip(psi.blocks, vectors, strict=True)
    )
    return GroundData(psi.lattice, blocks, psi.energy, psi.gap)


def theta_generator(solution: EquivariantSolution, rotation: Chain, m: int) -> Chain:
    """``d res_{H1}(q - t^(1))`` at base vertex ``m``."""
    left = solution.connection.lattice.half_space(0)
    t1 = solution.t(1).values[(m,)]
    return rotation - differential(restrict(t1, left))


@dataclass(eq=False)
class FluxFamily:
    """Ground states and counterterm connection of the flux-threaded family over ``M x S^1``.

    Vertex ``m * n_theta + k`` carries ``rho_k psi_M(m)``.
    """

    solution: EquivariantSolution = field(repr=False)
    rotation: Chain = field(repr=False)
    rho: tuple[Automorphism, ...] = field(repr=False)
    connection: Connection = field(repr=False)
    G: DiscreteForm = field(repr=False)
    n_theta: int
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def base(self) -> Connection:
        return self.solution.connection

    @property
    def lattice(self) -> Lattice:
        return self.base.lattice

    @cached_property
    def dtheta(self) -> DiscreteForm:
        return angle_form(self.connection.mesh)

    def split(self, v: int) -> tuple[int, int]:
        return divmod(v, self.n_theta)

    def transport(self, x: int, y: int) -> list[Observable]:
        """Ordered exponential of ``-G`` from ``x`` to ``y``: base step, then fiber step.

        Along the fiber ``rho`` moves with the angle, so the step factors into
        ``exp(-dtheta rho(d res t^(1)))`` followed by ``exp(dtheta d res q)``.
        """
        (m1, k1), (m2, k2) = self.split(x), self.split(y)
        rho = self.rho[k1]
        factors: list[Observable] = []
        if m1 != m2:
            factors += derivation_exponential(rho.act_chain(self.solution.G.values[(m1, m2)]))
        if k1 != k2:
            step = self.dtheta[(x, y)]
            inner = self.rotation - theta_generator(self.solution, self.rotation, m2)
            factors += derivation_exponential(rho.act_chain(inner).scale(step))
            factors += derivation_exponential(self.rotation.scale(step), 1.0)
        return factors


def counterterm_connection(
    solution: EquivariantSolution,
    rotation: Chain,
    rho: Sequence[Automorphism],
    n_theta: int,
) -> DiscreteForm:
    """``G = rho(G_M - dtheta (x) d res_{H1}(q - t^(1)))`` on ``M x S^1``."""
    base = solution.connection
    mesh = product(base.mesh, circle(n_theta))
    dtheta = angle_form(mesh)
    values: dict[Simplex, Chain] = {}
    for e in mesh.cells(1):
        (m1, k1), (m2, k2) = divmod(e[0], n_theta), divmod(e[1], n_theta)
        g = Chain.zero(base.lattice, 0)
        if m1 != m2:
            g = g + solution.G.values[(m1, m2)]
        if k1 != k2:
            g = g + theta_generator(solution, rotation, m1).scale(-dtheta[e])
        values[e] = rho[k1].act_chain(g)
    return DiscreteForm(mesh, 1, values, "G")


def charge_defect(gform: DiscreteForm, Q: Chain) -> float:
    """Largest ``|[sum_{j in supp A} q_j, A]|`` over the terms ``A`` of every edge generator."""
    worst = 0.0
    for g in gform.values.values():
        for t in g.terms:
            local = [q for q in Q.terms if q.support <= t.support]
            if not local:
                continue
            total = local[0]
            for q in local[1:]:
                total = total + q
            worst = max(worst, commutator(total, t).max_abs())
    return worst


def transported_overlap(
    psi_x: GroundData, psi_y: GroundData, factors: Sequence[Observable]
) -> complex:
    """``<psi_y|U psi_x>`` over the joint blocks, densifying only where ``U`` acts."""
    touched = {s for f in factors for s in f.sites}
    out = 1.0 + 0j
    inside: set[int] = set()
    for part in join_partition([psi_x, psi_y]):
        if touched & set(part):
            inside |= set(part)
            continue
        out *= complex(np.vdot(psi_y.vector_on(part)[1], psi_x.vector_on(part)[1]))
    if inside:
        sites, vx = psi_x.vector_on(inside)
        _, vy = psi_y.vector_on(inside)
        out *= complex(np.vdot(vy, apply_to_vector(vx, sites, factors)))
    return out


def parallelism(flux: FluxFamily) -> float:
    """``1 - |<psi_y|T_xy psi_x>|`` at the worst edge of ``M x S^1``."""
    conn = flux.connection
    return max(
        (
            1.0
            - abs(transported_overlap(conn.states[x], conn.states[y], flux.transport(x, y)))
            for x, y in conn.mesh.cells(1)
        ),
        default=0.0,
    )


def build_flux_family(
    solution: EquivariantSolution, n_theta: int = 8, threads: int = 1
) -> FluxFamily:
    """Thread the flux through the left half-plane at ``n_theta`` angles.

    ``solution`` is the equivariant tower of the unthreaded family; its
    ``t^(1)`` enters the counterterm.

    Raises:
        GeometryError: The lattice is not 2d.
        SolverError: The solution carries no charge.
    """
    base = solution.connection
    if base.lattice.dimension != 2:
        raise GeometryError("flux insertion needs a 2d lattice")
    if solution.q1 is None or solution.Q is None:
        raise SolverError("flux insertion needs a charge", level="flux")
    rotation = differential(restrict(solution.q1, base.lattice.half_space(0)))
    rho, full_turn = flux_rotations(rotation, n_theta)

    def fiber(psi: GroundData) -> list[GroundData]:
        return [rotate_ground(psi, r) for r in rho]

    if threads <= 1:
        fibers = [fiber(psi) for psi in base.states]
    else:
        fibers = Parallel(n_jobs=threads, prefer="threads")(
            delayed(fiber)(psi) for psi in base.states
        )
    G = counterterm_connection(solution, rotation, rho, n_theta)
    conn = Connection(G.mesh, [psi for states in fibers for psi in states])
    flux = FluxFamily(solution, rotation, tuple(rho), conn, G, n_theta)

    flux.residuals["parallelism"] = parallelism(flux)
    flux.residuals["charge-invariance"] = charge_defect(G, solution.Q)
    flux.residuals["full-rotation"] = max(
        1.0 - abs(state_overlap(psi, rotate_ground(psi, full_turn))) for psi in base.states
    )
    theta_g = theta_generator(solution, rotation, 0)
    if theta_g.terms:
        report = confinement_profile(chain_from_derivation(theta_g), base.lattice.hyperplane(0))
        if report.slope is not None:
            flux.residuals["theta-generator-slope"] = report.slope
    if flux.residuals["parallelism"] > 1e-6:
        logger.warning("flux family parallelism degraded: %.3g", flux.residuals["parallelism"])
    logger.info("flux family on %d vertices", conn.mesh.n_vertices)
    return flux


@dataclass(frozen=True)
class ExcessBerry:
    """Excess Berry pairing on ``M x S^1`` against the pump form on ``M``.

    ``fiber`` is the fiber integral of ``excess`` divided by ``2 pi``; it
    matches ``eta`` cell by cell up to the descent residuals.
    """

    excess: DiscreteForm = field(repr=False)
    fiber: DiscreteForm = field(repr=False)
    eta: DiscreteForm = field(repr=False)
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def mismatch(self) -> float:
        return max(
            (abs(self.fiber[s] - self.eta[s]) for s in self.eta.values), default=0.0
        )

    def periods(self) -> tuple[complex, complex]:
        """``(integral of fiber, integral of eta)`` over the base."""
        return integrate(self.fiber), integrate(self.eta)


def regularized_chains(
    solution: EquivariantSolution,
) -> tuple[DiscreteForm, DiscreteForm, dict[str, float]]:
    """``f1 = [d, res_L] t2`` and ``f2 = {res_L t1, res_R g1} + [d, res_L] t3``.

    The residuals measure ``d f1 + D(d res_L t1)`` and
    ``d f2 - d({res_L t1, g1} + res_L D t2)``.
    """
    conn = solution.connection
    left = conn.lattice.half_space(0)
    right = left.complement()
    t1, t2, t3 = solution.t(1), solution.t(2), solution.t(3)
    g1 = solution.level(1)

    f1 = DiscreteForm(
        conn.mesh,
        1,
        {e: boundary_commutator(t2.values[e], left) for e in t2.values},
        "f1",
    )
    left_t1 = DiscreteForm(
        conn.mesh,
        0,
        {v: differential(restrict(t1.values[v], left)) for v in t1.values},
    )
    d_left_t1 = covariant_coboundary(left_t1, conn)
    r1 = max(
        (
            chain_distance(differential(f1.values[e]), d_left_t1.values[e].scale(-1))
            for e in f1.values
            if e in d_left_t1.values
        ),
        default=0.0,
    )

    d_t2 = covariant_coboundary(t2, conn)
    f2_values: dict[tuple[int, ...], Chain] = {}
    r2 = 0.0
    for tau, t3_tau in t3.values.items():
        lt1 = restrict(t1.values[(tau[0],)], left)
        value = bracket(lt1, restrict(g1.values[tau], right)) + boundary_commutator(
            t3_tau, left
        )
        f2_values[tau] = value
        target = bracket(lt1, g1.values[tau]) + restrict(d_t2.values[tau], left)
        r2 = max(r2, chain_distance(differential(value), differential(target)))
    f2 = DiscreteForm(conn.mesh, 2, f2_values, "f2")
    return f1, f2, {"f1": r1, "f2": r2}


def excess_berry(flux: FluxFamily, config: DescentConfig | None = None) -> ExcessBerry:
    """Compare the flux-circle integral of the excess pairing with the pump form.

    The excess ``g^(2) - rho(g_M^(2)) = -rho(dtheta (x) f^(2))`` is paired
    with the outward-oriented boundary of ``H2`` and evaluated on the
    threaded states.
    """
    config = config or DescentConfig()
    window = config.pairing_window
    solution = flux.solution
    base = flux.base
    conn = flux.connection
    _, f2, regular = regularized_chains(solution)

    pairings = {tau: pair_hyperplane(h, 1, window) for tau, h in f2.values.items()}
    values: dict[Simplex, complex] = {}
    for sigma in conn.mesh.cells(3):
        step = flux.dtheta[sigma[:2]]
        tau = tuple(flux.split(v)[0] for v in sigma[1:])
        if step == 0.0 or len(set(tau)) < 3:
            values[sigma] = 0j
            continue
        rho = flux.rho[flux.split(sigma[1])[1]]
        values[sigma] = step * conn.states[sigma[1]].psi(rho.act(pairings[tau].value))
    excess = DiscreteForm(conn.mesh, 3, values, "excess")
    fiber = fiber_integrate(excess).scale(1.0 / (2 * np.pi))
    eta = DiscreteForm(
        base.mesh,
        2,
        {
            s: base.cell_state(s).psi(pair_point(h, window).value)
            for s, h in solution.t(3).values.items()
        },
        "eta",
    )

    residuals = dict(flux.residuals)
    residuals["truncation"] = max((p.truncation for p in pairings.values()), default=0.0)
    if f2.values:
        widest = max(f2.values.values(), key=lambda h: h.max_norm())
        report = confinement_profile(widest, flux.lattice.hyperplane(0))
        if report.slope is not None:
            residuals["excess-slope"] = report.slope
    left = flux.lattice.half_space(0)
    right = left.complement()
    t1, g1 = solution.t(1), solution.level(1)
    cross = 0.0
    for tau, g1_tau in g1.values.items():
        term = bracket(restrict(t1.values[(tau[0],)], left), restrict(g1_tau, right))
        if term.entries:
            value = base.cell_state(tau).psi(pair_hyperplane(term, 1, window).value)
            cross = max(cross, abs(value))
    residuals["cross-term"] = cross
    residuals.update({f"regularized-{k}": v for k, v in regular.items()})

    out = ExcessBerry(excess, fiber, eta, residuals)
    logger.info("flux insertion mismatch %.3g", out.mismatch)
    return out
