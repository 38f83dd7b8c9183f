"""Discrete parallel transport of gapped families over a parameter mesh.

Every mesh edge carries the block-local unitary that rotates the ground
vector at its tail onto the one at its head. Values living at a vertex are
moved to a neighbouring vertex by conjugating with that unitary, which turns
scalar and chain-valued cochains into forms with a covariant coboundary.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Protocol

import numpy as np
from joblib import Parallel, delayed

from .chains import Chain, bracket, ual_seminorm
from .config import SpectralConfig
from .errors import GeometryError, SolverError
from .lattice import Lattice, Observable, embed
from .mesh import DiscreteForm, ParamMesh, Simplex, faces
from .spectral import (
    Automorphism,
    GroundData,
    align_unitary,
    apply_to_vector,
    derivation_exponential,
    evaluate_state_on_inner,
    join_partition,
    rotation_log,
    unitary_log,
)

logger = logging.getLogger(__name__)


class HasGround(Protocol):
    lattice: Lattice

    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData: ...


def sweep_states(
    family: HasGround,
    mesh: ParamMesh,
    config: SpectralConfig | None = None,
    threads: int = 1,
) -> list[GroundData]:
    """Ground states at every mesh vertex, in vertex order."""
    config = config or SpectralConfig()
    logger.info("ground states on %d vertices (%d workers)", mesh.n_vertices, threads)
    if threads <= 1:
        return [family.ground(p, config) for p in mesh.points]
    return list(
        Parallel(n_jobs=threads, prefer="threads")(
            delayed(family.ground)(p, config) for p in mesh.points
        )
    )


def state_overlap(psi_x: GroundData, psi_y: GroundData) -> complex:
    """``<psi_y|psi_x>`` as a product over the joint blocks."""
    out = 1.0 + 0j
    for part in join_partition([psi_x, psi_y]):
        _, vx = psi_x.vector_on(part)
        _, vy = psi_y.vector_on(part)
        out *= complex(np.vdot(vy, vx))
    return out


@dataclass(frozen=True, eq=False)
class EdgeTransport:
    """Block unitaries ``U_b`` with ``U psi_x = phase * psi_y``."""

    blocks: tuple[tuple[int, ...], ...]
    unitaries: tuple[Observable, ...] = field(repr=False)
    logs: tuple[Observable, ...] = field(repr=False)

    @cached_property
    def backward(self) -> Automorphism:
        """``a -> U* a U``: values at the head seen from the tail."""
        return Automorphism(tuple(u.adjoint() for u in self.unitaries), "transport")

    @cached_property
    def forward(self) -> Automorphism:
        return Automorphism(self.unitaries, "transport")

    def generator(self, lattice: Lattice) -> Chain:
        """``G_e = -log U`` as a derivation."""
        return Chain.derivation(lattice, (g.scale(-1) for g in self.logs))


def edge_transport(psi_x: GroundData, psi_y: GroundData, tol: float = 1e-14) -> EdgeTransport:
    """Align the two ground states block by block over their joint partition.

    Raises:
        SolverError: The states are orthogonal on some block.
    """
    d = psi_x.lattice.local_dim
    blocks, unitaries, logs = [], [], []
    for part in join_partition([psi_x, psi_y]):
        sites, vx = psi_x.vector_on(part)
        _, vy = psi_y.vector_on(part)
        try:
            u = align_unitary(vx, vy)
        except SolverError as exc:
            raise SolverError(
                f"ground states are orthogonal on block {sites}; refine the mesh"
            ) from exc
        if np.max(np.abs(u - np.eye(u.shape[0]))) <= tol:
            continue
        blocks.append(sites)
        unitaries.append(Observable(sites, u, d))
        logs.append(Observable(sites, rotation_log(vx, vy), d))
    return EdgeTransport(tuple(blocks), tuple(unitaries), tuple(logs))


class Connection:
    """Vertex states of a family over a mesh with cached edge transports.

    Args:
        mesh: The parameter mesh.
        states: Ground data per vertex.
    """

    def __init__(self, mesh: ParamMesh, states: Sequence[GroundData]) -> None:
        if len(states) != mesh.n_vertices:
            raise GeometryError("one ground state per mesh vertex is required")
        self.mesh = mesh
        self.states = list(states)
        self.lattice = states[0].lattice
        self._edges: dict[tuple[int, int], EdgeTransport] = {}
        self._cells: dict[Simplex, GroundData] = {}

    @classmethod
    def from_family(
        cls,
        family: HasGround,
        mesh: ParamMesh,
        config: SpectralConfig | None = None,
        threads: int = 1,
    ) -> Connection:
        return cls(mesh, sweep_states(family, mesh, config, threads))

    def edge(self, x: int, y: int) -> EdgeTransport:
        if (x, y) not in self._edges:
            self._edges[(x, y)] = edge_transport(self.states[x], self.states[y])
        return self._edges[(x, y)]

    def transport(self, x: int, y: int) -> Automorphism:
        """``T_xy``: pulls a value at ``y`` back to ``x`` so ``psi_x(T a) = psi_y(a)``."""
        if x == y:
            return Automorphism()
        return self.edge(x, y).backward

    def cell_state(self, simplex: Simplex) -> GroundData:
        """The state at the first vertex, coarsened to the cell's joint blocks."""
        if simplex not in self._cells:
            partition = join_partition([self.states[v] for v in simplex])
            self._cells[simplex] = self.states[simplex[0]].coarsen(partition)
        return self._cells[simplex]

    def carry(self, value: Any, x: int, y: int) -> Any:
        if x == y or not isinstance(value, Chain):
            return value
        return self.transport(x, y).act_chain(value)


def connection_form(conn: Connection) -> DiscreteForm:
    """The derivation-valued 1-form ``G`` with ``exp(-G_e)`` the edge transport."""
    values = {
        e: conn.edge(*e).generator(conn.lattice) for e in conn.mesh.cells(1)
    }
    return DiscreteForm(conn.mesh, 1, values, "G")


def _block_matrix(factors: Sequence[Observable], sites: tuple[int, ...], d: int) -> np.ndarray:
    out = np.eye(d ** len(sites), dtype=complex)
    for f in factors:
        if f.support <= set(sites):
            out = embed(f, sites).matrix @ out
    return out


def triangle_curvature(conn: Connection, tri: Simplex) -> Chain:
    """``-log(U_02* U_12 U_01)`` per joint block of the three states."""
    v0, v1, v2 = tri
    d = conn.lattice.local_dim
    u01 = conn.edge(v0, v1).unitaries
    u12 = conn.edge(v1, v2).unitaries
    u02 = conn.edge(v0, v2).unitaries
    terms = []
    for part in join_partition([conn.states[v] for v in tri]):
        sites = tuple(part)
        w = (
            _block_matrix(u02, sites, d).conj().T
            @ _block_matrix(u12, sites, d)
            @ _block_matrix(u01, sites, d)
        )
        if np.max(np.abs(w - np.eye(w.shape[0]))) < 1e-14:
            continue
        terms.append(Observable(sites, -unitary_log(w), d).traceless())
    return Chain.derivation(conn.lattice, terms)


def curvature_form(conn: Connection) -> DiscreteForm:
    values = {t: triangle_curvature(conn, t) for t in conn.mesh.cells(2)}
    return DiscreteForm(conn.mesh, 2, values, "F")


def _signed(value: Any, sign: int) -> Any:
    if sign == 1:
        return value
    return value.scale(-1) if isinstance(value, Chain) else -value


def covariant_coboundary(omega: DiscreteForm, conn: Connection) -> DiscreteForm:
    """``(D w)[v0..] = T_01 w[v1..] + sum_{i>=1} (-1)^i w[face_i]``."""
    values: dict[Simplex, Any] = {}
    for s in conn.mesh.cells(omega.degree + 1):
        total: Any = None
        for i, (sign, face) in enumerate(faces(s)):
            if face not in omega.values:
                continue
            value = omega.values[face]
            if i == 0:
                value = conn.carry(value, s[0], s[1])
            term = _signed(value, sign)
            total = term if total is None else total + term
        if total is not None:
            values[s] = total
    return DiscreteForm(conn.mesh, omega.degree + 1, values)


def cup_bracket(x: DiscreteForm, y: DiscreteForm, conn: Connection) -> DiscreteForm:
    """``{X, Y}[v0..v_{p+q}] = (-1)^{n_X q} {X[v0..vp], T_0p Y[vp..]}``."""
    p, q = x.degree, y.degree
    values: dict[Simplex, Chain] = {}
    for s in conn.mesh.cells(p + q):
        front, back = s[: p + 1], s[p:]
        if front not in x.values or back not in y.values:
            continue
        a = x.values[front]
        b = conn.carry(y.values[back], s[0], s[p])
        value = bracket(a, b)
        if (a.degree * q) % 2:
            value = value.scale(-1)
        values[s] = value
    return DiscreteForm(conn.mesh, p + q, values)


def holonomy(conn: Connection, loop: Sequence[int]) -> complex:
    """Phase picked up by the ground state transported around a closed path."""
    if len(loop) < 2 or loop[0] != loop[-1]:
        raise GeometryError("holonomy needs a closed vertex path")
    phase = 1.0 + 0j
    for x, y in zip(loop, loop[1:]):
        o = state_overlap(conn.states[x], conn.states[y])
        if abs(o) < 1e-12:
            raise SolverError(f"ground states at {x} and {y} are orthogonal")
        phase *= o / abs(o)
    return phase


def state_values(form: DiscreteForm, conn: Connection) -> DiscreteForm:
    """Scalar cochain ``psi_{v0}(f[s])`` of a derivation-valued form."""
    values = {
        s: evaluate_state_on_inner(v, conn.cell_state(s)) for s, v in form.values.items()
    }
    return DiscreteForm(form.mesh, form.degree, values)



def _move(g: Chain, vector: np.ndarray, sites: tuple[int, ...], forward: bool) -> np.ndarray:
    return apply_to_vector(vector, sites, derivation_exponential(g, -1.0 if forward else 1.0))


def parallelism_defect(gform: DiscreteForm, conn: Connection) -> float:
    """Largest ``1 - |<psi_y| exp(-G_e) psi_x>|`` over the edges of ``gform``."""
    sites = tuple(conn.lattice.sites)
    worst = 0.0
    for (x, y), g in gform.values.items():
        moved = _move(g, conn.states[x].full_vector(), sites, True)
        worst = max(worst, 1.0 - abs(np.vdot(conn.states[y].full_vector(), moved)))
    return worst


def generator_flux(gform: DiscreteForm, conn: Connection) -> DiscreteForm:
    """Scalar 2-form ``-log <psi_0| hol |psi_0>`` of the loop transports of ``gform``.

    For the connection of ``conn`` itself this agrees with
    ``state_values(curvature_form(conn), conn)``.
    """
    sites = tuple(conn.lattice.sites)
    values: dict[Simplex, complex] = {}
    for tri in conn.mesh.cells(2):
        v0, v1, v2 = tri
        psi0 = conn.states[v0].full_vector()
        moved = _move(gform.values[(v0, v1)], psi0, sites, True)
        moved = _move(gform.values[(v1, v2)], moved, sites, True)
        moved = _move(gform.values[(v0, v2)], moved, sites, False)
        phase = np.vdot(psi0, moved)
        if abs(phase) < 1e-12:
            raise SolverError(f"transport around {tri} loses the state")
        values[tri] = -np.log(phase / abs(phase))
    return DiscreteForm(conn.mesh, 2, values)


def generator_seminorm(gform: DiscreteForm, alpha: int = 2) -> float:
    """Largest ``||G_e||_alpha`` over the edges: how local the connection is."""
    return max((ual_seminorm(g, alpha) for g in gform.values.values()), default=0.0)
