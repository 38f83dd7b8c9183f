"""Maurer-Cartan descent over a mesh and the invariant forms built from it.

Components ``g^(m,k)`` carry chain degree ``m`` and Cartan weight ``k``; the
form degree is ``m + 1 - 2k`` and ``g^(0,0)`` is the connection ``G``. The
equation for ``g^(m+1,k)`` is

    d g^(m+1,k) = (-1)^m [ D g^(m,k) + 1/2 sum {g_a, g_b} + [m=0, k=1] Q ]

with ``F`` standing in for ``D G``. Each cell is solved on its own with the
state-preserving homotopy; the failure of the result to be exactly closed is
reported as a residual.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from joblib import Parallel, delayed

from .chains import (
    Chain,
    Pairing,
    confinement_profile,
    differential,
    pair_point,
)
from .config import DescentConfig
from .errors import GeometryError, SolverError
from .lattice import Lattice, Observable
from .mesh import DiscreteForm, Simplex, exterior_derivative, integrate
from .spectral import GroundData, pinch, regroup, solve_partial_psi
from .transport import (
    Connection,
    connection_form,
    covariant_coboundary,
    cup_bracket,
    curvature_form,
    state_values,
)

logger = logging.getLogger(__name__)

Index = tuple[int, int]


def form_degree(index: Index) -> int:
    m, k = index
    return m + 1 - 2 * k


def exists(index: Index) -> bool:
    m, k = index
    return m >= 0 and k >= 0 and form_degree(index) >= 0


@dataclass(frozen=True)
class ComponentEquation:
    """One bigraded component of the equivariant Maurer-Cartan equation."""

    target: Index
    sign: int
    covariant: Index | None = None
    curvature: bool = False
    pairs: tuple[tuple[Index, Index], ...] = ()
    charge: bool = False

    @property
    def form_degree(self) -> int:
        return form_degree(self.target)

    def describe(self) -> str:
        parts = []
        if self.curvature:
            parts.append("F")
        if self.covariant is not None:
            parts.append(f"D g{self.covariant}")
        for a, b in self.pairs:
            parts.append(f"1/2 {{g{a}, g{b}}}")
        if self.charge:
            parts.append("Q")
        rhs = " + ".join(parts) or "0"
        prefix = "" if self.sign == 1 else "-"
        return f"d g{self.target} = {prefix}({rhs})"


def component_equations(max_chain_degree: int, max_weight: int = 0) -> list[ComponentEquation]:
    """All component equations up to chain degree and weight, in solve order."""
    out = []
    for n in range(1, max_chain_degree + 1):
        for k in range(max_weight + 1):
            target = (n, k)
            if not exists(target):
                continue
            m = n - 1
            source = (m, k)
            pairs = tuple(
                ((m1, k1), (m - m1, k - k1))
                for m1 in range(m + 1)
                for k1 in range(k + 1)
                if (m1, k1) != (0, 0)
                and (m - m1, k - k1) != (0, 0)
                and exists((m1, k1))
                and exists((m - m1, k - k1))
            )
            eq = ComponentEquation(
                target,
                -1 if m % 2 else 1,
                covariant=source if source != (0, 0) and exists(source) else None,
                curvature=source == (0, 0),
                pairs=pairs,
                charge=source == (0, 1),
            )
            if eq.curvature or eq.covariant or eq.pairs or eq.charge:
                out.append(eq)
    return out


def charge_chain(lattice: Lattice, charges: Iterable[int]) -> Chain:
    """``q_j = i c_j (N_j - tr N_j)``; its differential is the charge derivation."""
    d = lattice.local_dim
    number = np.diag(np.arange(d, dtype=complex))
    entries = {}
    for j, c in zip(lattice.sites, charges, strict=True):
        if c:
            q = Observable((j,), 1j * c * number, d).traceless()
            entries[(j,)] = q
    return Chain.from_entries(lattice, 1, entries)


@dataclass(eq=False)
class DescentSolution:
    """The solved tower with per-level residuals.

    ``levels[(n, 0)]`` is ``g^(n)``; equivariant runs add the ``k >= 1``
    components.
    """

    connection: Connection = field(repr=False)
    G: DiscreteForm = field(repr=False)
    F: DiscreteForm = field(repr=False)
    levels: dict[Index, DiscreteForm] = field(default_factory=dict, repr=False)
    residuals: dict[Index, float] = field(default_factory=dict)
    equations: list[ComponentEquation] = field(default_factory=list, repr=False)

    def level(self, n: int, k: int = 0) -> DiscreteForm:
        if (n, k) not in self.levels:
            raise SolverError(f"component g({n},{k}) was not solved", level=(n, k))
        return self.levels[(n, k)]

    def residual_table(self) -> dict[str, float]:
        return {f"g({m},{k})": r for (m, k), r in sorted(self.residuals.items())}


@dataclass(eq=False)
class EquivariantSolution(DescentSolution):
    q1: Chain | None = field(default=None, repr=False)
    Q: Chain | None = field(default=None, repr=False)

    def t(self, n: int) -> DiscreteForm:
        return self.level(n, 1)

    @property
    def hall(self) -> DiscreteForm:
        return self.level(3, 2)


def _sum(forms: list[DiscreteForm]) -> DiscreteForm | None:
    if not forms:
        return None
    out = forms[0]
    for f in forms[1:]:
        out = out + f
    return out


def _rhs(
    eq: ComponentEquation,
    levels: Mapping[Index, DiscreteForm],
    conn: Connection,
    curvature: DiscreteForm,
    charge: Chain | None,
) -> DiscreteForm | None:
    parts: list[DiscreteForm] = []
    if eq.curvature:
        parts.append(curvature)
    if eq.covariant is not None:
        parts.append(covariant_coboundary(levels[eq.covariant], conn))
    for a, b in eq.pairs:
        parts.append(cup_bracket(levels[a], levels[b], conn).scale(0.5))
    if eq.charge and charge is not None:
        parts.append(
            DiscreteForm(conn.mesh, 0, {(v,): charge for v in conn.mesh.vertices})
        )
    total = _sum(parts)
    if total is None:
        return None
    return total if eq.sign == 1 else total.scale(-1)


def _solve_cell(
    cell: Simplex,
    rhs: Any,
    psi: GroundData,
    lattice: Lattice,
    degree: int,
    config: DescentConfig,
    target: Index,
) -> tuple[Chain, float]:
    if not isinstance(rhs, Chain) or rhs.is_zero():
        return Chain.zero(lattice, degree), 0.0
    try:
        value = solve_partial_psi(rhs, psi, config)
    except SolverError as exc:
        raise SolverError(f"cell {cell}: {exc.message}", level=target) from exc
    if value.degree != degree:
        raise SolverError(
            f"solution on cell {cell} has degree {value.degree}, expected {degree}",
            level=target,
        )
    residual = (differential(value) - rhs).max_norm() if degree >= 1 else 0.0
    return value, residual


def _solve_equation(
    eq: ComponentEquation,
    rhs: DiscreteForm | None,
    conn: Connection,
    config: DescentConfig,
    threads: int,
) -> tuple[DiscreteForm, float]:
    n = eq.target[0]
    cells = conn.mesh.cells(eq.form_degree)
    if rhs is None:
        zero = {s: Chain.zero(conn.lattice, n) for s in cells}
        return DiscreteForm(conn.mesh, eq.form_degree, zero, f"g{eq.target}"), 0.0
    jobs = (
        delayed(_solve_cell)(
            s, rhs.values.get(s), conn.cell_state(s), conn.lattice, n, config, eq.target
        )
        for s in cells
    )
    if threads > 1:
        results = Parallel(n_jobs=threads, prefer="threads")(jobs)
    else:
        results = [fn(*args, **kwargs) for fn, args, kwargs in jobs]
    values = {s: v for s, (v, _) in zip(cells, results, strict=True)}
    residual = max((r for _, r in results), default=0.0)
    logger.info("solved %s on %d cells, residual %.3g", eq.describe(), len(cells), residual)
    return DiscreteForm(conn.mesh, eq.form_degree, values, f"g{eq.target}"), residual


def _run(
    conn: Connection,
    equations: list[ComponentEquation],
    config: DescentConfig,
    threads: int,
    charge: Chain | None,
    out: DescentSolution,
) -> DescentSolution:
    for eq in equations:
        if eq.form_degree > conn.mesh.dimension:
            continue
        if eq.covariant is not None and eq.covariant not in out.levels:
            continue
        if any(a not in out.levels or b not in out.levels for a, b in eq.pairs):
            continue
        rhs = _rhs(eq, out.levels, conn, out.F, charge)
        form, residual = _solve_equation(eq, rhs, conn, config, threads)
        out.levels[eq.target] = form
        out.residuals[eq.target] = residual
        out.equations.append(eq)
    return out


def solve_mc(
    conn: Connection,
    order: int = 2,
    config: DescentConfig | None = None,
    threads: int = 1,
) -> DescentSolution:
    """Solve ``g^(1) .. g^(order)`` of the plain descent.

    Raises:
        SolverError: A level could not be solved; ``level`` names it.
    """
    config = config or DescentConfig()
    if order < 1:
        raise GeometryError("descent order must be at least 1")
    G = connection_form(conn)
    F = curvature_form(conn)
    out = DescentSolution(conn, G, F)
    return _run(conn, component_equations(order, 0), config, threads, None, out)


def check_invariance(conn: Connection, Q: Chain, tol: float) -> float:
    """Largest pinching defect of the charge derivation over all vertices."""
    worst = 0.0
    for psi in conn.states:
        grouped = regroup(Q, psi)
        for t in grouped.terms:
            worst = max(worst, (pinch(t, psi) - t).max_abs())
    if worst > tol:
        raise SolverError(
            f"charge does not preserve the ground states (defect {worst:.3g})",
            level="charge",
        )
    return worst


def solve_equivariant(
    conn: Connection,
    q1: Chain,
    order: int = 3,
    config: DescentConfig | None = None,
    threads: int = 1,
    max_weight: int = 2,
) -> EquivariantSolution:
    """The bigraded tower ``g^(n,k)`` for a U(1)-invariant family.

    Raises:
        SolverError: The charge does not preserve some ground state, or a
                     component failed.
    """
    config = config or DescentConfig()
    Q = differential(q1)
    check_invariance(conn, Q, config.psi_tol)
    out = EquivariantSolution(
        conn, connection_form(conn), curvature_form(conn), q1=q1, Q=Q
    )
    _run(conn, component_equations(order, max_weight), config, threads, Q, out)
    return out


@dataclass(frozen=True, eq=False)
class InvariantForm:
    """A closed scalar cochain with its diagnostics."""

    name: str
    form: DiscreteForm = field(repr=False)
    truncation: float = 0.0
    closedness: float = 0.0

    def period(self, cycle: str | Mapping[Simplex, int] = "fundamental") -> complex:
        return pairing_period(self.form, cycle)


def pairing_period(
    form: DiscreteForm, cycle: str | Mapping[Simplex, int] = "fundamental"
) -> complex:
    return integrate(form, cycle)


def _closedness(form: DiscreteForm) -> float:
    if form.degree >= form.mesh.dimension:
        return 0.0
    return exterior_derivative(form).max_abs()


def _paired(
    name: str,
    chains: DiscreteForm,
    conn: Connection,
    window: int | None,
) -> InvariantForm:
    values: dict[Simplex, complex] = {}
    truncation = 0.0
    worst: tuple[float, Chain | None] = (0.0, None)
    for s, h in chains.values.items():
        pairing: Pairing = pair_point(h, window)
        values[s] = conn.cell_state(s).psi(pairing.value)
        truncation = max(truncation, pairing.truncation)
        if h.max_norm() > worst[0]:
            worst = (h.max_norm(), h)
    if worst[1] is not None:
        confinement_profile(worst[1], conn.lattice.hyperplane(0))
    form = DiscreteForm(conn.mesh, chains.degree, values, name)
    return InvariantForm(name, form, truncation, _closedness(form))


def _require_dimension(conn: Connection, d: int, what: str) -> None:
    if conn.lattice.dimension != d:
        raise GeometryError(f"{what} needs a {d}d lattice")


def berry_2form(solution: DescentSolution) -> InvariantForm:
    """``psi(F)``: the ordinary Berry curvature as a scalar 2-cochain."""
    form = state_values(solution.F, solution.connection)
    return InvariantForm("berry", form, 0.0, _closedness(form))


def higher_berry_3form(
    solution: DescentSolution, window: int | None = 1
) -> InvariantForm:
    _require_dimension(solution.connection, 1, "the higher Berry form")
    return _paired("higher-berry", solution.level(2), solution.connection, window)


def thouless_1d(solution: EquivariantSolution, window: int | None = 1) -> InvariantForm:
    _require_dimension(solution.connection, 1, "the 1d pump")
    return _paired("thouless-1d", solution.t(2), solution.connection, window)


def thouless_2d(solution: EquivariantSolution, window: int | None = 1) -> InvariantForm:
    _require_dimension(solution.connection, 2, "the 2d pump")
    return _paired("thouless-2d", solution.t(3), solution.connection, window)


def hall_conductance(
    solution: EquivariantSolution, window: int | None = 1
) -> InvariantForm:
    """Per-vertex pairing of ``g^(3,2)``; ``closedness`` holds the spread."""
    _require_dimension(solution.connection, 2, "the Hall conductance")
    paired = _paired("hall", solution.hall, solution.connection, window)
    vals = np.array(list(paired.form.values.values()) or [0.0])
    spread = float(np.max(np.abs(vals - vals.mean())))
    return InvariantForm("hall", paired.form, paired.truncation, spread)


def hall_value(form: InvariantForm) -> complex:
    vals = list(form.form.values.values())
    return complex(np.mean(vals)) if vals else 0j
