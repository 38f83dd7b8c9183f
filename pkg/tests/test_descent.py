import re

import pytest

from hiberry.chains import Chain, differential
from hiberry.config import DescentConfig
from hiberry.descent import (
    DescentSolution,
    EquivariantSolution,
    _solve_cell,
    berry_2form,
    charge_chain,
    check_invariance,
    component_equations,
    hall_conductance,
    hall_value,
    higher_berry_3form,
    solve_equivariant,
    solve_mc,
    thouless_1d,
    thouless_2d,
)
from hiberry.errors import GeometryError, SolverError
from hiberry.families import ConstantFamily, RingPump, SpinFamily
from hiberry.lattice import PAULI, Lattice, Observable
from hiberry.mesh import circle, sphere
from hiberry.transport import Connection, connection_form, curvature_form


def test_component_equations_solve_order():
    targets = [eq.target for eq in component_equations(3, 2)]
    assert targets == [(1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def test_component_equation_shapes():
    eqs = {eq.target: eq for eq in component_equations(3, 2)}
    assert eqs[(1, 0)].curvature and eqs[(1, 0)].form_degree == 2
    assert eqs[(1, 1)].charge and eqs[(1, 1)].form_degree == 0
    assert eqs[(2, 1)].covariant == (1, 1) and eqs[(2, 1)].sign == -1
    assert eqs[(3, 2)].pairs == (((1, 1), (1, 1)),)
    assert eqs[(3, 2)].describe() == "d g(3, 2) = (1/2 {g(1, 1), g(1, 1)})"


def test_charge_chain_skips_neutral_sites():
    q = charge_chain(Lattice.chain(3), [1, 0, 2])
    assert {k for k, _ in q.items()} == {(0,), (2,)}
    assert all(v.is_traceless() for _, v in q.items())


def test_constant_family_descent_is_trivial():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), sphere(2, 1))
    sol = solve_mc(conn, order=2)
    # g(2,0) would be a 3-form, beyond the mesh
    assert set(sol.levels) == {(1, 0)}
    assert sol.level(1).max_abs() == 0.0
    assert sol.residual_table() == {"g(1,0)": 0.0}
    with pytest.raises(SolverError):
        sol.level(2)


def test_descent_order_must_be_positive():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), circle(4))
    with pytest.raises(GeometryError):
        solve_mc(conn, order=0)


def test_spin_curvature_descends():
    conn = Connection.from_family(SpinFamily(), sphere(2, 2))
    sol = solve_mc(conn, order=1)
    assert sol.residuals[(1, 0)] < 1e-8


def test_berry_form_of_constant_family_vanishes():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(2)), sphere(2, 1))
    inv = berry_2form(DescentSolution(conn, connection_form(conn), curvature_form(conn)))
    assert inv.period() == 0
    assert inv.closedness == 0.0


def test_equivariant_tower_of_static_charges():
    lat = Lattice.chain(4, boundary="periodic")
    conn = Connection.from_family(ConstantFamily(lat), circle(6))
    q1 = charge_chain(lat, [1, 1, 1, 1])
    sol = solve_equivariant(conn, q1, order=2, max_weight=1)
    assert set(sol.levels) == {(1, 1), (2, 1)}
    assert sol.residuals[(1, 1)] < 1e-9
    assert thouless_1d(sol).period() == 0


def test_charge_must_preserve_ground_states():
    lat = Lattice.chain(2)
    conn = Connection.from_family(SpinFamily(lat), sphere(2, 1))
    with pytest.raises(SolverError):
        solve_equivariant(conn, charge_chain(lat, [1, 1]), order=2, max_weight=1)


def test_higher_berry_form_needs_a_chain_lattice():
    conn = Connection.from_family(ConstantFamily(Lattice(2, (2, 2))), sphere(2, 1))
    sol = DescentSolution(conn, connection_form(conn), curvature_form(conn))
    with pytest.raises(GeometryError):
        higher_berry_3form(sol)


def test_wrong_degree_solution_names_the_cell(monkeypatch):
    lat = Lattice.chain(2)
    conn = Connection.from_family(SpinFamily(lat), sphere(2, 1))
    cell = conn.mesh.cells(1)[0]
    rhs = Chain.derivation(lat, [Observable.on_site(0, 1j * PAULI["Z"])])
    monkeypatch.setattr(
        "hiberry.descent.solve_partial_psi", lambda b, psi, config: Chain.zero(lat, 3)
    )
    with pytest.raises(SolverError, match=rf"cell {re.escape(str(cell))}.*level \(1, 0\)"):
        _solve_cell(cell, rhs, conn.cell_state(cell), lat, 1, DescentConfig(), (1, 0))


def test_failed_cell_solve_is_reported_not_zeroed(monkeypatch):
    lat = Lattice.chain(2)
    conn = Connection.from_family(SpinFamily(lat), sphere(2, 1))
    cell = conn.mesh.cells(1)[0]
    rhs = Chain.derivation(lat, [Observable.on_site(0, 1j * PAULI["Z"])])

    def fail(b, psi, config):
        raise SolverError("no state-preserving solution")

    monkeypatch.setattr("hiberry.descent.solve_partial_psi", fail)
    with pytest.raises(SolverError, match=rf"cell {re.escape(str(cell))}") as info:
        _solve_cell(cell, rhs, conn.cell_state(cell), lat, 1, DescentConfig(), (1, 0))
    assert info.value.level == (1, 0)


def test_ring_pump_states_conserve_charge():
    family = RingPump()
    conn = Connection.from_family(family, circle(8))
    q1 = family.charge_chain()
    assert q1 is not None
    assert check_invariance(conn, differential(q1), 1e-9) < 1e-9


def test_static_charges_on_a_grid_pump_nothing():
    lat = Lattice(2, (2, 2))
    conn = Connection.from_family(ConstantFamily(lat), sphere(2, 1))
    sol = solve_equivariant(conn, charge_chain(lat, [1, 1, 1, 1]), order=3, max_weight=2)
    pump = thouless_2d(sol)
    assert abs(pump.period()) < 1e-9
    hall = hall_conductance(sol)
    assert abs(hall_value(hall)) < 1e-9
    assert hall.closedness < 1e-9


def test_planar_invariants_need_a_plane():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), sphere(2, 1))
    sol = EquivariantSolution(conn, connection_form(conn), curvature_form(conn))
    with pytest.raises(GeometryError):
        thouless_2d(sol)
    with pytest.raises(GeometryError):
        hall_conductance(sol)
