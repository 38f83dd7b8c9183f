import numpy as np
import pytest

from hiberry.errors import GeometryError
from hiberry.families import ConstantFamily, GaugedFamily, SpinFamily, random_gauge
from hiberry.lattice import Lattice
from hiberry.mesh import circle, integrate, sphere
from hiberry.spectral import gauge_transform, lga_integrate
from hiberry.transport import (
    Connection,
    connection_form,
    curvature_form,
    edge_transport,
    generator_flux,
    generator_seminorm,
    holonomy,
    parallelism_defect,
    state_overlap,
    state_values,
)


@pytest.fixture(scope="module")
def spin_connection() -> Connection:
    return Connection.from_family(SpinFamily(), sphere(2, 4))


def test_edge_transport_maps_ground_vectors(spin_connection):
    conn = spin_connection
    x, y = conn.mesh.cells(1)[0]
    edge = edge_transport(conn.states[x], conn.states[y])
    moved = edge.forward.apply(conn.states[x].full_vector(), tuple(conn.lattice.sites))
    overlap = np.vdot(conn.states[y].full_vector(), moved)
    assert abs(overlap) == pytest.approx(1.0)


def test_connection_generator_integrates_to_transport(spin_connection):
    conn = spin_connection
    g = connection_form(conn)
    x, y = conn.mesh.cells(1)[3]
    alpha = lga_integrate(g, [x, y])
    psi_x = conn.states[x].full_vector()
    moved = alpha.apply(psi_x, tuple(conn.lattice.sites))
    assert abs(np.vdot(conn.states[y].full_vector(), moved)) == pytest.approx(1.0)
    assert lga_integrate(g, [x, y, x]).unitarity_defect() < 1e-8


def test_single_spin_berry_number(spin_connection):
    conn = spin_connection
    berry = state_values(curvature_form(conn), conn)
    # H = +n.sigma leaves the spin anti-aligned with n
    assert integrate(berry) / (2j * np.pi) == pytest.approx(-1.0, abs=1e-6)


def test_aligned_spin_has_opposite_sign():
    conn = Connection.from_family(SpinFamily(sign=-1.0), sphere(2, 4))
    berry = state_values(curvature_form(conn), conn)
    assert integrate(berry) / (2j * np.pi) == pytest.approx(1.0, abs=1e-6)


def test_constant_family_is_flat():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), sphere(2, 1))
    assert connection_form(conn).max_abs() == 0.0
    assert curvature_form(conn).max_abs() == 0.0


def test_holonomy_of_constant_family_is_trivial():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), circle(5))
    assert holonomy(conn, [0, 1, 2, 3, 4, 0]) == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        holonomy(conn, [0, 1, 2])


def test_state_overlap_is_symmetric_up_to_conjugation(spin_connection):
    a, b = spin_connection.states[0], spin_connection.states[1]
    assert state_overlap(a, b) == pytest.approx(np.conj(state_overlap(b, a)))


def test_connection_requires_one_state_per_vertex(spin_connection):
    with pytest.raises(GeometryError):
        Connection(sphere(2, 1), spin_connection.states[:3])


def test_generator_flux_matches_curvature_values(spin_connection):
    conn = spin_connection
    flux = generator_flux(connection_form(conn), conn)
    berry = state_values(curvature_form(conn), conn)
    assert integrate(flux) == pytest.approx(integrate(berry), abs=1e-8)


def test_gauge_transform_is_parallel_for_the_regauged_states(rng):
    family = SpinFamily()
    mesh = sphere(2, 2)
    conn = Connection.from_family(family, mesh)
    gauge = random_gauge(family.lattice, rng, family.lattice.sites)
    moved = gauge_transform(
        connection_form(conn), {v: gauge(p) for v, p in enumerate(mesh.points)}
    )
    gauged = Connection.from_family(GaugedFamily(family, lambda p: gauge(p).inverse()), mesh)
    assert parallelism_defect(connection_form(gauged), gauged) < 1e-10
    assert parallelism_defect(moved, gauged) < 1e-6
    before = integrate(generator_flux(connection_form(conn), conn))
    after = integrate(generator_flux(moved, gauged))
    assert after == pytest.approx(before, abs=1e-6)
    assert after / (2j * np.pi) == pytest.approx(-1.0, abs=1e-6)


def test_generator_seminorm_of_flat_family_is_zero():
    conn = Connection.from_family(ConstantFamily(Lattice.chain(3)), circle(4))
    assert generator_seminorm(connection_form(conn)) == 0.0


def test_generator_seminorm_grows_with_alpha_for_two_site_terms(rng):
    family = SpinFamily()
    mesh = sphere(2, 1)
    gauge = random_gauge(family.lattice, rng, family.lattice.sites, strength=0.5)
    gauged = Connection.from_family(GaugedFamily(family, gauge), mesh)
    g = connection_form(gauged)
    assert generator_seminorm(g, 2) >= generator_seminorm(g, 0) > 0.0
