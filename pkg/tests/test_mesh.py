import numpy as np
import pytest

from hiberry.errors import GeometryError
from hiberry.mesh import (
    DiscreteForm,
    angle_form,
    boundary_chain,
    build_mesh,
    circle,
    cup,
    exterior_derivative,
    fiber_integrate,
    good_cover,
    integrate,
    nerve_betti,
    product,
    sphere,
    torus,
)


def _euler(mesh) -> int:
    return sum((-1) ** k * len(mesh.cells(k)) for k in range(mesh.dimension + 1))


@pytest.mark.parametrize(
    ("mesh", "euler"),
    [
        (circle(12), 0),
        (sphere(2, 2), 2),
        (sphere(3, 1), 0),
        (torus(4, 5), 0),
        (product(sphere(2, 1), circle(4)), 0),
    ],
)
def test_fundamental_cycle_is_closed(mesh, euler):
    assert boundary_chain(mesh.cycles["fundamental"]) == {}
    assert _euler(mesh) == euler


def test_sphere_vertex_count():
    mesh = sphere(2, 3)
    assert mesh.n_vertices == 4**3 - 2**3
    assert np.allclose(np.linalg.norm(mesh.points, axis=1), 1.0)


def test_circle_closing_edge_orientation():
    mesh = circle(6)
    assert mesh.cycles["fundamental"][(0, 5)] == -1
    assert integrate(angle_form(mesh)) == pytest.approx(2 * np.pi)


def test_exterior_derivative_squares_to_zero(rng):
    mesh = sphere(2, 2)
    f = DiscreteForm.from_function(mesh, 0, lambda s: complex(rng.normal()))
    ddf = exterior_derivative(exterior_derivative(f))
    assert ddf.max_abs() < 1e-12


def test_stokes_on_closed_mesh(rng):
    mesh = torus(4, 4)
    a = DiscreteForm.from_function(mesh, 1, lambda s: complex(rng.normal()))
    assert abs(integrate(exterior_derivative(a))) < 1e-12


def test_cup_obeys_leibniz(rng):
    mesh = torus(4, 4)
    a = DiscreteForm.from_function(mesh, 0, lambda s: complex(rng.normal()))
    b = DiscreteForm.from_function(mesh, 1, lambda s: complex(rng.normal()))
    lhs = exterior_derivative(cup(a, b))
    rhs = cup(exterior_derivative(a), b) + cup(a, exterior_derivative(b))
    assert max(abs(lhs[s] - rhs[s]) for s in mesh.cells(2)) < 1e-12


def test_torus_factor_cycles_pair_with_angle_forms():
    mesh = torus(4, 6)
    assert integrate(angle_form(mesh), "s1-2-factor") == pytest.approx(2 * np.pi)


def test_fiber_integral_of_pulled_back_angle():
    mesh = product(sphere(2, 1), circle(4))
    dtheta = angle_form(mesh)
    base = DiscreteForm.from_function(mesh, 1, lambda s: 0.0)
    fiber = fiber_integrate(dtheta + base)
    assert all(v == pytest.approx(2 * np.pi) for v in fiber.values.values())


def test_integrate_rejects_open_chain():
    mesh = circle(5)
    f = DiscreteForm.from_function(mesh, 1, lambda s: 1.0)
    with pytest.raises(GeometryError):
        integrate(f, {(0, 1): 1})


def test_build_mesh_catalog():
    assert build_mesh("S2xS1", (1, 4)).dimension == 3
    assert build_mesh("point").n_vertices == 1
    with pytest.raises(GeometryError):
        build_mesh("RP2")


def test_circle_cover_nerve_is_a_triangle():
    cover = good_cover(circle(16))
    assert len(cover) == 3
    assert nerve_betti(cover) == (1, 1)
    for a, patch in enumerate(cover.patches):
        for x in patch:
            path = cover.paths[a][x]
            assert path[0] == cover.basepoint and path[-1] == x
