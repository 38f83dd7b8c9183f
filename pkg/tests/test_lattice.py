import numpy as np
import pytest

from hiberry.errors import GeometryError
from hiberry.lattice import (
    PAULI,
    Lattice,
    Observable,
    commutator,
    conditional_expectation,
    embed,
    hs_inner,
    hull,
    is_stable_intersection,
    lift,
    pauli,
    stack,
    sub_bricks,
)


def test_default_origin_and_half_space():
    lat = Lattice.chain(8)
    assert lat.origin_site == 3
    assert set(lat.half_space(0)) == {0, 1, 2, 3}
    assert set(lat.hyperplane(0)) == {3, 4}


def test_periodic_relative_coordinates():
    lat = Lattice.chain(8, boundary="periodic")
    assert lat.relative(0) == (-3,)
    assert lat.relative(7) == (4,)
    assert lat.distance(0, 7) == 1


def test_two_dimensional_index_round_trip():
    lat = Lattice(2, (4, 3), origin=(0, 1))
    assert lat.origin_site == lat.index((0, 1))
    assert lat.coords(lat.index((3, 2))) == (3, 2)
    with pytest.raises(GeometryError):
        lat.index((4, 0))


def test_invalid_geometry_is_rejected():
    with pytest.raises(GeometryError):
        Lattice(3, (2, 2, 2))
    with pytest.raises(GeometryError):
        Lattice(1, (1,))
    with pytest.raises(GeometryError):
        Lattice.chain(4, origin=(9,))


def test_observable_support_must_be_sorted():
    with pytest.raises(GeometryError):
        Observable((1, 0), np.eye(4, dtype=complex))


def test_pauli_commutator():
    c = commutator(pauli("X", 0), pauli("Y", 0))
    assert np.allclose(c.matrix, 2j * PAULI["Z"])


def test_embed_then_trace_out_is_identity_map():
    a = pauli("X", 1)
    big = embed(a, {0, 1, 2})
    assert big.sites == (0, 1, 2)
    back = conditional_expectation(big, {0, 2})
    assert back.sites == (1,)
    assert np.allclose(back.matrix, a.matrix)


def test_hs_inner_of_paulis():
    assert hs_inner(pauli("Z", 0), pauli("Z", 0)) == pytest.approx(1.0)
    assert hs_inner(pauli("X", 0), pauli("Z", 0)) == pytest.approx(0.0)


def test_traceless_and_compress():
    a = Observable.product({0: PAULI["Z"] + PAULI["I"], 1: PAULI["I"]})
    t = a.traceless()
    assert t.is_traceless()
    assert t.compress().sites == (0,)


def test_lift_places_factor_per_site():
    x = PAULI["X"]
    first = lift(Observable.on_site(0, x), 0, 2)
    second = lift(Observable.on_site(0, x), 1, 2)
    assert np.allclose(first.matrix, np.kron(x, np.eye(2)))
    assert np.allclose(second.matrix, np.kron(np.eye(2), x))
    assert first.local_dim == 4


def test_stack_requires_same_geometry():
    stacked = stack(Lattice.chain(4), Lattice.chain(4))
    assert stacked.lattice.local_dim == 4
    with pytest.raises(GeometryError):
        stack(Lattice.chain(4), Lattice.chain(6))


def test_hull_and_sub_bricks_on_a_chain():
    lat = Lattice.chain(6)
    brick = hull(lat, [1, 3])
    assert brick.sites == frozenset({1, 2, 3})
    assert brick.diameter == 2
    # intervals of a 3-site segment
    assert len(sub_bricks(brick)) == 6


def test_hull_wraps_on_a_ring():
    lat = Lattice.chain(6, boundary="periodic")
    assert hull(lat, [5, 0]).sites == frozenset({5, 0})


def test_half_spaces_intersect_stably():
    lat = Lattice(2, (6, 6))
    h1, h2 = lat.half_space(0), lat.half_space(1)
    assert is_stable_intersection(h1, h2, h1 & h2, 1.0, 2)
    assert h1.complement().complement() == h1
