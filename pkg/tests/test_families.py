import numpy as np
import pytest

from hiberry.config import FamilyConfig, LatticeConfig, ModelConfig, SpectralConfig
from hiberry.errors import ConfigError, GeometryError, UnknownModelError
from hiberry.families import (
    ChernPump,
    ConstantFamily,
    GaugedFamily,
    RingPump,
    SpinFamily,
    ToyFamily2d,
    berry_flux_oracle,
    build_family,
    charge_transport_oracle,
    default_mesh_for,
    inverse_family,
    model_catalog,
    random_gauge,
    single_spin_chern,
    stack_families,
)
from hiberry.lattice import Lattice
from hiberry.mesh import circle, integrate, sphere
from hiberry.transport import Connection, curvature_form, state_values


def _berry_number(family) -> float:
    conn = Connection.from_family(family, sphere(2, 4))
    value = integrate(state_values(curvature_form(conn), conn)) / (2j * np.pi)
    return float(value.real)


def test_ring_pump_moves_one_charge_per_cycle():
    assert charge_transport_oracle(RingPump(), circle(16)) == pytest.approx(1.0, abs=1e-9)


def test_ring_pump_ground_is_dimerized():
    psi = RingPump().ground(np.array([0.0]), SpectralConfig())
    assert all(len(b.sites) <= 2 for b in psi.blocks)
    assert psi.gap > 0


def test_single_spin_chern_number():
    assert single_spin_chern(4) == pytest.approx(1.0, abs=1e-9)
    assert berry_flux_oracle(ChernPump()) == pytest.approx(2j * np.pi, abs=1e-8)
    with pytest.raises(ConfigError):
        berry_flux_oracle(RingPump())


def test_stacked_spins_add_berry_numbers():
    family = stack_families(SpinFamily(), SpinFamily())
    assert family.lattice.local_dim == 4
    assert _berry_number(family) == pytest.approx(-2.0, abs=1e-6)


def test_inverse_family_flips_sign():
    assert _berry_number(inverse_family(SpinFamily())) == pytest.approx(1.0, abs=1e-6)


def test_local_gauge_leaves_berry_number(rng):
    inner = SpinFamily()
    family = GaugedFamily(inner, random_gauge(inner.lattice, rng, [0, 1], strength=0.05))
    assert _berry_number(family) == pytest.approx(-1.0, abs=1e-6)


def test_stacked_charges_add():
    lat = Lattice.chain(3)
    family = stack_families(ConstantFamily(lat), ConstantFamily(lat, [0, 2, 1]))
    assert family.charges == (1, 3, 2)
    q = family.charge_chain()
    assert q is not None
    assert {k for k, _ in q.items()} == {(0,), (1,), (2,)}


def test_build_family_from_config():
    config = FamilyConfig(
        model=ModelConfig(name="constant"),
        lattice=LatticeConfig(extent=(4,)),
        charge=[1, 0, 1, 0],
    )
    family = build_family(config)
    assert isinstance(family, ConstantFamily)
    assert family.charges == (1, 0, 1, 0)


def test_build_family_stack_and_inverse():
    stacked = build_family(
        FamilyConfig(model=ModelConfig(name="stack", params={"first": "spin", "second": "spin"}))
    )
    assert stacked.lattice.local_dim == 4
    inverse = build_family(FamilyConfig(model=ModelConfig(name="inverse", params={"of": "spin"})))
    assert inverse.manifolds == ("S2",)


def test_build_family_errors():
    with pytest.raises(UnknownModelError):
        build_family(FamilyConfig(model=ModelConfig(name="kitaev")))
    with pytest.raises(ConfigError):
        build_family(FamilyConfig(model=ModelConfig(name="spin", params={"field": 2})))
    with pytest.raises(ConfigError):
        build_family(
            FamilyConfig(
                model=ModelConfig(name="constant"),
                lattice=LatticeConfig(extent=(4,)),
                charge=[1, 1],
            )
        )
    assert "chern-pump" in model_catalog()


def test_model_geometry_checks():
    with pytest.raises(ConfigError):
        RingPump(Lattice.chain(8))
    with pytest.raises(ConfigError):
        ToyFamily2d(Lattice.chain(4))
    with pytest.raises(GeometryError):
        SpinFamily().check_mesh(circle(8))
    with pytest.raises(GeometryError):
        RingPump().check_mesh(circle(7))


def test_default_meshes():
    assert default_mesh_for(RingPump()).n_vertices == 16
    assert default_mesh_for(SpinFamily()).manifold == "S2"
