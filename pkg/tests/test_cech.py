import dataclasses

import numpy as np
import pytest

from hiberry.cech import (
    Intertwiner,
    cech_1d,
    extract_integer,
    localize_intertwiner,
    origin_windows,
    patch_primitive,
    phase_pass,
)
from hiberry.chains import Chain, random_skew
from hiberry.descent import higher_berry_3form, solve_mc
from hiberry.errors import GeometryError
from hiberry.families import ChernPump
from hiberry.lattice import PAULI, Lattice, Observable
from hiberry.mesh import DiscreteForm, build_mesh, circle, faces, good_cover, integrate, sphere
from hiberry.spectral import apply_local, expm_observable
from hiberry.transport import Connection


def test_ring_windows_surround_the_origin_cut():
    lat = Lattice.chain(12, boundary="periodic")
    windows = origin_windows(lat)
    assert windows[0] == ((5, 6), (4, 7))
    assert [len(w) for w, _ in windows] == sorted(len(w) for w, _ in windows)
    for sites, buffer in windows:
        assert {5, 6} <= set(sites)
        assert not {0, 11} & set(sites)
        assert not set(buffer) & set(sites)


def test_open_chain_windows_reach_both_ends():
    windows = origin_windows(Lattice.chain(6))
    assert windows[-1] == ((0, 1, 2, 3, 4, 5), ())


def test_windows_need_a_chain():
    with pytest.raises(GeometryError):
        origin_windows(Lattice(2, (2, 2)))


def test_intertwiner_sits_on_the_smallest_window(rng):
    lat = Lattice.chain(6, boundary="periodic")
    psi = np.zeros(lat.hilbert_dim, dtype=complex)
    psi[0] = 1.0
    u = expm_observable(random_skew((2, 3), 2, rng))
    chi = apply_local(psi, tuple(lat.sites), u)
    found = localize_intertwiner(psi, chi, lat, origin_windows(lat))
    assert found is not None
    assert found.unitary.sites == (2, 3)
    assert found.alignment < 1e-10
    moved = apply_local(psi, tuple(lat.sites), found.unitary)
    assert abs(np.vdot(chi, moved)) == pytest.approx(1.0)


def test_intertwiner_refuses_states_entangled_across_the_window():
    lat = Lattice.chain(4, boundary="periodic")
    psi = np.zeros(lat.hilbert_dim, dtype=complex)
    psi[0] = psi[0b1100] = 1 / np.sqrt(2)
    assert localize_intertwiner(psi, psi, lat, origin_windows(lat)) is None


def test_phase_pass_removes_the_scalar_gauge(rng):
    mesh = circle(6)
    base = expm_observable(random_skew((0,), 2, rng))
    per = {
        v: Intertwiner(base.scale(np.exp(1j * rng.uniform(-0.3, 0.3))), 0.0, 0.0)
        for v in mesh.vertices
    }
    assert phase_pass(mesh, per) < 1e-12
    root = per[0].unitary.matrix
    for v in mesh.vertices:
        assert np.allclose(per[v].unitary.matrix, root, atol=1e-12)


def test_patch_primitive_recovers_an_exact_form(rng):
    lat = Lattice.chain(4)
    mesh = sphere(2, 4)
    cover = good_cover(mesh)
    eta = {
        e: Chain.from_entries(
            lat, 1, {(1,): Observable.on_site(1, complex(*rng.normal(size=2)) * PAULI["Z"])}
        )
        for e in mesh.cells(1)
    }
    values = {}
    for t in mesh.cells(2):
        total = Chain.zero(lat, 1)
        for sign, f in faces(t):
            total = total + eta[f].scale(sign)
        values[t] = total
    fitted, misfit = patch_primitive(cover, 0, DiscreteForm(mesh, 2, values), lat.cut_window(2))
    assert misfit < 1e-6
    assert fitted


@pytest.fixture(scope="module")
def chern_pump_run():
    mesh = build_mesh("S2xS1")
    conn = Connection.from_family(ChernPump(), mesh)
    solution = solve_mc(conn, 2)
    return conn, solution, cech_1d(conn, solution, good_cover(mesh))


@pytest.mark.slow
def test_chern_pump_integer_matches_higher_berry(chern_pump_run):
    conn, solution, data = chern_pump_run
    estimate = (integrate(higher_berry_3form(solution, 1).form) / (2j * np.pi)).real
    assert data.zigzag is not None
    assert abs(data.zigzag.integer) == 1
    assert data.zigzag.integer == round(estimate)
    assert data.zigzag.estimate == pytest.approx(estimate, abs=1e-9)


@pytest.mark.slow
def test_chern_pump_deligne_residuals(chern_pump_run):
    _, _, data = chern_pump_run
    assert data.residuals["cocycle"] < 1e-8
    assert data.residuals["cocycle-modulus"] < 1e-8
    assert data.residuals["gauge"] < 1e-8
    for name in ("h-dlog", "da-curving", "db-omega", "log-branch"):
        assert data.residuals[name] < 0.25, name


@pytest.mark.slow
def test_chern_pump_integer_survives_rephased_intertwiners(chern_pump_run):
    _, _, data = chern_pump_run
    rng = np.random.default_rng(11)
    rephased = {
        key: {x: v.rephase(np.exp(0.2j * rng.uniform(-1, 1))) for x, v in per.items()}
        for key, per in data.intertwiners.items()
    }
    other = dataclasses.replace(
        data, intertwiners=rephased, connections={}, residuals={}, zigzag=None
    )
    assert data.zigzag is not None
    assert extract_integer(other).integer == data.zigzag.integer
