from types import SimpleNamespace

import numpy as np
import pytest
from scipy.linalg import expm

from hiberry.chains import Chain, differential, random_chain
from hiberry.config import DescentConfig, SpectralConfig
from hiberry.errors import ConfinementError, GapClosedError, GeometryError, SolverError
from hiberry.families import SpinFamily, dimer_term
from hiberry.lattice import PAULI, Lattice, Observable, pauli
from hiberry.mesh import DiscreteForm, circle
from hiberry.spectral import (
    Automorphism,
    GroundData,
    align_unitary,
    apply_local,
    evaluate_state_on_inner,
    filtered_generator,
    flatten,
    gauge_fix,
    ground_state,
    interpolate_connection,
    join_partition,
    kato_generator,
    lga_integrate,
    parallel_generator,
    pinch,
    preservation_defect,
    rotation_log,
    solve_partial,
    solve_partial_psi,
    unitary_log,
)

X_PLUS_Z = (PAULI["X"] + PAULI["Z"]) / np.sqrt(2)
HEISENBERG = sum(np.kron(PAULI[k], PAULI[k]) for k in "XYZ")


def _field(lat: Lattice, matrix: np.ndarray) -> Chain:
    return Chain.derivation(lat, [Observable.on_site(j, 1j * matrix) for j in lat.sites])


def test_product_ground_state_splits_into_sites():
    lat = Lattice.chain(3)
    psi = ground_state(_field(lat, PAULI["Z"]))
    assert [b.sites for b in psi.blocks] == [(0,), (1,), (2,)]
    assert psi.gap == pytest.approx(2.0)
    # H = Z on every site, ground state |1>
    assert psi.expectation(pauli("Z", 1)) == pytest.approx(-1.0)


def test_entangled_dimer_stays_one_block():
    lat = Lattice.chain(2)
    h = Chain.derivation(lat, [dimer_term(lat, 0, 1, HEISENBERG)])
    psi = ground_state(h)
    assert [b.sites for b in psi.blocks] == [(0, 1)]


def test_missing_terms_close_the_gap():
    lat = Lattice.chain(3)
    h = Chain.derivation(lat, [Observable.on_site(0, 1j * PAULI["Z"])])
    with pytest.raises(GapClosedError):
        ground_state(h)


def test_degenerate_block_raises():
    lat = Lattice.chain(2)
    h = Chain.derivation(lat, [Observable.on_site(j, 1e-12j * PAULI["Z"]) for j in lat.sites])
    with pytest.raises(GapClosedError):
        ground_state(h)


def test_gauge_fix_makes_largest_component_positive():
    v = gauge_fix(np.array([0.1j, -0.9 + 0j]))
    assert v[1].real > 0 and abs(v[1].imag) < 1e-15


def test_align_unitary_maps_vector_and_log_matches():
    rng = np.random.default_rng(3)
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    b = a + 0.3 * (rng.normal(size=4) + 1j * rng.normal(size=4))
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    u = align_unitary(a, b)
    target = b * abs(np.vdot(a, b)) / np.vdot(a, b)
    assert np.allclose(u @ a, target)
    assert np.allclose(u.conj().T @ u, np.eye(4))
    assert np.allclose(expm(rotation_log(a, b)), u)


def test_align_orthogonal_vectors_fails():
    with pytest.raises(SolverError):
        align_unitary(np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))


def test_unitary_log_is_skew():
    u = expm(np.array([[0, 0.4], [-0.4, 0.2j]], dtype=complex))
    log = unitary_log(u)
    assert np.allclose(log, -log.conj().T)
    assert np.allclose(expm(log), u)


def test_apply_local_on_second_site():
    vec = np.kron([1, 0], [1, 0]).astype(complex)
    out = apply_local(vec, (0, 1), pauli("X", 1))
    assert np.allclose(out, np.kron([1, 0], [0, 1]))


def test_flatten_preserves_state_and_is_idempotent(rng):
    lat = Lattice.chain(4)
    psi = ground_state(_field(lat, X_PLUS_Z))
    f = random_chain(lat, 1, rng)
    flat = flatten(f, psi)
    assert preservation_defect(flat, psi) < 1e-12
    again = flatten(flat, psi)
    assert (again - flat).max_norm() < 1e-13


def test_solve_partial_psi_solves_preserving_input(rng):
    lat = Lattice.chain(4)
    psi = ground_state(_field(lat, X_PLUS_Z))
    b = differential(flatten(random_chain(lat, 2, rng), psi))
    g = solve_partial_psi(b, psi, DescentConfig())
    assert (differential(g) - b).max_norm() < 1e-9
    assert preservation_defect(g, psi) < 1e-9


def test_solve_partial_psi_rejects_non_preserving_input():
    lat = Lattice.chain(2)
    psi = ground_state(_field(lat, PAULI["Z"]))
    b = Chain.derivation(lat, [Observable.on_site(0, 1j * PAULI["X"])])
    with pytest.raises(SolverError):
        solve_partial_psi(b, psi)


def test_solve_partial_of_zero_is_zero():
    lat = Lattice.chain(3)
    assert solve_partial(Chain.zero(lat, 1)).is_zero()


def test_pinch_removes_off_diagonal_part():
    lat = Lattice.chain(2)
    psi = ground_state(_field(lat, PAULI["Z"]))
    flat = pinch(Observable.on_site(0, 1j * PAULI["X"]), psi)
    assert flat.max_abs() < 1e-15


def test_join_partition_merges_overlapping_blocks():
    lat = Lattice.chain(4)
    a = ground_state(
        Chain.derivation(
            lat,
            [dimer_term(lat, 0, 1, HEISENBERG), dimer_term(lat, 2, 3, HEISENBERG)],
        )
    )
    b = ground_state(
        Chain.derivation(
            lat,
            [
                dimer_term(lat, 1, 2, HEISENBERG),
                Observable.on_site(0, 1j * PAULI["Z"]),
                Observable.on_site(3, 1j * PAULI["Z"]),
            ],
        )
    )
    assert join_partition([a, b]) == [(0, 1, 2, 3)]


def test_automorphism_inverse_undoes_action():
    u = Observable.on_site(0, X_PLUS_Z)
    alpha = Automorphism((u,))
    a = pauli("Z", 0)
    back = alpha.inverse().act(alpha.act(a))
    assert np.allclose(back.matrix, a.matrix)
    assert alpha.unitarity_defect() < 1e-15


def test_parallel_generator_rotates_spin():
    family = SpinFamily()
    point = np.array([0.0, 0.0, 1.0])
    direction = np.array([1.0, 0.0, 0.0])
    kato = parallel_generator(family, point, direction)
    filtered = parallel_generator(
        family, point, direction, SpectralConfig(generator="filtered", filter_gamma=0.05)
    )
    assert kato.max_norm() > 0
    # both generators differ only by terms annihilating the ground state
    psi = family.ground(point, SpectralConfig())
    assert preservation_defect(kato - filtered, psi) < 1e-6


def test_kato_generator_moves_the_projector():
    family = SpinFamily()
    point = np.array([0.0, 0.0, 1.0])
    direction = np.array([1.0, 0.0, 0.0])
    (k,) = kato_generator(family, point, direction).terms
    step = 1e-4
    config = SpectralConfig()
    p0 = family.ground(point, config).projector(k.sites).matrix
    plus = family.ground(point + step * direction, config).projector(k.sites).matrix
    minus = family.ground(point - step * direction, config).projector(k.sites).matrix
    dp = (plus - minus) / (2 * step)
    assert np.allclose(p0 @ k.matrix - k.matrix @ p0, dp, atol=1e-6)
    assert np.allclose(p0 @ k.matrix @ p0, 0.0, atol=1e-9)
    assert k.is_skew(1e-9)


def test_filtered_generator_needs_a_wide_gap():
    family = SpinFamily()
    point = np.array([0.0, 0.0, 1.0])
    direction = np.array([0.0, 1.0, 0.0])
    narrow = filtered_generator(family, point, direction, gamma=0.05)
    assert all(t.is_skew(1e-12) for t in narrow.terms)
    with pytest.raises(SolverError):
        filtered_generator(family, point, direction, gamma=1.0)


def _rotation_form(angle: float) -> DiscreteForm:
    lat = Lattice.chain(2)
    mesh = circle(4)
    z = Chain.derivation(lat, [Observable.on_site(0, 1j * angle * PAULI["Z"])])
    x = Chain.derivation(lat, [Observable.on_site(1, 1j * angle * PAULI["X"])])
    return DiscreteForm(mesh, 1, {(0, 1): z, (1, 2): x, (2, 3): z, (0, 3): x})


def test_lga_integrate_matches_on_site_rotation():
    alpha = lga_integrate(_rotation_form(0.7), [0, 1])
    (u,) = alpha.factors
    assert np.allclose(u.matrix, expm(-0.7j * PAULI["Z"]), atol=1e-9)
    back = lga_integrate(_rotation_form(0.7), [1, 0])
    assert np.allclose(back.factors[0].matrix, expm(0.7j * PAULI["Z"]), atol=1e-9)


def test_lga_integrate_composes_along_concatenated_paths():
    form = _rotation_form(0.4)
    whole = lga_integrate(form, [0, 1, 2])
    split = lga_integrate(form, [0, 1]).then(lga_integrate(form, [1, 2]))
    observable = Observable.product({0: PAULI["X"], 1: PAULI["Z"]})
    assert np.allclose(whole.act(observable).matrix, split.act(observable).matrix, atol=1e-9)


def test_lga_integrate_rejects_non_edges():
    with pytest.raises(GeometryError):
        lga_integrate(_rotation_form(0.1), [0, 2])


def test_lga_integrate_reports_integrator_failure(monkeypatch):
    def stalled(fun, span, y0, **kwargs):
        return SimpleNamespace(
            status=-1,
            message="Required step size is less than spacing between numbers.",
            y=y0[:, None],
        )

    monkeypatch.setattr("hiberry.spectral.solve_ivp", stalled)
    with pytest.raises(SolverError, match="step size"):
        lga_integrate(_rotation_form(0.1), [0, 1])


def test_dense_cap_comes_from_the_config():
    lat = Lattice.chain(2)
    h = Chain.derivation(lat, [dimer_term(lat, 0, 1, HEISENBERG)])
    with pytest.raises(GeometryError, match="dense cap"):
        ground_state(h, SpectralConfig(dense_site_cap=1))
    assert [b.sites for b in ground_state(h, SpectralConfig()).blocks] == [(0, 1)]


def _preserving_pair(rng: np.random.Generator) -> tuple[Chain, Chain, GroundData]:
    lat = Lattice.chain(6)
    psi = ground_state(_field(lat, X_PLUS_Z))
    g1 = differential(flatten(random_chain(lat, 1, rng), psi))
    g2 = g1 - differential(flatten(random_chain(lat, 1, rng), psi))
    return g1, g2, psi


def test_interpolate_connection_of_equal_inputs_is_the_input(rng):
    g1, _, psi = _preserving_pair(rng)
    assert interpolate_connection(g1, g1, g1.lattice.half_space(0), psi) is g1


def test_interpolate_connection_reaches_both_endpoints(rng):
    g1, g2, psi = _preserving_pair(rng)
    lat = g1.lattice
    assert (interpolate_connection(g1, g2, lat.full(), psi) - g1).max_norm() < 1e-12
    empty = lat.full().complement()
    assert (interpolate_connection(g1, g2, empty, psi) - g2).max_norm() < 1e-9


def test_interpolate_connection_stays_parallel(rng):
    g1, g2, psi = _preserving_pair(rng)
    g3 = interpolate_connection(g1, g2, g1.lattice.half_space(0), psi)
    assert preservation_defect(g3 - g1, psi) < 1e-9
    assert preservation_defect(g3 - g2, psi) < 1e-9


def test_state_value_refuses_unconfined_terms():
    lat = Lattice.chain(6)
    psi = ground_state(_field(lat, PAULI["Z"]))
    far = Chain.derivation(lat, [Observable.on_site(5, 1j * PAULI["Z"])])
    window = lat.region([0, 1], "W")
    with pytest.raises(ConfinementError, match="farther than 2"):
        evaluate_state_on_inner(far, psi, near=window, radius=2)
    assert evaluate_state_on_inner(far, psi, near=window, radius=4) == pytest.approx(
        evaluate_state_on_inner(far, psi)
    )
