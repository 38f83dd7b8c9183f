import numpy as np
import pytest

from hiberry.chains import (
    Chain,
    boundary_commutator,
    bracket,
    brick_components,
    brick_decompose,
    canonical,
    chain_distance,
    chain_from_derivation,
    chain_from_json,
    chain_to_json,
    confinement_profile,
    contracting_homotopy,
    differential,
    graded_sign,
    least_squares_refine,
    pair_point,
    random_chain,
    random_skew,
    restrict,
    ual_seminorm,
)
from hiberry.lattice import PAULI, Lattice, Observable, embed


def test_canonical_sign():
    assert canonical((2, 0, 1)) == ((0, 1, 2), 1)
    assert canonical((1, 0)) == ((0, 1), -1)
    assert canonical((1, 1)) is None


def test_entries_are_antisymmetric(chain5, rng):
    a = random_skew([1], 2, rng)
    f = Chain.from_entries(chain5, 2, {(3, 1): a})
    assert np.allclose(f[(1, 3)].matrix, -a.matrix)
    assert np.allclose(f[(3, 1)].matrix, a.matrix)


@pytest.mark.parametrize("degree", [2, 3])
def test_differential_squares_to_zero(chain5, rng, degree):
    f = random_chain(chain5, degree, rng)
    assert differential(differential(f)).max_norm() < 1e-12


def test_graded_antisymmetry(chain5, rng):
    for p in (1, 2):
        for q in (1, 2):
            f, g = random_chain(chain5, p, rng), random_chain(chain5, q, rng)
            total = bracket(f, g) + bracket(g, f).scale(graded_sign(f, g))
            assert total.max_norm() < 1e-12


def test_graded_jacobi(rng):
    lat = Lattice.chain(6)
    for p, q, r in [(1, 1, 1), (1, 1, 2), (1, 2, 1), (2, 1, 1)]:
        f, g, h = (random_chain(lat, k, rng) for k in (p, q, r))
        jacobi = (
            bracket(f, bracket(g, h)).scale((-1) ** (p * r))
            + bracket(g, bracket(h, f)).scale((-1) ** (q * p))
            + bracket(h, bracket(f, g)).scale((-1) ** (r * q))
        )
        assert jacobi.max_norm() < 1e-10


def test_derivation_bracket_is_antisymmetric(chain5, rng):
    F = random_chain(chain5, 0, rng)
    g = random_chain(chain5, 2, rng)
    assert chain_distance(bracket(g, F), bracket(F, g).scale(-1)) < 1e-12


@pytest.mark.parametrize("method", ["brick", "anchored"])
def test_contracting_homotopy_identity(chain5, rng, method):
    for degree in (1, 2):
        f = random_chain(chain5, degree, rng)
        back = contracting_homotopy(differential(f), method) + differential(
            contracting_homotopy(f, method)
        )
        assert chain_distance(back, f) < 1e-9


def test_chain_from_derivation_recovers_generator(chain5, rng):
    F = random_chain(chain5, 0, rng)
    f = chain_from_derivation(F)
    recovered = differential(f).generator()
    expected = F.generator().traceless()
    target = set(recovered.sites) | set(expected.sites)
    assert np.allclose(embed(recovered, target).matrix, embed(expected, target).matrix)


def test_brick_components_sum_to_observable(rng):
    lat = Lattice.chain(5)
    a = random_skew([1, 2, 3], 2, rng)
    comps = brick_components(a, lat)
    total = Observable.zero((), 2)
    for c in comps.values():
        total = total + c
    assert np.allclose(total.matrix, a.matrix)
    assert brick_decompose(Chain.derivation(lat, [a])).residual < 1e-12


def test_restrict_and_boundary_commutator(chain5, rng):
    f = random_chain(chain5, 2, rng, n_entries=6)
    left = chain5.half_space(0)
    expected = restrict(differential(f), left) - differential(restrict(f, left))
    assert chain_distance(boundary_commutator(f, left), expected) < 1e-12


def test_point_pairing_is_antisymmetric_in_the_region(rng):
    lat = Lattice.chain(6)
    h = random_chain(lat, 2, rng, n_entries=6)
    right = lat.half_space(0).complement()
    whole = pair_point(h).value
    flipped = Observable.zero((), 2)
    for _, v in boundary_commutator(h, right).items():
        flipped = flipped + v
    assert np.allclose((whole + flipped).traceless().matrix, 0.0, atol=1e-12)


def test_confinement_profile_decreases():
    lat = Lattice.chain(8)
    entries = {
        (j,): Observable.on_site(j, 1j * np.diag([1.0, -1.0]) * 2.0 ** -abs(j - 3))
        for j in lat.sites
    }
    f = Chain.from_entries(lat, 1, entries)
    report = confinement_profile(f, lat.region([3]))
    assert report.slope is not None
    assert report.slope == pytest.approx(np.log(0.5))
    assert report.confined


def test_json_round_trip(chain5, rng):
    f = random_chain(chain5, 2, rng)
    g = chain_from_json(chain_to_json(f))
    assert chain_distance(f, g) < 1e-15
    assert g.lattice == f.lattice


def test_ual_seminorm_of_on_site_term_ignores_alpha():
    lat = Lattice.chain(6)
    f = Chain.derivation(lat, [Observable.on_site(0, 1j * PAULI["Z"])])
    assert ual_seminorm(f, 1) == pytest.approx(1.0)
    assert ual_seminorm(f, 4) == pytest.approx(1.0)
    assert ual_seminorm(Chain.zero(lat, 0), 2) == 0.0


@pytest.mark.parametrize(("alpha", "expected"), [(0, 0.5), (1, 1.0), (2, 2.25)])
def test_ual_seminorm_weights_range_by_diameter(alpha, expected):
    lat = Lattice.chain(6)
    zz = np.kron(PAULI["Z"], PAULI["Z"])
    terms = [Observable((0, r), 1j * 2.0**-r * zz, 2) for r in range(1, 6)]
    assert ual_seminorm(Chain.derivation(lat, terms), alpha) == pytest.approx(expected)


def test_least_squares_refine_pulls_a_far_boundary_back(rng):
    lat = Lattice.chain(5)
    h = Chain.from_entries(lat, 2, {(0, 1): random_skew((0, 1), 2, rng)})
    b = differential(h)
    far = Chain.from_entries(lat, 3, {(2, 3, 4): random_skew((2, 3, 4), 2, rng).scale(10)})
    g = h + differential(far)

    def far_norm(c: Chain) -> float:
        return max((v.norm() for k, v in c.items() if {3, 4} & set(k)), default=0.0)

    refined = least_squares_refine(g, b)
    assert chain_distance(differential(refined), b) < 1e-8
    assert far_norm(refined) < 0.1 * far_norm(g)
