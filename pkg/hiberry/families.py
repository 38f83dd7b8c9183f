"""Model families with closed-form or block-diagonalized ground states.

Every family maps a mesh point to a gapped product-over-blocks ground state.
Points are the mesh coordinates: an angle on ``S1``, a unit vector on ``S2``,
and their concatenation on ``S2xS1``.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping, Sequence
from typing import Any, ClassVar

import numpy as np
from scipy.linalg import expm

from .chains import Chain, random_skew
from .config import FamilyConfig, SpectralConfig
from .descent import charge_chain
from .errors import ConfigError, GeometryError, UnknownModelError
from .lattice import PAULI, Lattice, Observable, lift, stack
from .mesh import ParamMesh, build_mesh, circle, sphere
from .spectral import (
    Automorphism,
    Block,
    GroundData,
    apply_local,
    ground_state,
    join_partition,
)

logger = logging.getLogger(__name__)

SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
# one-particle sector of a dimer (a, b): |10> is index 2, |01> is index 1
_TAU = {
    "x": np.zeros((4, 4), dtype=complex),
    "y": np.zeros((4, 4), dtype=complex),
    "z": np.diag([0, -1, 1, 0]).astype(complex),
}
_TAU["x"][2, 1] = _TAU["x"][1, 2] = 1
_TAU["y"][2, 1], _TAU["y"][1, 2] = -1j, 1j


def dimer_term(lattice: Lattice, a: int, b: int, matrix: np.ndarray) -> Observable:
    """A two-site Hermitian ``matrix`` written in the order ``(a, b)``, as ``i h``."""
    mat = np.asarray(matrix, dtype=complex)
    if a > b:
        a, b = b, a
        mat = SWAP @ mat @ SWAP
    return Observable((a, b), 1j * mat, lattice.local_dim)


def site_term(site: int, matrix: np.ndarray) -> Observable:
    return Observable.on_site(site, 1j * np.asarray(matrix, dtype=complex))


def bloch(point: np.ndarray) -> np.ndarray:
    n = np.asarray(point[:3], dtype=float)
    return n / np.linalg.norm(n)


def _n_dot_sigma(n: np.ndarray) -> np.ndarray:
    return n[0] * PAULI["X"] + n[1] * PAULI["Y"] + n[2] * PAULI["Z"]


class Family(ABC):
    """A parametrized gapped family on a fixed lattice.

    Subclasses provide ``ground``; Hamiltonian families also provide
    ``hamiltonian`` and get ``ground`` from block diagonalization.
    """

    name: ClassVar[str] = ""
    manifolds: tuple[str, ...] = ()

    def __init__(self, lattice: Lattice, charges: Sequence[int] | None = None) -> None:
        self.lattice = lattice
        self.charges = tuple(charges) if charges is not None else None

    @abstractmethod
    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData:
        raise NotImplementedError

    def hamiltonian(self, point: np.ndarray) -> Chain:
        raise NotImplementedError(f"{self.name} is specified by its ground states")

    def charge_chain(self) -> Chain | None:
        if self.charges is None:
            return None
        return charge_chain(self.lattice, self.charges)

    def check_mesh(self, mesh: ParamMesh) -> None:
        if self.manifolds and mesh.manifold not in self.manifolds:
            raise GeometryError(
                f"{self.name} lives over {' or '.join(self.manifolds)}, not {mesh.manifold}"
            )

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.lattice.extent}, {self.lattice.boundary})"


class HamiltonianFamily(Family):
    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData:
        return ground_state(self.hamiltonian(point), config)


class ConstantFamily(HamiltonianFamily):
    """``H = sum_j n_j`` at every point; all invariants vanish."""

    name = "constant"

    def __init__(self, lattice: Lattice, charges: Sequence[int] | None = None) -> None:
        super().__init__(lattice, charges if charges is not None else [1] * lattice.n_sites)

    def hamiltonian(self, point: np.ndarray) -> Chain:
        number = np.diag(np.arange(self.lattice.local_dim, dtype=complex))
        return Chain.derivation(self.lattice, (site_term(j, number) for j in self.lattice.sites))


class SpinFamily(HamiltonianFamily):
    """``sign * n.sigma`` on the origin site over ``S2``, a ``-Z`` spectator elsewhere.

    ``sign = +1`` leaves the spin anti-aligned with ``n``.
    """

    name = "spin"
    manifolds = ("S2",)

    def __init__(self, lattice: Lattice | None = None, sign: float = 1.0) -> None:
        super().__init__(lattice or Lattice.chain(2))
        if self.lattice.local_dim != 2:
            raise ConfigError("the spin family needs qubits")
        self.sign = sign

    def hamiltonian(self, point: np.ndarray) -> Chain:
        o = self.lattice.origin_site
        terms = [site_term(o, self.sign * _n_dot_sigma(bloch(point)))]
        terms += [site_term(j, -PAULI["Z"]) for j in self.lattice.sites if j != o]
        return Chain.derivation(self.lattice, terms)


def _dimers(lattice: Lattice, shift: int) -> list[tuple[int, int]]:
    """Nearest-neighbour pairs ``(o + 2k + shift, o + 2k + shift + 1)`` on a ring."""
    n = lattice.n_sites
    o = lattice.origin_site
    return [((o + 2 * k + shift) % n, (o + 2 * k + shift + 1) % n) for k in range(n // 2)]


def _pump_phase(theta: float) -> tuple[int, float]:
    """Dimer shift and local angle: ``[0, pi]`` on the first pattern, then shifted."""
    theta = float(np.mod(theta, 2 * np.pi))
    if theta <= np.pi:
        return 0, theta
    return 1, theta - np.pi


class RingPump(HamiltonianFamily):
    """Rotating-dimer charge pump on a periodic ring over ``S1``.

    Each dimer ``(a, b)`` has ``H = -[cos(phi) (n_a - n_b) + sin(phi) tau_x]``
    with ground state ``cos(phi/2)|10> + sin(phi/2)|01>``; after half a cycle
    the particle sits on ``b`` and the pattern shifts by one site, so one unit
    of charge crosses every bond per cycle.
    """

    name = "ring-pump"
    manifolds = ("S1",)

    def __init__(self, lattice: Lattice | None = None) -> None:
        lattice = lattice or Lattice.chain(8, boundary="periodic")
        if not lattice.periodic or lattice.dimension != 1 or lattice.n_sites % 2:
            raise ConfigError("the ring pump needs a periodic chain with an even number of sites")
        super().__init__(lattice, [1] * lattice.n_sites)

    def hamiltonian(self, point: np.ndarray) -> Chain:
        shift, phi = _pump_phase(float(point[0]))
        h = -(np.cos(phi) * _TAU["z"] + np.sin(phi) * _TAU["x"])
        return Chain.derivation(
            self.lattice, (dimer_term(self.lattice, a, b, h) for a, b in _dimers(self.lattice, shift))
        )

    def check_mesh(self, mesh: ParamMesh) -> None:
        super().check_mesh(mesh)
        if mesh.n_vertices % 2:
            raise GeometryError("the ring pump needs an even circle resolution")


class ChernPump(HamiltonianFamily):
    """Dimer Chern pump over ``S2 x S1`` on a periodic ring.

    Each dimer carries ``U(theta) (-n.sigma_A - Z_B) U(theta)*`` with
    ``U(theta) = exp(-i theta/2 (1 - SWAP))``: over half a cycle the spin
    aligned with ``n`` hops from ``A`` to ``B``, then the pattern shifts by one
    site. A unit of Berry flux crosses every bond per cycle.

    The default ring has 12 sites so that the intertwiners of the Cech
    refinement fit between the origin cut and the antipodal cut.
    """

    name = "chern-pump"
    manifolds = ("S2xS1",)

    def __init__(self, lattice: Lattice | None = None) -> None:
        lattice = lattice or Lattice.chain(12, boundary="periodic")
        if not lattice.periodic or lattice.dimension != 1 or lattice.n_sites % 2:
            raise ConfigError("the Chern pump needs a periodic chain with an even number of sites")
        if lattice.local_dim != 2:
            raise ConfigError("the Chern pump needs qubits")
        super().__init__(lattice)

    def hamiltonian(self, point: np.ndarray) -> Chain:
        shift, phi = _pump_phase(float(point[3]))
        u = expm(-0.5j * phi * (np.eye(4) - SWAP))
        h0 = -np.kron(_n_dot_sigma(bloch(point)), PAULI["I"]) - np.kron(PAULI["I"], PAULI["Z"])
        h = u @ h0 @ u.conj().T
        return Chain.derivation(
            self.lattice, (dimer_term(self.lattice, a, b, h) for a, b in _dimers(self.lattice, shift))
        )

    def check_mesh(self, mesh: ParamMesh) -> None:
        super().check_mesh(mesh)
        if mesh.factors and mesh.factors[1].n_vertices % 2:
            raise GeometryError("the Chern pump needs an even circle resolution")


class ToyFamily2d(HamiltonianFamily):
    """U(1)-invariant dimers on a 4 x 3 grid over ``S2``.

    Horizontal dimers ``(0, 1)`` and ``(2, 3)`` in every row hold one particle
    in ``cos(t/2)|10> + e^{i p} sin(t/2)|01>`` for ``n = (t, p)``. The origin
    column is 0, so the first cut splits the left dimers. The declared
    disentangler rotates each dimer back to ``|10>``.
    """

    name = "toy-2d"
    manifolds = ("S2",)
    disentangler = "dimer-rotation"

    def __init__(self, lattice: Lattice | None = None) -> None:
        lattice = lattice or Lattice(2, (4, 3), origin=(0, 1))
        if lattice.dimension != 2 or lattice.extent[0] != 4 or lattice.periodic:
            raise ConfigError("the 2d toy family lives on an open 4 x m grid")
        super().__init__(lattice, [1] * lattice.n_sites)

    def dimers(self) -> list[tuple[int, int]]:
        lat = self.lattice
        return [
            (lat.index((x, y)), lat.index((x + 1, y)))
            for y in range(lat.extent[1])
            for x in (0, 2)
        ]

    def hamiltonian(self, point: np.ndarray) -> Chain:
        n = bloch(point)
        h = -(n[0] * _TAU["x"] + n[1] * _TAU["y"] + n[2] * _TAU["z"])
        return Chain.derivation(
            self.lattice, (dimer_term(self.lattice, a, b, h) for a, b in self.dimers())
        )


def _interleave(va: np.ndarray, vb: np.ndarray, k: int, da: int, db: int) -> np.ndarray:
    """Vector of the stacked system from factor vectors on the same ``k`` sites."""
    t = np.multiply.outer(va.reshape((da,) * k), vb.reshape((db,) * k))
    perm = [p for s in range(k) for p in (s, k + s)]
    return t.transpose(perm).reshape(-1)


class StackedFamily(Family):
    """Two families on the same geometry, one qudit of each per site."""

    name = "stack"

    def __init__(self, first: Family, second: Family) -> None:
        stacked = stack(first.lattice, second.lattice)
        charges = None
        if first.charges is not None and second.charges is not None:
            charges = [a + b for a, b in zip(first.charges, second.charges, strict=True)]
        super().__init__(stacked.lattice, charges)
        self.first, self.second = first, second
        self.dims = stacked.dims
        self.manifolds = first.manifolds or second.manifolds

    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData:
        a = self.first.ground(point, config)
        b = self.second.ground(point, config)
        da, db = self.dims
        blocks = []
        for part in join_partition([a, b]):
            sites, va = a.vector_on(part)
            _, vb = b.vector_on(part)
            blocks.append(Block(sites, _interleave(va, vb, len(sites), da, db)))
        return GroundData(self.lattice, tuple(blocks), a.energy + b.energy, min(a.gap, b.gap))

    def charge_chain(self) -> Chain | None:
        qa, qb = self.first.charge_chain(), self.second.charge_chain()
        if qa is None or qb is None:
            return None
        da, db = self.dims
        entries = {}
        for j in self.lattice.sites:
            entries[(j,)] = lift(qa[(j,)], 0, db) + lift(qb[(j,)], 1, da)
        return Chain.from_entries(self.lattice, 1, entries)


class InverseFamily(Family):
    """Complex conjugate of a family: every invariant changes sign."""

    name = "inverse"

    def __init__(self, inner: Family) -> None:
        super().__init__(inner.lattice, inner.charges)
        self.inner = inner
        self.manifolds = inner.manifolds

    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData:
        psi = self.inner.ground(point, config)
        blocks = tuple(Block(b.sites, b.vector.conj(), b.energy, b.gap) for b in psi.blocks)
        return GroundData(self.lattice, blocks, psi.energy, psi.gap)


class GaugedFamily(Family):
    """``alpha(x) psi_x`` for a point-dependent locally generated automorphism."""

    name = "gauged"

    def __init__(self, inner: Family, alpha: Callable[[np.ndarray], Automorphism]) -> None:
        super().__init__(inner.lattice, None)
        self.inner = inner
        self.alpha = alpha
        self.manifolds = inner.manifolds

    def ground(self, point: np.ndarray, config: SpectralConfig) -> GroundData:
        psi = self.inner.ground(point, config)
        factors = self.alpha(point).factors
        parent = {s: s for s in self.lattice.sites}

        def find(s: int) -> int:
            while parent[s] != s:
                parent[s] = parent[parent[s]]
                s = parent[s]
            return s

        for group in [b.sites for b in psi.blocks] + [f.sites for f in factors]:
            for s in group[1:]:
                parent[find(s)] = find(group[0])
        parts: dict[int, list[int]] = {}
        for s in self.lattice.sites:
            parts.setdefault(find(s), []).append(s)
        blocks = []
        for part in parts.values():
            sites, vec = psi.vector_on(part)
            for f in factors:
                if f.support <= set(sites):
                    vec = apply_local(vec, sites, f)
            blocks.append(Block(sites, vec))
        return GroundData(
            self.lattice, tuple(sorted(blocks, key=lambda b: b.sites)), psi.energy, psi.gap
        )


def _smooth_features(point: np.ndarray) -> np.ndarray:
    """Embedding coordinates with every angle replaced by its cosine and sine."""
    coords = np.asarray(point, dtype=float)
    if coords.size in (1, 2):
        return np.concatenate([np.cos(coords), np.sin(coords)])
    if coords.size == 4:
        return np.concatenate([coords[:3], [np.cos(coords[3]), np.sin(coords[3])]])
    return coords


def random_gauge(
    lattice: Lattice, rng: np.random.Generator, sites: Sequence[int], strength: float = 0.3
) -> Callable[[np.ndarray], Automorphism]:
    """A smooth point-dependent unitary on ``sites`` built from a random skew generator."""
    generator = random_skew(sites, lattice.local_dim, rng)
    weights = rng.normal(size=6)

    def alpha(point: np.ndarray) -> Automorphism:
        feats = _smooth_features(point)
        amount = strength * float(weights[: feats.size] @ feats)
        u = Observable(generator.sites, expm(amount * generator.matrix), lattice.local_dim)
        return Automorphism((u,), "gauge")

    return alpha


def stack_families(first: Family, second: Family) -> StackedFamily:
    return StackedFamily(first, second)


def inverse_family(family: Family) -> InverseFamily:
    return InverseFamily(family)


def charge_transport_oracle(
    family: Family, mesh: ParamMesh, config: SpectralConfig | None = None
) -> float:
    """Charge carried across the bond right of the origin along the fundamental cycle.

    Counts the change of ``<n>`` on the site right of the cut over every edge
    whose joint blocks straddle the cut; exact for dimerized pumps.
    """
    config = config or SpectralConfig()
    lat = family.lattice
    o = lat.origin_site
    right = (o + 1) % lat.n_sites
    number = Observable((right,), np.diag(np.arange(lat.local_dim, dtype=complex)), lat.local_dim)
    states = [family.ground(p, config) for p in mesh.points]
    total = 0.0
    for edge, sign in mesh.cycles["fundamental"].items():
        x, y = edge
        if not any(o in part and right in part for part in join_partition([states[x], states[y]])):
            continue
        total += sign * float(
            np.real(states[y].expectation(number) - states[x].expectation(number))
        )
    return total


def single_spin_chern(resolution: int = 4) -> float:
    """Chern number of the spin aligned with ``n`` from Bargmann phases on ``S2``."""
    mesh = sphere(2, resolution)
    vectors = []
    for p in mesh.points:
        n = bloch(p)
        vals, vecs = np.linalg.eigh(_n_dot_sigma(n))
        vectors.append(vecs[:, 1])
    flux = 0.0
    for tri, eps in mesh.cycles["fundamental"].items():
        v0, v1, v2 = (vectors[i] for i in tri)
        flux += eps * float(np.angle(np.vdot(v0, v1) * np.vdot(v1, v2) * np.vdot(v2, v0)))
    return flux / (2 * np.pi)


def berry_flux_oracle(family: ChernPump, resolution: int = 4) -> complex:
    """``2 pi i`` times the Berry flux carried across the origin cut per cycle.

    Each cycle moves exactly one aligned spin over the cut, so the flux is the
    Chern number of a single spin.
    """
    if not isinstance(family, ChernPump):
        raise ConfigError("the Berry-flux oracle is defined for the Chern pump")
    return 2j * np.pi * single_spin_chern(resolution)


MODELS: dict[str, Callable[..., Family]] = {
    ConstantFamily.name: ConstantFamily,
    SpinFamily.name: SpinFamily,
    RingPump.name: RingPump,
    ChernPump.name: ChernPump,
    ToyFamily2d.name: ToyFamily2d,
}


def model_catalog() -> Mapping[str, Callable[..., Family]]:
    """Registered model constructors, plus ``stack`` and ``inverse`` combinators
    available through :func:`build_family`."""
    return dict(MODELS)


def _lattice_from(config: FamilyConfig) -> Lattice | None:
    if config.lattice is None:
        return None
    spec = config.lattice
    return Lattice(spec.dimension, spec.extent, spec.boundary, spec.local_dim, spec.origin)


def build_family(config: FamilyConfig) -> Family:
    """Instantiate the configured model.

    ``params`` of ``stack`` take ``{"first": name, "second": name}``;
    ``inverse`` takes ``{"of": name}``.

    Raises:
        UnknownModelError: The model name is not registered.
        ConfigError: The parameters do not fit the model.
    """
    name = config.model.name
    params: dict[str, Any] = dict(config.model.params)
    lattice = _lattice_from(config)
    if name == "stack":
        first = _named(params.pop("first", None), lattice, {})
        second = _named(params.pop("second", None), lattice, {})
        family: Family = StackedFamily(first, second)
    elif name == "inverse":
        family = InverseFamily(_named(params.pop("of", None), lattice, params))
    else:
        family = _named(name, lattice, params)
    if config.charge is not None:
        if len(config.charge) != family.lattice.n_sites:
            raise ConfigError("charge assignment needs one integer per site")
        family.charges = tuple(config.charge)
    logger.info("family %r", family)
    return family


def _named(name: str | None, lattice: Lattice | None, params: dict[str, Any]) -> Family:
    if name not in MODELS:
        raise UnknownModelError(str(name))
    try:
        if lattice is None:
            return MODELS[name](**params)
        return MODELS[name](lattice, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model '{name}': {exc}") from exc


def default_mesh_for(family: Family) -> ParamMesh:
    """The coarsest mesh the family is usually run on."""
    manifold = family.manifolds[0] if family.manifolds else "S2"
    if manifold == "S1":
        return circle(16)
    return build_mesh(manifold)

