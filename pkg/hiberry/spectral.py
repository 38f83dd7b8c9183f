"""Ground states, parallel transport generators and state-preserving homotopies.

Ground states of the families handled here are products over *blocks*: the
connected clusters of Hamiltonian terms, further split wherever a site is
left in a pure state. Every state-dependent operation works block by block,
so nothing is ever expanded to the full lattice Hilbert space unless a block
actually covers it.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Protocol

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh, expm, schur
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .chains import (
    Chain,
    clusters,
    contracting_homotopy,
    differential,
    least_squares_refine,
    restrict,
)
from .config import DescentConfig, SpectralConfig
from .errors import ConfinementError, GapClosedError, GeometryError, SolverError
from .lattice import Lattice, Observable, Region, embed, normalized_trace

if TYPE_CHECKING:
    from .mesh import DiscreteForm

logger = logging.getLogger(__name__)


class HasHamiltonian(Protocol):
    lattice: Lattice

    def hamiltonian(self, point: np.ndarray) -> Chain: ...


def gauge_fix(vector: np.ndarray) -> np.ndarray:
    """Rotate the phase so the largest-magnitude component is real positive."""
    k = int(np.argmax(np.abs(vector)))
    phase = vector[k] / abs(vector[k])
    return vector / phase


def product_vector(
    parts: Iterable[tuple[Sequence[int], np.ndarray]], local_dim: int
) -> tuple[tuple[int, ...], np.ndarray]:
    """Tensor product of vectors on disjoint site sets, in sorted site order."""
    order: list[int] = []
    vec = np.ones(1, dtype=complex)
    for sites, v in parts:
        order += list(sites)
        vec = np.kron(vec, v)
    if not order:
        return (), vec
    target = sorted(order)
    perm = [order.index(s) for s in target]
    tensor = vec.reshape((local_dim,) * len(order)).transpose(perm)
    return tuple(target), tensor.reshape(-1)


def apply_local(
    vector: np.ndarray, sites: Sequence[int], op: Observable
) -> np.ndarray:
    """Apply ``op`` to a vector on the sorted ``sites`` without densifying."""
    if not op.support <= set(sites):
        raise GeometryError(f"operator support {op.sites} leaves the vector's sites")
    d = op.local_dim
    n, k = len(sites), len(op.sites)
    axes = [list(sites).index(s) for s in op.sites]
    tensor = vector.reshape((d,) * n)
    mat = op.matrix.reshape((d,) * (2 * k))
    out = np.tensordot(mat, tensor, axes=(list(range(k, 2 * k)), axes))
    rest = [a for a in range(n) if a not in axes]
    current = axes + rest
    return np.moveaxis(out, range(n), current).reshape(-1)


def apply_to_vector(
    vector: np.ndarray, sites: Sequence[int], factors: Iterable[Observable]
) -> np.ndarray:
    """Apply local factors in order (first factor acts first)."""
    out = vector
    for op in factors:
        out = apply_local(out, sites, op)
    return out


@dataclass(frozen=True, eq=False)
class Block:
    sites: tuple[int, ...]
    vector: np.ndarray
    energy: float = 0.0
    gap: float = np.inf


@dataclass(frozen=True, eq=False)
class GroundData:
    """A gapped product-over-blocks ground state.

    Args:
        lattice: The lattice the state lives on.
        blocks: Disjoint blocks covering every site.
        energy: Ground energy of the full Hamiltonian.
        gap: Smallest block gap, which is the gap of the sum.
    """

    lattice: Lattice = field(repr=False)
    blocks: tuple[Block, ...]
    energy: float = 0.0
    gap: float = np.inf

    def __post_init__(self) -> None:
        seen = [s for b in self.blocks for s in b.sites]
        if sorted(seen) != list(self.lattice.sites):
            raise GeometryError("blocks must partition the lattice")

    @cached_property
    def block_of(self) -> dict[int, int]:
        return {s: i for i, b in enumerate(self.blocks) for s in b.sites}

    def blocks_touching(self, sites: Iterable[int]) -> list[Block]:
        idx = sorted({self.block_of[s] for s in sites})
        return [self.blocks[i] for i in idx]

    def vector_on(self, sites: Iterable[int]) -> tuple[tuple[int, ...], np.ndarray]:
        """Product vector over the blocks touching ``sites``."""
        blocks = self.blocks_touching(sites)
        return product_vector(
            ((b.sites, b.vector) for b in blocks), self.lattice.local_dim
        )

    def full_vector(self) -> np.ndarray:
        return self.vector_on(self.lattice.sites)[1]

    def projector(self, sites: Iterable[int]) -> Observable:
        support, vec = self.vector_on(sites)
        return Observable(support, np.outer(vec, vec.conj()), self.lattice.local_dim)

    def expectation(self, a: Observable) -> complex:
        if not a.sites:
            return complex(a.matrix[0, 0])
        support, vec = self.vector_on(a.sites)
        mat = embed(a, support).matrix
        return complex(np.vdot(vec, mat @ vec))

    def psi(self, a: Observable) -> complex:
        """``psi(a) - tr(a)``: the state value of the inner derivation ``ad(a)``."""
        return self.expectation(a) - normalized_trace(a)

    def coarsen(self, partition: Iterable[Sequence[int]]) -> GroundData:
        """The same state with blocks merged along a coarser ``partition``."""
        blocks = []
        for part in partition:
            sites, vec = self.vector_on(part)
            if set(sites) != set(part):
                raise GeometryError(f"{tuple(part)} is not a union of blocks")
            blocks.append(Block(sites, vec, self.energy, self.gap))
        blocks.sort(key=lambda b: b.sites)
        return GroundData(self.lattice, tuple(blocks), self.energy, self.gap)


def _components(terms: Sequence[Observable]) -> list[tuple[tuple[int, ...], list[int]]]:
    groups: list[tuple[set[int], list[int]]] = []
    for i, t in enumerate(terms):
        sites = set(t.sites)
        members = [i]
        rest = []
        for other_sites, other in groups:
            if other_sites & sites:
                sites |= other_sites
                members += other
            else:
                rest.append((other_sites, other))
        groups = rest + [(sites, members)]
    return sorted((tuple(sorted(s)), sorted(m)) for s, m in groups)


def block_hamiltonian(terms: Iterable[Observable], sites: Sequence[int]) -> np.ndarray:
    """Hermitian matrix ``-i sum t`` of skew terms, on ``sites``."""
    total: np.ndarray | None = None
    for t in terms:
        m = embed(t, sites).matrix * (-1j)
        total = m if total is None else total + m
    if total is None:
        raise GeometryError("block without Hamiltonian terms")
    return (total + total.conj().T) / 2


def _lowest_two(
    h: np.ndarray, config: SpectralConfig
) -> tuple[np.ndarray, np.ndarray]:
    dim = h.shape[0]
    if (dim <= config.dense_dim_cap and config.backend == "dense") or dim <= 16:
        vals, vecs = eigh(h)
        return vals[:2], vecs[:, :2]
    if dim > config.iterative_dim_cap:
        raise SolverError(
            f"block dimension {dim} exceeds the iterative cap {config.iterative_dim_cap}"
        )
    op = LinearOperator((dim, dim), matvec=lambda x: h @ x, dtype=complex)
    try:
        vals, vecs = eigsh(op, k=2, which="SA")
    except ArpackNoConvergence as exc:
        raise SolverError("Lanczos eigensolver did not converge") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _split_pure(
    sites: tuple[int, ...], vector: np.ndarray, d: int, tol: float
) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Factor out sites whose reduced state is pure."""
    out: list[tuple[tuple[int, ...], np.ndarray]] = []
    current_sites, current = list(sites), vector
    changed = True
    while changed and len(current_sites) > 1:
        changed = False
        for pos, s in enumerate(current_sites):
            n = len(current_sites)
            tensor = np.moveaxis(current.reshape((d,) * n), pos, 0).reshape(d, -1)
            rho = tensor @ tensor.conj().T
            if np.real(np.trace(rho @ rho)) <= 1 - tol:
                continue
            _, vecs = eigh(rho)
            site_vec = gauge_fix(vecs[:, -1])
            rest = site_vec.conj() @ tensor
            out.append(((s,), site_vec))
            current = gauge_fix(rest / np.linalg.norm(rest))
            del current_sites[pos]
            changed = True
            break
    out.append((tuple(current_sites), current))
    return sorted(out)


def ground_state(
    hamiltonian: Chain, config: SpectralConfig | None = None
) -> GroundData:
    """Ground state of the derivation ``ad(iH)``, block by block.

    Raises:
        GapClosedError: A block's gap is below ``gap_threshold * max(1, ||H_b||)``
                        or some site carries no Hamiltonian term at all.
        GeometryError: A block spans more than ``dense_site_cap`` sites.
    """
    config = config or SpectralConfig()
    lat = hamiltonian.lattice
    d = lat.local_dim
    terms = list(hamiltonian.terms)
    comps = _components(terms)
    covered = {s for sites, _ in comps for s in sites}
    free = set(lat.sites) - covered
    if free:
        raise GapClosedError(
            (0.0, 0.0), f"sites {sorted(free)} carry no term; ground state degenerate"
        )
    blocks: list[Block] = []
    energy, gap = 0.0, np.inf
    for sites, members in comps:
        if len(sites) > config.dense_site_cap:
            raise GeometryError(
                f"block {sites} exceeds the dense cap of {config.dense_site_cap} sites"
            )
        h = block_hamiltonian((terms[i] for i in members), sites)
        vals, vecs = _lowest_two(h, config)
        e0, e1 = float(vals[0]), float(vals[1])
        scale = max(1.0, float(np.linalg.norm(h, 2)))
        if e1 - e0 < config.gap_threshold * scale:
            raise GapClosedError((e0, e1))
        energy += e0
        gap = min(gap, e1 - e0)
        vec = gauge_fix(vecs[:, 0])
        for part_sites, part in _split_pure(sites, vec, d, config.purity_tol):
            blocks.append(Block(part_sites, part, e0, e1 - e0))
    blocks.sort(key=lambda b: b.sites)
    logger.debug("ground state: %d blocks, gap %.4g", len(blocks), gap)
    return GroundData(lat, tuple(blocks), energy, gap)


def state_from_blocks(
    lattice: Lattice, parts: Iterable[tuple[Sequence[int], np.ndarray]]
) -> GroundData:
    """GroundData from closed-form block vectors (for families given by states)."""
    blocks = []
    for sites, vec in parts:
        vec = np.asarray(vec, dtype=complex)
        blocks.append(Block(tuple(sites), vec / np.linalg.norm(vec)))
    return GroundData(lattice, tuple(sorted(blocks, key=lambda b: b.sites)))


def join_partition(states: Sequence[GroundData]) -> list[tuple[int, ...]]:
    """Coarsest common coarsening of the block partitions of ``states``."""
    parent = {s: s for s in states[0].lattice.sites}

    def find(s: int) -> int:
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for state in states:
        for b in state.blocks:
            root = find(b.sites[0])
            for s in b.sites[1:]:
                parent[find(s)] = root
    groups: dict[int, list[int]] = {}
    for s in states[0].lattice.sites:
        groups.setdefault(find(s), []).append(s)
    return sorted(tuple(sorted(g)) for g in groups.values())


def align_unitary(chi1: np.ndarray, chi2: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """The unitary rotating ``chi1`` onto ``chi2`` inside their span.

    ``chi2`` is first rotated by the phase making ``<chi1|chi2>`` positive;
    the returned ``U`` maps ``chi1`` to that rotated vector, is the identity
    on the complement of the span and satisfies ``||U - 1|| = ||chi1 - chi2||``.

    Raises:
        SolverError: The vectors are orthogonal.
    """
    overlap = np.vdot(chi1, chi2)
    if abs(overlap) < tol:
        raise SolverError("cannot align orthogonal vectors")
    chi2 = chi2 * (abs(overlap) / overlap)
    c = float(np.real(np.vdot(chi1, chi2)))
    dim = chi1.shape[0]
    w = chi2 - c * chi1
    s = float(np.linalg.norm(w))
    if s < 1e-15:
        return np.eye(dim, dtype=complex)
    w = w / s
    p1, pw = np.outer(chi1, chi1.conj()), np.outer(w, w.conj())
    rot = np.outer(w, chi1.conj()) - np.outer(chi1, w.conj())
    return np.eye(dim, dtype=complex) + (c - 1) * (p1 + pw) + s * rot


def rotation_log(chi1: np.ndarray, chi2: np.ndarray) -> np.ndarray:
    """``log`` of :func:`align_unitary`: ``theta (|w><chi1| - |chi1><w|)``."""
    overlap = np.vdot(chi1, chi2)
    chi2 = chi2 * (abs(overlap) / overlap)
    c = float(np.clip(np.real(np.vdot(chi1, chi2)), -1.0, 1.0))
    w = chi2 - c * chi1
    s = float(np.linalg.norm(w))
    if s < 1e-15:
        return np.zeros((chi1.shape[0],) * 2, dtype=complex)
    w = w / s
    theta = float(np.arctan2(s, c))
    return theta * (np.outer(w, chi1.conj()) - np.outer(chi1, w.conj()))


def unitary_log(u: np.ndarray) -> np.ndarray:
    """Principal logarithm of a unitary, skew-adjoint by construction."""
    t, z = schur(u, output="complex")
    phases = np.angle(np.diag(t))
    out = z @ np.diag(1j * phases) @ z.conj().T
    return (out - out.conj().T) / 2


def expm_observable(a: Observable) -> Observable:
    return Observable(a.sites, expm(a.matrix), a.local_dim)


def pinch(a: Observable, psi: GroundData) -> Observable:
    """``sum P a P + Q a Q`` for every block projector ``P`` touching ``a``."""
    if not a.sites:
        return a
    blocks = psi.blocks_touching(a.sites)
    support = tuple(sorted({s for b in blocks for s in b.sites}))
    mat = embed(a, support).matrix
    d = a.local_dim
    for b in blocks:
        _, vec = product_vector([(b.sites, b.vector)], d)
        p = Observable(b.sites, np.outer(vec, vec.conj()), d)
        big = embed(p, support).matrix
        q = np.eye(big.shape[0]) - big
        mat = big @ mat @ big + q @ mat @ q
    return Observable(support, mat, d)


def flatten[T: (Observable, Chain)](x: T, psi: GroundData) -> T:
    """Make every entry preserve ``psi``; linear, idempotent and ``d``-compatible."""
    if isinstance(x, Observable):
        return pinch(x, psi)
    return x.map(lambda _, v: pinch(v, psi))


def preservation_defect(
    x: Observable | Chain,
    psi: GroundData,
    samples: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """``max |psi([e, B])|`` over random Hermitian ``B`` and entries ``e``."""
    rng = rng or np.random.default_rng(0)
    entries = [x] if isinstance(x, Observable) else [v for _, v in x.items()]
    worst = 0.0
    for e in entries:
        if not e.sites:
            continue
        support = tuple(sorted({s for b in psi.blocks_touching(e.sites) for s in b.sites}))
        dim = e.local_dim ** len(support)
        big = embed(e, support).matrix
        _, vec = psi.vector_on(support)
        for _ in range(max(1, samples // max(1, len(entries)))):
            m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            b = (m + m.conj().T) / 2
            comm = big @ b - b @ big
            worst = max(worst, abs(np.vdot(vec, comm @ vec)))
    return float(worst)


def solve_partial(
    b: Chain,
    anchor: int | None = None,
    config: DescentConfig | None = None,
) -> Chain:
    """A chain ``g`` with ``dg = b`` for ``d``-closed ``b`` (homotopy ``K``)."""
    config = config or DescentConfig()
    if b.is_zero():
        return Chain.zero(b.lattice, b.degree + 1)
    g = contracting_homotopy(b, config.homotopy, anchor)
    if config.least_squares and b.degree >= 1:
        g = least_squares_refine(
            g, b, config.ls_weight_power, config.ls_radius, config.ls_max_iter
        )
    return g


def regroup(f: Chain, psi: GroundData) -> Chain:
    """Merge derivation terms touching a common block into one term each."""
    groups: dict[int, list[Observable]] = {}
    parent: dict[int, int] = {}
    for i, t in enumerate(f.terms):
        keys = {psi.block_of[s] for s in t.sites}
        hits = sorted({parent[k] for k in keys if k in parent})
        root = hits[0] if hits else i
        merged = [t]
        for h in hits:
            merged += groups.pop(h)
        for k, r in list(parent.items()):
            if r in hits:
                parent[k] = root
        for k in keys:
            parent[k] = root
        groups[root] = merged
    out = []
    for members in groups.values():
        total = members[0]
        for m in members[1:]:
            total = total + m
        out.append(total)
    return Chain.derivation(f.lattice, out)


def solve_partial_psi(
    b: Chain,
    psi: GroundData,
    config: DescentConfig | None = None,
    check: bool = True,
) -> Chain:
    """``flatten(solve_partial(b))``; requires ``psi``-preserving entries."""
    config = config or DescentConfig()
    if b.degree == 0:
        b = regroup(b, psi)
    if check:
        defect = max(
            (
                (pinch(v, psi) - v).max_abs()
                for _, v in b.items()
            ),
            default=0.0,
        )
        if defect > config.psi_tol * max(1.0, b.max_norm()):
            raise SolverError(f"input does not preserve the state (defect {defect:.3g})")
    return flatten(solve_partial(b, config=config), psi)


def evaluate_state_on_inner(
    f: Chain | Observable,
    psi: GroundData,
    *,
    near: Region | None = None,
    radius: int = 0,
) -> complex:
    """``psi(A) - tr(A)`` for a generator ``A`` of the inner derivation ``f``.

    With ``near`` set, every term must lie within ``radius`` of that region;
    an unconfined derivation has no well-defined value and is refused.

    Raises:
        ConfinementError: A term reaches farther than ``radius`` from ``near``.
    """
    terms = (f,) if isinstance(f, Observable) else f.terms
    if isinstance(f, Chain) and f.degree != 0:
        raise ValueError("only derivations are evaluated on a state")
    if near is not None:
        for t in terms:
            if any(near.distance_to(s) > radius for s in t.sites):
                raise ConfinementError(
                    f"term on {t.sites} lies farther than {radius} from {near.tag or 'region'}"
                )
    return sum((psi.psi(t) for t in terms), start=0j)


@dataclass(frozen=True, eq=False)
class Automorphism:
    """Conjugation by an ordered product of local unitaries.

    ``factors[0]`` acts first on vectors; observables transform as
    ``a -> U a U*`` with ``U = factors[-1] ... factors[0]``.
    """

    factors: tuple[Observable, ...] = ()
    label: str = ""

    def inverse(self) -> Automorphism:
        return Automorphism(tuple(f.adjoint() for f in reversed(self.factors)), self.label)

    def then(self, other: Automorphism) -> Automorphism:
        return Automorphism(self.factors + other.factors, self.label or other.label)

    def unitarity_defect(self) -> float:
        return max(
            (
                float(np.max(np.abs(f.matrix.conj().T @ f.matrix - np.eye(f.matrix.shape[0]))))
                for f in self.factors
            ),
            default=0.0,
        )

    def act(self, a: Observable) -> Observable:
        out = a
        for f in self.factors:
            if f.support & out.support:
                out = f @ out @ f.adjoint()
        return out

    def act_chain(self, c: Chain) -> Chain:
        return c.map(lambda _, v: self.act(v))

    def apply(self, vector: np.ndarray, sites: Sequence[int]) -> np.ndarray:
        return apply_to_vector(vector, sites, self.factors)


def derivation_exponential(f: Chain, sign: float = -1.0) -> list[Observable]:
    """``exp(sign * A)`` for the generator ``A`` of a derivation, per cluster."""
    return [expm_observable(c.scale(sign)) for c in clusters(f.terms)]


def _integrate_cluster(a: Observable, sign: float, rtol: float, atol: float) -> Observable:
    """``U(1)`` for ``dU/dt = sign * A U``, ``U(0) = 1``."""
    dim = a.matrix.shape[0]
    gen = sign * a.matrix

    def rhs(_: float, y: np.ndarray) -> np.ndarray:
        return (gen @ y.reshape(dim, dim)).reshape(-1)

    start = np.eye(dim, dtype=complex).reshape(-1)
    sol = solve_ivp(rhs, (0.0, 1.0), start, method="RK45", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise SolverError(f"transport on {a.sites} stopped: {sol.message}")
    return Observable(a.sites, sol.y[:, -1].reshape(dim, dim), a.local_dim)


def lga_integrate(
    gform: DiscreteForm,
    path: Sequence[int],
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> Automorphism:
    """Time-ordered exponential of ``-G`` along a vertex path.

    Each step integrates the matrix equation ``dU/dt = -G_e U`` over unit
    time with an adaptive Runge-Kutta scheme, cluster by cluster; walking
    an edge against its orientation flips the sign.

    Raises:
        GeometryError: A step is not a mesh edge.
        SolverError: The integrator fails, for instance on step-size underflow.
    """
    factors: list[Observable] = []
    for x, y in zip(path, path[1:]):
        key = (x, y) if x < y else (y, x)
        if key not in gform.values:
            raise GeometryError(f"path step {x}->{y} is not a mesh edge")
        g = gform.values[key]
        sign = -1.0 if x < y else 1.0
        factors += [_integrate_cluster(c, sign, rtol, atol) for c in clusters(g.terms)]
    return Automorphism(tuple(factors), "lga")


def _dense(factors: Sequence[Observable], sites: tuple[int, ...], d: int) -> np.ndarray:
    out = np.eye(d ** len(sites), dtype=complex)
    for f in factors:
        out = embed(f, sites).matrix @ out
    return out


def gauge_transform(
    gform: DiscreteForm, alpha: Mapping[int, Automorphism]
) -> DiscreteForm:
    """``G^alpha``: edge transports ``X(y)* U_e X(x)`` with ``U_e = exp(-G_e)``."""
    from .mesh import DiscreteForm

    out: dict[tuple[int, ...], Chain] = {}
    for key, g in gform.values.items():
        x, y = key
        ux = derivation_exponential(g)
        xs, ys = alpha[x].factors, alpha[y].factors
        sites = tuple(sorted({s for f in (*ux, *xs, *ys) for s in f.sites}))
        if not sites:
            out[key] = Chain.zero(g.lattice, 0)
            continue
        d = g.lattice.local_dim
        u = _dense(ys, sites, d).conj().T @ _dense(ux, sites, d) @ _dense(xs, sites, d)
        gen = Observable(sites, -unitary_log(u), d).traceless()
        out[key] = Chain.derivation(g.lattice, [gen])
    return DiscreteForm(gform.mesh, 1, out)


def _component_projectors(
    hamiltonian: Chain, comps: Sequence[tuple[tuple[int, ...], list[int]]]
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    terms = list(hamiltonian.terms)
    out = []
    for sites, members in comps:
        h = block_hamiltonian((terms[i] for i in members), sites)
        vals, vecs = eigh(h)
        out.append((h, vals, vecs))
    return out


def _shifted_blocks(
    family: HasHamiltonian,
    point: np.ndarray,
    comps: Sequence[tuple[tuple[int, ...], list[int]]],
) -> list[np.ndarray]:
    h = family.hamiltonian(point)
    mats = []
    for sites, _ in comps:
        inside = [t for t in h.terms if t.support <= set(sites)]
        mats.append(block_hamiltonian(inside, sites))
    leaving = [
        t for t in h.terms if not any(t.support <= set(s) for s, _ in comps)
    ]
    if leaving:
        raise SolverError("Hamiltonian clusters change along the derivative stencil")
    return mats


def kato_generator(
    family: HasHamiltonian, point: np.ndarray, direction: np.ndarray, step: float = 1e-4
) -> Chain:
    """``G = sum_b [P_b, dP_b]`` from central differences of block projectors."""
    h0 = family.hamiltonian(point)
    comps = _components(list(h0.terms))
    plus = _shifted_blocks(family, point + step * direction, comps)
    minus = _shifted_blocks(family, point - step * direction, comps)
    terms = []
    for (sites, _), hp, hm, (_, _, vecs) in zip(
        comps, plus, minus, _component_projectors(h0, comps)
    ):
        p0 = np.outer(vecs[:, 0], vecs[:, 0].conj())
        vp = eigh(hp)[1][:, 0]
        vm = eigh(hm)[1][:, 0]
        dp = (np.outer(vp, vp.conj()) - np.outer(vm, vm.conj())) / (2 * step)
        k = p0 @ dp - dp @ p0
        terms.append(Observable(sites, k, h0.local_dim))
    return Chain.derivation(h0.lattice, terms)


def filtered_generator(
    family: HasHamiltonian,
    point: np.ndarray,
    direction: np.ndarray,
    gamma: float,
    step: float = 1e-4,
) -> Chain:
    """Quasi-adiabatic generator with filter ``F(w) = (1 - exp(-w^2 / 2 gamma^2)) / w``.

    Raises:
        SolverError: Some block gap is below ``6 * gamma``.
    """
    h0 = family.hamiltonian(point)
    comps = _components(list(h0.terms))
    plus = _shifted_blocks(family, point + step * direction, comps)
    minus = _shifted_blocks(family, point - step * direction, comps)
    terms = []
    for (sites, _), hp, hm, (_, vals, vecs) in zip(
        comps, plus, minus, _component_projectors(h0, comps)
    ):
        if vals[1] - vals[0] < 6 * gamma:
            raise SolverError(
                f"gap {vals[1] - vals[0]:.3g} too small for filter width {gamma:.3g}"
            )
        dh = vecs.conj().T @ ((hp - hm) / (2 * step)) @ vecs
        omega = vals[:, None] - vals[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            filt = np.where(
                np.abs(omega) > 1e-12,
                (1 - np.exp(-(omega**2) / (2 * gamma**2))) / omega,
                0.0,
            )
        k = vecs @ (dh * filt) @ vecs.conj().T
        terms.append(Observable(sites, (k - k.conj().T) / 2, h0.local_dim))
    return Chain.derivation(h0.lattice, terms)


def parallel_generator(
    family: HasHamiltonian,
    point: np.ndarray,
    direction: np.ndarray,
    config: SpectralConfig | None = None,
    step: float = 1e-4,
) -> Chain:
    """A derivation ``G`` with ``d psi(A) = psi(G(A))`` along ``direction``."""
    config = config or SpectralConfig()
    if config.generator == "filtered":
        return filtered_generator(family, point, direction, config.filter_gamma, step)
    return kato_generator(family, point, direction, step)


def interpolate_connection(
    g1: Chain,
    g2: Chain,
    x: Region,
    psi: GroundData,
    config: DescentConfig | None = None,
) -> Chain:
    """``G3 = G1 - d res_{X^c} h(G1 - G2)``: agrees with ``G1`` deep in ``X`` and
    with ``G2`` deep in ``X^c``, and stays parallel for ``psi``."""
    diff = g1 - g2
    if diff.is_zero(1e-14):
        return g1
    h = solve_partial_psi(diff, psi, config)
    return g1 - differential(restrict(h, x.complement()))

