"""The graded complex of chains on a finite lattice.

An ``n``-chain (``n >= 1``) assigns traceless skew-adjoint observables to
site ``n``-tuples, antisymmetric under permutation; only strictly increasing
tuples are stored. A 0-chain is a derivation ``F = sum ad(t)`` given by its
local terms ``t``. The differential sums the first index over the lattice
and the bracket is the commutator tensored with the wedge product of the
site labels, so the whole complex is a dg-Lie algebra.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from collections import defaultdict
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr

from .errors import ConfinementWarning, GeometryError, SolverError
from .lattice import (
    Brick,
    Lattice,
    Observable,
    Region,
    commutator,
    conditional_expectation,
    embed,
    hull,
    sub_bricks,
)

logger = logging.getLogger(__name__)

Key = tuple[int, ...]


def canonical(sites: Iterable[int]) -> tuple[Key, int] | None:
    """Sorted tuple and the sign of the sorting permutation; ``None`` on repeats."""
    seq = list(sites)
    if len(set(seq)) != len(seq):
        return None
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return tuple(sorted(seq)), sign


class _Accumulator:
    """Sums observables per key, embedding supports as needed."""

    def __init__(self) -> None:
        self._data: dict[Key, Observable] = {}

    def add(self, key: Iterable[int], value: Observable, sign: int = 1) -> None:
        canon = canonical(key)
        if canon is None:
            return
        k, s = canon
        term = value if s * sign == 1 else value.scale(s * sign)
        current = self._data.get(k)
        self._data[k] = term if current is None else current + term

    def result(self, tol: float = 0.0) -> dict[Key, Observable]:
        return {k: v for k, v in self._data.items() if v.max_abs() > tol}


@dataclass(frozen=True, eq=False)
class Chain:
    """An element of ``C^{-n}``.

    Use :meth:`derivation` for degree 0 and :meth:`from_entries` for
    ``n >= 1``; both canonicalize keys and signs.
    """

    degree: int
    lattice: Lattice = field(repr=False)
    entries: Mapping[Key, Observable] = field(default_factory=dict)
    terms: tuple[Observable, ...] = ()

    @classmethod
    def derivation(cls, lattice: Lattice, terms: Iterable[Observable]) -> Chain:
        kept = tuple(t for t in terms if t.max_abs() > 0.0)
        return cls(0, lattice, {}, kept)

    @classmethod
    def from_entries(
        cls,
        lattice: Lattice,
        degree: int,
        entries: Mapping[Key, Observable] | Iterable[tuple[Key, Observable]],
    ) -> Chain:
        if degree < 1:
            raise ValueError("use Chain.derivation for degree 0")
        acc = _Accumulator()
        items = entries.items() if isinstance(entries, Mapping) else entries
        for key, value in items:
            if len(key) != degree:
                raise ValueError(f"key {key} does not have {degree} sites")
            acc.add(key, value)
        return cls(degree, lattice, acc.result())

    @classmethod
    def zero(cls, lattice: Lattice, degree: int) -> Chain:
        return cls(degree, lattice)

    @property
    def local_dim(self) -> int:
        return self.lattice.local_dim

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_norm() <= tol

    def items(self) -> Iterator[tuple[Key, Observable]]:
        if self.degree == 0:
            for t in self.terms:
                yield (), t
        else:
            yield from self.entries.items()

    def __getitem__(self, key: Key) -> Observable:
        canon = canonical(key)
        if canon is None or canon[0] not in self.entries:
            return Observable.zero((), self.local_dim)
        k, s = canon
        return self.entries[k] if s == 1 else self.entries[k].scale(s)

    def generator(self) -> Observable:
        """Sum of the terms of a derivation as one observable."""
        if self.degree != 0:
            raise ValueError("only derivations have a generator")
        out = Observable.zero((), self.local_dim)
        for t in self.terms:
            out = out + t
        return out

    def map(self, fn: Callable[[Key, Observable], Observable]) -> Chain:
        if self.degree == 0:
            return Chain.derivation(self.lattice, (fn((), t) for t in self.terms))
        return Chain.from_entries(
            self.lattice, self.degree, {k: fn(k, v) for k, v in self.entries.items()}
        )

    def scale(self, c: complex) -> Chain:
        return self.map(lambda _, v: v.scale(c))

    def __neg__(self) -> Chain:
        return self.scale(-1)

    def __add__(self, other: Chain) -> Chain:
        if self.degree != other.degree:
            raise ValueError("cannot add chains of different degree")
        if self.degree == 0:
            return Chain.derivation(self.lattice, self.terms + other.terms)
        acc = _Accumulator()
        for chain in (self, other):
            for k, v in chain.entries.items():
                acc.add(k, v)
        return Chain(self.degree, self.lattice, acc.result())

    def __sub__(self, other: Chain) -> Chain:
        return self + other.scale(-1)

    def max_norm(self) -> float:
        """Largest entry norm; for derivations the norm of the summed generator
        restricted to each connected cluster of terms."""
        if self.degree == 0:
            return max((c.norm() for c in clusters(self.terms)), default=0.0)
        return max((v.norm() for v in self.entries.values()), default=0.0)

    def entry_radius(self, key: Key) -> int:
        """Largest distance from a support site of the entry to its index sites."""
        value = self.entries[key]
        if not key:
            return 0
        return max(
            (min(self.lattice.distance(s, j) for j in key) for s in value.sites),
            default=0,
        )

    def check(self, tol: float = 1e-12) -> None:
        """Raise if an entry is not traceless and skew-adjoint."""
        for key, value in self.items():
            if not value.is_traceless(tol * max(1.0, value.max_abs())):
                raise GeometryError(f"entry {key} is not traceless")
            if not value.is_skew(tol * max(1.0, value.max_abs())):
                raise GeometryError(f"entry {key} is not skew-adjoint")


def clusters(terms: Iterable[Observable]) -> list[Observable]:
    """Group terms into connected support clusters and sum each cluster."""
    groups: list[tuple[set[int], list[Observable]]] = []
    for t in terms:
        merged_sites = set(t.sites)
        merged_terms = [t]
        rest = []
        for sites, members in groups:
            if sites & merged_sites:
                merged_sites |= sites
                merged_terms += members
            else:
                rest.append((sites, members))
        groups = rest + [(merged_sites, merged_terms)]
    out = []
    for _, members in groups:
        total = members[0]
        for m in members[1:]:
            total = total + m
        out.append(total)
    return out


def chain_distance(a: Chain, b: Chain) -> float:
    return (a - b).max_norm()


def differential(f: Chain) -> Chain:
    """``(df)_{j1..jn} = sum_{j0} f_{j0, j1..jn}``."""
    if f.degree == 0:
        raise ValueError("the differential of a derivation is not defined")
    if f.degree == 1:
        return Chain.derivation(f.lattice, f.entries.values())
    acc = _Accumulator()
    for key, value in f.entries.items():
        for i, _ in enumerate(key):
            rest = key[:i] + key[i + 1 :]
            acc.add(rest, value, -1 if i % 2 else 1)
    return Chain(f.degree - 1, f.lattice, acc.result())


def _act(terms: Iterable[Observable], value: Observable) -> Observable | None:
    out: Observable | None = None
    for t in terms:
        if t.support & value.support:
            c = commutator(t, value)
            out = c if out is None else out + c
    return out


def derivation_action(F: Chain, f: Chain) -> Chain:
    """The derivation ``F`` applied entrywise; on derivations, ``ad([A, B])``."""
    if F.degree != 0:
        raise ValueError("the acting chain must be a derivation")
    if f.degree == 0:
        return Chain.derivation(
            f.lattice,
            (
                commutator(t, s)
                for t in F.terms
                for s in f.terms
                if t.support & s.support
            ),
        )
    out: dict[Key, Observable] = {}
    for key, value in f.entries.items():
        acted = _act(F.terms, value)
        if acted is not None:
            out[key] = acted
    return Chain.from_entries(f.lattice, f.degree, out)


def bracket(f: Chain, g: Chain) -> Chain:
    """Graded Lie bracket ``C^{-m} x C^{-n} -> C^{-m-n}``.

    For ``m, n >= 1`` each split of the sorted tuple into sorted ``A`` and
    ``B`` contributes ``sign * [f_A, g_B]``; a derivation acts entrywise,
    and ``{g, F} = -{F, g}``.
    """
    if f.degree == 0:
        return derivation_action(f, g)
    if g.degree == 0:
        return derivation_action(g, f).scale(-1)
    acc = _Accumulator()
    for ka, va in f.entries.items():
        for kb, vb in g.entries.items():
            if set(ka) & set(kb):
                continue
            if not va.support & vb.support:
                continue
            acc.add(ka + kb, commutator(va, vb))
    return Chain(f.degree + g.degree, f.lattice, acc.result())


def graded_sign(f: Chain, g: Chain) -> int:
    return -1 if (f.degree * g.degree) % 2 else 1


def restrict(f: Chain, x: Region) -> Chain:
    """Keep the entries whose index tuple lies inside ``x``."""
    if f.degree == 0:
        raise ValueError("restrict a generating 1-chain, not a derivation")
    return Chain(
        f.degree,
        f.lattice,
        {k: v for k, v in f.entries.items() if all(j in x for j in k)},
    )


def boundary_commutator(f: Chain, x: Region | int) -> Chain:
    """``res_X(df) - d(res_X f)``; an integer selects the half-space ``H_i``.

    Entries are ``[J in X] sum_{j0 not in X} f_{j0, J}``, so the output is
    concentrated where ``f`` straddles the boundary of ``X``.
    """
    region = f.lattice.half_space(x) if isinstance(x, int) else x
    if f.degree < 1:
        raise ValueError("boundary commutator needs a chain of degree >= 1")
    if f.degree == 1:
        return Chain.derivation(
            f.lattice, (v for k, v in f.entries.items() if k[0] not in region)
        )
    acc = _Accumulator()
    for key, value in f.entries.items():
        outside = [i for i, j in enumerate(key) if j not in region]
        if len(outside) != 1:
            continue
        i = outside[0]
        rest = key[:i] + key[i + 1 :]
        acc.add(rest, value, -1 if i % 2 else 1)
    return Chain(f.degree - 1, f.lattice, acc.result())


@dataclass(frozen=True)
class Pairing:
    """A summed observable together with its boundary-truncation estimate."""

    value: Observable
    truncation: float


def _truncation(h: Chain) -> float:
    lat = h.lattice
    if lat.periodic:
        return 0.0
    edge = {
        s
        for s in lat.sites
        if any(c in (0, n - 1) for c, n in zip(lat.coords(s), lat.extent))
    }
    return max(
        (v.norm() for k, v in h.items() if set(k) & edge or set(v.sites) & edge),
        default=0.0,
    )


def pair_window(h: Chain, window: int | None) -> Chain:
    """Entries of ``h`` inside the cut window of radius ``window``; ``None`` keeps all."""
    if window is None:
        return h
    return restrict(h, h.lattice.cut_window(window))


def _sum_entries(f: Chain) -> Observable:
    total = Observable.zero((), f.local_dim)
    for _, v in f.items():
        total = total + v
    return total


def pair_hyperplane(h: Chain, axis: int, window: int | None = None) -> Pairing:
    """``<h, [dH_i]> = sum_j ([d, res_{H_i}] h)_j`` for a 2-chain in 2d."""
    if h.lattice.dimension != 2 or h.degree != 2:
        raise ValueError("hyperplane pairing takes a 2-chain on a 2d lattice")
    h = pair_window(h, window)
    value = _sum_entries(boundary_commutator(h, axis))
    return Pairing(value, _truncation(h))


def pair_point(h: Chain, window: int | None = None) -> Pairing:
    """``<h, [*]>``: nested boundary commutators over every axis, then summed."""
    d = h.lattice.dimension
    if h.degree != d + 1:
        raise ValueError(f"point pairing takes a {d + 1}-chain")
    h = pair_window(h, window)
    current = h
    for axis in range(d):
        current = boundary_commutator(current, axis)
    return Pairing(_sum_entries(current), _truncation(h))


@dataclass(frozen=True)
class BrickDecomposition:
    components: dict[Brick, Observable]
    residual: float

    def __len__(self) -> int:
        return len(self.components)


def brick_components(a: Observable, lattice: Lattice) -> dict[Brick, Observable]:
    """Components ``a^X`` of a traceless observable over the bricks in its hull.

    ``a^X = prod_faces (1 - E_face) tr_{X^c}(a)`` with ``E_face`` the
    conditional expectation removing one face of ``X``; these are the
    projections onto the complement of all strictly smaller bricks.
    """
    if not a.sites:
        return {}
    out: dict[Brick, Observable] = {}
    support = a.support
    for brick in sub_bricks(hull(lattice, a.sites)):
        faces = brick.faces()
        if any(not (face & support) for face in faces):
            continue
        base = conditional_expectation(a, support - brick.sites)
        comp = base
        for r in range(1, len(faces) + 1):
            for combo in itertools.combinations(faces, r):
                removed = frozenset().union(*combo)
                term = embed(conditional_expectation(base, removed), base.support)
                comp = comp + term.scale((-1) ** r)
        if comp.max_abs() > 1e-14:
            out[brick] = comp
    return out


def brick_decompose(f: Chain, window: Region | None = None) -> BrickDecomposition:
    """Brick decomposition of a derivation, summed over its terms."""
    if f.degree != 0:
        raise ValueError("brick decomposition takes a derivation")
    if window is not None:
        for t in f.terms:
            if not t.support <= window.sites:
                raise GeometryError("derivation term leaves the decomposition window")
    comps: dict[Brick, Observable] = {}
    for t in f.terms:
        for brick, c in brick_components(t.traceless(), f.lattice).items():
            comps[brick] = comps[brick] + c if brick in comps else c
    recon = Observable.zero((), f.local_dim)
    for c in comps.values():
        recon = recon + c
    residual = 0.0
    if f.terms:
        residual = (recon - f.generator().traceless()).max_abs()
    return BrickDecomposition(comps, residual)


def ual_seminorm(f: Chain, alpha: int) -> float:
    """``sup_X (1 + diam X)^alpha ||F^X||`` over the finite lattice."""
    decomposition = brick_decompose(f)
    return max(
        ((1 + b.diameter) ** alpha * c.norm() for b, c in decomposition.components.items()),
        default=0.0,
    )


def contracting_homotopy(
    f: Chain,
    method: Literal["brick", "anchored"] = "brick",
    anchor: int | None = None,
) -> Chain:
    """A degree +1 map ``K`` with ``K d + d K = 1``.

    ``brick`` spreads each brick component of an entry uniformly over the
    brick's sites (the local choice); ``anchored`` inserts the anchor site.
    In degree 0 the brick version is :func:`chain_from_derivation`.
    """
    lat = f.lattice
    acc = _Accumulator()
    if method == "anchored":
        o = lat.origin_site if anchor is None else anchor
        for key, value in f.items():
            acc.add((o,) + key, value.traceless() if f.degree == 0 else value)
        return Chain(f.degree + 1, lat, acc.result())
    for key, value in f.items():
        for brick, comp in brick_components(value.traceless(), lat).items():
            weight = 1.0 / len(brick.sites)
            for j in brick.sites:
                if j in key:
                    continue
                acc.add((j,) + key, comp.scale(weight))
    return Chain(f.degree + 1, lat, acc.result(tol=1e-15))


def chain_from_derivation(f: Chain) -> Chain:
    """``f_j = sum_{X containing j} F^X / |X|``; its differential is ``F``."""
    if f.degree != 0:
        raise ValueError("chain_from_derivation takes a derivation")
    return contracting_homotopy(f, "brick")


def least_squares_refine(
    g: Chain,
    b: Chain,
    weight_power: int = 4,
    radius: int = 1,
    max_iter: int = 2000,
) -> Chain:
    """Re-solve ``dg = b`` minimizing ``sum w(J) ||g_J||^2`` with ``w`` growing
    polynomially in the distance from the support of ``b``.

    Solutions differ by boundaries ``d e``; ``e`` ranges over entries on
    tuples of diameter at most ``radius + 1`` whose support is the union of
    the entries they can change.
    """
    lat = g.lattice
    anchor_sites = {s for _, v in b.items() for s in v.sites} | {
        j for k, _ in b.items() for j in k
    }
    if not anchor_sites:
        return g

    def weight(key: Key) -> float:
        dist = max(min(lat.distance(j, s) for s in anchor_sites) for j in key)
        return float((1 + dist) ** weight_power)

    n = g.degree
    support_of: dict[Key, frozenset[int]] = {}
    for tup in itertools.combinations(lat.sites, n + 1):
        if max(lat.distance(i, j) for i, j in itertools.combinations(tup, 2)) > radius + 1:
            continue
        sup: set[int] = set()
        for i in range(len(tup)):
            face = tup[:i] + tup[i + 1 :]
            if face in g.entries:
                sup |= g.entries[face].support
        if sup:
            support_of[tup] = frozenset(sup)
    if not support_of:
        return g
    d = lat.local_dim
    unknowns = list(support_of)
    offsets = [0]
    for key in unknowns:
        offsets.append(offsets[-1] + d ** (2 * len(support_of[key])))
    rows = list(g.entries)
    for key in unknowns:
        for i in range(len(key)):
            face = key[:i] + key[i + 1 :]
            if face not in g.entries and face not in rows:
                rows.append(face)
    row_support = {
        r: frozenset().union(
            g.entries[r].support if r in g.entries else frozenset(),
            *(support_of[k] for k in unknowns if set(r) <= set(k)),
        )
        for r in rows
    }
    row_offsets = [0]
    for r in rows:
        row_offsets.append(row_offsets[-1] + d ** (2 * len(row_support[r])))
    row_index = {r: i for i, r in enumerate(rows)}
    sqrt_w = {r: np.sqrt(weight(r)) for r in rows}

    def unpack(x: np.ndarray, i: int) -> Observable:
        key = unknowns[i]
        dim = d ** len(support_of[key])
        block = x[offsets[i] : offsets[i + 1]].reshape(dim, dim)
        return Observable(tuple(sorted(support_of[key])), block, d)

    def matvec(x: np.ndarray) -> np.ndarray:
        out = np.zeros(row_offsets[-1], dtype=complex)
        for i, key in enumerate(unknowns):
            e = unpack(x, i)
            for pos in range(len(key)):
                face = key[:pos] + key[pos + 1 :]
                r = row_index[face]
                sign = -1 if pos % 2 else 1
                mat = embed(e, row_support[face]).matrix.ravel()
                out[row_offsets[r] : row_offsets[r + 1]] += sign * sqrt_w[face] * mat
        return out

    def rmatvec(y: np.ndarray) -> np.ndarray:
        out = np.zeros(offsets[-1], dtype=complex)
        for i, key in enumerate(unknowns):
            sup = support_of[key]
            acc = np.zeros(d ** (2 * len(sup)), dtype=complex)
            for pos in range(len(key)):
                face = key[:pos] + key[pos + 1 :]
                r = row_index[face]
                dim = d ** len(row_support[face])
                block = Observable(
                    tuple(sorted(row_support[face])),
                    y[row_offsets[r] : row_offsets[r + 1]].reshape(dim, dim),
                    d,
                )
                # adjoint of embedding is the unnormalized partial trace
                extra = row_support[face] - sup
                reduced = conditional_expectation(block, extra).matrix * d ** len(extra)
                sign = -1 if pos % 2 else 1
                acc += sign * sqrt_w[face] * reduced.ravel()
            out[offsets[i] : offsets[i + 1]] = acc
        return out

    rhs = np.zeros(row_offsets[-1], dtype=complex)
    for key, value in g.entries.items():
        r = row_index[key]
        rhs[row_offsets[r] : row_offsets[r + 1]] = (
            -sqrt_w[key] * embed(value, row_support[key]).matrix.ravel()
        )
    op = LinearOperator(
        (row_offsets[-1], offsets[-1]), matvec=matvec, rmatvec=rmatvec, dtype=complex
    )
    result = lsqr(op, rhs, atol=1e-12, btol=1e-12, iter_lim=max_iter)
    istop = int(result[1])
    if istop not in (1, 2, 4, 5):
        raise SolverError(f"least-squares refinement stopped with code {istop}")
    x = result[0]
    correction: dict[Key, Observable] = {}
    for i, key in enumerate(unknowns):
        e = unpack(x, i)
        skew = Observable(e.sites, (e.matrix - e.matrix.conj().T) / 2, d).traceless()
        correction[key] = skew
    e_chain = Chain.from_entries(lat, n + 1, correction)
    return g + differential(e_chain)


@dataclass(frozen=True)
class DecayReport:
    """Max entry norm per distance shell and the fitted log-slope."""

    shells: tuple[float, ...]
    slope: float | None

    @property
    def confined(self) -> bool:
        return self.slope is None or self.slope < 0


def confinement_profile(f: Chain, x: Region) -> DecayReport:
    """Shell ``r`` holds entries whose farthest index or support site is at
    distance ``r`` from ``x``."""
    lat = f.lattice
    shells: dict[int, float] = defaultdict(float)
    for key, value in f.items():
        sites = set(key) | set(value.sites)
        r = max((x.distance_to(s) for s in sites), default=0)
        shells[r] = max(shells[r], value.norm())
    depth = max(shells, default=0)
    profile = tuple(shells.get(r, 0.0) for r in range(depth + 1))
    points = [(r, np.log(v)) for r, v in enumerate(profile) if r >= 1 and v > 1e-300]
    slope: float | None = None
    if len(points) >= 2:
        rs, logs = zip(*points)
        slope = float(np.polyfit(rs, logs, 1)[0])
    elif points and profile[0] > 0:
        slope = float(points[0][1] - np.log(profile[0])) / points[0][0]
    if slope is not None and slope >= 0 and depth >= 2:
        warnings.warn(
            f"decay fit near {x.tag or 'region'} is not decreasing "
            f"(slope {slope:.3g}) on a lattice of {lat.n_sites} sites",
            ConfinementWarning,
            stacklevel=2,
        )
    return DecayReport(profile, slope)


def random_skew(sites: Iterable[int], local_dim: int, rng: np.random.Generator) -> Observable:
    support = tuple(sorted(set(sites)))
    dim = local_dim ** len(support)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    skew = (m - m.conj().T) / 2
    return Observable(support, skew, local_dim).traceless()


def random_chain(
    lattice: Lattice,
    degree: int,
    rng: np.random.Generator,
    n_entries: int = 4,
    spread: int = 1,
) -> Chain:
    """Random chain with entries supported near their index sites."""
    sites = list(lattice.sites)
    if degree == 0:
        terms = []
        for _ in range(n_entries):
            j = int(rng.choice(sites))
            near = [s for s in sites if lattice.distance(j, s) <= spread]
            k = int(rng.integers(1, min(len(near), 2) + 1))
            support = rng.choice(near, size=k, replace=False)
            terms.append(random_skew(support, lattice.local_dim, rng))
        return Chain.derivation(lattice, terms)
    entries: dict[Key, Observable] = {}
    for _ in range(n_entries):
        key = tuple(int(s) for s in rng.choice(sites, size=degree, replace=False))
        near = {s for s in sites if min(lattice.distance(j, s) for j in key) <= spread}
        k = int(rng.integers(1, min(len(near), 3) + 1))
        support = rng.choice(sorted(near), size=k, replace=False)
        entries[key] = random_skew(support, lattice.local_dim, rng)
    return Chain.from_entries(lattice, degree, entries)


def chain_to_json(f: Chain) -> dict[str, Any]:
    """JSON form: tuple keys joined by commas, matrices as ``re``/``im`` arrays."""
    lat = f.lattice
    return {
        "degree": f.degree,
        "lattice": {
            "dimension": lat.dimension,
            "extent": list(lat.extent),
            "boundary": lat.boundary,
            "local_dim": lat.local_dim,
            "origin": list(lat.origin or ()),
        },
        "entries": [
            {
                "key": ",".join(str(j) for j in key),
                "support": list(v.sites),
                "re": v.matrix.real.tolist(),
                "im": v.matrix.imag.tolist(),
            }
            for key, v in f.items()
        ],
    }


def chain_from_json(data: Mapping[str, Any]) -> Chain:
    spec = data["lattice"]
    lat = Lattice(
        spec["dimension"],
        tuple(spec["extent"]),
        spec["boundary"],
        spec["local_dim"],
        tuple(spec["origin"]) or None,
    )
    values = []
    for item in data["entries"]:
        key = tuple(int(j) for j in item["key"].split(",")) if item["key"] else ()
        matrix = np.asarray(item["re"]) + 1j * np.asarray(item["im"])
        values.append((key, Observable(tuple(item["support"]), matrix, lat.local_dim)))
    if data["degree"] == 0:
        return Chain.derivation(lat, (v for _, v in values))
    return Chain.from_entries(lat, data["degree"], values)
