"""Finite lattice geometry and the local observable algebra.

Sites are indexed lexicographically by their coordinates. An
:class:`Observable` is a dense matrix on the tensor product of the on-site
spaces of its support, with the support sorted by site index; every tensor
embedding permutes factors back into that order.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GeometryError

logger = logging.getLogger(__name__)

DENSE_SITE_CAP = 12
"""Hard ceiling on dense supports; runs lower it through ``SpectralConfig``."""


@dataclass(frozen=True)
class Lattice:
    """A box of ``Z^d`` with open or periodic boundary.

    Args:
        dimension: 1 or 2.
        extent: Sites per axis.
        boundary: ``"open"`` or ``"periodic"``.
        local_dim: On-site Hilbert space dimension ``D``.
        origin: Coordinates of the site playing the role of ``0``. Defaults
                to ``n // 2 - 1`` on every axis.
    """

    dimension: int
    extent: tuple[int, ...]
    boundary: str = "open"
    local_dim: int = 2
    origin: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2):
            raise GeometryError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.extent) != self.dimension:
            raise GeometryError("extent must list one size per axis")
        if any(n < 2 for n in self.extent):
            raise GeometryError("every axis needs at least two sites")
        if self.boundary not in ("open", "periodic"):
            raise GeometryError(f"unknown boundary mode '{self.boundary}'")
        if self.local_dim < 2:
            raise GeometryError("on-site dimension must be at least 2")
        if self.origin is None:
            object.__setattr__(self, "origin", tuple(n // 2 - 1 for n in self.extent))
        assert self.origin is not None
        if len(self.origin) != self.dimension or any(
            not 0 <= o < n for o, n in zip(self.origin, self.extent, strict=True)
        ):
            raise GeometryError(f"origin {self.origin} is not a lattice site")

    @classmethod
    def chain(cls, n: int, **kwargs: object) -> Lattice:
        return cls(1, (n,), **kwargs)  # type: ignore[arg-type]

    @property
    def n_sites(self) -> int:
        return math.prod(self.extent)

    @property
    def hilbert_dim(self) -> int:
        return int(self.local_dim**self.n_sites)

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def sites(self) -> range:
        return range(self.n_sites)

    @property
    def origin_site(self) -> int:
        assert self.origin is not None
        return self.index(self.origin)

    def coords(self, site: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(site, self.extent))

    def index(self, coords: Sequence[int]) -> int:
        wrapped = [
            c % n if self.periodic else c
            for c, n in zip(coords, self.extent, strict=True)
        ]
        if any(not 0 <= c < n for c, n in zip(wrapped, self.extent, strict=True)):
            raise GeometryError(f"coordinates {tuple(coords)} lie outside the lattice")
        return int(np.ravel_multi_index(wrapped, self.extent))

    def axis_offset(self, a: int, b: int, axis: int) -> int:
        """Signed displacement ``b - a`` along ``axis``, wrapped if periodic."""
        n = self.extent[axis]
        delta = b - a
        if self.periodic:
            delta = (delta + n // 2) % n - n // 2
        return delta

    def distance(self, i: int, j: int) -> int:
        ci, cj = self.coords(i), self.coords(j)
        return max(
            abs(self.axis_offset(a, b, k)) for k, (a, b) in enumerate(zip(ci, cj))
        )

    def relative(self, site: int) -> tuple[int, ...]:
        """Coordinates relative to the origin; periodic axes map into ``(-n/2, n/2]``."""
        assert self.origin is not None
        out = []
        for axis, (c, o) in enumerate(zip(self.coords(site), self.origin, strict=True)):
            n = self.extent[axis]
            r = c - o
            if self.periodic:
                lo = -((n - 1) // 2)
                r = (r - lo) % n + lo
            out.append(r)
        return tuple(out)

    def region(self, sites: Iterable[int], tag: str | None = None) -> Region:
        return Region(frozenset(int(s) for s in sites), self, tag)

    def half_space(self, axis: int = 0) -> Region:
        """``H_i = {x_i <= 0}`` relative to the origin."""
        return self.region(
            (s for s in self.sites if self.relative(s)[axis] <= 0), f"H{axis + 1}"
        )

    def hyperplane(self, axis: int = 0) -> Region:
        """The two layers of sites adjacent to the cut bounding ``H_i``."""
        return self.region(
            (s for s in self.sites if self.relative(s)[axis] in (0, 1)),
            f"dH{axis + 1}",
        )

    def ball(self, site: int, radius: int) -> Region:
        return self.region(
            (s for s in self.sites if self.distance(site, s) <= radius),
            f"B({site},{radius})",
        )

    def cut_window(self, radius: int) -> Region:
        """Sites within ``radius`` of the corner of the half-spaces at the origin.

        In 1d these are the sites with relative coordinate in
        ``[1 - radius, radius]``; in 2d the same box on both axes.
        """
        return self.region(
            (
                s
                for s in self.sites
                if all(1 - radius <= r <= radius for r in self.relative(s))
            ),
            f"W({radius})",
        )

    def full(self) -> Region:
        return self.region(self.sites, "all")


@dataclass(frozen=True)
class Region:
    """A set of lattice sites with an optional symbolic tag."""

    sites: frozenset[int]
    lattice: Lattice = field(compare=False, repr=False)
    tag: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if any(not 0 <= s < self.lattice.n_sites for s in self.sites):
            raise GeometryError("region contains sites outside the lattice")

    def __contains__(self, site: object) -> bool:
        return site in self.sites

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.sites))

    def __len__(self) -> int:
        return len(self.sites)

    def complement(self) -> Region:
        tag = f"{self.tag}^c" if self.tag else None
        return Region(frozenset(self.lattice.sites) - self.sites, self.lattice, tag)

    def distance_to(self, site: int) -> int:
        if not self.sites:
            return self.lattice.n_sites
        return min(self.lattice.distance(site, s) for s in self.sites)

    def fatten(self, r: float) -> Region:
        """``X(r) = {j : d(j, X) <= r}``."""
        tag = f"{self.tag}({r})" if self.tag else None
        return Region(
            frozenset(s for s in self.lattice.sites if self.distance_to(s) <= r),
            self.lattice,
            tag,
        )

    def __and__(self, other: Region) -> Region:
        return Region(self.sites & other.sites, self.lattice)

    def __or__(self, other: Region) -> Region:
        return Region(self.sites | other.sites, self.lattice)

    def issubset(self, other: Region) -> bool:
        return self.sites <= other.sites


def is_stable_intersection(
    x: Region, xp: Region, y: Region, c: float, rmax: int
) -> bool:
    """Whether ``X(r) & X'(r)`` stays inside ``Y(c r)`` for ``0 <= r <= rmax``."""
    if rmax > max(x.lattice.extent):
        raise GeometryError("rmax exceeds the lattice extent")
    return all(
        (x.fatten(r) & xp.fatten(r)).issubset(y.fatten(c * r)) for r in range(rmax + 1)
    )


@dataclass(frozen=True)
class Brick:
    """A product of integer intervals, ``starts[k] .. starts[k] + lengths[k] - 1``.

    On periodic axes an interval may wrap; an interval covering the whole
    axis is stored with start ``0``.
    """

    lattice: Lattice = field(compare=False, repr=False)
    starts: tuple[int, ...]
    lengths: tuple[int, ...]

    @cached_property
    def sites(self) -> frozenset[int]:
        axes = [
            [(s + t) % n if self.lattice.periodic else s + t for t in range(length)]
            for s, length, n in zip(
                self.starts, self.lengths, self.lattice.extent, strict=True
            )
        ]
        return frozenset(self.lattice.index(c) for c in itertools.product(*axes))

    @property
    def size(self) -> int:
        return math.prod(self.lengths)

    @property
    def diameter(self) -> int:
        # L-infinity diameter of the site set; a single site has diameter 0
        return max(self.lengths) - 1

    def faces(self) -> list[frozenset[int]]:
        """Site sets whose removal yields the maximal proper sub-bricks."""
        out: list[frozenset[int]] = []
        for axis, (start, length) in enumerate(zip(self.starts, self.lengths)):
            n = self.lattice.extent[axis]
            if length == 1:
                continue
            if self.lattice.periodic and length == n:
                ends = list(range(n))
            else:
                ends = [start, start + length - 1]
                if self.lattice.periodic:
                    ends = [e % n for e in ends]
            for end in ends:
                out.append(
                    frozenset(s for s in self.sites if self.lattice.coords(s)[axis] == end)
                )
        return out


def _axis_hull(values: set[int], n: int, periodic: bool) -> tuple[int, int]:
    """Smallest interval (start, length) containing ``values`` on one axis."""
    lo, hi = min(values), max(values)
    if not periodic:
        return lo, hi - lo + 1
    ordered = sorted(values)
    gaps = [
        ((ordered[(k + 1) % len(ordered)] - ordered[k]) % n or n, k)
        for k in range(len(ordered))
    ]
    gap, k = max(gaps)
    if gap <= 1:
        return 0, n
    start = ordered[(k + 1) % len(ordered)]
    return start, n - gap + 1


def hull(lattice: Lattice, sites: Iterable[int]) -> Brick:
    """Smallest brick containing ``sites``."""
    coords = [lattice.coords(s) for s in sites]
    if not coords:
        raise GeometryError("hull of an empty set")
    spans = [
        _axis_hull({c[k] for c in coords}, lattice.extent[k], lattice.periodic)
        for k in range(lattice.dimension)
    ]
    return Brick(lattice, tuple(s for s, _ in spans), tuple(ln for _, ln in spans))


def sub_bricks(brick: Brick) -> list[Brick]:
    """Every brick contained in ``brick`` (itself included)."""
    lat = brick.lattice
    per_axis: list[list[tuple[int, int]]] = []
    for axis, (start, length) in enumerate(zip(brick.starts, brick.lengths)):
        n = lat.extent[axis]
        options: list[tuple[int, int]] = []
        if lat.periodic and length == n:
            options = [(s, ln) for ln in range(1, n) for s in range(n)] + [(0, n)]
        else:
            for ln in range(1, length + 1):
                for off in range(length - ln + 1):
                    s = start + off
                    options.append((s % n if lat.periodic else s, ln))
        per_axis.append(options)
    return [
        Brick(lat, tuple(s for s, _ in combo), tuple(ln for _, ln in combo))
        for combo in itertools.product(*per_axis)
    ]


@dataclass(frozen=True, eq=False)
class Observable:
    """A dense operator on the sorted support ``sites``."""

    sites: tuple[int, ...]
    matrix: np.ndarray
    local_dim: int = 2

    def __post_init__(self) -> None:
        if tuple(sorted(set(self.sites))) != self.sites:
            raise GeometryError("observable support must be sorted and distinct")
        if len(self.sites) > DENSE_SITE_CAP:
            raise GeometryError(
                f"support of {len(self.sites)} sites exceeds the dense cap "
                f"{DENSE_SITE_CAP}"
            )
        dim = self.local_dim ** len(self.sites)
        if self.matrix.shape != (dim, dim):
            raise GeometryError(
                f"matrix shape {self.matrix.shape} does not match support of "
                f"{len(self.sites)} sites"
            )

    @classmethod
    def identity(cls, sites: Iterable[int] = (), local_dim: int = 2) -> Observable:
        support = tuple(sorted(set(sites)))
        return cls(support, np.eye(local_dim ** len(support), dtype=complex), local_dim)

    @classmethod
    def zero(cls, sites: Iterable[int] = (), local_dim: int = 2) -> Observable:
        support = tuple(sorted(set(sites)))
        dim = local_dim ** len(support)
        return cls(support, np.zeros((dim, dim), dtype=complex), local_dim)

    @classmethod
    def on_site(cls, site: int, matrix: np.ndarray) -> Observable:
        return cls((site,), np.asarray(matrix, dtype=complex), matrix.shape[0])

    @classmethod
    def product(cls, factors: dict[int, np.ndarray], local_dim: int = 2) -> Observable:
        """Tensor product of on-site matrices, one per listed site."""
        support = tuple(sorted(factors))
        mat = np.eye(1, dtype=complex)
        for s in support:
            mat = np.kron(mat, np.asarray(factors[s], dtype=complex))
        return cls(support, mat, local_dim)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(self.sites)

    def norm(self) -> float:
        if self.matrix.size == 1:
            return float(abs(self.matrix[0, 0]))
        return float(np.linalg.norm(self.matrix, 2))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def adjoint(self) -> Observable:
        return Observable(self.sites, self.matrix.conj().T, self.local_dim)

    def scale(self, c: complex) -> Observable:
        return Observable(self.sites, c * self.matrix, self.local_dim)

    def __neg__(self) -> Observable:
        return self.scale(-1)

    def __add__(self, other: Observable) -> Observable:
        target = self.support | other.support
        return Observable(
            tuple(sorted(target)),
            embed(self, target).matrix + embed(other, target).matrix,
            self.local_dim,
        )

    def __sub__(self, other: Observable) -> Observable:
        return self + other.scale(-1)

    def __matmul__(self, other: Observable) -> Observable:
        target = self.support | other.support
        return Observable(
            tuple(sorted(target)),
            embed(self, target).matrix @ embed(other, target).matrix,
            self.local_dim,
        )

    def is_traceless(self, tol: float = 1e-12) -> bool:
        return abs(normalized_trace(self)) <= tol

    def is_skew(self, tol: float = 1e-12) -> bool:
        return float(np.max(np.abs(self.matrix + self.matrix.conj().T), initial=0.0)) <= tol

    def traceless(self) -> Observable:
        """Subtract ``tr(a)`` times the identity."""
        dim = self.matrix.shape[0]
        return Observable(
            self.sites,
            self.matrix - normalized_trace(self) * np.eye(dim),
            self.local_dim,
        )

    def compress(self, tol: float = 1e-13) -> Observable:
        """Drop support sites on which the operator acts as identity."""
        current = self
        for s in self.sites:
            reduced = conditional_expectation(current, frozenset({s}))
            if np.max(np.abs(embed(reduced, current.support).matrix - current.matrix),
                       initial=0.0) <= tol:
                current = reduced
        return current


def _as_tensor(a: Observable) -> np.ndarray:
    k = len(a.sites)
    return a.matrix.reshape((a.local_dim,) * (2 * k))


def embed(a: Observable, target: Iterable[int] | Region) -> Observable:
    """``a`` tensored with the identity on ``target`` minus its support."""
    target_sites = tuple(sorted(target.sites if isinstance(target, Region) else set(target)))
    if not a.support <= set(target_sites):
        raise GeometryError(
            f"support {a.sites} is not contained in target {target_sites}"
        )
    if target_sites == a.sites:
        return a
    d = a.local_dim
    extra = [s for s in target_sites if s not in a.support]
    full = np.kron(a.matrix, np.eye(d ** len(extra), dtype=complex))
    order = list(a.sites) + extra
    m = len(target_sites)
    perm = [order.index(s) for s in target_sites]
    tensor = full.reshape((d,) * (2 * m)).transpose(perm + [m + p for p in perm])
    return Observable(target_sites, tensor.reshape(d**m, d**m), d)


def normalized_trace(a: Observable) -> complex:
    dim = a.matrix.shape[0]
    return complex(np.trace(a.matrix) / dim)


def conditional_expectation(a: Observable, x: Iterable[int] | Region) -> Observable:
    """Normalized partial trace of ``a`` over the sites of ``x`` it acts on."""
    traced = set(x.sites if isinstance(x, Region) else x) & a.support
    if not traced:
        return a
    d = a.local_dim
    keep = [s for s in a.sites if s not in traced]
    tensor = _as_tensor(a)
    k = len(a.sites)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:k])
    cols = list(letters[k : 2 * k])
    for pos, s in enumerate(a.sites):
        if s in traced:
            cols[pos] = rows[pos]
    out_rows = [rows[p] for p, s in enumerate(a.sites) if s not in traced]
    out_cols = [cols[p] for p, s in enumerate(a.sites) if s not in traced]
    spec = "".join(rows + cols) + "->" + "".join(out_rows + out_cols)
    reduced = np.einsum(spec, tensor) / d ** len(traced)
    dim = d ** len(keep)
    return Observable(tuple(keep), np.asarray(reduced).reshape(dim, dim), d)


def hs_inner(a: Observable, b: Observable) -> complex:
    """``(a, b) = tr(a^* b)`` on the union of the supports."""
    target = a.support | b.support
    ea, eb = embed(a, target), embed(b, target)
    return complex(np.vdot(ea.matrix, eb.matrix) / ea.matrix.shape[0])


def commutator(a: Observable, b: Observable) -> Observable:
    target = a.support | b.support
    ea, eb = embed(a, target).matrix, embed(b, target).matrix
    return Observable(tuple(sorted(target)), ea @ eb - eb @ ea, a.local_dim)


def lift(a: Observable, factor: int, other_dim: int) -> Observable:
    """Lift an observable of one factor of a stacked system.

    Each site of the stacked lattice carries ``C^{D_A} (x) C^{D_B}``;
    ``factor`` 0 places ``a`` on the first tensor factor of every site.
    """
    d = a.local_dim
    k = len(a.sites)
    ident = np.eye(other_dim**k, dtype=complex)
    full = np.kron(a.matrix, ident) if factor == 0 else np.kron(ident, a.matrix)
    dims_first = (d,) * k + (other_dim,) * k if factor == 0 else (other_dim,) * k + (d,) * k
    tensor = full.reshape(dims_first + dims_first)
    perm = [p for s in range(k) for p in (s, k + s)]
    tensor = tensor.transpose(perm + [2 * k + p for p in perm])
    dim = (d * other_dim) ** k
    return Observable(a.sites, tensor.reshape(dim, dim), d * other_dim)


@dataclass(frozen=True)
class StackedLattice:
    """A stacked lattice together with the lifts of both factors."""

    lattice: Lattice
    dims: tuple[int, int]

    def lift_first(self, a: Observable) -> Observable:
        return lift(a, 0, self.dims[1])

    def lift_second(self, a: Observable) -> Observable:
        return lift(a, 1, self.dims[0])


def stack(sys_a: Lattice, sys_b: Lattice) -> StackedLattice:
    """Stack two systems on the same geometry; on-site dimension multiplies."""
    if (sys_a.dimension, sys_a.extent, sys_a.boundary) != (
        sys_b.dimension,
        sys_b.extent,
        sys_b.boundary,
    ):
        raise GeometryError("stacked systems must share dimension, extent and boundary")
    combined = Lattice(
        sys_a.dimension,
        sys_a.extent,
        sys_a.boundary,
        sys_a.local_dim * sys_b.local_dim,
        sys_a.origin,
    )
    return StackedLattice(combined, (sys_a.local_dim, sys_b.local_dim))


PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

NUMBER = np.array([[0, 0], [0, 1]], dtype=complex)
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)


def pauli(label: str, site: int) -> Observable:
    return Observable.on_site(site, PAULI[label])
