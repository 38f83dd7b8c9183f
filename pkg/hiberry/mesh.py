"""Ordered simplicial meshes of parameter manifolds and cochain-valued forms.

Simplices are strictly increasing vertex tuples. Spheres are boundaries of
subdivided cubes with every facet Kuhn-triangulated, projected radially;
products use the Eilenberg-Zilber shuffle map with vertex id
``a * len(B) + b``. Forms are cochains, so ``d`` squares to zero and obeys
Leibniz for the Alexander-Whitney cup product exactly.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .chains import Chain
from .errors import GeometryError

logger = logging.getLogger(__name__)

Simplex = tuple[int, ...]
Cycle = dict[Simplex, int]

SUPPORTED = ("point", "S1", "S2", "S3", "T2", "S2xS1")


def faces(simplex: Simplex) -> list[tuple[int, Simplex]]:
    """``(sign, face)`` pairs of the simplicial boundary."""
    return [
        (-1 if i % 2 else 1, simplex[:i] + simplex[i + 1 :]) for i in range(len(simplex))
    ]


def boundary_chain(chain: Mapping[Simplex, int]) -> Cycle:
    out: dict[Simplex, int] = {}
    for s, c in chain.items():
        if len(s) == 1:
            continue
        for sign, f in faces(s):
            out[f] = out.get(f, 0) + sign * c
    return {k: v for k, v in out.items() if v}


def _closure(tops: Iterable[Simplex]) -> tuple[tuple[Simplex, ...], ...]:
    tops = list(tops)
    dim = len(tops[0]) - 1
    levels: list[set[Simplex]] = [set() for _ in range(dim + 1)]
    for t in tops:
        for k in range(1, dim + 2):
            levels[k - 1].update(itertools.combinations(t, k))
    return tuple(tuple(sorted(level)) for level in levels)


@dataclass(frozen=True, eq=False)
class ParamMesh:
    """A finite ordered simplicial complex with named cycles.

    Args:
        manifold: Catalog name (``S1``, ``S2``, ``S2xS1`` ...).
        points: Per-vertex coordinates handed to model families.
        embedding: Per-vertex unit vectors used for cap covers.
        simplices: Simplices of each degree.
        cycles: Named integral cycles, ``fundamental`` among them.
        factors: The two factors of a product mesh.
    """

    manifold: str
    points: np.ndarray = field(repr=False)
    embedding: np.ndarray = field(repr=False)
    simplices: tuple[tuple[Simplex, ...], ...] = field(repr=False)
    cycles: Mapping[str, Cycle] = field(repr=False)
    factors: tuple[ParamMesh, ...] = field(default=(), repr=False)

    @property
    def dimension(self) -> int:
        return len(self.simplices) - 1

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def vertices(self) -> range:
        return range(self.n_vertices)

    def cells(self, degree: int) -> tuple[Simplex, ...]:
        if degree > self.dimension:
            return ()
        return self.simplices[degree]

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        for a, b in self.cells(1):
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def named_cycle(self, name: str) -> Cycle:
        if name not in self.cycles:
            raise GeometryError(
                f"unknown cycle '{name}' on {self.manifold}; "
                f"available: {', '.join(sorted(self.cycles))}"
            )
        return dict(self.cycles[name])

    def split(self, vertex: int) -> tuple[int, int]:
        if len(self.factors) != 2:
            raise GeometryError(f"{self.manifold} is not a product mesh")
        return divmod(vertex, self.factors[1].n_vertices)

    def shortest_path(
        self, start: int, end: int, allowed: frozenset[int] | None = None
    ) -> tuple[int, ...]:
        return _bfs_tree(self, start, allowed)[end]


def point() -> ParamMesh:
    return ParamMesh(
        "point",
        np.zeros((1, 0)),
        np.ones((1, 1)),
        (((0,),),),
        {"fundamental": {(0,): 1}},
    )


def circle(n: int = 64) -> ParamMesh:
    """``n`` nodes at angles ``2 pi k / n``; the closing edge is ``(0, n-1)``."""
    if n < 3:
        raise GeometryError("a circle needs at least three nodes")
    theta = 2 * np.pi * np.arange(n) / n
    edges = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    fundamental = {e: 1 for e in edges[:-1]}
    fundamental[(0, n - 1)] = -1
    return ParamMesh(
        "S1",
        theta[:, None],
        np.stack([np.cos(theta), np.sin(theta)], axis=1),
        (tuple((i,) for i in range(n)), tuple(sorted(edges))),
        {"fundamental": fundamental},
    )


def sphere(k: int, n: int = 4) -> ParamMesh:
    """``S^k`` as the boundary of ``[0, n]^{k+1}``, facets Kuhn-triangulated."""
    if k < 1:
        raise GeometryError("sphere dimension must be positive")
    if k == 1:
        return circle(max(3, 4 * n))
    if n < 1:
        raise GeometryError("sphere resolution must be positive")
    dim = k + 1
    coords = sorted(
        c
        for c in itertools.product(range(n + 1), repeat=dim)
        if any(x in (0, n) for x in c)
    )
    index = {c: i for i, c in enumerate(coords)}
    center = np.full(dim, n / 2)
    tops: dict[Simplex, int] = {}
    for axis in range(dim):
        free = [a for a in range(dim) if a != axis]
        for fixed in (0, n):
            for corner in itertools.product(range(n), repeat=k):
                base = [0] * dim
                base[axis] = fixed
                for a, c in zip(free, corner):
                    base[a] = c
                for perm in itertools.permutations(free):
                    path = [tuple(base)]
                    cur = list(base)
                    for a in perm:
                        cur[a] += 1
                        path.append(tuple(cur))
                    simplex = tuple(index[p] for p in path)
                    verts = np.array(path, dtype=float)
                    normal = verts.mean(axis=0) - center
                    frame = np.vstack([normal, verts[1:] - verts[0]])
                    tops[simplex] = 1 if np.linalg.det(frame) > 0 else -1
    pts = np.array(coords, dtype=float) - center
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return ParamMesh(
        f"S{k}",
        pts,
        pts,
        _closure(tops),
        {"fundamental": tops},
    )


def _shuffles(p: int, q: int) -> Iterable[tuple[tuple[int, ...], int]]:
    """Positions of the first-factor steps among ``p + q`` steps, with sign."""
    for pos in itertools.combinations(range(p + q), p):
        inversions = sum(
            1 for i in pos for j in range(p + q) if j not in pos and j < i
        )
        yield pos, -1 if inversions % 2 else 1


def eilenberg_zilber(
    sa: Simplex, sb: Simplex, n_b: int
) -> list[tuple[int, Simplex]]:
    """Signed simplices of the triangulated prism ``sa x sb``."""
    p, q = len(sa) - 1, len(sb) - 1
    out = []
    for pos, sign in _shuffles(p, q):
        i = j = 0
        verts = [sa[0] * n_b + sb[0]]
        for step in range(p + q):
            if step in pos:
                i += 1
            else:
                j += 1
            verts.append(sa[i] * n_b + sb[j])
        out.append((sign, tuple(verts)))
    return out


def cross(ca: Mapping[Simplex, int], cb: Mapping[Simplex, int], n_b: int) -> Cycle:
    out: dict[Simplex, int] = {}
    for sa, x in ca.items():
        for sb, y in cb.items():
            for sign, s in eilenberg_zilber(sa, sb, n_b):
                out[s] = out.get(s, 0) + sign * x * y
    return {k: v for k, v in out.items() if v}


def product(a: ParamMesh, b: ParamMesh, name: str | None = None) -> ParamMesh:
    """Product mesh; the fundamental cycle is the cross product of the factors'."""
    n_b = b.n_vertices
    fund = cross(a.cycles["fundamental"], b.cycles["fundamental"], n_b)
    pts = np.array(
        [np.concatenate([a.points[i], b.points[j]]) for i in a.vertices for j in b.vertices]
    ).reshape(a.n_vertices * n_b, -1)
    emb = np.zeros((a.n_vertices * n_b, 1))
    label_a = a.manifold.lower()
    label_b = b.manifold.lower()
    if label_b == label_a:
        label_b += "-2"
    cycles = {
        "fundamental": fund,
        f"{label_a}-factor": cross(a.cycles["fundamental"], {(0,): 1}, n_b),
        f"{label_b}-factor": cross({(0,): 1}, b.cycles["fundamental"], n_b),
    }
    return ParamMesh(
        name or f"{a.manifold}x{b.manifold}",
        pts,
        emb,
        _closure(fund),
        cycles,
        (a, b),
    )


def torus(n1: int = 16, n2: int = 16) -> ParamMesh:
    return product(circle(n1), circle(n2), "T2")


def build_mesh(manifold: str, resolution: Sequence[int] = ()) -> ParamMesh:
    """Catalog entry point used by run configurations."""
    res = list(resolution)

    def take(default: int) -> int:
        return res.pop(0) if res else default

    match manifold:
        case "point":
            return point()
        case "S1":
            return circle(take(64))
        case "S2":
            return sphere(2, take(4))
        case "S3":
            return sphere(3, take(2))
        case "T2":
            return torus(take(16), take(16))
        case "S2xS1":
            base = sphere(2, take(4))
            return product(base, circle(take(16)), "S2xS1")
    raise GeometryError(
        f"unsupported manifold '{manifold}'; choose one of {', '.join(SUPPORTED)}"
    )


def _scale(value: Any, c: float) -> Any:
    if isinstance(value, Chain):
        return value.scale(c)
    return c * value


def _add(a: Any, b: Any) -> Any:
    if a is None:
        return b
    return a + b


@dataclass(frozen=True, eq=False)
class DiscreteForm:
    """A ``degree``-cochain with complex or :class:`Chain` values."""

    mesh: ParamMesh = field(repr=False)
    degree: int
    values: Mapping[Simplex, Any] = field(default_factory=dict)
    label: str = ""

    @classmethod
    def from_function(
        cls,
        mesh: ParamMesh,
        degree: int,
        fn: Callable[[Simplex], Any],
        label: str = "",
    ) -> DiscreteForm:
        return cls(mesh, degree, {s: fn(s) for s in mesh.cells(degree)}, label)

    def __getitem__(self, simplex: Simplex) -> Any:
        return self.values.get(simplex, 0.0)

    def is_scalar(self) -> bool:
        return not any(isinstance(v, Chain) for v in self.values.values())

    def __add__(self, other: DiscreteForm) -> DiscreteForm:
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        keys = set(self.values) | set(other.values)
        return DiscreteForm(
            self.mesh,
            self.degree,
            {
                k: _add(self.values.get(k), other.values[k])
                if k in other.values
                else self.values[k]
                for k in keys
            },
        )

    def scale(self, c: float) -> DiscreteForm:
        return DiscreteForm(
            self.mesh, self.degree, {k: _scale(v, c) for k, v in self.values.items()}
        )

    def max_abs(self) -> float:
        out = 0.0
        for v in self.values.values():
            out = max(out, v.max_norm() if isinstance(v, Chain) else abs(v))
        return out


def exterior_derivative(f: DiscreteForm) -> DiscreteForm:
    """Simplicial coboundary: ``(df)[s] = sum_i (-1)^i f[s without vertex i]``."""
    values: dict[Simplex, Any] = {}
    for s in f.mesh.cells(f.degree + 1):
        total: Any = None
        for sign, face in faces(s):
            if face in f.values:
                total = _add(total, _scale(f.values[face], sign))
        values[s] = 0.0 if total is None else total
    return DiscreteForm(f.mesh, f.degree + 1, values)


def cup(a: DiscreteForm, b: DiscreteForm) -> DiscreteForm:
    """Alexander-Whitney cup product of scalar forms."""
    p, q = a.degree, b.degree
    values = {
        s: a[s[: p + 1]] * b[s[p:]] for s in a.mesh.cells(p + q)
    }
    return DiscreteForm(a.mesh, p + q, values)


def integrate(f: DiscreteForm, cycle: Mapping[Simplex, int] | str = "fundamental") -> complex:
    """``sum_s c_s f[s]`` over an integral cycle.

    Raises:
        GeometryError: The chain is not closed or has the wrong degree.
    """
    chain = f.mesh.named_cycle(cycle) if isinstance(cycle, str) else dict(cycle)
    if any(len(s) != f.degree + 1 for s in chain):
        raise GeometryError(f"cycle degree does not match form degree {f.degree}")
    if boundary_chain(chain):
        raise GeometryError("integration chain is not closed")
    return complex(sum(c * f[s] for s, c in chain.items()))


def fiber_integrate(f: DiscreteForm) -> DiscreteForm:
    """Evaluate on ``s x [S^1]`` for each cell ``s`` of the base of ``M x S^1``."""
    mesh = f.mesh
    if len(mesh.factors) != 2 or mesh.factors[1].manifold != "S1":
        raise GeometryError("fiber integration needs a product mesh with a circle fiber")
    base, fiber = mesh.factors
    fund = fiber.cycles["fundamental"]
    values: dict[Simplex, Any] = {}
    for s in base.cells(f.degree - 1):
        total: Any = 0.0
        for sign, t in cross({s: 1}, fund, fiber.n_vertices).items():
            total = total + sign * f[t]
        values[s] = total
    return DiscreteForm(base, f.degree - 1, values)


def pullback_first(f: DiscreteForm, mesh: ParamMesh) -> DiscreteForm:
    """Pull a base form back along the projection ``M x B -> M``."""
    n_b = mesh.factors[1].n_vertices
    values = {}
    for s in mesh.cells(f.degree):
        base = tuple(v // n_b for v in s)
        values[s] = f[base] if len(set(base)) == len(base) else 0.0
    return DiscreteForm(mesh, f.degree, values)


def angle_form(mesh: ParamMesh) -> DiscreteForm:
    """``d theta`` on a circle or the circle factor of a product."""
    fiber = mesh.factors[1] if mesh.factors else mesh
    if fiber.manifold != "S1":
        raise GeometryError("angle form needs a circle factor")
    n = fiber.n_vertices
    step = 2 * np.pi / n

    def value(edge: Simplex) -> float:
        a, b = (v % n for v in edge) if mesh.factors else edge
        if a == b:
            return 0.0
        delta = (b - a) % n
        return step if delta == 1 else -step

    return DiscreteForm.from_function(mesh, 1, value, "dtheta")


def _bfs_tree(
    mesh: ParamMesh, root: int, allowed: frozenset[int] | None = None
) -> dict[int, tuple[int, ...]]:
    paths = {root: (root,)}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in mesh.adjacency[v]:
            if w in paths or (allowed is not None and w not in allowed):
                continue
            paths[w] = paths[v] + (w,)
            queue.append(w)
    return paths


@dataclass(frozen=True, eq=False)
class Cover:
    """Patches of vertices with contraction paths from a common basepoint.

    ``paths[a][x]`` runs from ``basepoint`` to the center of patch ``a`` and
    then inside the patch to ``x``.
    """

    mesh: ParamMesh = field(repr=False)
    patches: tuple[frozenset[int], ...]
    basepoint: int
    paths: tuple[Mapping[int, tuple[int, ...]], ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.patches)

    def overlap(self, *idx: int) -> frozenset[int]:
        out = self.patches[idx[0]]
        for i in idx[1:]:
            out = out & self.patches[i]
        return out

    def patch_of(self, simplex: Simplex) -> int:
        for a, patch in enumerate(self.patches):
            if all(v in patch for v in simplex):
                return a
        raise GeometryError(
            f"simplex {simplex} lies in no patch; refine the mesh resolution"
        )

    def nerve(self, max_dim: int | None = None) -> list[tuple[int, ...]]:
        top = len(self.patches) if max_dim is None else max_dim + 1
        out = []
        for k in range(1, top + 1):
            for idx in itertools.combinations(range(len(self.patches)), k):
                if self.overlap(*idx):
                    out.append(idx)
        return out


def _regular_simplex(k: int) -> np.ndarray:
    """``k + 2`` unit vectors in ``R^{k+1}`` with equal pairwise angles."""
    m = k + 2
    centered = np.eye(m) - 1.0 / m
    u, _, _ = np.linalg.svd(centered)
    coords = centered @ u[:, : m - 1]
    return coords / np.linalg.norm(coords, axis=1, keepdims=True)


def _cap_cover(mesh: ParamMesh, radius_deg: float) -> Cover:
    k = mesh.dimension
    centers = _regular_simplex(k)
    emb = mesh.embedding
    cos_r = math.cos(math.radians(radius_deg))
    patches = []
    center_vertices = []
    for c in centers:
        dots = emb @ c
        patches.append(frozenset(int(v) for v in np.nonzero(dots >= cos_r)[0]))
        center_vertices.append(int(np.argmax(dots)))
    if set().union(*patches) != set(mesh.vertices):
        raise GeometryError("cap cover misses vertices")
    basepoint = center_vertices[0]
    global_tree = _bfs_tree(mesh, basepoint)
    paths = []
    for patch, center in zip(patches, center_vertices):
        inner = _bfs_tree(mesh, center, patch)
        if set(inner) != set(patch):
            raise GeometryError("cap patch is not connected at this resolution")
        lead = global_tree[center]
        paths.append({x: lead + p[1:] for x, p in inner.items()})
    return Cover(mesh, tuple(patches), basepoint, tuple(paths))


def good_cover(mesh: ParamMesh, radius_deg: float | None = None) -> Cover:
    """Caps around the vertices of a regular simplex; products of covers.

    ``S^k`` gets ``k + 2`` caps: nonempty intersections are contractible and
    the ``k + 2``-fold intersection is empty, so the nerve is the boundary of
    a simplex.
    """
    if mesh.manifold == "point":
        return Cover(mesh, (frozenset({0}),), 0, ({0: (0,)},))
    if len(mesh.factors) == 2:
        return product_cover(good_cover(mesh.factors[0]), good_cover(mesh.factors[1]), mesh)
    if radius_deg is None:
        radius_deg = 100.0 if mesh.dimension == 1 else 85.0
    return _cap_cover(mesh, radius_deg)


def product_cover(ca: Cover, cb: Cover, mesh: ParamMesh) -> Cover:
    n_b = cb.mesh.n_vertices
    patches = []
    paths = []
    base = ca.basepoint * n_b + cb.basepoint
    for pa, path_a in zip(ca.patches, ca.paths):
        for pb, path_b in zip(cb.patches, cb.paths):
            patches.append(frozenset(i * n_b + j for i in pa for j in pb))
            combined = {}
            for i in pa:
                head = tuple(v * n_b + cb.basepoint for v in path_a[i])
                for j in pb:
                    tail = tuple(i * n_b + w for w in path_b[j][1:])
                    combined[i * n_b + j] = head + tail
            paths.append(combined)
    return Cover(mesh, tuple(patches), base, tuple(paths))


def nerve_betti(cover: Cover) -> tuple[int, ...]:
    """Real Betti numbers of the nerve of ``cover``."""
    simplices = cover.nerve()
    by_dim: dict[int, list[tuple[int, ...]]] = {}
    for s in simplices:
        by_dim.setdefault(len(s) - 1, []).append(s)
    top = max(by_dim)
    ranks = {}
    for k in range(1, top + 1):
        rows = {s: i for i, s in enumerate(by_dim[k - 1])}
        mat = np.zeros((len(rows), len(by_dim[k])))
        for col, s in enumerate(by_dim[k]):
            for sign, f in faces(s):
                mat[rows[f], col] = sign
        ranks[k] = int(np.linalg.matrix_rank(mat)) if mat.size else 0
    return tuple(
        len(by_dim[k]) - ranks.get(k, 0) - ranks.get(k + 1, 0) for k in range(top + 1)
    )
