"""Integral refinements: Cech-de Rham data of the higher Berry and pump classes.

For a 1d family over a three-dimensional mesh the ground state is
half-trivialized on every patch of a good cover by transporting it from the
basepoint with the left-restricted connection. On overlaps the two
half-trivializations differ by a unitary ``V_ab`` near the origin cut; the
state values of ``V_ac^-1 alpha_ab(V_bc) V_ab`` form a U(1) 2-cocycle ``h``.
Interpolated connections give ``a`` and the curving ``b``. The class is read
off by a zig-zag sum over flags ``sigma > f > e > v`` of the mesh whose every
bracket is an integer multiple of ``2 pi i`` up to the residuals.

For 2d U(1) families the same machinery in one degree lower produces a line
bundle from the flux-inserted holonomy.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cache

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import splu

from .chains import Chain, chain_from_derivation, differential, pair_point, restrict
from .config import DescentConfig
from .descent import DescentSolution, EquivariantSolution, higher_berry_3form
from .errors import GeometryError, SolverError
from .lattice import DENSE_SITE_CAP, Lattice, Observable, Region, embed
from .mesh import Cover, DiscreteForm, ParamMesh, Simplex, faces
from .spectral import (
    Automorphism,
    Block,
    GroundData,
    align_unitary,
    apply_local,
    apply_to_vector,
    derivation_exponential,
    evaluate_state_on_inner,
    expm_observable,
    flatten,
    interpolate_connection,
    lga_integrate,
    unitary_log,
)
from .transport import Connection, edge_transport

logger = logging.getLogger(__name__)

TWO_PI_I = 2j * np.pi


def _phase(z: complex, what: str) -> complex:
    if abs(z) < 1e-8:
        raise SolverError(f"vanishing overlap in {what}; refine the mesh")
    return z / abs(z)


def _log(z: complex) -> complex:
    return 1j * float(np.angle(z))


def _frac(z: complex) -> tuple[int, float]:
    """Nearest integer to ``z / 2 pi i`` and the distance to it."""
    w = z / TWO_PI_I
    n = int(round(w.real))
    return n, float(abs(w - n))


@dataclass(frozen=True)
class ZigZag:
    """Integer class from the zig-zag sum with its consistency diagnostics.

    ``defects[k]`` is the largest distance of a degree-``k`` bracket from
    ``2 pi i Z``.
    """

    integer: int
    estimate: float
    defects: Mapping[int, float]


def _edge_factors(
    gform: DiscreteForm, region: Region, x: int, y: int
) -> list[Observable]:
    key = (x, y) if x < y else (y, x)
    if key not in gform.values:
        raise GeometryError(f"path step {x}->{y} is not a mesh edge")
    g = gform.values[key]
    sign = -1.0 if x < y else 1.0
    restricted = restrict(chain_from_derivation(g), region)
    if not restricted.entries:
        return []
    return derivation_exponential(differential(restricted), sign)


def restricted_transport(
    gform: DiscreteForm, region: Region, path: Sequence[int]
) -> Automorphism:
    """Ordered product of ``exp(-sum_{j in region} g_{e,j})`` along ``path``."""
    factors: list[Observable] = []
    for x, y in zip(path, path[1:]):
        factors += _edge_factors(gform, region, x, y)
    return Automorphism(tuple(factors), "restricted")


def build_trivializations(
    conn: Connection,
    gform: DiscreteForm,
    cover: Cover,
    region: Region,
) -> tuple[dict[int, dict[int, Automorphism]], float]:
    """Restricted transports ``alpha_a(x)`` from the basepoint, per patch.

    Also checks that the full transport carries the basepoint state onto
    every ground state; the second value is the worst infidelity.
    """
    sites = tuple(conn.lattice.sites)
    base = conn.states[cover.basepoint].full_vector()
    out: dict[int, dict[int, Automorphism]] = {}
    worst = 0.0
    for a, paths in enumerate(cover.paths):
        out[a] = {}
        for x, path in paths.items():
            out[a][x] = restricted_transport(gform, region, path)
            full = lga_integrate(gform, path).apply(base, sites)
            fidelity = abs(np.vdot(conn.states[x].full_vector(), full))
            worst = max(worst, 1.0 - fidelity)
    if worst > 1e-6:
        logger.warning("transport identity degraded: infidelity %.3g", worst)
    return out, worst


def _schmidt(vector: np.ndarray, n_sites: int, d: int, window: tuple[int, ...]) -> tuple[np.ndarray, float]:
    """Leading Schmidt vector of ``vector`` on ``window`` and the weight left over."""
    rest = [s for s in range(n_sites) if s not in window]
    t = vector.reshape((d,) * n_sites).transpose(list(window) + rest)
    u, s, _ = np.linalg.svd(t.reshape(d ** len(window), -1), full_matrices=False)
    return u[:, 0], float(max(0.0, 1.0 - s[0] ** 2))


def _site_density(vector: np.ndarray, n_sites: int, d: int, site: int) -> np.ndarray:
    t = np.moveaxis(vector.reshape((d,) * n_sites), site, 0).reshape(d, -1)
    return t @ t.conj().T


def origin_windows(lattice: Lattice) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Site intervals around the origin cut, smallest first, with their buffer sites.

    Every interval contains both sites next to the origin cut; on a ring it
    stays clear of the two sites next to the antipodal cut.
    """
    if lattice.dimension != 1:
        raise GeometryError("origin windows are defined on 1d lattices")
    n, o = lattice.n_sites, lattice.origin_site
    if lattice.periodic:
        lo_max = hi_max = n // 2 - 1
    else:
        lo_max, hi_max = o + 1, n - 1 - o
    out = []
    for p in range(1, lo_max + 1):
        for q in range(1, hi_max + 1):
            sites = tuple(sorted((o + r) % n for r in range(1 - p, q + 1)))
            buffer = []
            if p < lo_max:
                buffer.append((o - p) % n)
            if q < hi_max:
                buffer.append((o + q + 1) % n)
            out.append((sites, tuple(buffer)))
    out.sort(key=lambda item: len(item[0]))
    return [w for w in out if len(w[0]) <= DENSE_SITE_CAP]


@dataclass(frozen=True, eq=False)
class Intertwiner:
    """``V_ab(x)``: a unitary near the origin cut with ``V psi_x = alpha_ab(psi_x)`` there.

    ``alignment`` is ``1 - |<alpha_ab(psi)|V psi>|`` on the whole lattice;
    ``split`` is the larger Schmidt weight dropped across the window.
    """

    unitary: Observable
    alignment: float
    split: float

    def rephase(self, phase: complex) -> Intertwiner:
        return Intertwiner(self.unitary.scale(phase), self.alignment, self.split)


def localize_intertwiner(
    psi: np.ndarray,
    chi: np.ndarray,
    lattice: Lattice,
    windows: Sequence[tuple[tuple[int, ...], tuple[int, ...]]],
    tol: float = 1e-8,
) -> Intertwiner | None:
    """Align ``psi`` with ``chi`` on the smallest window both split off from.

    A window is accepted when both vectors are products across its boundary
    and their one-site densities agree on its buffer sites. Returns ``None``
    when no window qualifies.
    """
    n, d = lattice.n_sites, lattice.local_dim
    for window, buffer in windows:
        u, w_psi = _schmidt(psi, n, d, window)
        v, w_chi = _schmidt(chi, n, d, window)
        if max(w_psi, w_chi) > tol:
            continue
        if any(
            np.max(np.abs(_site_density(psi, n, d, s) - _site_density(chi, n, d, s))) > np.sqrt(tol)
            for s in buffer
        ):
            continue
        unitary = Observable(window, align_unitary(u, v), d)
        moved = apply_local(psi, tuple(range(n)), unitary)
        alignment = 1.0 - abs(complex(np.vdot(chi, moved)))
        return Intertwiner(unitary, alignment, max(w_psi, w_chi))
    return None


def _mean_log(vx: Observable, vy: Observable) -> complex:
    """``tr(log(V_x^-1 V_y)) / dim`` on the union of the two supports."""
    sites = tuple(sorted(set(vx.sites) | set(vy.sites)))
    m = embed(vx, sites).matrix.conj().T @ embed(vy, sites).matrix
    return complex(np.trace(unitary_log(m)) / m.shape[0])


def phase_pass(mesh: ParamMesh, per: dict[int, Intertwiner]) -> float:
    """Cancel ``tr(V^-1 dV)`` along a spanning tree of the overlap, in place.

    Returns the largest remaining ``|tr(log(V_x^-1 V_y))| / dim`` over every
    mesh edge inside the overlap.
    """
    if not per:
        return 0.0
    allowed = frozenset(per)
    done: set[int] = set()
    for root in sorted(per):
        if root in done:
            continue
        done.add(root)
        queue = deque([root])
        while queue:
            x = queue.popleft()
            for y in mesh.adjacency[x]:
                if y in done or y not in allowed:
                    continue
                phi = _mean_log(per[x].unitary, per[y].unitary)
                per[y] = per[y].rephase(np.exp(-phi))
                done.add(y)
                queue.append(y)
    return max(
        (
            abs(_mean_log(per[x].unitary, per[y].unitary))
            for x, y in mesh.cells(1)
            if x in allowed and y in allowed
        ),
        default=0.0,
    )


def _patch_cells(cover: Cover, degree: int, a: int) -> list[Simplex]:
    patch = cover.patches[a]
    return [s for s in cover.mesh.cells(degree) if all(v in patch for v in s)]


def patch_primitive(
    cover: Cover, a: int, g1: DiscreteForm, window: Region
) -> tuple[dict[Simplex, Chain], float]:
    """Least-squares ``eta`` on the edges of patch ``a`` with ``d eta = g^(1)``.

    Only the entries of ``g^(1)`` indexed inside ``window`` are fitted. The
    second value is the largest misfit on a patch triangle.
    """
    edges = _patch_cells(cover, 1, a)
    tris = _patch_cells(cover, 2, a)
    lattice = window.lattice
    parts = [restrict(g1.values[t], window) for t in tris]
    supports: dict[tuple[int, ...], set[int]] = {}
    for part in parts:
        for key, value in part.entries.items():
            supports.setdefault(key, set()).update(value.sites)
    if not edges or not supports:
        return {}, 0.0
    column = {e: i for i, e in enumerate(edges)}
    rows, cols, signs = [], [], []
    for r, t in enumerate(tris):
        for sign, f in faces(t):
            rows.append(r)
            cols.append(column[f])
            signs.append(float(sign))
    d = csr_matrix((signs, (rows, cols)), shape=(len(tris), len(edges)))
    layout = []
    offset = 0
    for key in sorted(supports):
        sites = tuple(sorted(supports[key]))
        dim = lattice.local_dim ** len(sites)
        layout.append((key, sites, dim, offset))
        offset += dim * dim
    rhs = np.zeros((len(tris), offset), dtype=complex)
    for r, part in enumerate(parts):
        for key, sites, dim, off in layout:
            if key in part.entries:
                rhs[r, off : off + dim * dim] = embed(part.entries[key], sites).matrix.ravel()
    lu = splu((d.T @ d + 1e-10 * identity(len(edges))).tocsc())
    b = d.T @ rhs
    eta = lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    misfit = float(np.max(np.abs(d @ eta - rhs), initial=0.0))
    out = {}
    for e, i in column.items():
        entries = {
            key: Observable(sites, eta[i, off : off + dim * dim].reshape(dim, dim), lattice.local_dim)
            for key, sites, dim, off in layout
        }
        out[e] = Chain.from_entries(lattice, 1, entries)
    return out, misfit


@dataclass(eq=False)
class DeligneData:
    """Restricted trivializations, origin intertwiners and the derived Deligne data.

    ``h``, ``a`` and ``b`` are evaluated lazily on the patch indices the
    zig-zag asks for; pairs are always ordered with the larger patch first.
    ``connections`` and ``curvings`` hold the values computed so far.
    """

    conn: Connection = field(repr=False)
    cover: Cover = field(repr=False)
    region: Region = field(repr=False)
    G: DiscreteForm = field(repr=False)
    g1: DiscreteForm = field(repr=False)
    config: DescentConfig = field(repr=False)
    trivializations: dict[int, dict[int, Automorphism]] = field(repr=False)
    intertwiners: dict[tuple[int, int], dict[int, Intertwiner]] = field(
        default_factory=dict, repr=False
    )
    window: Region | None = field(default=None, repr=False)
    omega: DiscreteForm | None = field(default=None, repr=False)
    connections: dict[tuple[int, int, Simplex], complex] = field(default_factory=dict, repr=False)
    curvings: dict[tuple[int, Simplex], complex] = field(default_factory=dict, repr=False)
    residuals: dict[str, float] = field(default_factory=dict)
    zigzag: ZigZag | None = None
    _inverses: dict[int, dict[int, Automorphism]] = field(default_factory=dict, repr=False)
    _transports: dict[tuple[int, Simplex], list[Observable]] = field(
        default_factory=dict, repr=False
    )
    _primitives: dict[int, dict[Simplex, Chain]] = field(default_factory=dict, repr=False)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(self.conn.lattice.sites)

    def vector(self, x: int) -> np.ndarray:
        return self.conn.states[x].full_vector()

    def carry(self, a: int, b: int, x: int, v: np.ndarray, inverse: bool = False) -> np.ndarray:
        """``alpha_a alpha_b^-1`` (or its inverse) applied to a full vector."""
        if a == b:
            return v
        first, second = (b, a) if inverse else (a, b)
        inv = self._inverses.setdefault(second, {})
        if x not in inv:
            inv[x] = self.trivializations[second][x].inverse()
        v = inv[x].apply(v, self.sites)
        return self.trivializations[first][x].apply(v, self.sites)

    def twist(self, a: int, b: int, x: int, v: np.ndarray, inverse: bool = False) -> np.ndarray:
        if a == b:
            return v
        u = self.intertwiners[(a, b)][x].unitary
        return apply_to_vector(v, self.sites, [u.adjoint() if inverse else u])

    def h(self, a: int, b: int, c: int, x: int) -> complex:
        """``psi_x(V_ac^-1 alpha_ab(V_bc) V_ab)``."""
        psi = self.vector(x)
        v = self.twist(a, b, x, psi)
        v = self.carry(a, b, x, v, inverse=True)
        v = self.twist(b, c, x, v)
        v = self.carry(a, b, x, v)
        v = self.twist(a, c, x, v, inverse=True)
        value = complex(np.vdot(psi, v))
        modulus = self.residuals.get("cocycle-modulus", 0.0)
        self.residuals["cocycle-modulus"] = max(modulus, 1.0 - abs(value))
        return value

    def log_h(self, a: int, b: int, c: int, x: int) -> complex:
        return _log(_phase(self.h(a, b, c, x), f"cocycle {a}{b}{c} at vertex {x}"))

    def primitive(self, a: int) -> dict[Simplex, Chain]:
        if a not in self._primitives:
            assert self.window is not None
            eta, misfit = patch_primitive(self.cover, a, self.g1, self.window)
            self._primitives[a] = eta
            self.residuals["primitive"] = max(self.residuals.get("primitive", 0.0), misfit)
        return self._primitives[a]

    def connection(self, a: int, edge: Simplex) -> Chain:
        """``C_a``: flat near the origin inside the left region, ``G`` on the right."""
        g = self.G.values[edge]
        eta = self.primitive(a).get(edge)
        if eta is None or eta.is_zero(1e-14):
            return g
        psi = self.conn.cell_state(edge)
        flat = differential(flatten(eta, psi))
        return interpolate_connection(g - flat, g, self.region, psi, self.config)

    def transport(self, a: int, edge: Simplex, inverse: bool = False) -> list[Observable]:
        """``exp(-C_a[e])`` from the lower to the higher vertex, or its inverse."""
        key = (a, edge)
        if key not in self._transports:
            self._transports[key] = derivation_exponential(self.connection(a, edge))
        factors = self._transports[key]
        if not inverse:
            return factors
        return [f.adjoint() for f in reversed(factors)]

    def a(self, a: int, b: int, edge: Simplex) -> complex:
        """``Log psi_x(M(x) X_a^-1 M(y)^-1 X_b)`` with ``M = V_ab^-1 alpha_ab``."""
        if a == b:
            return 0j
        key = (a, b, edge)
        if key not in self.connections:
            x, y = edge
            psi = self.vector(x)
            v = apply_to_vector(psi, self.sites, self.transport(b, edge))
            v = self.twist(a, b, y, v)
            v = self.carry(a, b, y, v, inverse=True)
            v = apply_to_vector(v, self.sites, self.transport(a, edge, inverse=True))
            v = self.carry(a, b, x, v)
            v = self.twist(a, b, x, v, inverse=True)
            self.connections[key] = _log(
                _phase(complex(np.vdot(psi, v)), f"connection {a}{b} on {edge}")
            )
        return self.connections[key]

    def b(self, a: int, tri: Simplex) -> complex:
        """``psi(F_{C_a} - d res_R g^(1))`` with ``F_{C_a}`` from the loop of ``exp(-C_a)``."""
        if (a, tri) not in self.curvings:
            v0, v1, v2 = tri
            psi = self.vector(v0)
            v = apply_to_vector(psi, self.sites, self.transport(a, (v0, v1)))
            v = apply_to_vector(v, self.sites, self.transport(a, (v1, v2)))
            v = apply_to_vector(v, self.sites, self.transport(a, (v0, v2), inverse=True))
            flux = -_log(_phase(complex(np.vdot(psi, v)), f"curving {a} on {tri}"))
            inner = differential(restrict(self.g1.values[tri], self.region.complement()))
            self.curvings[(a, tri)] = flux - evaluate_state_on_inner(
                inner, self.conn.cell_state(tri)
            )
        return self.curvings[(a, tri)]


def intertwiners(
    conn: Connection,
    cover: Cover,
    trivs: Mapping[int, Mapping[int, Automorphism]],
    tol: float = 1e-8,
) -> tuple[dict[tuple[int, int], dict[int, Intertwiner]], float]:
    """``V_ab(x)`` on every overlap, phase-fixed; the second value is the gauge residual.

    Raises:
        SolverError: No window around the origin cut splits the two vectors
                     off the antipodal one at some vertex.
    """
    sites = tuple(conn.lattice.sites)
    windows = origin_windows(conn.lattice)
    out: dict[tuple[int, int], dict[int, Intertwiner]] = {}
    gauge = 0.0
    for a in range(len(cover)):
        for b in range(a):
            common = cover.overlap(a, b)
            if not common:
                continue
            per: dict[int, Intertwiner] = {}
            for x in sorted(common):
                psi = conn.states[x].full_vector()
                chi = trivs[b][x].inverse().apply(psi, sites)
                chi = trivs[a][x].apply(chi, sites)
                found = localize_intertwiner(psi, chi, conn.lattice, windows, tol)
                if found is None:
                    raise SolverError(
                        f"overlap {a}{b} at vertex {x}: no window around the origin cut "
                        "separates it from the antipodal cut; use a longer ring",
                        level="cech",
                    )
                per[x] = found
            gauge = max(gauge, phase_pass(conn.mesh, per))
            out[(a, b)] = per
    return out, gauge


def cech_2cocycle(data: DeligneData) -> float:
    """Worst violation of ``h_acd h_abc = h_abd h_bcd`` on quadruple overlaps."""
    cover = data.cover
    worst = 0.0
    for quad in cover.nerve(3):
        if len(quad) != 4:
            continue
        a, b, c, d = sorted(quad, reverse=True)
        for x in cover.overlap(*quad):
            lhs = data.h(a, c, d, x) * data.h(a, b, c, x)
            rhs = data.h(a, b, d, x) * data.h(b, c, d, x)
            worst = max(worst, abs(lhs - rhs))
    logger.debug("cocycle residual %.3g over %d patches", worst, len(cover))
    return worst


def zigzag_degree3(
    mesh: ParamMesh,
    patch_of: Callable[[Simplex], int],
    omega: Mapping[Simplex, complex],
    b: Callable[[int, Simplex], complex],
    a: Callable[[int, int, Simplex], complex],
    log_h: Callable[[int, int, int, int], complex],
) -> ZigZag:
    """Integer from flags ``sigma > f > e > v`` with brackets

    ``E3 = omega + d b_A``, ``E2 = b_A - b_B - d a_AB``,
    ``E1 = a_AB - a_AC + a_BC - d Log h_ABC``,
    ``E0 = Log h_ABC - Log h_ABD + Log h_ACD - Log h_BCD``.
    The signed sum of all brackets telescopes to the integral of ``omega``.
    """
    total = 0
    defects = {3: 0.0, 2: 0.0, 1: 0.0, 0: 0.0}
    integral = 0j
    for sigma, eps in mesh.cycles["fundamental"].items():
        A = patch_of(sigma)
        e3 = omega[sigma] + sum(sign * b(A, f) for sign, f in faces(sigma))
        integral += eps * omega[sigma]
        n, r = _frac(e3)
        total += eps * n
        defects[3] = max(defects[3], r)
        for si, f in faces(sigma):
            B = patch_of(f)
            c = eps * si
            e2 = b(A, f) - b(B, f) - sum(sj * a(A, B, e) for sj, e in faces(f))
            n, r = _frac(e2)
            total -= c * n
            defects[2] = max(defects[2], r)
            for sj, e in faces(f):
                C = patch_of(e)
                e1 = (
                    a(A, B, e)
                    - a(A, C, e)
                    + a(B, C, e)
                    - (log_h(A, B, C, e[1]) - log_h(A, B, C, e[0]))
                )
                n, r = _frac(e1)
                total -= c * sj * n
                defects[1] = max(defects[1], r)
                for sk, v in faces(e):
                    D = patch_of(v)
                    x = v[0]
                    e0 = (
                        log_h(A, B, C, x)
                        - log_h(A, B, D, x)
                        + log_h(A, C, D, x)
                        - log_h(B, C, D, x)
                    )
                    n, r = _frac(e0)
                    total -= c * sj * sk * n
                    defects[0] = max(defects[0], r)
    estimate = float((integral / TWO_PI_I).real)
    return ZigZag(total, estimate, defects)


def zigzag_degree2(
    mesh: ParamMesh,
    patch_of: Callable[[Simplex], int],
    omega: Mapping[Simplex, complex],
    a: Callable[[int, Simplex], complex],
    log_h: Callable[[int, int, int], complex],
) -> ZigZag:
    """Line-bundle analogue: ``E2 = omega + d a_A``, ``E1 = a_A - a_B - d Log h_AB``,
    ``E0 = Log h_AB - Log h_AC + Log h_BC``."""
    total = 0
    defects = {2: 0.0, 1: 0.0, 0: 0.0}
    integral = 0j
    for tau, eps in mesh.cycles["fundamental"].items():
        A = patch_of(tau)
        integral += eps * omega[tau]
        e2 = omega[tau] + sum(sign * a(A, e) for sign, e in faces(tau))
        n, r = _frac(e2)
        total += eps * n
        defects[2] = max(defects[2], r)
        for si, e in faces(tau):
            B = patch_of(e)
            c = eps * si
            e1 = a(A, e) - a(B, e) - (log_h(A, B, e[1]) - log_h(A, B, e[0]))
            n, r = _frac(e1)
            total -= c * n
            defects[1] = max(defects[1], r)
            for sj, v in faces(e):
                C = patch_of(v)
                x = v[0]
                e0 = log_h(A, B, x) - log_h(A, C, x) + log_h(B, C, x)
                n, r = _frac(e0)
                total -= c * sj * n
                defects[0] = max(defects[0], r)
    estimate = float((integral / TWO_PI_I).real)
    return ZigZag(total, estimate, defects)


def connection_and_curving(
    data: DeligneData, solution: DescentSolution
) -> tuple[dict[tuple[int, int, Simplex], complex], dict[tuple[int, Simplex], complex]]:
    """Attach ``omega`` and evaluate ``a_ab`` and ``b_a`` on every flag of the fundamental cycle.

    ``omega`` is the higher Berry form paired on the configured window.
    """
    data.omega = higher_berry_3form(solution, data.config.pairing_window).form
    patch_of = data.cover.patch_of
    for sigma in data.cover.mesh.cycles["fundamental"]:
        A = patch_of(sigma)
        for _, f in faces(sigma):
            B = patch_of(f)
            data.b(A, f)
            data.b(B, f)
            for _, e in faces(f):
                C = patch_of(e)
                data.a(A, B, e)
                data.a(A, C, e)
                data.a(B, C, e)
    return data.connections, data.curvings


def extract_integer(data: DeligneData) -> ZigZag:
    """Run the zig-zag; its bracket defects are the descent residuals of ``h``, ``a`` and ``b``."""
    if data.omega is None:
        raise SolverError("connection and curving must be computed first", level="cech")
    cover = data.cover
    zz = zigzag_degree3(
        cover.mesh, cache(cover.patch_of), data.omega.values, data.b, data.a, cache(data.log_h)
    )
    data.zigzag = zz
    data.residuals.update(
        {
            "h-dlog": zz.defects[1],
            "da-curving": zz.defects[2],
            "db-omega": zz.defects[3],
            "log-branch": zz.defects[0],
        }
    )
    return zz


def cech_1d(
    conn: Connection,
    solution: DescentSolution,
    cover: Cover,
    region: Region | None = None,
    config: DescentConfig | None = None,
) -> DeligneData:
    """Integer class of a 1d family over a three-dimensional mesh.

    ``region`` is the left half-line the trivializations are restricted to.

    Raises:
        GeometryError: The mesh is not three-dimensional or the lattice is not a chain.
        SolverError: An intertwiner cannot be localized at the origin cut, or
                     a phase in the zig-zag vanishes.
    """
    if conn.mesh.dimension != 3:
        raise GeometryError("the gerbe refinement needs a three-dimensional parameter mesh")
    if conn.lattice.dimension != 1:
        raise GeometryError("the gerbe refinement needs a 1d lattice")
    config = config or DescentConfig()
    region = region or conn.lattice.half_space(0)
    window = config.pairing_window
    trivs, infidelity = build_trivializations(conn, solution.G, cover, region)
    unitaries, gauge = intertwiners(conn, cover, trivs)
    data = DeligneData(
        conn,
        cover,
        region,
        solution.G,
        solution.level(1),
        config,
        trivs,
        unitaries,
        window=conn.lattice.cut_window((window or 1) + 1),
    )
    data.residuals["transport"] = infidelity
    data.residuals["gauge"] = gauge
    data.residuals["alignment"] = max(
        (v.alignment for per in unitaries.values() for v in per.values()), default=0.0
    )
    data.residuals["cocycle"] = cech_2cocycle(data)
    connection_and_curving(data, solution)
    zz = extract_integer(data)
    logger.info("gerbe integer %d (estimate %.4f)", zz.integer, zz.estimate)
    return data


@dataclass(eq=False)
class LineBundleData:
    """Patch frames of the flux holonomy line and the resulting Chern number."""

    cover: Cover = field(repr=False)
    z_frames: dict[int, dict[int, np.ndarray]] = field(repr=False)
    v_frames: dict[int, dict[int, np.ndarray]] = field(repr=False)
    omega: DiscreteForm = field(repr=False)
    residuals: dict[str, float] = field(default_factory=dict)
    zigzag: ZigZag | None = None

    def h(self, a: int, b: int, x: int) -> complex:
        if a == b:
            return 1.0 + 0j
        z = np.vdot(self.z_frames[a][x], self.z_frames[b][x])
        v = np.vdot(self.v_frames[a][x], self.v_frames[b][x])
        return _phase(complex(z), "line bundle overlap") * np.conj(_phase(complex(v), "line bundle overlap"))

    def log_h(self, a: int, b: int, x: int) -> complex:
        return _log(self.h(a, b, x))

    def a(self, patch: int, edge: Simplex) -> complex:
        x, y = edge
        z, v = self.z_frames[patch], self.v_frames[patch]
        return _log(complex(np.vdot(z[x], z[y]))) - _log(complex(np.vdot(v[x], v[y])))


def rotate_state(psi: GroundData, q1: Chain, theta: float) -> GroundData:
    """``exp(theta sum_j q_j) psi`` for the on-site charge 1-chain ``q1``."""
    q1_terms = {key[0]: q for key, q in q1.items()}
    blocks = []
    for b in psi.blocks:
        vec = b.vector
        for j in b.sites:
            if j in q1_terms:
                vec = apply_local(vec, b.sites, expm_observable(q1_terms[j].scale(theta)))
        blocks.append(Block(b.sites, vec, b.energy, b.gap))
    return GroundData(psi.lattice, tuple(blocks), psi.energy, psi.gap)


def flux_holonomy(
    psi: GroundData,
    q1: Chain,
    region: Region,
    n_theta: int,
) -> np.ndarray:
    """``Y v`` with ``Y`` the region-restricted holonomy around the flux circle.

    The flux is threaded with ``q1`` restricted to the left half-plane.
    """
    left = restrict(q1, psi.lattice.half_space(0))
    states = [rotate_state(psi, left, 2 * np.pi * k / n_theta) for k in range(n_theta)]
    sites = tuple(psi.lattice.sites)
    factors: list[Observable] = []
    for k in range(n_theta):
        edge = edge_transport(states[k], states[(k + 1) % n_theta])
        g = edge.generator(psi.lattice)
        restricted = restrict(chain_from_derivation(g), region)
        if restricted.entries:
            factors += derivation_exponential(differential(restricted))
    return Automorphism(tuple(factors)).apply(psi.full_vector(), sites)


def _pancharatnam_frames(
    cover: Cover, vectors: Mapping[int, np.ndarray]
) -> dict[int, dict[int, np.ndarray]]:
    out: dict[int, dict[int, np.ndarray]] = {}
    for a, paths in enumerate(cover.paths):
        frame: dict[int, np.ndarray] = {}
        for x, path in paths.items():
            current = vectors[path[0]]
            for y in path[1:]:
                nxt = vectors[y]
                o = np.vdot(current, nxt)
                current = nxt * np.conj(_phase(complex(o), "frame transport"))
            frame[x] = current
        out[a] = frame
    return out


def _bargmann(vs: Sequence[np.ndarray]) -> complex:
    z0, z1, z2 = vs
    return _log(complex(np.vdot(z0, z1) * np.vdot(z1, z2) * np.vdot(z2, z0)))


def line_bundle_2d(
    conn: Connection,
    q1: Chain,
    cover: Cover,
    n_theta: int = 8,
    solution: EquivariantSolution | None = None,
    window: int | None = 1,
) -> LineBundleData:
    """Line bundle of the flux holonomy over a 2d parameter mesh.

    With ``solution`` the period of ``omega`` is compared against the 2d pump
    form paired on ``window``.
    """
    if conn.mesh.dimension != 2:
        raise GeometryError("the line-bundle refinement needs a two-dimensional mesh")
    if conn.lattice.dimension != 2:
        raise GeometryError("the line-bundle refinement needs a 2d lattice")
    region = conn.lattice.half_space(1)
    z = {
        x: flux_holonomy(conn.states[x], q1, region, n_theta)
        for x in conn.mesh.vertices
    }
    v = {x: conn.states[x].full_vector() for x in conn.mesh.vertices}
    z_frames = _pancharatnam_frames(cover, z)
    v_frames = _pancharatnam_frames(cover, v)
    omega = DiscreteForm(
        conn.mesh,
        2,
        {
            t: -(_bargmann([z[i] for i in t]) - _bargmann([v[i] for i in t]))
            for t in conn.mesh.cells(2)
        },
        "omega",
    )
    data = LineBundleData(cover, z_frames, v_frames, omega)
    worst = 0.0
    for tri in cover.nerve(2):
        if len(tri) != 3:
            continue
        a, b, c = tri
        for x in cover.overlap(*tri):
            worst = max(worst, abs(data.h(a, b, x) * data.h(b, c, x) - data.h(a, c, x)))
    data.residuals["cocycle"] = worst
    patch_of = cache(cover.patch_of)
    zz = zigzag_degree2(conn.mesh, patch_of, omega.values, cache(data.a), cache(data.log_h))
    data.zigzag = zz
    data.residuals.update(
        {"da-omega": zz.defects[2], "h-dlog": zz.defects[1], "log-branch": zz.defects[0]}
    )
    if solution is not None:
        eta = 0j
        for t, eps in conn.mesh.cycles["fundamental"].items():
            h = solution.t(3).values[t]
            eta += eps * conn.cell_state(t).psi(pair_point(h, window).value)
        data.residuals["pump-period-match"] = float(
            abs((sum(eps * omega.values[t] for t, eps in conn.mesh.cycles["fundamental"].items()) + eta) / TWO_PI_I)
        )
    logger.info("line bundle integer %d (estimate %.4f)", zz.integer, zz.estimate)
    return data
