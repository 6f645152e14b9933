"""Discrete Riemann boundary value problem for the spinor observable.

Unknowns are the midedge values on the reference sheet (real and imaginary
part for each midedge).  The equations are

* corner consistency: at every corner c except the source corner, the two
  adjacent midedges project to the same value on the line tau(c) R, with the
  cut signs of the segments c -> z;
* the boundary condition Im[F(z) sqrt(nu_out(z))] = 0 on the outer midedges;
* the singularity data Im F(a + (1 +- i) delta/2) = -+1.

The system is overdetermined by exactly one equation, so it is solved in the
least-squares sense and the residual is checked.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InconsistentField, InvalidSite, ResidualTooLarge, SolverDivergence, SourceCorner
from .lattice import (
    DiscreteDomain,
    MarkedConfig,
    Point,
    corner_face,
    corner_midedges,
    corner_tau,
    corner_vertex,
    face_neighbors,
    is_corner,
    is_midedge,
    outer_normal,
    segment_crosses_cut,
    vertex_neighbors,
)

RESIDUAL_TOL = 1e-10
BOUNDARY_CONDUCTANCE = 2 * (math.sqrt(2) - 1)


def cut_sign(p: Point, q: Point, marked) -> int:
    """(-1)^{number of marked cuts crossed by the segment p -> q}."""
    n = sum(segment_crosses_cut(p, q, m) for m in marked)
    return -1 if n % 2 else 1


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    midedges: tuple
    row_kind: list

    def dump(self, fh: TextIO) -> None:
        """Write the system as 'row col value' triplets, then 'rhs row value' lines."""
        coo = self.A.tocoo()
        fh.write(f"# rows={self.A.shape[0]} cols={self.A.shape[1]}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v!r}\n")
        for r, v in enumerate(self.b):
            if v != 0:
                fh.write(f"rhs {r} {v!r}\n")


@dataclass(frozen=True)
class CoverField:
    dom: DiscreteDomain
    cfg: MarkedConfig
    midedges: tuple
    values: np.ndarray  # complex, one per midedge, reference sheet
    residual: float
    rank_report: dict = field(default_factory=dict)

    @property
    def index(self) -> dict:
        cache = self.dom._cache.setdefault("bvp_index", {})
        key = self.midedges
        if key not in cache:
            cache.clear()
            cache[key] = {m: i for i, m in enumerate(self.midedges)}
        return cache[key]

    def midedge_value(self, z: Point, sheet: int = 1) -> complex:
        try:
            return sheet * complex(self.values[self.index[tuple(z)]])
        except KeyError:
            raise InvalidSite(f"{z} is not a midedge of the domain") from None

    def corner_value(self, c: Point, sheet: int = 1) -> complex:
        c = tuple(c)
        if c == self.cfg.source_corner:
            raise SourceCorner("the source corner a + delta/2 is excluded")
        if c not in self.dom.corners:
            raise InvalidSite(f"{c} is not a corner of the domain")
        tau = corner_tau(c)
        z = corner_midedges(c)[0]
        s = cut_sign(c, z, self.cfg.marked)
        proj = (tau.conjugate() * s * self.midedge_value(z)).real
        return sheet * proj * tau

    def value(self, p: Point, sheet: int = 1) -> complex:
        if is_midedge(p):
            return self.midedge_value(p, sheet)
        if is_corner(p):
            return self.corner_value(p, sheet)
        raise InvalidSite(f"{p} is neither a corner nor a midedge")

    def consistency_residual(self) -> float:
        """Max mismatch between the two projections at every corner except the source."""
        worst = 0.0
        for c in self.dom.corners:
            if c == self.cfg.source_corner:
                continue
            tau = corner_tau(c)
            z1, z2 = corner_midedges(c)
            p1 = (tau.conjugate() * cut_sign(c, z1, self.cfg.marked) * self.midedge_value(z1)).real
            p2 = (tau.conjugate() * cut_sign(c, z2, self.cfg.marked) * self.midedge_value(z2)).real
            worst = max(worst, abs(p1 - p2))
        return worst


def singular_midedges(a: Point) -> tuple[Point, Point]:
    return (a[0] + 1, a[1] + 1), (a[0] + 1, a[1] - 1)


def assemble(dom: DiscreteDomain, cfg: MarkedConfig) -> LinearSystem:
    cfg.validate(dom)
    mids = tuple(sorted(dom.midedges))
    idx = {m: i for i, m in enumerate(mids)}
    marked = cfg.marked
    rows, cols, vals = [], [], []
    rhs: list[float] = []
    kinds: list[str] = []

    def put(r, z, coef: complex):
        # coefficient of Re F(z) is coef.real, of Im F(z) is -coef.imag, for Re(coef * F)
        j = idx[z]
        rows.extend((r, r))
        cols.extend((2 * j, 2 * j + 1))
        vals.extend((coef.real, -coef.imag))

    src = cfg.source_corner
    for c in sorted(dom.corners):
        if c == src:
            continue
        tau = corner_tau(c)
        z1, z2 = corner_midedges(c)
        r = len(rhs)
        put(r, z1, tau.conjugate() * cut_sign(c, z1, marked))
        put(r, z2, -tau.conjugate() * cut_sign(c, z2, marked))
        rhs.append(0.0)
        kinds.append("corner")
    for z in sorted(dom.bdry_midedges):
        nu = outer_normal(dom, z).direction
        r = len(rhs)
        # Im(F w) = Re(-i w F)
        put(r, z, -1j * cmath.sqrt(nu))
        rhs.append(0.0)
        kinds.append("boundary")
    for z, target in zip(singular_midedges(cfg.a), (-1.0, 1.0)):
        r = len(rhs)
        put(r, z, -1j * cut_sign(src, z, marked))
        rhs.append(target)
        kinds.append("singular")
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), 2 * len(mids)))
    A.sum_duplicates()
    return LinearSystem(A, np.asarray(rhs), mids, kinds)


def _lstsq(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Least squares through the augmented system [[I, A], [A^T, 0]] [r; x] = [b; 0]."""
    m, n = A.shape
    K = sp.bmat([[sp.identity(m), A], [A.T, None]], format="csc")
    rhs = np.concatenate([b, np.zeros(n)])
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SolverDivergence(f"factorization failed: {exc}") from exc
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SolverDivergence("non-finite solution")
    return sol[m:]


def rank_report(system: LinearSystem, dense_cap: int = 4000) -> dict:
    m, n = system.A.shape
    rep = {"equations": m, "unknowns": n, "rank": None, "nullity": None}
    if n <= dense_cap:
        s = np.linalg.svd(system.A.toarray(), compute_uv=False)
        rank = int(np.sum(s > 1e-10 * s[0]))
        rep.update(rank=rank, nullity=n - rank, sigma_min=float(s[min(m, n) - 1]))
    return rep


def solve_observable(dom: DiscreteDomain, cfg: MarkedConfig, report_rank: bool = False, tol: float = RESIDUAL_TOL) -> CoverField:
    system = assemble(dom, cfg)
    x = _lstsq(system.A, system.b)
    res = float(np.max(np.abs(system.A @ x - system.b))) if system.b.size else 0.0
    if res > tol:
        raise ResidualTooLarge(f"least-squares residual {res:.3e} exceeds {tol:.0e}")
    rep = rank_report(system) if report_rank else {"equations": system.A.shape[0], "unknowns": system.A.shape[1]}
    return CoverField(dom, cfg, system.midedges, x[0::2] + 1j * x[1::2], res, rep)


@dataclass(frozen=True)
class Ratios:
    horizontal: float
    diagonal_plus: complex
    diagonal_minus: complex
    branch_value: Optional[complex]


def observable_ratios(f: CoverField) -> Ratios:
    a = f.cfg.a
    src = f.cfg.source_corner
    v0 = (a[0] + 2, a[1])
    horizontal = f.value((a[0] + 3, a[1])).real
    diag = []
    for sgn in (1, -1):
        c = (a[0] + 2, a[1] + sgn)
        sheet = cut_sign(src, v0, f.cfg.marked) * cut_sign(v0, c, f.cfg.marked)
        diag.append(cmath.exp(1j * sgn * math.pi / 4) * f.value(c, sheet))
    branch = None
    if f.cfg.k == 1:
        b = f.cfg.branches[0]
        branch = f.value((b[0] + 1, b[1]))
    return Ratios(horizontal, diag[0], diag[1], branch)


def exact_magnetization(dom: DiscreteDomain, a: Point) -> float:
    """E+[sigma_a] as a telescoping product of horizontal ratios.

    Each factor F(v + 3 delta/2) for v = a, a + 2 delta, ... moves the first
    marked face one step to the right; the chain stops once it leaves the
    domain, where the spin is the frozen +1.
    """
    if a not in dom.faces:
        raise InvalidSite(f"{a} is not a face of the domain")
    prod = 1.0
    v = tuple(a)
    while v in dom.faces:
        f = solve_observable(dom, MarkedConfig(v))
        prod *= observable_ratios(f).horizontal
        v = (v[0] + 4, v[1])
    return 1.0 / prod


# ---------------------------------------------------------------------------
# the discrete primitive H = Re int F^2 dz


@dataclass(frozen=True)
class HField:
    faces: dict  # H on IntV-faces and boundary faces
    vertices: dict  # H on interior and boundary vertices
    closure_residual: float


def integrate_H(f: CoverField, dom: Optional[DiscreteDomain] = None, tol: float = 1e-10) -> HField:
    """Integrate H(w) - H(v) = 2 delta |F(c)|^2 over every corner c = (w + v)/2.

    The source corner carries |F| := 1.  Boundary faces and vertices are fixed
    to 0; the remaining values follow by breadth-first integration from them.
    """
    dom = dom or f.dom
    delta = float(dom.delta)
    src = f.cfg.source_corner
    faces = set(dom.faces) | set(dom.bdry_faces)
    verts = set(dom.vertices) | set(dom.bdry_vertices)
    # corners joining any face in `faces` with any vertex in `verts`
    links: dict = {}
    for c in dom.corners:
        w, v = corner_face(c), corner_vertex(c)
        val = 1.0 if c == src else abs(f.corner_value(c)) ** 2
        links[c] = (w, v, 2 * delta * val)
    H_face = {g: 0.0 for g in dom.bdry_faces}
    H_vert = {v: 0.0 for v in dom.bdry_vertices}
    by_node: dict = {}
    for c, (w, v, d) in links.items():
        by_node.setdefault(("f", w), []).append(c)
        by_node.setdefault(("v", v), []).append(c)
    frontier = [("f", g) for g in dom.bdry_faces]
    while frontier:
        nxt = []
        for node in frontier:
            for c in by_node.get(node, ()):
                w, v, d = links[c]
                if node[0] == "f" and v not in H_vert:
                    H_vert[v] = H_face[w] - d
                    nxt.append(("v", v))
                elif node[0] == "v" and w not in H_face:
                    H_face[w] = H_vert[v] + d
                    nxt.append(("f", w))
        frontier = nxt
    missing = (faces - H_face.keys()) | (verts - H_vert.keys())
    if missing:
        raise InconsistentField(f"{len(missing)} sites unreachable from the boundary")
    worst = 0.0
    for c, (w, v, d) in links.items():
        worst = max(worst, abs(H_face[w] - H_vert[v] - d))
    if worst > tol:
        raise InconsistentField(f"difference law violated by {worst:.3e}")
    return HField(H_face, H_vert, worst)


@dataclass(frozen=True)
class LaplacianReport:
    face_violations: list
    vertex_violations: list
    normal_violations: list
    min_face_laplacian: float
    max_vertex_laplacian: float

    @property
    def ok(self) -> bool:
        return not (self.face_violations or self.vertex_violations or self.normal_violations)


def laplacian_report(h: HField, cfg: MarkedConfig, dom: DiscreteDomain, tol: float = 1e-9) -> LaplacianReport:
    """Sign checks: H is subharmonic on faces, superharmonic on vertices, and H <= 0 next to the boundary."""
    marked = set(cfg.marked)
    fv, vv, nv = [], [], []
    min_f, max_v = math.inf, -math.inf
    for w in sorted(dom.faces):
        lap = sum(h.faces[g] - h.faces[w] for g in face_neighbors(w))
        if w not in marked:
            min_f = min(min_f, lap)
            if lap < -tol:
                fv.append((w, lap))
    skip = (cfg.a[0] + 2, cfg.a[1])
    for v in sorted(dom.vertices):
        lap = 0.0
        near_boundary = False
        for u in vertex_neighbors(v):
            if u in dom.vertices:
                lap += h.vertices[u] - h.vertices[v]
            else:
                lap += BOUNDARY_CONDUCTANCE * (h.vertices.get(u, 0.0) - h.vertices[v])
                near_boundary = True
        if v != skip:
            max_v = max(max_v, lap)
            if lap > tol:
                vv.append((v, lap))
        if near_boundary and h.vertices[v] > tol:
            nv.append((v, h.vertices[v]))
    return LaplacianReport(fv, vv, nv, min_f, max_v)
