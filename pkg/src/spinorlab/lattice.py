"""Geometry of the 45-degree rotated square grid.

All lattice objects live on the integer grid Z^2 measured in units of delta/2:

* both coordinates even, (x+y)/2 even  -> vertex
* both coordinates even, (x+y)/2 odd   -> face (center of a square)
* both coordinates odd                 -> edge midpoint ("midedge")
* exactly one coordinate odd           -> corner

Edges join vertices v and v + (+-2, +-2).  A face f has vertices f + (+-2, 0),
f + (0, +-2), sides with midpoints f + (+-1, +-1) and edge-adjacent faces
f + (+-2, +-2).  A corner sits halfway between one vertex and one face.

Boundary sets follow the contour picture: contours live on the edges of the
domain (both endpoints in IntV), and the midedges carrying the Riemann
boundary condition are the edges that stick out of the domain, with one
endpoint in IntV and the other outside.  A path can only reach such a midedge
from the inside, which is what makes Im[F sqrt(nu_out)] = 0 hold there.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .errors import (
    AmbiguousNormal,
    Disconnected,
    EmptyDomain,
    FiordViolation,
    InvalidSite,
    NonAdjacentStep,
    NotSimplyConnected,
)

Point = tuple[int, int]

LAMBDA = cmath.exp(1j * math.pi / 4)
LAMBDA_BAR = LAMBDA.conjugate()

DIAGONALS: tuple[Point, ...] = ((1, 1), (-1, 1), (-1, -1), (1, -1))
AXES: tuple[Point, ...] = ((1, 0), (0, 1), (-1, 0), (0, -1))


class Kind(str, Enum):
    VERTEX = "vertex"
    FACE = "face"
    MIDEDGE = "midedge"
    CORNER = "corner"


@dataclass(frozen=True)
class PointKind:
    kind: Kind
    tau: complex | None = None


def classify_point(p: Sequence[int]) -> PointKind:
    x, y = int(p[0]), int(p[1])
    if x % 2 == 0 and y % 2 == 0:
        return PointKind(Kind.VERTEX if ((x + y) // 2) % 2 == 0 else Kind.FACE)
    if x % 2 and y % 2:
        return PointKind(Kind.MIDEDGE)
    return PointKind(Kind.CORNER, corner_tau((x, y)))


def is_vertex(p: Point) -> bool:
    return p[0] % 2 == 0 and p[1] % 2 == 0 and ((p[0] + p[1]) // 2) % 2 == 0


def is_face(p: Point) -> bool:
    return p[0] % 2 == 0 and p[1] % 2 == 0 and ((p[0] + p[1]) // 2) % 2 == 1


def is_midedge(p: Point) -> bool:
    return p[0] % 2 == 1 and p[1] % 2 == 1


def is_corner(p: Point) -> bool:
    return (p[0] + p[1]) % 2 == 1


def corner_vertex(c: Point) -> Point:
    x, y = c
    if x % 2:
        cands = ((x - 1, y), (x + 1, y))
    else:
        cands = ((x, y - 1), (x, y + 1))
    return cands[0] if is_vertex(cands[0]) else cands[1]


def corner_face(c: Point) -> Point:
    x, y = c
    v = corner_vertex(c)
    return (2 * x - v[0], 2 * y - v[1])


def corner_tau(c: Point) -> complex:
    """Line direction tau of a corner, set by where its vertex lies."""
    v = corner_vertex(c)
    d = (v[0] - c[0], v[1] - c[1])
    return {(-1, 0): 1.0 + 0j, (0, 1): LAMBDA, (1, 0): 1j, (0, -1): LAMBDA_BAR}[d]


def corner_midedges(c: Point) -> tuple[Point, Point]:
    x, y = c
    if x % 2:
        return ((x, y - 1), (x, y + 1))
    return ((x - 1, y), (x + 1, y))


def edge_endpoints(m: Point) -> tuple[Point, Point]:
    """The two vertices of the edge with midpoint m, sorted."""
    x, y = m
    vs = sorted(q for q in ((x - 1, y - 1), (x + 1, y + 1), (x - 1, y + 1), (x + 1, y - 1)) if is_vertex(q))
    return vs[0], vs[1]


def edge_faces(m: Point) -> tuple[Point, Point]:
    x, y = m
    fs = sorted(q for q in ((x - 1, y - 1), (x + 1, y + 1), (x - 1, y + 1), (x + 1, y - 1)) if is_face(q))
    return fs[0], fs[1]


def face_vertices(f: Point) -> tuple[Point, ...]:
    return tuple((f[0] + 2 * dx, f[1] + 2 * dy) for dx, dy in AXES)


def face_midedges(f: Point) -> tuple[Point, ...]:
    return tuple((f[0] + dx, f[1] + dy) for dx, dy in DIAGONALS)


def face_corners(f: Point) -> tuple[Point, ...]:
    return tuple((f[0] + dx, f[1] + dy) for dx, dy in AXES)


def face_neighbors(f: Point) -> tuple[Point, ...]:
    return tuple((f[0] + 2 * dx, f[1] + 2 * dy) for dx, dy in DIAGONALS)


def vertex_faces(v: Point) -> tuple[Point, ...]:
    return face_vertices(v)  # same offsets


def vertex_corners(v: Point) -> tuple[Point, ...]:
    return face_corners(v)


def vertex_midedges(v: Point) -> tuple[Point, ...]:
    return face_midedges(v)


def vertex_neighbors(v: Point) -> tuple[Point, ...]:
    return face_neighbors(v)


# ---------------------------------------------------------------------------
# branch cuts


def segment_crosses_cut(p: Point, q: Point, m: Point) -> bool:
    """Does the straight segment p->q cross the cut {y = y_m - eps, x < x_m}?

    Exact in integer arithmetic, taking eps -> 0+.
    """
    py, qy, ym = p[1], q[1], m[1]
    lo, hi = (py, qy) if py < qy else (qy, py)
    if not (lo < ym <= hi):
        return False
    dy = q[1] - p[1]
    dx = q[0] - p[0]
    # x at y = ym is p.x + (ym - p.y) dx/dy; compare with m.x without division
    num = (p[0] - m[0]) * dy + (ym - p[1]) * dx  # (x* - x_m) * dy
    if num == 0:
        # x* == x_m: the eps-shift decides, x(eps) = x* - eps dx/dy
        return dx * dy > 0
    return (num < 0) == (dy > 0)


def _check_step(p: Point, q: Point) -> None:
    dx, dy = abs(q[0] - p[0]), abs(q[1] - p[1])
    if (dx, dy) not in ((1, 0), (0, 1), (1, 1), (2, 2)):
        raise NonAdjacentStep(f"{p} -> {q}")


def crossing_count(path: Sequence[Point], marked: Iterable[Point]) -> int:
    marked = list(marked)
    n = 0
    for p, q in zip(path[:-1], path[1:]):
        _check_step(p, q)
        for m in marked:
            n += segment_crosses_cut(p, q, m)
    return n


def crossing_parity(path: Sequence[Point], cfg: "MarkedConfig") -> int:
    """Sheet sign (-1)^{#cut crossings} of a lattice path."""
    path = [tuple(p) for p in path]
    return -1 if crossing_count(path, cfg.marked) % 2 else 1


# ---------------------------------------------------------------------------
# marked configurations


@dataclass(frozen=True)
class MarkedConfig:
    """Source face a and branch faces a_1..a_k, each carrying a leftward cut."""

    a: Point
    branches: tuple[Point, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "branches", tuple(tuple(b) for b in self.branches))

    @property
    def marked(self) -> tuple[Point, ...]:
        return (self.a,) + self.branches

    @property
    def k(self) -> int:
        return len(self.branches)

    @property
    def source_corner(self) -> Point:
        return (self.a[0] + 1, self.a[1])

    def validate(self, dom: "DiscreteDomain") -> None:
        if len(set(self.marked)) != len(self.marked):
            raise InvalidSite("marked faces must be distinct")
        for m in self.marked:
            if m not in dom.faces:
                raise InvalidSite(f"{m} is not an interior face")


@dataclass(frozen=True)
class BoundaryNormal:
    midedge: Point
    direction: complex


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    faces: frozenset
    delta: Fraction = Fraction(1)
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # derived sets -------------------------------------------------------
    @cached_property
    def vertices(self) -> frozenset:
        return frozenset(v for f in self.faces for v in face_vertices(f))

    @cached_property
    def bdry_faces(self) -> frozenset:
        return frozenset(g for f in self.faces for g in face_neighbors(f) if g not in self.faces)

    @cached_property
    def bdry_vertices(self) -> frozenset:
        return frozenset(v for g in self.bdry_faces for v in face_vertices(g) if v not in self.vertices)

    @cached_property
    def int_midedges(self) -> frozenset:
        """Edges with both endpoints in IntV (the edges contours may use)."""
        vs = self.vertices
        out = set()
        for v in vs:
            for m in vertex_midedges(v):
                a, b = edge_endpoints(m)
                if a in vs and b in vs:
                    out.add(m)
        return frozenset(out)

    @cached_property
    def bdry_midedges(self) -> frozenset:
        """Edges with exactly one endpoint in IntV."""
        vs = self.vertices
        out = set()
        for v in vs:
            for m in vertex_midedges(v):
                a, b = edge_endpoints(m)
                if (a in vs) != (b in vs):
                    out.add(m)
        return frozenset(out)

    @cached_property
    def midedges(self) -> frozenset:
        return self.int_midedges | self.bdry_midedges

    @cached_property
    def corners(self) -> frozenset:
        return frozenset(c for v in self.vertices for c in vertex_corners(v))

    # helpers ------------------------------------------------------------
    def physical(self, p: Sequence[int]) -> complex:
        h = float(self.delta) / 2
        return complex(p[0] * h, p[1] * h)

    def int_face_count(self, v: Point) -> int:
        return sum(f in self.faces for f in vertex_faces(v))

    def outer_normal(self, z: Point) -> BoundaryNormal:
        return outer_normal(self, z)

    def sorted_faces(self) -> list[Point]:
        return sorted(self.faces)

    def to_text(self) -> str:
        lines = [f"format=spinorlab-domain v1 delta={self.delta}"]
        lines += [f"{x} {y}" for x, y in self.sorted_faces()]
        return "\n".join(lines) + "\n"

    def __len__(self) -> int:
        return len(self.faces)


def _components(nodes: set, nbrs) -> list[set]:
    seen: set = set()
    comps = []
    for s in sorted(nodes):
        if s in seen:
            continue
        comp = {s}
        stack = [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            for w in nbrs(u):
                if w in nodes and w not in seen:
                    seen.add(w)
                    comp.add(w)
                    stack.append(w)
        comps.append(comp)
    return comps


def fiord_edges(faces: frozenset) -> list[Point]:
    """Edges joining two domain vertices but bordering no domain face."""
    vs = {v for f in faces for v in face_vertices(f)}
    out = set()
    for v in vs:
        for m in vertex_midedges(v):
            a, b = edge_endpoints(m)
            if a in vs and b in vs and not any(g in faces for g in edge_faces(m)):
                out.add(m)
    return sorted(out)


def build_domain(faces: Iterable[Sequence[int]], delta=Fraction(1), label: str = "") -> DiscreteDomain:
    fs = frozenset(tuple(int(c) for c in f) for f in faces)
    if not fs:
        raise EmptyDomain("no faces")
    for f in fs:
        if not is_face(f):
            raise InvalidSite(f"{f} is not a face coordinate")
    if len(_components(set(fs), face_neighbors)) != 1:
        raise Disconnected("faces are not connected through shared edges")
    bad = fiord_edges(fs)
    if bad:
        raise FiordViolation(f"edges joining domain vertices outside the domain: {bad[:4]}")
    dom = DiscreteDomain(fs, Fraction(delta), label)
    # Euler characteristic of the closed polygon: 1 iff simply connected
    chi = len(dom.vertices) - len(dom.int_midedges) + len(fs)
    if chi != 1:
        raise NotSimplyConnected(f"Euler characteristic {chi}")
    return dom


def outer_normal(dom: DiscreteDomain, z: Point) -> BoundaryNormal:
    """Unit direction of a boundary edge, pointing from its inner to its outer end."""
    if z not in dom.bdry_midedges:
        raise InvalidSite(f"{z} is not a boundary midedge")
    a, b = edge_endpoints(z)
    na, nb = dom.int_face_count(a), dom.int_face_count(b)
    if na == nb:
        raise AmbiguousNormal(f"{z}: both endpoints touch {na} faces")
    src, dst = (a, b) if na > nb else (b, a)
    d = complex(dst[0] - src[0], dst[1] - src[1])
    return BoundaryNormal(z, d / abs(d))


# ---------------------------------------------------------------------------
# standard shapes and serialization

_SHAPE_RE = re.compile(r"^\s*(disc|rectangle)\s*\(([^)]*)\)\s*$")

DISC_CENTER: Point = (2, 0)


def parse_shape(shape) -> tuple:
    if isinstance(shape, str):
        m = _SHAPE_RE.match(shape)
        if not m:
            raise ValueError(f"unknown shape {shape!r}")
        args = [float(Fraction(s)) for s in m.group(2).split(",")]
        return (m.group(1), *args)
    return tuple(shape)


def rectangle_faces(m: int, n: int, origin: Point = (2, 0)) -> set[Point]:
    """m x n block in lattice directions (1+i) and (1-i)."""
    return {(origin[0] + 2 * j + 2 * l, origin[1] + 2 * j - 2 * l) for j in range(m) for l in range(n)}


def disc_faces(radius: float, delta, center: Point = DISC_CENTER) -> set[Point]:
    h = float(delta) / 2
    r = int(math.ceil(radius / h)) + 2
    out = set()
    for x in range(center[0] - r, center[0] + r + 1):
        for y in range(center[1] - r, center[1] + r + 1):
            if is_face((x, y)) and math.hypot((x - center[0]) * h, (y - center[1]) * h) <= radius + 1e-12:
                out.add((x, y))
    return out


def make_standard_domain(shape, delta=Fraction(1)) -> DiscreteDomain:
    """disc(R): faces within R of the face (2,0); rectangle(m,n): m x n face block."""
    kind, *args = parse_shape(shape)
    delta = Fraction(delta).limit_denominator(10**9)
    if any(a <= 0 for a in args):
        raise EmptyDomain(f"nonpositive shape parameter {args}")
    if kind == "rectangle":
        m, n = int(args[0]), int(args[1])
        return build_domain(rectangle_faces(m, n), delta, f"rectangle({m},{n})")
    (radius,) = args
    faces = disc_faces(radius, delta)
    if not faces:
        raise EmptyDomain("disc contains no face")
    comps = _components(faces, face_neighbors)
    faces = next(c for c in comps if DISC_CENTER in c) if any(DISC_CENTER in c for c in comps) else max(comps, key=len)
    # close single-face notches on the jagged rim
    while True:
        bad = fiord_edges(frozenset(faces))
        if not bad:
            break
        for m in bad:
            faces |= set(edge_faces(m))
    return build_domain(faces, delta, f"disc({radius:g})")


def parse_domain_text(text: str) -> DiscreteDomain:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not lines or not lines[0].startswith("format=spinorlab-domain v1"):
        raise ValueError("missing 'format=spinorlab-domain v1' header")
    m = re.search(r"delta=(\S+)", lines[0])
    delta = Fraction(m.group(1)) if m else Fraction(1)
    faces = [tuple(int(t) for t in ln.replace(",", " ").split()) for ln in lines[1:]]
    return build_domain(faces, delta)
