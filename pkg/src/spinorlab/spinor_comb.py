"""Combinatorial spinor observable: a literal sum over defect contour configurations.

A configuration gamma in C(a + delta/2, z) is a closed contour omega XOR a fixed
reference walk from the source corner a + delta/2 to z.  It is split into a
path p from the source to z and simple loops by pairing the segments at each
vertex non-crossingly, and weighted by

    alpha^{#full edges} * exp(-i wind(p) / 2) * (-1)^{#loops around an odd number
    of marked faces} * sheet(p, z).

The winding is the total turning angle, counted in multiples of pi/4 (the
corner stubs are horizontal or vertical, the edges diagonal).  Midedge values
carry the extra factor 1 / cos(pi/8).
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidSite, NotADefectConfig, SourceCorner, TooLarge
from .exact_ising import ALPHA_C, ContourConfig, ContourIndex, IsingWeights, fwht, signed_partition_sum
from .lattice import (
    DiscreteDomain,
    MarkedConfig,
    Point,
    corner_vertex,
    crossing_count,
    crossing_parity,
    edge_endpoints,
    is_corner,
    is_midedge,
    segment_crosses_cut,
)

# direction index k -> unit step; even k are axis stubs, odd k diagonal edges
DIRS: tuple[Point, ...] = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
DIR_INDEX = {d: k for k, d in enumerate(DIRS)}
MIDEDGE_FACTOR = 1.0 / math.cos(math.pi / 8)


@lru_cache(maxsize=None)
def _pairing(mask: int, rule: int) -> dict:
    """Non-crossing pairing of the directions present at a vertex.

    Directions are sorted counterclockwise; rule 0 pairs (s0 s1)(s2 s3)...,
    rule 1 pairs (s1 s2)(s3 s4)...(s_last s0).  Both are non-crossing.
    """
    ks = [k for k in range(8) if (mask >> k) & 1]
    n = len(ks)
    out = {}
    for i in range(0, n, 2):
        if rule == 0:
            p, q = ks[i], ks[i + 1]
        else:
            p, q = ks[(i + 1) % n], ks[(i + 2) % n]
        out[p] = q
        out[q] = p
    return out


def _partner_table(rule: int) -> list[list[int]]:
    tab = [[-1] * 8 for _ in range(256)]
    for mask in range(256):
        if bin(mask).count("1") % 2:
            continue
        for p, q in _pairing(mask, rule).items():
            tab[mask][p] = q
    return tab


PARTNER = (_partner_table(0), _partner_table(1))


def turn(k_in: int, k_out: int) -> int:
    """Turning angle (units of pi/4) when arriving along segment k_in and leaving along k_out.

    k_in is the direction of the arrival segment as seen from the vertex.
    """
    heading = (k_in + 4) % 8
    return ((k_out - heading + 4) % 8) - 4


@dataclass(frozen=True)
class DefectConfig:
    gamma: ContourConfig
    path: tuple  # points from the source to the target, including vertices and midedges
    loops: tuple  # tuple of closed point sequences
    wind: int  # total turning of the path in units of pi/4
    rule: int = 0


@dataclass(frozen=True)
class Phase:
    value: complex
    wind_factor: complex
    loop_sign: int
    sheet: int


# ---------------------------------------------------------------------------
# literal decomposition


def _segments_at_vertices(gamma: ContourConfig) -> dict:
    """vertex -> {direction: far endpoint of the segment}"""
    at: dict = {}

    def add(v, k, end):
        d = at.setdefault(v, {})
        if k in d:
            raise NotADefectConfig(f"segment repeated at {v}")
        d[k] = end

    for m in gamma.edges:
        u, w = edge_endpoints(m)
        add(u, DIR_INDEX[((m[0] - u[0]), (m[1] - u[1]))], ("edge", w, m))
        add(w, DIR_INDEX[((m[0] - w[0]), (m[1] - w[1]))], ("edge", u, m))
    for p, q in gamma.half_edges:
        v, t = (p, q) if _is_vertex_pt(p) else (q, p)
        if not _is_vertex_pt(v):
            raise NotADefectConfig(f"half-edge {p}-{q} has no vertex end")
        add(v, DIR_INDEX[(t[0] - v[0], t[1] - v[1])], ("end", t, None))
    return at


def _is_vertex_pt(p) -> bool:
    return p[0] % 2 == 0 and p[1] % 2 == 0 and ((p[0] + p[1]) // 2) % 2 == 0


def decompose_noncrossing(gamma: ContourConfig, source: Point, target: Point, rule: int = 0) -> DefectConfig:
    """Split gamma into the path source -> target and loops, pairing segments non-crossingly."""
    at = _segments_at_vertices(gamma)
    ends = [t for d in at.values() for kind, t, _ in d.values() if kind == "end"]
    if sorted(ends) != sorted([tuple(source), tuple(target)]):
        raise NotADefectConfig("half-edges must end exactly at the source and the target")
    for v, d in at.items():
        if len(d) % 2:
            raise NotADefectConfig(f"odd degree at vertex {v}")
    used: set = set()

    def walk(v, k_in, pts, first_stop):
        """Follow pairings from vertex v entered along k_in; returns (points, wind)."""
        wind = 0
        while True:
            used.add((v, k_in))
            mask = sum(1 << k for k in at[v])
            k_out = PARTNER[rule][mask][k_in]
            used.add((v, k_out))
            wind += turn(k_in, k_out)
            kind, far, mid = at[v][k_out]
            if kind == "end":
                pts.append(far)
                return pts, wind
            pts.append(mid)
            pts.append(far)
            k_back = (k_out + 4) % 8
            if first_stop is not None and (far, k_back) == first_stop:
                return pts, wind
            v, k_in = far, k_back

    # path
    source = tuple(source)
    v0 = next(v for v, d in at.items() for kind, t, _ in d.values() if kind == "end" and t == source)
    k0 = next(k for k, (kind, t, _) in at[v0].items() if kind == "end" and t == source)
    path, wind = walk(v0, k0, [source, v0], None)
    if path[-1] != tuple(target):
        raise NotADefectConfig("path does not reach the target")
    # loops
    loops = []
    for v in sorted(at):
        for k in sorted(at[v]):
            if (v, k) in used:
                continue
            kind, far, mid = at[v][k]
            # enter v as if arriving along k's partner so the walk leaves along k
            mask = sum(1 << j for j in at[v])
            k_in = PARTNER[rule][mask][k]
            pts, _ = walk(v, k_in, [v], (v, k_in))
            loops.append(tuple(pts))
    return DefectConfig(gamma, tuple(path), tuple(loops), wind, rule)


def path_phase(d: DefectConfig, cfg: MarkedConfig) -> Phase:
    wf = cmath.exp(-1j * math.pi * d.wind / 8)
    odd = 0
    for loop in d.loops:
        if sum(crossing_count(loop, [m]) % 2 for m in cfg.marked) % 2:
            odd += 1
    loop_sign = -1 if odd % 2 else 1
    sheet = crossing_parity(d.path, cfg)
    return Phase(wf * loop_sign * sheet, wf, loop_sign, sheet)


# ---------------------------------------------------------------------------
# reference walks and configuration generation


class CombIndex:
    """Per-domain tables used by both the literal and the batched sums."""

    def __init__(self, dom: DiscreteDomain):
        self.dom = dom
        self.ci = ContourIndex.of(dom)
        self.vertices = tuple(sorted(dom.vertices))
        self.vindex = {v: i for i, v in enumerate(self.vertices)}
        nv = len(self.vertices)
        self.edge_at = [[-1] * 8 for _ in range(nv)]
        self.nbr_at = [[-1] * 8 for _ in range(nv)]
        for i, v in enumerate(self.vertices):
            for k in (1, 3, 5, 7):
                m = (v[0] + DIRS[k][0], v[1] + DIRS[k][1])
                e = self.ci.edge_index.get(m, -1)
                self.edge_at[i][k] = e
                if e >= 0:
                    self.nbr_at[i][k] = self.vindex[(v[0] + 2 * DIRS[k][0], v[1] + 2 * DIRS[k][1])]
        n = len(self.ci.faces)
        if n > 24:
            raise TooLarge(f"{n} faces exceed the enumeration cap")
        # omega for every spin state, built incrementally
        om = [0] * (1 << n)
        for s in range(1, 1 << n):
            low = s & -s
            om[s] = om[s ^ low] ^ self.ci.face_mask[low.bit_length() - 1]
        self.omega = om
        self.popcount = [bin(w).count("1") for w in om]

    @classmethod
    def of(cls, dom: DiscreteDomain) -> "CombIndex":
        if "comb_index" not in dom._cache:
            dom._cache["comb_index"] = cls(dom)
        return dom._cache["comb_index"]

    def vertex_path(self, u: Point, v: Point) -> list[Point]:
        """Shortest vertex path, lexicographically smallest among BFS choices."""
        prev = {u: None}
        q = deque([u])
        while q:
            x = q.popleft()
            if x == v:
                break
            i = self.vindex[x]
            for y in sorted(self.vertices[self.nbr_at[i][k]] for k in (1, 3, 5, 7) if self.nbr_at[i][k] >= 0):
                if y not in prev:
                    prev[y] = x
                    q.append(y)
        out = [v]
        while out[-1] != u:
            out.append(prev[out[-1]])
        return out[::-1]

    def end_vertex(self, z: Point) -> Point:
        if is_corner(z):
            return corner_vertex(z)
        ends = [w for w in edge_endpoints(z) if w in self.dom.vertices]
        return min(ends)

    def reference(self, a: Point, z: Point) -> ContourConfig:
        x = (a[0] + 1, a[1])
        v0 = (a[0] + 2, a[1])
        vz = self.end_vertex(z)
        walk = self.vertex_path(v0, vz)
        edges = frozenset(((p[0] + q[0]) // 2, (p[1] + q[1]) // 2) for p, q in zip(walk[:-1], walk[1:]))
        return ContourConfig(edges, ((x, v0), (vz, z)))


def _xor_config(omega_edges: frozenset, ref: ContourConfig, z: Point) -> ContourConfig:
    edges = set(omega_edges ^ ref.edges)
    halves = list(ref.half_edges)
    if is_midedge(z) and z in edges:
        # the full edge through z absorbs the reference half-edge: keep the other half
        edges.discard(z)
        vz, _ = halves[1]
        other = next(w for w in edge_endpoints(z) if w != vz)
        halves[1] = (other, z)
    return ContourConfig(frozenset(edges), tuple(halves))


def _check_target(dom: DiscreteDomain, cfg: MarkedConfig, z: Point) -> None:
    z = tuple(z)
    if z == cfg.source_corner:
        raise SourceCorner("the source corner a + delta/2 is excluded")
    if not (z in dom.corners or z in dom.midedges):
        raise InvalidSite(f"{z} is neither a corner of V^c nor a midedge of V^m")


def defect_configurations(dom: DiscreteDomain, a: Point, z: Point):
    """Yield every gamma in C(a + delta/2, z) as (spin-state bitmask, ContourConfig)."""
    idx = CombIndex.of(dom)
    ref = idx.reference(a, z)
    for s in range(len(idx.omega)):
        yield s, _xor_config(idx.ci.edges_of_mask(idx.omega[s]), ref, z)


def observable_enum(dom: DiscreteDomain, cfg: MarkedConfig, z: Point, sheet: int = 1, rule: int = 0, alpha: float = ALPHA_C) -> complex:
    """F(z) on the given sheet, summing Definition-style weights configuration by configuration."""
    cfg.validate(dom)
    _check_target(dom, cfg, z)
    z = tuple(z)
    total = 0j
    source = cfg.source_corner
    for _, gamma in defect_configurations(dom, cfg.a, z):
        d = decompose_noncrossing(gamma, source, z, rule)
        ph = path_phase(d, cfg)
        total += alpha ** len(gamma.edges) * ph.value
    if is_midedge(z):
        total *= MIDEDGE_FACTOR
    zplus = signed_partition_sum(dom, cfg.marked, weights=IsingWeights(alpha, 0.5 * math.log(1 / alpha)))
    return sheet * total / zplus


# ---------------------------------------------------------------------------
# batched evaluation for every set of marked faces at once


def _segment_mask(ci: ContourIndex, p: Point, q: Point) -> int:
    return sum(1 << i for i, f in enumerate(ci.faces) if segment_crosses_cut(p, q, f))


def observable_table(dom: DiscreteDomain, a: Point, z: Point, rule: int = 0, alpha: float = ALPHA_C) -> np.ndarray:
    """F(z) on the reference sheet for every marked set M containing a.

    Returns a complex array indexed by face bitmask M (ContourIndex order);
    entries with a not in M are meaningless and set to nan.  The loop signs and
    the sheet factor combine into (-1)^{|D(gamma) & M|}, where D(gamma) is the set of
    faces whose cut gamma crosses an odd number of times, so one Walsh-Hadamard
    transform evaluates all marked sets.
    """
    idx = CombIndex.of(dom)
    ci = idx.ci
    a, z = tuple(a), tuple(z)
    if a not in ci.face_index:
        raise InvalidSite(f"{a} is not an interior face")
    if z == (a[0] + 1, a[1]):
        raise SourceCorner("the source corner a + delta/2 is excluded")
    if not (z in dom.corners or z in dom.midedges):
        raise InvalidSite(f"{z} is neither a corner nor a midedge of the domain")
    ref = idx.reference(a, z)
    ref_mask = ci.mask_of_edges(ref.edges)
    d_ref = ci.enclosure_mask(ref_mask)
    for p, q in ref.half_edges:
        d_ref ^= _segment_mask(ci, p, q)
    x_v = idx.vindex[(a[0] + 2, a[1])]
    vz_pt, _ = ref.half_edges[1]
    vz = idx.vindex[vz_pt]
    kz = DIR_INDEX[(z[0] - vz_pt[0], z[1] - vz_pt[1])]
    mid = is_midedge(z)
    ez = ci.edge_index.get(z, -1) if mid else -1
    if ez >= 0:
        other_pt = next(w for w in edge_endpoints(z) if w != vz_pt)
        vo = idx.vindex[other_pt]
        ko = DIR_INDEX[(z[0] - other_pt[0], z[1] - other_pt[1])]
    partner = PARTNER[rule]
    edge_at = idx.edge_at
    nbr_at = idx.nbr_at
    phases = [cmath.exp(-1j * math.pi * w / 8) for w in range(16)]
    n = len(ci.faces)
    apow = [alpha**j for j in range(len(ci.edges) + 2)]
    C = np.zeros(1 << n, dtype=complex)
    WZ = np.zeros(1 << n)
    for s in range(1 << n):
        om = idx.omega[s]
        WZ[s] = apow[idx.popcount[s]]
        G = om ^ ref_mask
        end_v, end_k = vz, kz
        if ez >= 0 and (G >> ez) & 1:
            end_v, end_k = vo, ko
        if ez >= 0:
            G &= ~(1 << ez)
        v, k_in, wind = x_v, 4, 0
        while True:
            ea = edge_at[v]
            mask = 0
            for k in (1, 3, 5, 7):
                e = ea[k]
                if e >= 0 and (G >> e) & 1:
                    mask |= 1 << k
            if v == x_v:
                mask |= 16
            if v == end_v:
                mask |= 1 << end_k
            k_out = partner[mask][k_in]
            wind += ((k_out - k_in) % 8) - 4
            if v == end_v and k_out == end_k:
                break
            v, k_in = nbr_at[v][k_out], (k_out + 4) % 8
        ne = bin(G).count("1")
        C[s ^ d_ref] += apow[ne] * phases[wind % 16]
    num = fwht(C)
    den = fwht(WZ)
    F = num / den
    if mid:
        F = F * MIDEDGE_FACTOR
    abit = 1 << ci.face_index[a]
    sel = (np.arange(1 << n) & abit) == 0
    F[sel] = np.nan
    return F


def marked_mask(dom: DiscreteDomain, marked: Sequence[Point]) -> int:
    ci = ContourIndex.of(dom)
    m = 0
    for f in marked:
        m ^= 1 << ci.face_index[tuple(f)]
    return m


def observable_fast(dom: DiscreteDomain, cfg: MarkedConfig, z: Point, sheet: int = 1) -> complex:
    cfg.validate(dom)
    return complex(sheet * observable_table(dom, cfg.a, z)[marked_mask(dom, cfg.marked)])


def cover_field_enum(dom: DiscreteDomain, a: Point, points=None) -> dict:
    """{z: table over marked sets} for all corners and midedges (default) of the domain."""
    if points is None:
        points = sorted(dom.corners | dom.midedges)
    src = (a[0] + 1, a[1])
    return {z: observable_table(dom, a, z) for z in points if z != src}
