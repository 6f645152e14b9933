"""Exact critical Ising correlations on small discrete domains.

Three models share one representation (sites, bonds, frozen-neighbour counts):

* ``plus_faces``    spins on IntV faces, exterior faces frozen to +1;
* ``free_faces``    spins on IntV faces, bonds only between interior faces;
* ``free_vertices`` spins on IntV vertices, bonds along domain edges.

Weights are the contour weights alpha^{#disagreeing bonds}, which differ from
exp(beta * sum sigma sigma') by a configuration-independent factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import BadBoundary, InvalidSite, TooLarge, TooWide
from .lattice import (
    DiscreteDomain,
    Point,
    edge_endpoints,
    edge_faces,
    face_midedges,
    make_standard_domain,
    segment_crosses_cut,
)

ALPHA_C = math.sqrt(2.0) - 1.0
BETA_C = 0.5 * math.log(math.sqrt(2.0) + 1.0)
BC_KINDS = ("plus_faces", "free_faces", "free_vertices")


@dataclass(frozen=True)
class IsingWeights:
    alpha: float = ALPHA_C
    beta: float = BETA_C

    @classmethod
    def at_beta(cls, beta: float, override: bool = False) -> "IsingWeights":
        if not override and abs(beta - BETA_C) > 1e-15:
            raise ValueError("off-critical temperatures need override=True")
        return cls(math.exp(-2.0 * beta), beta)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0
    method: str = "enum"

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")


@dataclass(frozen=True)
class ContourConfig:
    """Full edges by midpoint, plus optional half-edge segments (p, q)."""

    edges: frozenset
    half_edges: tuple = ()

    def degrees(self) -> dict:
        deg: dict = {}
        for m in self.edges:
            for v in edge_endpoints(m):
                deg[v] = deg.get(v, 0) + 1
        for p, q in self.half_edges:
            for v in (p, q):
                deg[v] = deg.get(v, 0) + 1
        return deg

    def is_closed(self) -> bool:
        return not self.half_edges and all(d % 2 == 0 for d in self.degrees().values())


# ---------------------------------------------------------------------------
# model representation


@dataclass(frozen=True)
class IsingModel:
    sites: tuple
    index: dict
    bonds: np.ndarray  # (nb, 2) int
    field: np.ndarray  # number of frozen + neighbours per site

    @property
    def n(self) -> int:
        return len(self.sites)

    def neighbours(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in self.sites]
        for i, j in self.bonds:
            nb[i].append(int(j))
            nb[j].append(int(i))
        return nb


def build_model(dom: DiscreteDomain, bc: str) -> IsingModel:
    key = ("model", bc)
    if key in dom._cache:
        return dom._cache[key]
    if bc not in BC_KINDS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if bc == "free_vertices":
        sites = tuple(sorted(dom.vertices))
    else:
        sites = tuple(sorted(dom.faces))
    index = {s: i for i, s in enumerate(sites)}
    bonds = []
    field = np.zeros(len(sites), dtype=np.int64)
    for m in sorted(dom.int_midedges):
        if bc == "free_vertices":
            u, v = edge_endpoints(m)
            bonds.append((index[u], index[v]))
            continue
        f, g = edge_faces(m)
        fi, gi = f in index, g in index
        if fi and gi:
            bonds.append((index[f], index[g]))
        elif bc == "plus_faces":
            field[index[f] if fi else index[g]] += 1
    model = IsingModel(sites, index, np.array(bonds, dtype=np.int64).reshape(-1, 2), field)
    dom._cache[key] = model
    return model


def _site_indices(model: IsingModel, marked: Iterable[Sequence[int]]) -> list[int]:
    out = []
    for s in marked:
        s = tuple(s)
        if s not in model.index:
            raise InvalidSite(f"{s} is not a spin site of this model")
        out.append(model.index[s])
    return out


# ---------------------------------------------------------------------------
# Gray-code enumeration


@njit(cache=True)
def _gray_sums(n, n_high, nbr_ptr, nbr_idx, field, marked_masks, apow):
    """Sum alpha^D and alpha^D * prod(sigma) over all 2^n spin states.

    High bits form fixed prefixes; each prefix block is walked in Gray order.
    Partial sums are kept per prefix and reduced in prefix order.
    """
    n_low = n - n_high
    n_prefix = 1 << n_high
    K = marked_masks.shape[0]
    zpart = np.zeros(n_prefix)
    npart = np.zeros((n_prefix, K))
    spin = np.empty(n, dtype=np.int64)
    for p in range(n_prefix):
        for i in range(n):
            spin[i] = 1
        for b in range(n_high):
            if (p >> b) & 1:
                spin[n_low + b] = -1
        # disagreement count of the starting state
        D = 0
        for i in range(n):
            if spin[i] < 0:
                D += field[i]
            for q in range(nbr_ptr[i], nbr_ptr[i + 1]):
                j = nbr_idx[q]
                if j > i and spin[i] != spin[j]:
                    D += 1
        state = np.int64(p) << n_low
        par = np.zeros(K, dtype=np.int64)
        for r in range(K):
            x = state & marked_masks[r]
            c = 0
            while x:
                x &= x - 1
                c += 1
            par[r] = c & 1
        z = 0.0
        zc = 0.0
        num = np.zeros(K)
        numc = np.zeros(K)
        for it in range(1 << n_low):
            if it > 0:
                # flip the lowest set bit of it
                j = 0
                t = it
                while (t & 1) == 0:
                    t >>= 1
                    j += 1
                s = spin[j]
                dD = 0
                for q in range(nbr_ptr[j], nbr_ptr[j + 1]):
                    dD += 1 if spin[nbr_idx[q]] == s else -1
                dD += field[j] if s > 0 else -field[j]
                D += dD
                spin[j] = -s
                state ^= np.int64(1) << j
                for r in range(K):
                    if (marked_masks[r] >> j) & 1:
                        par[r] ^= 1
            w = apow[D]
            # Kahan summation in a fixed order
            y = w - zc
            tt = z + y
            zc = (tt - z) - y
            z = tt
            for r in range(K):
                v = -w if par[r] else w
                y = v - numc[r]
                tt = num[r] + y
                numc[r] = (tt - num[r]) - y
                num[r] = tt
        zpart[p] = z
        for r in range(K):
            npart[p, r] = num[r]
    Z = 0.0
    N = np.zeros(K)
    for p in range(n_prefix):
        Z += zpart[p]
        for r in range(K):
            N[r] += npart[p, r]
    return Z, N


def _csr(model: IsingModel):
    nb = model.neighbours()
    ptr = np.zeros(model.n + 1, dtype=np.int64)
    for i, l in enumerate(nb):
        ptr[i + 1] = ptr[i] + len(l)
    idx = np.array([j for l in nb for j in l], dtype=np.int64)
    return ptr, idx


def _xor_mask(ids) -> int:
    m = 0
    for i in ids:
        m ^= 1 << i
    return m


def enumerate_sums(model: IsingModel, marked_sets: Sequence[Sequence[int]], weights=IsingWeights(), cap: int = 24):
    """Return (Z, [Z[sigma_M] for M in marked_sets]) by exhaustive enumeration."""
    if model.n > cap:
        raise TooLarge(f"{model.n} spins exceed the enumeration cap {cap}")
    if model.n > 62:
        raise TooLarge("at most 62 spins fit a bitmask")
    ptr, idx = _csr(model)
    masks = np.array([_xor_mask(M) for M in marked_sets] or [0], dtype=np.int64)
    maxD = len(model.bonds) + int(model.field.sum()) + 1
    apow = weights.alpha ** np.arange(maxD + 1, dtype=np.float64)
    n_high = min(4, model.n)
    Z, N = _gray_sums(model.n, n_high, ptr, idx, model.field.astype(np.int64), masks, apow)
    return Z, list(N[: len(marked_sets)])


def enumerate_correlation(dom: DiscreteDomain, bc: str, marked: Iterable[Sequence[int]], cap: int = 24, weights=IsingWeights()) -> Estimate:
    """Exact E[prod sigma] by enumeration over all spin states."""
    model = build_model(dom, bc)
    ids = _site_indices(model, marked)
    if not ids:
        return Estimate(1.0, 0.0, "enum")
    Z, (N,) = enumerate_sums(model, [ids], weights, cap)
    return Estimate(float(N / Z), 0.0, "enum")


def spin_weight_correlation(dom: DiscreteDomain, bc: str, marked, cap: int = 20) -> float:
    """Same expectation from Boltzmann weights exp(beta sum sigma sigma'), vectorized."""
    model = build_model(dom, bc)
    ids = _site_indices(model, marked)
    if model.n > cap:
        raise TooLarge(f"{model.n} spins exceed {cap}")
    states = np.arange(1 << model.n, dtype=np.int64)
    spins = 1 - 2 * ((states[:, None] >> np.arange(model.n)) & 1)
    energy = np.zeros(len(states))
    for i, j in model.bonds:
        energy += spins[:, i] * spins[:, j]
    energy += spins @ model.field.astype(float)
    w = np.exp(BETA_C * (energy - energy.max()))
    prod = np.prod(spins[:, ids], axis=1) if ids else np.ones(len(states))
    return float((w * prod).sum() / w.sum())


# ---------------------------------------------------------------------------
# all-subset sums via the Walsh-Hadamard transform


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform: out[M] = sum_D a[D] (-1)^{|D & M|}."""
    a = np.array(a, copy=True)
    n = a.shape[0]
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        x = a[:, 0, :].copy()
        y = a[:, 1, :].copy()
        a[:, 0, :] = x + y
        a[:, 1, :] = x - y
        a = a.reshape(n)
        h *= 2
    return a


def weight_vector(model: IsingModel, weights=IsingWeights(), cap: int = 22) -> np.ndarray:
    """alpha^{D(sigma)} for every state; bit i of the index set means sigma_i = -1."""
    if model.n > cap:
        raise TooLarge(f"{model.n} spins exceed {cap}")
    states = np.arange(1 << model.n, dtype=np.int64)
    D = np.zeros(len(states), dtype=np.int64)
    for i, j in model.bonds:
        D += ((states >> i) ^ (states >> j)) & 1
    for i in range(model.n):
        if model.field[i]:
            D += model.field[i] * ((states >> i) & 1)
    return weights.alpha ** D.astype(float)


def subset_sums(model: IsingModel, weights=IsingWeights()) -> np.ndarray:
    """Z[sigma_M] for every subset M of sites, indexed by bitmask."""
    return fwht(weight_vector(model, weights))


# ---------------------------------------------------------------------------
# contour representation (+ boundary on faces)


class ContourIndex:
    """Bitmask bookkeeping for closed contours on the edges of a domain."""

    def __init__(self, dom: DiscreteDomain):
        self.dom = dom
        self.faces = tuple(sorted(dom.faces))
        self.face_index = {f: i for i, f in enumerate(self.faces)}
        self.edges = tuple(sorted(dom.int_midedges))
        self.edge_index = {m: i for i, m in enumerate(self.edges)}
        self.face_mask = [sum(1 << self.edge_index[m] for m in face_midedges(f)) for f in self.faces]
        # cut-crossing mask (over faces) of each edge, as a vertex-to-vertex segment
        self.edge_cross = []
        for m in self.edges:
            p, q = edge_endpoints(m)
            self.edge_cross.append(sum(1 << i for i, f in enumerate(self.faces) if segment_crosses_cut(p, q, f)))

    @classmethod
    def of(cls, dom: DiscreteDomain) -> "ContourIndex":
        if "contour_index" not in dom._cache:
            dom._cache["contour_index"] = cls(dom)
        return dom._cache["contour_index"]

    def omega_of_spins(self, minus_mask: int) -> int:
        w = 0
        i = 0
        while minus_mask:
            if minus_mask & 1:
                w ^= self.face_mask[i]
            minus_mask >>= 1
            i += 1
        return w

    def enclosure_mask(self, edge_mask: int) -> int:
        """Faces whose cut is crossed an odd number of times by the edge set."""
        d = 0
        i = 0
        while edge_mask:
            if edge_mask & 1:
                d ^= self.edge_cross[i]
            edge_mask >>= 1
            i += 1
        return d

    def edges_of_mask(self, mask: int) -> frozenset:
        return frozenset(m for i, m in enumerate(self.edges) if (mask >> i) & 1)

    def mask_of_edges(self, edges: Iterable[Point]) -> int:
        return sum(1 << self.edge_index[m] for m in edges)


def spins_to_contours(dom: DiscreteDomain, spins: dict) -> ContourConfig:
    """Edges separating opposite spins; exterior faces must be +1."""
    for f, s in spins.items():
        if f not in dom.faces and s != 1:
            raise BadBoundary(f"boundary face {f} has spin {s}")
    def sp(f):
        return spins.get(f, 1) if f in dom.faces else 1
    edges = frozenset(m for m in dom.int_midedges if sp(edge_faces(m)[0]) != sp(edge_faces(m)[1]))
    return ContourConfig(edges)


def contours_to_spins(dom: DiscreteDomain, contour: ContourConfig) -> dict:
    """Inverse bijection: a face is -1 iff enclosed an odd number of times."""
    if not contour.is_closed():
        raise BadBoundary("contour is not closed")
    out = {}
    for f in dom.faces:
        n = sum(segment_crosses_cut(*edge_endpoints(m), f) for m in contour.edges)
        out[f] = -1 if n % 2 else 1
    return out


def signed_partition_sum(dom: DiscreteDomain, marked: Iterable[Sequence[int]], cap: int = 24, weights=IsingWeights()) -> float:
    """sum over closed contours of alpha^{#edges} (-1)^{#loops enclosing an odd number of marked faces}.

    The loop sign is read off geometrically: a loop encloses a face iff it crosses
    the face's leftward cut an odd number of times.
    """
    ci = ContourIndex.of(dom)
    marked = [tuple(m) for m in marked]
    for m in marked:
        if m not in ci.face_index:
            raise InvalidSite(f"{m} is not an interior face")
    n = len(ci.faces)
    if n > cap:
        raise TooLarge(f"{n} faces exceed {cap}")
    mmask = 0
    for m in marked:
        mmask ^= 1 << ci.face_index[m]
    total = 0.0
    for s in range(1 << n):
        omega = ci.omega_of_spins(s)
        sign = -1.0 if bin(ci.enclosure_mask(omega) & mmask).count("1") % 2 else 1.0
        total += sign * weights.alpha ** bin(omega).count("1")
    return total


# ---------------------------------------------------------------------------
# frontier elimination (transfer matrix on arbitrary domains)


def _frontier_width(order: list[int], nbrs: list[list[int]]) -> int:
    pos = {s: i for i, s in enumerate(order)}
    last = [max([pos[s]] + [pos[t] for t in nbrs[s]]) for s in range(len(order))]
    live = 0
    width = 0
    ends = {}
    for s in order:
        ends.setdefault(last[s], []).append(s)
    for i, s in enumerate(order):
        live += 1
        width = max(width, live)
        live -= len(ends.get(i, []))
    return width


def _best_order(model: IsingModel, nbrs) -> tuple[list[int], int]:
    keys = [
        lambda p: (p[0], p[1]),
        lambda p: (p[1], p[0]),
        lambda p: (p[0] + p[1], p[0] - p[1]),
        lambda p: (p[0] - p[1], p[0] + p[1]),
    ]
    best = None
    for key in keys:
        order = sorted(range(model.n), key=lambda i: key(model.sites[i]))
        w = _frontier_width(order, nbrs)
        if best is None or w < best[1]:
            best = (order, w)
    return best


def _contract(model: IsingModel, marked_ids: set, order: list[int], nbrs, alpha: float) -> tuple[float, float]:
    """Return (mantissa, log-scale) of Z[sigma_M] by sweeping sites in order."""
    pos = {s: i for i, s in enumerate(order)}
    last = [max([pos[s]] + [pos[t] for t in nbrs[s]]) for s in range(model.n)]
    bond = np.array([[1.0, alpha], [alpha, 1.0]])
    T = np.ones(())
    frontier: list[int] = []
    logscale = 0.0
    for i, s in enumerate(order):
        vec = np.array([1.0, alpha ** int(model.field[s])])
        if s in marked_ids:
            vec[1] = -vec[1]
        T = T[..., None] * vec
        frontier.append(s)
        nd = len(frontier)
        for t in nbrs[s]:
            if pos[t] < i:
                ax = frontier.index(t)
                shape = [1] * nd
                shape[ax] = 2
                shape[-1] = 2
                T = T * bond.reshape(shape)
        # sum out sites whose neighbourhood is complete
        done = [ax for ax, u in enumerate(frontier) if last[u] <= i]
        if done:
            T = T.sum(axis=tuple(done))
            frontier = [u for u in frontier if last[u] > i]
        m = np.abs(T).max()
        if m > 0:
            T = T / m
            logscale += math.log(m)
    return float(T), logscale


def exact_correlation(dom: DiscreteDomain, bc: str, marked: Iterable[Sequence[int]], max_width: int = 20, weights=IsingWeights()) -> Estimate:
    """E[prod sigma] by frontier elimination; exact for any width up to max_width."""
    model = build_model(dom, bc)
    ids = _site_indices(model, marked)
    nbrs = model.neighbours()
    order, width = _best_order(model, nbrs)
    if width > max_width:
        raise TooWide(f"frontier width {width} exceeds {max_width}")
    z, lz = _contract(model, set(), order, nbrs, weights.alpha)
    if not ids:
        return Estimate(1.0, 0.0, "transfer")
    # repeated sites cancel in pairs
    odd = {i for i in ids if ids.count(i) % 2}
    n, ln = _contract(model, odd, order, nbrs, weights.alpha)
    return Estimate(n / z * math.exp(ln - lz), 0.0, "transfer")


def transfer_matrix_correlation(m: int, n: int, bc: str, marked: Iterable[Sequence[int]], max_width: int = 20) -> Estimate:
    """Exact correlation on the m x n face block (see lattice.rectangle_faces)."""
    if min(m, n) > max_width:
        raise TooWide(f"block {m}x{n} is wider than {max_width}")
    dom = make_standard_domain(("rectangle", m, n))
    return exact_correlation(dom, bc, marked, max_width=max_width + 2)
