"""Continuum spinors in the upper half-plane, the coefficients A and B, and correlation functions.

The spinor with branch points a_0 = a, a_1, ..., a_k is

    f(z) = e^{i pi/4} P(z) / sqrt(p_{a_0}(z) ... p_{a_k}(z)),   p_w(z) = (z - w)(z - conj w),

with P real of degree k fixed by Re beta_0 = 1 and Re beta_s = 0, where beta_s is
the residue lim sqrt(z - a_s) f(z).  The square f^2 = i P^2 / prod p is rational,
so every quantity that only needs f up to sign is computed from it.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import (
    CoincidentPoints,
    NotConformal,
    Overflow,
    PathHitsCollision,
    PolynomialZeroAtA,
    SingularSystem,
    UnsupportedK,
)

SQRT2 = math.sqrt(2.0)


def _points(points) -> tuple:
    pts = tuple(complex(p) for p in points)
    if not pts:
        raise ValueError("need at least one point")
    for p in pts:
        if p.imag <= 0:
            raise ValueError(f"{p} is not in the open upper half-plane")
    for i, j in itertools.combinations(range(len(pts)), 2):
        if abs(pts[i] - pts[j]) < 1e-14 * max(1.0, abs(pts[i])):
            raise CoincidentPoints(f"points {i} and {j} coincide")
    return pts


def p_w(w: complex, z):
    return (z - w) * (z - w.conjugate())


def _others_product(pts: tuple, m: int) -> complex:
    out = 1.0 + 0j
    for l, w in enumerate(pts):
        if l != m:
            out *= p_w(w, pts[m])
    return out


def assemble_M(points) -> np.ndarray:
    """M[m, n] = Re[a_m^n (prod_{l != m} p_{a_l}(a_m))^{-1/2}], principal branches."""
    pts = _points(points)
    k1 = len(pts)
    M = np.empty((k1, k1))
    for m, am in enumerate(pts):
        c = 1 / cmath.sqrt(_others_product(pts, m))
        for n in range(k1):
            M[m, n] = (am**n * c).real
    return M


@dataclass(frozen=True)
class HalfPlaneSpinor:
    points: tuple
    q: np.ndarray  # real coefficients of P, lowest degree first
    beta: np.ndarray  # closed-form residues (principal-branch signs)
    beta_limit_sq: np.ndarray  # beta_s^2 from the small-h limit

    @property
    def k(self) -> int:
        return len(self.points) - 1

    def P(self, z):
        return np.polyval(self.q[::-1], z)

    def dP(self, z):
        return np.polyval(np.polyder(self.q[::-1]), z)

    def f_squared(self, z):
        z = np.asarray(z, dtype=complex)
        den = np.ones_like(z)
        for w in self.points:
            den = den * p_w(w, z)
        return 1j * self.P(z) ** 2 / den

    def f(self, z):
        """A branch of f (principal square root of the product); correct up to sign."""
        z = np.asarray(z, dtype=complex)
        den = np.ones_like(z)
        for w in self.points:
            den = den * p_w(w, z)
        return cmath.exp(1j * math.pi / 4) * self.P(z) / np.sqrt(den)

    def energy(self) -> float:
        """beta_0^2 - sum |beta_s|^2, nonnegative by the residue argument."""
        return float(self.beta[0].real ** 2 - np.sum(np.abs(self.beta[1:]) ** 2))


def _richardson(g: Callable[[complex], complex], h0: complex, levels: int = 6) -> complex:
    """Limit of g(h) as h -> 0 for g analytic in h."""
    T = [[g(h0 / 2**j)] for j in range(levels)]
    for j in range(1, levels):
        for i in range(1, j + 1):
            T[j].append(T[j][i - 1] + (T[j][i - 1] - T[j - 1][i - 1]) / (2**i - 1))
    return T[-1][-1]


def solve_halfplane_spinor(points, check: bool = True, tol: float = 1e-8) -> HalfPlaneSpinor:
    pts = _points(points)
    M = assemble_M(pts)
    rhs = np.zeros(len(pts))
    # Re beta_0 = sum_n M[0, n] q_n / sqrt(2 Im a_0), so the first right-hand side is sqrt(2 Im a_0)
    rhs[0] = math.sqrt(2 * pts[0].imag)
    try:
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > 1e14:
            raise SingularSystem(f"condition number {cond:.3e}")
        q = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    beta = np.array(
        [np.polyval(q[::-1], a) / (math.sqrt(2 * a.imag) * cmath.sqrt(_others_product(pts, s))) for s, a in enumerate(pts)]
    )
    sp = HalfPlaneSpinor(pts, q, beta, np.zeros(len(pts), dtype=complex))
    scale = min([a.imag for a in pts] + [abs(x - y) for x, y in itertools.combinations(pts, 2)])
    lim = np.array([_richardson(lambda h, a=a: h * sp.f_squared(a + h), 0.05 * scale) for a in pts])
    sp = HalfPlaneSpinor(pts, q, beta, lim)
    if check:
        err = float(np.max(np.abs(lim - beta**2)))
        if err > tol * max(1.0, float(np.max(np.abs(beta)) ** 2)):
            raise SingularSystem(f"closed-form and limit residues disagree by {err:.3e}")
    return sp


def coeff_A(points, spinor: Optional[HalfPlaneSpinor] = None) -> complex:
    pts = _points(points)
    sp = spinor or solve_halfplane_spinor(pts)
    a = pts[0]
    Pa = sp.P(a)
    if abs(Pa) < 1e-14 * max(1.0, float(np.max(np.abs(sp.q)))):
        raise PolynomialZeroAtA(f"P vanishes at a = {a}")
    A = -1 / (4 * (a - a.conjugate()))
    for s in pts[1:]:
        A -= 0.25 * (1 / (a - s) + 1 / (a - s.conjugate()))
    return complex(A + sp.dP(a) / (2 * Pa))


def coeff_A_contour(points, spinor: Optional[HalfPlaneSpinor] = None, n: int = 64) -> complex:
    """A = g'(a)/4 with g = (z - a) f^2, by the trapezoid rule on a small circle around a."""
    pts = _points(points)
    sp = spinor or solve_halfplane_spinor(pts)
    a = pts[0]
    r = 0.3 * min([a.imag] + [abs(a - s) for s in pts[1:]])
    t = np.exp(2j * np.pi * np.arange(n) / n)
    z = a + r * t
    g = (z - a) * sp.f_squared(z)
    return complex(np.mean(g / (r * t)) / 4)


def coeff_B(a: complex, b: complex) -> float:
    a, b = _points((a, b))
    return math.sqrt(4 * a.imag * b.imag) / (abs(b - a.conjugate()) + abs(b - a))


def coeff_A_two_point(a: complex, b: complex) -> complex:
    """Closed form of A_H(a; b)."""
    s, d = abs(b - a.conjugate()), abs(b - a)
    return -1 / (8j * a.imag) + (s - d) / (4 * (s + d)) * (1 / (b - a) - 1 / (b.conjugate() - a))


def spinor_one_point(a: complex, z):
    z = np.asarray(z, dtype=complex)
    return cmath.sqrt(2j * a.imag) / np.sqrt((z - a) * (z - a.conjugate()))


def spinor_two_point(a: complex, b: complex, z):
    z = np.asarray(z, dtype=complex)
    c = cmath.sqrt((b - a) * (b - a.conjugate()))
    cb = cmath.sqrt((b.conjugate() - a.conjugate()) * (b.conjugate() - a))
    pref = cmath.sqrt(2j * a.imag) / (abs(b - a.conjugate()) + abs(b - a))
    return pref * (cb * (z - b) + c * (z - b.conjugate())) / np.sqrt(p_w(a, z) * p_w(b, z))


def three_point_numerator(points) -> np.ndarray:
    """Real coefficients (lowest first) of c02 p_{a1} + c01 p_{a2} - c12 p_{a0}."""
    a0, a1, a2 = _points(points)

    def c(x, y):
        return abs(x - y) * abs(x - y.conjugate())

    def poly(w):
        return np.array([abs(w) ** 2, -2 * w.real, 1.0])

    return c(a0, a2) * poly(a1) + c(a0, a1) * poly(a2) - c(a1, a2) * poly(a0)


# ---------------------------------------------------------------------------
# correlation functions


@dataclass(frozen=True)
class CorrelationValue:
    value: float
    kind: str  # plus, free, cft, cont
    domain: str = "half-plane"


def _u(a: complex, b: complex) -> float:
    return math.sqrt(abs((b - a) / (b - a.conjugate())))


def closed_form_halfplane(points, bc: str = "plus") -> float:
    pts = _points(points)
    if len(pts) == 1:
        if bc != "plus":
            raise UnsupportedK("the free one-point function vanishes")
        return 2**0.25 / (2 * pts[0].imag) ** 0.125
    if len(pts) == 2:
        a, b = pts
        u = _u(a, b)
        den = (2 * a.imag) ** 0.125 * (2 * b.imag) ** 0.125
        if bc == "plus":
            return math.sqrt(u + 1 / u) / den
        if bc == "free":
            return math.sqrt(1 / u - u) / den
        raise ValueError(f"unknown boundary condition {bc!r}")
    raise UnsupportedK("closed forms exist for one and two points only")


def log_cft(points) -> float:
    pts = _points(points)
    k1 = len(pts)
    if k1 > 21:
        raise Overflow("the CFT sum has 2^(k+1) terms; k > 20 is refused")
    L = np.zeros((k1, k1))
    for s, m in itertools.combinations(range(k1), 2):
        L[s, m] = 0.5 * math.log(abs((pts[s] - pts[m]) / (pts[s] - pts[m].conjugate())))
    mus = 1 - 2 * ((np.arange(2**k1)[:, None] >> np.arange(k1)[None, :]) & 1)
    expo = np.einsum("ti,ij,tj->t", mus, L, mus)
    bracket = logsumexp(expo) - 0.5 * k1 * math.log(2)
    return -0.125 * sum(math.log(2 * p.imag) for p in pts) + 0.5 * bracket


def cft_correlation(points) -> CorrelationValue:
    return CorrelationValue(math.exp(log_cft(points)), "cft")


# ---------------------------------------------------------------------------
# the form L and its integration


def A_at(points: Sequence[complex], j: int) -> complex:
    """A(a_j; the other points)."""
    pts = list(points)
    aj = pts.pop(j)
    return coeff_A([aj] + pts)


def _segment_hits(p: complex, q: complex, others: Sequence[complex], tol: float) -> bool:
    d = q - p
    for o in others:
        t = 0.0 if d == 0 else max(0.0, min(1.0, ((o - p) * d.conjugate()).real / abs(d) ** 2))
        if abs(p + t * d - o) < tol:
            return True
    return False


def integrate_segment(config: Sequence[complex], j: int, target: complex) -> float:
    """Integral of Re[A(a_j; rest) da_j] as a_j moves straight from config[j] to target."""
    pts = [complex(p) for p in config]
    start = pts[j]
    target = complex(target)
    d = target - start
    if d == 0:
        return 0.0
    if abs(d.real) > 1e-15 * abs(d) and abs(d.imag) > 1e-15 * abs(d):
        raise ValueError("segments must be horizontal or vertical")
    others = pts[:j] + pts[j + 1:]
    if min(start.imag, target.imag) <= 0:
        raise PathHitsCollision("path leaves the upper half-plane")
    if _segment_hits(start, target, others, 1e-9 * max(1.0, abs(d))):
        raise PathHitsCollision(f"segment {start} -> {target} passes through another point")

    def A_here(z):
        return coeff_A([z] + others)

    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-13)
    # points of closest approach to the others split the interval
    brk = []
    for o in others:
        t = ((o - start) * d.conjugate()).real / abs(d) ** 2
        if 0 < t < 1:
            brk.append(t)
    if abs(d.real) < abs(d.imag):
        # vertical: integrate in log(y), which absorbs the 1/y singularity near the boundary
        x = start.real
        s0, s1 = math.log(start.imag), math.log(target.imag)
        sb = [math.log(start.imag + t * d.imag) for t in brk]
        val, _ = integrate.quad(lambda s: -A_here(complex(x, math.exp(s))).imag * math.exp(s), s0, s1, points=sb or None, **opts)
        return val
    y = start.imag
    val, _ = integrate.quad(lambda t: A_here(complex(start.real + t * d.real, y)).real * d.real, 0.0, 1.0, points=brk or None, **opts)
    return val


def integrate_L(path: Sequence[Sequence[complex]]) -> float:
    """Integral of the form L along a path of configurations differing in one axis-parallel move each."""
    total = 0.0
    for c0, c1 in zip(path[:-1], path[1:]):
        c0 = [complex(p) for p in c0]
        c1 = [complex(p) for p in c1]
        if len(c0) != len(c1):
            raise ValueError("configurations along a path must have equal size")
        moved = [j for j in range(len(c0)) if c0[j] != c1[j]]
        if len(moved) > 1:
            raise ValueError("each step may move one point only")
        if moved:
            total += integrate_segment(c0, moved[0], c1[moved[0]])
    return total


def manhattan_path(start: Sequence[complex], end: Sequence[complex]) -> list:
    """Move each point in turn: vertically to the target height, then horizontally."""
    cur = [complex(p) for p in start]
    path = [tuple(cur)]
    for j, e in enumerate(end):
        e = complex(e)
        if cur[j].imag != e.imag:
            cur[j] = complex(cur[j].real, e.imag)
            path.append(tuple(cur))
        if cur[j].real != e.real:
            cur[j] = e
            path.append(tuple(cur))
    return path


def correlation_via_L(points) -> float:
    """exp of the primitive of L, normalized to the CFT formula on the imaginary axis.

    The reference configuration sits on the imaginary axis above every target.
    Points are moved in order of increasing real part: across to a private
    column right of everything, down to the target height, then left to the
    target, so no segment passes through another point.
    """
    pts = _points(points)
    if len(pts) == 1:
        return closed_form_halfplane(pts)
    top = max(p.imag for p in pts) + 1
    right = max(max(p.real for p in pts), 0.0) + 1
    ref = tuple(1j * top * (j + 1) for j in range(len(pts)))
    cur = list(ref)
    path = [tuple(cur)]
    for n, j in enumerate(sorted(range(len(pts)), key=lambda j: (pts[j].real, pts[j].imag))):
        col = right + n
        for nxt in (complex(col, cur[j].imag), complex(col, pts[j].imag), pts[j]):
            if nxt != cur[j]:
                cur[j] = nxt
                path.append(tuple(cur))
    return math.exp(log_cft(ref) + integrate_L(path))


def closedness_residual(points, h: float = 1e-4) -> float:
    """Max asymmetry of the Jacobian of the coefficient field of L (zero for an exact form)."""
    pts = [complex(p) for p in points]
    n = len(pts)

    def field(cfg):
        out = []
        for j in range(n):
            A = A_at(cfg, j)
            out += [A.real, -A.imag]
        return np.array(out)

    J = np.zeros((2 * n, 2 * n))
    for c in range(2 * n):
        j, comp = divmod(c, 2)
        step = h if comp == 0 else 1j * h
        plus, minus = list(pts), list(pts)
        plus[j] += step
        minus[j] -= step
        J[:, c] = (field(plus) - field(minus)) / (2 * h)
    return float(np.max(np.abs(J - J.T)))


def cft_log_gradient_fd(points, h: float = 1e-3) -> np.ndarray:
    """(d/dx_j, d/dy_j) of log CFT by a fourth-order central difference, flattened."""
    pts = [complex(p) for p in points]
    out = []
    for j in range(len(pts)):
        for step in (h, 1j * h):
            vals = []
            for m in (-2, -1, 1, 2):
                q = list(pts)
                q[j] += m * step
                vals.append(log_cft(q))
            out.append((vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h))
    return np.array(out)


def cft_log_gradient(points) -> np.ndarray:
    """Exact (d/dx_j, d/dy_j) of log CFT, flattened."""
    pts = _points(points)
    n = len(pts)
    L = np.zeros((n, n))
    # dL[s, m] / d(x_j, y_j) for the pair (s, m), s < m
    dL = np.zeros((n, n, n, 2))
    for s, m in itertools.combinations(range(n), 2):
        d1 = pts[s] - pts[m]
        d2 = pts[s] - pts[m].conjugate()
        L[s, m] = 0.5 * math.log(abs(d1 / d2))
        # L = (log|d1|^2 - log|d2|^2) / 4
        g1 = np.array([d1.real, d1.imag]) / abs(d1) ** 2 / 2
        g2 = np.array([d2.real, d2.imag]) / abs(d2) ** 2 / 2
        # d1 = (x_s - x_m) + i(y_s - y_m), d2 = (x_s - x_m) + i(y_s + y_m)
        dL[s, m, s] = g1 - g2
        dL[s, m, m] = -g1 - np.array([-g2[0], g2[1]])
    mus = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1)
    expo = np.einsum("ti,ij,tj->t", mus, L, mus)
    w = np.exp(expo - logsumexp(expo))
    pair = np.einsum("t,ti,tj->ij", w, mus, mus)  # E[mu_s mu_m]
    grad = 0.5 * np.einsum("ij,ijkc->kc", pair, dL)
    for j, p in enumerate(pts):
        grad[j, 1] -= 0.125 / p.imag
    return grad.reshape(-1)


def cft_gradient_residual(points) -> float:
    """Max |grad log CFT - (Re A_j, -Im A_j)| over all coordinates."""
    g = cft_log_gradient(points)
    pts = [complex(p) for p in points]
    ref = []
    for j in range(len(pts)):
        A = A_at(pts, j)
        ref += [A.real, -A.imag]
    return float(np.max(np.abs(g - np.array(ref))))


def imaginary_axis_residual(ws: Sequence[float]) -> float:
    """|d/dw_0 log CFT(i w) - i A(i w_0; ...)| (the latter is real on the imaginary axis)."""
    pts = [1j * w for w in ws]
    d = cft_log_gradient(pts)[1]
    return abs(d - 1j * coeff_A(pts))


# ---------------------------------------------------------------------------
# conformal maps onto the upper half-plane


class ConformalMap:
    """A conformal map phi from a domain onto the upper half-plane."""

    name = "map"

    def phi(self, z: complex) -> complex:
        raise NotImplementedError

    def dphi(self, z: complex) -> complex:
        raise NotImplementedError

    def d2phi(self, z: complex) -> complex:
        raise NotImplementedError

    def contains(self, z: complex) -> bool:
        return True

    def check(self, z: complex) -> None:
        if not self.contains(z):
            raise NotConformal(f"{z} lies outside the domain")
        if abs(self.dphi(z)) < 1e-300:
            raise NotConformal(f"derivative vanishes at {z}")


@dataclass
class Mobius(ConformalMap):
    """phi(z) = (a z + b)/(c z + d) with real coefficients and ad - bc > 0 (an automorphism of H)."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    name = "mobius"

    def __post_init__(self):
        if any(isinstance(x, complex) and x.imag for x in (self.a, self.b, self.c, self.d)):
            raise NotConformal("coefficients must be real to preserve the half-plane")
        if self.a * self.d - self.b * self.c <= 0:
            raise NotConformal("ad - bc must be positive")

    def phi(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def dphi(self, z):
        return (self.a * self.d - self.b * self.c) / (self.c * z + self.d) ** 2

    def d2phi(self, z):
        return -2 * self.c * (self.a * self.d - self.b * self.c) / (self.c * z + self.d) ** 3

    def contains(self, z):
        return complex(z).imag > 0


@dataclass
class DiscMap(ConformalMap):
    """Disc |z - center| < radius onto H, center -> i, via w -> i(1 + w)/(1 - w)."""

    center: complex = 0j
    radius: float = 1.0
    name = "disc"

    def _w(self, z):
        return (z - self.center) / self.radius

    def phi(self, z):
        w = self._w(z)
        return 1j * (1 + w) / (1 - w)

    def dphi(self, z):
        w = self._w(z)
        return 2j / (1 - w) ** 2 / self.radius

    def d2phi(self, z):
        w = self._w(z)
        return 4j / (1 - w) ** 3 / self.radius**2

    def contains(self, z):
        return abs(self._w(z)) < 1

    def conformal_radius(self, z) -> float:
        return self.radius * (1 - abs(self._w(z)) ** 2)


class DiamondMap(ConformalMap):
    """Square |x - cx| + |y - cy| < h (a square with vertices on the axes) onto H.

    Schwarz-Christoffel: z = center + (h/K) g(w), g(w) = int_0^w (1 - t^4)^{-1/2} dt,
    K = g(1); the disc variable w is found by Newton iteration and sent to H by DiscMap.
    """

    name = "diamond"

    def __init__(self, center: complex = 0j, half_diagonal: float = 1.0, terms: int = 4000):
        self.center = complex(center)
        self.h = float(half_diagonal)
        j = np.arange(terms)
        # binom(-1/2, j) (-1)^j = (2j)! / (4^j j!^2)
        logc = np.cumsum(np.concatenate([[0.0], np.log((2 * j[1:] - 1) / (2 * j[1:]))]))
        self.coef = np.exp(logc) / (4 * j + 1)
        self.powers = 4 * j + 1
        from scipy.special import gamma

        self.K = gamma(0.25) ** 2 / (4 * math.sqrt(2 * math.pi))
        self.disc = DiscMap()

    def g(self, w):
        return np.sum(self.coef * w ** self.powers)

    def dg(self, w):
        return (1 - w**4) ** -0.5

    def d2g(self, w):
        return 2 * w**3 * (1 - w**4) ** -1.5

    def w_of(self, z) -> complex:
        t = (complex(z) - self.center) * self.K / self.h
        w = t / self.K * 0.9 if abs(t) > 0 else 0j
        for _ in range(100):
            dw = (self.g(w) - t) / self.dg(w)
            w -= dw
            if abs(w) >= 1:
                w = w / abs(w) * 0.999
            if abs(dw) < 1e-15:
                break
        return complex(w)

    def contains(self, z):
        z = complex(z) - self.center
        return abs(z.real) + abs(z.imag) < self.h

    def _chain(self, z):
        w = self.w_of(z)
        s = self.h / self.K
        gp = s * self.dg(w)
        gpp = s * self.d2g(w)
        wp = 1 / gp
        wpp = -gpp / gp**3
        return w, wp, wpp

    def phi(self, z):
        return self.disc.phi(self.w_of(z))

    def dphi(self, z):
        w, wp, _ = self._chain(z)
        return self.disc.dphi(w) * wp

    def d2phi(self, z):
        w, wp, wpp = self._chain(z)
        return self.disc.d2phi(w) * wp**2 + self.disc.dphi(w) * wpp


class Identity(ConformalMap):
    name = "identity"

    def phi(self, z):
        return complex(z)

    def dphi(self, z):
        return 1.0 + 0j

    def d2phi(self, z):
        return 0j

    def contains(self, z):
        return complex(z).imag > 0


# ---------------------------------------------------------------------------
# transport rules


def transport_A(cmap: ConformalMap, points) -> complex:
    """A_Omega(a; ...) = A_H(phi(a); phi(...)) phi'(a) + phi''(a) / (8 phi'(a))."""
    pts = [complex(p) for p in points]
    for p in pts:
        cmap.check(p)
    img = [cmap.phi(p) for p in pts]
    d1 = cmap.dphi(pts[0])
    return coeff_A(img) * d1 + cmap.d2phi(pts[0]) / (8 * d1)


def transport_B(cmap: ConformalMap, a, b) -> float:
    for p in (a, b):
        cmap.check(p)
    return coeff_B(cmap.phi(a), cmap.phi(b))


def transport_correlation(cmap: ConformalMap, points, bc: str = "plus", method: str = "closed") -> CorrelationValue:
    """Correlation in the domain of cmap from the half-plane value and prod |phi'(a_j)|^{1/8}."""
    pts = [complex(p) for p in points]
    for p in pts:
        cmap.check(p)
    img = [cmap.phi(p) for p in pts]
    if method == "closed":
        base = closed_form_halfplane(img, bc)
    elif method == "cft":
        if bc != "plus":
            raise UnsupportedK("the CFT formula is for plus boundary conditions")
        base = cft_correlation(img).value
    elif method == "L":
        base = correlation_via_L(img)
    else:
        raise ValueError(f"unknown method {method!r}")
    fac = math.prod(abs(cmap.dphi(p)) ** 0.125 for p in pts)
    return CorrelationValue(base * fac, bc if method == "closed" else ("cft" if method == "cft" else "cont"), cmap.name)


def transport_spinor(cmap: ConformalMap, points, z):
    """f_Omega(z) = f_H(phi(z)) phi'(z)^{1/2}, up to sign."""
    img = [cmap.phi(p) for p in points]
    sp = solve_halfplane_spinor(img)
    return sp.f(cmap.phi(z)) * cmath.sqrt(cmap.dphi(z))


def closed_form_correlation(points, bc: str = "plus", cmap: Optional[ConformalMap] = None) -> CorrelationValue:
    if len(points) > 2:
        raise UnsupportedK("closed forms exist for k <= 1")
    if cmap is None:
        return CorrelationValue(closed_form_halfplane(points, bc), bc)
    return transport_correlation(cmap, points, bc)


# ---------------------------------------------------------------------------
# decorrelation limits


def boundary_decorrelation(points) -> float:
    """<s_a s_rest> / (<s_a> <s_rest>) - 1, with a = points[0]."""
    pts = _points(points)
    whole = _correlation_any(pts)
    return whole / (closed_form_halfplane(pts[:1]) * _correlation_any(pts[1:])) - 1


def _correlation_any(pts) -> float:
    if len(pts) <= 2:
        return closed_form_halfplane(pts)
    return correlation_via_L(pts)


def merging_decorrelation(a: complex, b: complex) -> float:
    """<s_a s_b>_H / |a - b|^{-1/4} - 1."""
    return closed_form_halfplane((a, b)) * abs(a - b) ** 0.25 - 1


def D_halfplane(a: complex, b: complex) -> float:
    return abs(a - b) / min(a.imag, b.imag)


def decorrelation_check(points, which: str) -> float:
    """Residual of a decorrelation limit at the given configuration (absolute value)."""
    pts = _points(points)
    if len(pts) < 2:
        raise UnsupportedK("decorrelation needs k >= 1")
    if which == "boundary":
        return abs(boundary_decorrelation(pts))
    if which == "merging":
        if len(pts) != 2:
            raise UnsupportedK("merging is defined for two points")
        return abs(merging_decorrelation(*pts))
    raise ValueError(f"unknown decorrelation kind {which!r}")


DECORRELATION_SWEEPS = {
    # Im a -> 0 for the first point, others fixed
    "boundary_k1": [((0.3 + 1j * eta), 2j) for eta in (1e-1, 1e-2, 1e-3)],
    "boundary_k2": [((0.3 + 1j * eta), 2j, 0.5 + 3j) for eta in (1e-1, 1e-2, 1e-3)],
    # D(a; b) -> 0
    "merging": [(1j, 1j + eps) for eps in (1e-1, 1e-2, 1e-3)],
}
