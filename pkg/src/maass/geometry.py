"""Upper half-plane primitives and the action of SL(2, Z).

Points are handled in vectorized form internally (arrays ``x``, ``y``); the
small dataclasses below are the public single-point types.  Group elements are
kept canonical: ``c > 0``, or ``c == 0`` and ``a > 0``.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_heights, check_positive

__all__ = [
    "Y0",
    "BOUNDARY_TOL",
    "UpperHalfPlanePoint",
    "GroupElement",
    "HorocycleSample",
    "IDENTITY",
    "T",
    "S",
    "PullbackError",
    "apply_moebius",
    "hyperbolic_distance",
    "in_fundamental_domain",
    "pullback_modular",
    "pullback_modular_arrays",
    "pullback_generic",
    "pullback_generic_arrays",
    "sample_horocycle",
]

# Height of the lowest points of the standard fundamental domain.
Y0 = math.sqrt(3.0) / 2.0
BOUNDARY_TOL = 1e-12


class PullbackError(RuntimeError):
    """Pullback iteration did not terminate within its cap."""


@dataclass(frozen=True)
class UpperHalfPlanePoint:
    x: float
    y: float

    def __post_init__(self):
        check_positive(self.y, "y")

    @property
    def z(self):
        return complex(self.x, self.y)


@dataclass(frozen=True)
class GroupElement:
    """Integer matrix ``[[a, b], [c, d]]`` of determinant one, up to sign."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        a, b, c, d = (int(v) for v in (self.a, self.b, self.c, self.d))
        if a * d - b * c != 1:
            raise ValueError(f"determinant must be 1, got {a * d - b * c}")
        if c < 0 or (c == 0 and a < 0):
            a, b, c, d = -a, -b, -c, -d
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def __matmul__(self, other):
        return GroupElement(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self):
        return GroupElement(self.d, -self.b, -self.c, self.a)

    def as_array(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.int64)


IDENTITY = GroupElement(1, 0, 0, 1)
T = GroupElement(1, 1, 0, 1)
S = GroupElement(0, -1, 1, 0)


def _split(v):
    t = 134217729.0 * v
    hi = t - (t - v)
    return hi, v - hi


def _two_product(p, q):
    s = p * q
    ph, pl = _split(p)
    qh, ql = _split(q)
    return s, ((ph * qh - s) + ph * ql + pl * qh) + pl * ql


def _two_sum(p, q):
    s = p + q
    bb = s - p
    return s, (p - (s - bb)) + (q - bb)


def _moebius(a, b, c, d, x, y):
    # (az + b)/(cz + d) in real coordinates; the determinant is 1.
    # cx + d cancels badly near cusps, so it is formed with error-free
    # transformations and x* is written as a/c - Re 1/(c(cz + d)).
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    p, e1 = _two_product(c, x)
    s, e2 = _two_sum(p, d)
    u = s + (e1 + e2)
    den = u * u + (c * y) ** 2
    safe_c = np.where(c == 0.0, 1.0, c)
    xs = np.where(c == 0.0, (a * x + b) * d, a / safe_c - u / (safe_c * den))
    return xs, y / den


def apply_moebius(g, z):
    """Linear fractional action ``g . z``."""
    xs, ys = _moebius(g.a, g.b, g.c, g.d, z.x, z.y)
    return UpperHalfPlanePoint(float(xs), float(ys))


def _cosh_distance(x1, y1, x2, y2):
    return 1.0 + ((x1 - x2) ** 2 + (y1 - y2) ** 2) / (2.0 * y1 * y2)


def hyperbolic_distance(z1, z2):
    """Hyperbolic distance in the upper half-plane."""
    # arcsinh form keeps full relative accuracy for nearby points
    chord = math.hypot(z1.x - z2.x, z1.y - z2.y)
    return 2.0 * math.asinh(chord / (2.0 * math.sqrt(z1.y * z2.y)))


def in_fundamental_domain(x, y, tol=BOUNDARY_TOL):
    """Closed standard domain ``|x| <= 1/2``, ``x^2 + y^2 >= 1`` with tolerance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (np.abs(x) <= 0.5 + tol) & (x * x + y * y >= 1.0 - tol) & (y > 0)


def _iteration_cap(y):
    ymin = float(np.min(y))
    return 10 + math.ceil(abs(math.log2(ymin))) * 64


def _canonical(a, b, c, d):
    flip = (c < 0) | ((c == 0) & (a < 0))
    sign = np.where(flip, -1, 1)
    return a * sign, b * sign, c * sign, d * sign


def pullback_modular_arrays(x, y):
    """Vectorized pullback into the standard domain.

    Returns ``(xs, ys, g)`` where ``g`` has shape ``(n, 2, 2)`` (int64) and
    ``g[j] . (x[j], y[j]) = (xs[j], ys[j])``.  The image is recomputed from the
    original point after every step, so it is always consistent with ``g``.
    """
    x0 = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    y0 = np.atleast_1d(check_heights(y)).astype(float)
    x0, y0 = np.broadcast_arrays(x0, y0)
    n = x0.shape[0]
    a = np.ones(n, dtype=np.int64)
    b = np.zeros(n, dtype=np.int64)
    c = np.zeros(n, dtype=np.int64)
    d = np.ones(n, dtype=np.int64)
    xs, ys = x0.copy(), y0.copy()
    if n == 0:
        return xs, ys, np.zeros((0, 2, 2), dtype=np.int64)
    cap = _iteration_cap(y0)
    active = np.arange(n)
    for _ in range(cap):
        xa, ya = xs[active], ys[active]
        shift = np.abs(xa) > 0.5 + BOUNDARY_TOL
        k = np.where(shift, np.floor(xa + 0.5), 0.0).astype(np.int64)
        aa, bb, cc, dd = a[active], b[active], c[active], d[active]
        # T^{-k} g
        aa = aa - k * cc
        bb = bb - k * dd
        xa, ya = _moebius(aa, bb, cc, dd, x0[active], y0[active])
        flip = xa * xa + ya * ya < 1.0 - BOUNDARY_TOL
        # S g = [[-c, -d], [a, b]]
        aa, bb, cc, dd = (
            np.where(flip, -cc, aa),
            np.where(flip, -dd, bb),
            np.where(flip, aa, cc),
            np.where(flip, bb, dd),
        )
        aa, bb, cc, dd = _canonical(aa, bb, cc, dd)
        xa, ya = _moebius(aa, bb, cc, dd, x0[active], y0[active])
        a[active], b[active], c[active], d[active] = aa, bb, cc, dd
        xs[active], ys[active] = xa, ya
        done = ~(shift | flip) | in_fundamental_domain(xa, ya)
        active = active[~done]
        if active.size == 0:
            break
    else:
        raise PullbackError("pullback did not terminate; degenerate input?")
    g = np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)
    return xs, ys, g


def pullback_modular(z):
    """Pull ``z`` back into the standard domain; returns ``(z*, g)``."""
    xs, ys, g = pullback_modular_arrays(z.x, z.y)
    return UpperHalfPlanePoint(float(xs[0]), float(ys[0])), GroupElement(*g[0].ravel().tolist())


def _matrix_power(g, e):
    m = np.eye(2, dtype=np.int64)
    base = g.as_array()
    while e:
        if e & 1:
            m = m @ base
        base = base @ base
        e >>= 1
    return m


def _power_stride(g, x, y, p):
    """Largest power ``2**k`` of ``g`` such that each doubling still reduces the distance."""
    power = np.ones(x.shape[0], dtype=np.int64)
    h = g.as_array()
    gx, gy = _moebius(h[0, 0], h[0, 1], h[1, 0], h[1, 1], x, y)
    best = _cosh_distance(gx, gy, p.x, p.y)
    live = np.ones(x.shape[0], dtype=bool)
    for _ in range(40):
        h = h @ h
        if np.abs(h).max() > 2**40:
            break
        gx, gy = _moebius(h[0, 0], h[0, 1], h[1, 0], h[1, 1], x, y)
        dist = _cosh_distance(gx, gy, p.x, p.y)
        live &= dist < best - BOUNDARY_TOL * best
        if not live.any():
            break
        power = np.where(live, power * 2, power)
        best = np.where(live, dist, best)
    return power


def pullback_generic_arrays(x, y, generators, p=UpperHalfPlanePoint(0.0, 2.0), max_iter=None):
    """Greedy distance-reducing pullback towards the Dirichlet center ``p``.

    At every step the generator (or inverse) bringing the point closest to ``p``
    is applied, as long as it strictly reduces the distance.  A chosen
    generator is applied with the largest power ``2**k`` along which the
    distance keeps decreasing, so long parabolic runs cost O(log) steps.  Vectorized over
    points; returns ``(xs, ys, g)`` like :func:`pullback_modular_arrays`.
    """
    x0 = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    y0 = np.atleast_1d(check_heights(y)).astype(float)
    x0, y0 = np.broadcast_arrays(x0, y0)
    gens = []
    for g in generators:
        gens.append(g)
        gens.append(g.inverse())
    n = x0.shape[0]
    a = np.ones(n, dtype=np.int64)
    b = np.zeros(n, dtype=np.int64)
    c = np.zeros(n, dtype=np.int64)
    d = np.ones(n, dtype=np.int64)
    xs, ys = x0.copy(), y0.copy()
    if n == 0:
        return xs, ys, np.zeros((0, 2, 2), dtype=np.int64)
    cap = max_iter if max_iter is not None else _iteration_cap(y0)
    active = np.arange(n)
    for _ in range(cap):
        xa, ya = xs[active], ys[active]
        current = _cosh_distance(xa, ya, p.x, p.y)
        best = current.copy()
        choice = np.full(active.size, -1)
        for k, g in enumerate(gens):
            gx, gy = _moebius(g.a, g.b, g.c, g.d, xa, ya)
            dist = _cosh_distance(gx, gy, p.x, p.y)
            better = dist < best - BOUNDARY_TOL * best
            best = np.where(better, dist, best)
            choice = np.where(better, k, choice)
        moved = choice >= 0
        if not moved.any():
            break
        idx = active[moved]
        for k, g in enumerate(gens):
            sel = idx[choice[moved] == k]
            if sel.size == 0:
                continue
            # stride: double the power of g while the distance keeps dropping
            power = _power_stride(g, xs[sel], ys[sel], p)
            for e in np.unique(power):
                part = sel[power == e]
                h = _matrix_power(g, int(e))
                na = h[0, 0] * a[part] + h[0, 1] * c[part]
                nb = h[0, 0] * b[part] + h[0, 1] * d[part]
                nc = h[1, 0] * a[part] + h[1, 1] * c[part]
                nd = h[1, 0] * b[part] + h[1, 1] * d[part]
                a[part], b[part], c[part], d[part] = _canonical(na, nb, nc, nd)
        xs[idx], ys[idx] = _moebius(a[idx], b[idx], c[idx], d[idx], x0[idx], y0[idx])
        active = idx
    else:
        raise PullbackError("generic pullback exceeded its iteration cap; invalid generator set?")
    g = np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2)
    return xs, ys, g


def pullback_generic(z, generators=(T, S), p=UpperHalfPlanePoint(0.0, 2.0)):
    """Pull ``z`` into the Dirichlet domain of the group generated by ``generators`` centered at ``p``."""
    xs, ys, g = pullback_generic_arrays(z.x, z.y, generators, p)
    return UpperHalfPlanePoint(float(xs[0]), float(ys[0])), GroupElement(*g[0].ravel().tolist())


@dataclass(frozen=True, eq=False)
class HorocycleSample:
    """Equidistant points on the half horocycle ``0 < x < 1/2`` at height ``y``.

    ``x[j] = (j + 1/2) / (2Q)`` for ``j = 0..Q-1``; ``xs``, ``ys`` are the
    pullbacks and ``maps[j]`` the matrices with ``maps[j] . z_j = z_j*``.
    """

    y: float
    Q: int
    x: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    maps: np.ndarray

    @property
    def points(self):
        return [UpperHalfPlanePoint(float(v), self.y) for v in self.x]

    @property
    def pullbacks(self):
        return [UpperHalfPlanePoint(float(u), float(v)) for u, v in zip(self.xs, self.ys)]

    @property
    def group_elements(self):
        return [GroupElement(*m.ravel().tolist()) for m in self.maps]


@lru_cache(maxsize=256)
def _sample_cached(y, Q):
    x = (np.arange(Q) + 0.5) / (2.0 * Q)
    xs, ys, maps = pullback_modular_arrays(x, np.full(Q, y))
    for arr in (x, xs, ys, maps):
        arr.setflags(write=False)
    return HorocycleSample(y=y, Q=Q, x=x, xs=xs, ys=ys, maps=maps)


def sample_horocycle(y, Q):
    """Sample ``Q`` points on the symmetrized horocycle at height ``y < Y0``."""
    y = check_positive(y, "y")
    if y >= Y0:
        raise ValueError("horocycle above fundamental-domain floor (y must be < sqrt(3)/2)")
    Q = int(Q)
    if Q < 1:
        raise ValueError("Q must be a positive integer")
    return _sample_cached(y, Q)
