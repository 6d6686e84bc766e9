"""K-Bessel function of imaginary order, exponentially rescaled.

All values are ``kappa(r, x) = exp(pi*r/2) * K_{ir}(x)``.  The rescaling keeps
the oscillatory region ``x < r`` at O(r**-1/2) instead of O(exp(-pi*r/2)), and
it cancels in every ratio the Hejhal machinery forms.

Evaluation strategy
-------------------
For a fixed order the requested arguments are sorted and served by one pass:

* The starting value at the largest argument ``x_top > r`` comes from the
  integral along the steepest-descent path through the saddle ``i*arcsin(r/x)``
  where the integrand is positive and non-oscillatory (trapezoidal rule).
* From ``x_top`` downwards the Bessel ODE in ``s = log x``,
  ``u'' = (exp(2s) - r**2) u``, is integrated with a high-order Taylor method.
  Downward integration is stable: ``K`` is the dominant solution in that
  direction for ``x > r`` and the equation is oscillatory below the turning
  point.  Each step keeps its Taylor polynomial, so every requested point is a
  polynomial evaluation (exact dense output).
* Arguments far above the order are evaluated by the path integral directly.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._validation import check_positive

__all__ = [
    "besselk_ir_scaled",
    "besselk_ir_scaled_path",
    "TruncationBound",
    "decay_threshold",
    "truncation_M",
    "DEFAULT_EPSILON",
    "TruncationError",
]

DEFAULT_EPSILON = 1e-9

# Taylor order and the per-step bound on omega*|h|; truncation ~ 3**32/32!.
_ORDER = 32
_OMEGA_H = 3.0
_LOG_TINY = -745.0

# Largest argument served by the ODE sweep; beyond it the path integral is used.
_DIRECT_MARGIN = 250.0

# Tail allowance used by the truncation bound: coefficients grow like n**(3/4)
# and the geometric spread of the tail is covered by a factor 10.
_GROWTH_EXPONENT = 0.75
_TAIL_ALLOWANCE = 10.0
_M_HARD_CAP = 100_000


class TruncationError(ValueError):
    """Requested truncation would exceed the configured hard cap."""


@njit(cache=True)
def _u_over_sinh(u):
    if abs(u) < 1e-3:
        u2 = u * u
        return 1.0 - u2 / 6.0 + 7.0 * u2 * u2 / 360.0
    return u / math.sinh(u)


@njit(cache=True)
def _d_u_over_sinh(u):
    if abs(u) < 1e-3:
        return -u / 3.0 + 7.0 * u * u * u / 90.0
    sh = math.sinh(u)
    return (sh - u * math.cosh(u)) / (sh * sh)


@njit(cache=True)
def _path_integrals(r, x):
    """Steepest-descent integrals for ``x > r``.

    Returns ``(log_scale, i0, i1)`` with ``kappa = exp(log_scale) * i0`` and
    ``d kappa / dx = -exp(log_scale) * i1``.
    """
    ratio = r / x
    cos0 = math.sqrt((1.0 - ratio) * (1.0 + ratio))
    v0 = math.asin(ratio)
    log_scale = 0.5 * math.pi * r - x * cos0 - r * v0
    width = 1.0 / (math.sqrt(math.sqrt(max(x * x - r * r, 0.0))) + r ** (1.0 / 3.0) + 1.0)
    h = 0.12 * width
    i0 = 0.5
    i1 = 0.5 * cos0
    k = 1
    while True:
        u = k * h
        q = _u_over_sinh(u)
        sin_v = ratio * q
        cos_v = math.sqrt((1.0 - sin_v) * (1.0 + sin_v))
        v = math.asin(sin_v)
        ch = math.cosh(u)
        expo = -x * (ch * cos_v - cos0) - r * (v - v0)
        if expo < -60.0:
            break
        w = math.exp(expo)
        dv = ratio * _d_u_over_sinh(u) / cos_v
        i0 += w
        i1 += w * (ch * cos_v - dv * math.sinh(u) * sin_v)
        k += 1
        if k > 200000:
            break
    return log_scale, i0 * h, i1 * h


@njit(cache=True)
def _path_values(r, xs, out_log, out_val):
    for i in range(xs.shape[0]):
        ls, i0, _ = _path_integrals(r, xs[i])
        out_log[i] = ls
        out_val[i] = i0


@njit(cache=True)
def _taylor_sweep(r, s_top, u_top, du_top, log_top, s_query, out_val, out_log):
    """Integrate downward in s from ``s_top`` through all ``s_query``.

    ``s_query`` must be sorted in decreasing order.  ``(u_top, du_top)`` are the
    normalized value and s-derivative at ``s_top`` with common log scale
    ``log_top``.
    """
    n = _ORDER
    c = np.empty(n + 1)
    e = np.empty(n + 1)
    s0 = s_top
    u0 = u_top
    du0 = du_top
    logsc = log_top
    r2 = r * r
    q = 0
    nq = s_query.shape[0]
    while q < nq:
        x0 = math.exp(s0)
        omega = max(x0, r) + 1.0
        h = -min(_OMEGA_H / omega, 1.0)
        # make s0 + h exact so the grid does not drift against the queries
        s1 = s0 + h
        h = s1 - s0
        # Taylor coefficients in tau in [0, 1], s = s0 + h*tau
        c[0] = u0
        c[1] = h * du0
        e[0] = x0 * x0
        for j in range(1, n + 1):
            e[j] = e[j - 1] * (2.0 * h) / j
        h2 = h * h
        for k in range(n - 1):
            acc = -r2 * c[k]
            for j in range(k + 1):
                acc += e[j] * c[k - j]
            c[k + 2] = h2 * acc / ((k + 2) * (k + 1))
        while q < nq and s_query[q] >= s1:
            tau = (s_query[q] - s0) / h
            acc = c[n]
            for k in range(n - 1, -1, -1):
                acc = acc * tau + c[k]
            out_val[q] = acc
            out_log[q] = logsc
            q += 1
        if q >= nq:
            break
        u1 = c[n]
        du1 = n * c[n]
        for k in range(n - 1, -1, -1):
            u1 += c[k]
            if k > 0:
                du1 += k * c[k]
        du1 /= h
        # renormalize to keep the state O(1)
        norm = max(abs(u1), abs(du1) / omega)
        if norm > 0.0:
            u0 = u1 / norm
            du0 = du1 / norm
            logsc += math.log(norm)
        else:
            u0 = u1
            du0 = du1
        s0 = s1


def _combine(log_scale, val):
    with np.errstate(divide="ignore"):
        mag = np.log(np.abs(val))
    total = log_scale + mag
    under = total < _LOG_TINY
    out = np.where(under, 0.0, val * np.exp(np.where(under, 0.0, log_scale)))
    return out, under & (val != 0.0)


def _kappa_sorted(r, x):
    """kappa at sorted-descending, positive ``x`` for a single order ``r``."""
    n = x.shape[0]
    log_scale = np.zeros(n)
    val = np.zeros(n)
    x_start = r + max(12.0, 4.0 * r ** (1.0 / 3.0))
    x_direct = max(x_start, r + _DIRECT_MARGIN, 2.0 * r)
    direct = x > x_direct
    if direct.any():
        lg = np.empty(direct.sum())
        vv = np.empty(direct.sum())
        _path_values(r, x[direct], lg, vv)
        log_scale[direct] = lg
        val[direct] = vv
    sweep = ~direct
    if sweep.any():
        xs = x[sweep]
        x_top = max(x_start, xs[0])
        ls, i0, i1 = _path_integrals(r, x_top)
        # d kappa / ds = x d kappa / dx
        lg = np.empty(xs.shape[0])
        vv = np.empty(xs.shape[0])
        _taylor_sweep(r, math.log(x_top), i0, -x_top * i1, ls, np.log(xs), vv, lg)
        log_scale[sweep] = lg
        val[sweep] = vv
    return _combine(log_scale, val)


def besselk_ir_scaled(r, x, return_underflow=False):
    """Evaluate ``exp(pi*r/2) * K_{ir}(x)`` for real ``r`` and ``x > 0``.

    ``r`` is a scalar (``K_{ir} = K_{-ir}``, so its sign is dropped); ``x`` may
    be a scalar or an array of any shape.  Values whose magnitude is below the
    double-precision range are returned as exact zeros; pass
    ``return_underflow=True`` to also get the boolean mask of those entries.
    """
    r = abs(float(r))
    if not math.isfinite(r):
        raise ValueError("order must be finite")
    xa = np.asarray(x, dtype=float)
    if xa.size and not (np.all(np.isfinite(xa)) and np.all(xa > 0)):
        raise ValueError("besselk_ir_scaled is defined for x > 0 only")
    flat = xa.ravel()
    order = np.argsort(-flat, kind="stable")
    vals, under = _kappa_sorted(r, flat[order])
    out = np.empty_like(flat)
    flags = np.empty(flat.shape, dtype=bool)
    out[order] = vals
    flags[order] = under
    out = out.reshape(xa.shape)
    flags = flags.reshape(xa.shape)
    if xa.ndim == 0:
        out = float(out)
        flags = bool(flags)
    if return_underflow:
        return out, flags
    return out


def besselk_ir_scaled_path(r, x):
    """Direct steepest-descent evaluation, valid for ``x > r`` only."""
    r = abs(float(r))
    x = float(x)
    if not x > r:
        raise ValueError("path representation requires x > r")
    ls, i0, _ = _path_integrals(r, x)
    return i0 * math.exp(ls) if ls + math.log(i0) > _LOG_TINY else 0.0


def decay_threshold(r, epsilon=DEFAULT_EPSILON):
    """Smallest argument ``X >= r`` beyond which the rescaled tail is below ``epsilon``.

    The tail model is ``TAIL_ALLOWANCE * xi**(3/4) * |kappa(r, xi)| <= epsilon``
    for all ``xi >= X`` (``kappa`` is positive and decreasing there).
    """
    r = abs(float(r))
    check_positive(epsilon, "epsilon")
    step = 0.25
    lo = r
    while True:
        grid = lo + step * np.arange(1, 401)
        kap = besselk_ir_scaled(r, grid)
        tail = _TAIL_ALLOWANCE * grid**_GROWTH_EXPONENT * np.abs(kap)
        below = np.nonzero(tail < epsilon)[0]
        if below.size:
            # first grid point from which the (monotone) model stays below
            i = below[0]
            hi = grid[i]
            left = grid[i - 1] if i > 0 else lo
            f = lambda t: _TAIL_ALLOWANCE * t**_GROWTH_EXPONENT * besselk_ir_scaled(r, t) - epsilon
            for _ in range(40):
                mid = 0.5 * (left + hi)
                if f(mid) < 0:
                    hi = mid
                else:
                    left = mid
            return hi
        lo = grid[-1]
        if lo > r + 1e5:
            raise TruncationError("no decay threshold found")


@dataclass(frozen=True)
class TruncationBound:
    """Expansion length ``M`` keeping the dropped tail below ``epsilon`` for ``y >= Y``."""

    M: int
    epsilon: float
    Y: float


def truncation_M(r, y, epsilon=DEFAULT_EPSILON, hard_cap=_M_HARD_CAP):
    """Truncation bound ``M(Y) = X(r, epsilon) / (2 pi Y)`` rounded up."""
    check_positive(y, "y")
    check_positive(epsilon, "epsilon")
    big_x = decay_threshold(r, epsilon)
    M = max(1, math.ceil(big_x / (2.0 * math.pi * y)))
    if M > hard_cap:
        raise TruncationError(f"truncation length {M} exceeds the hard cap {hard_cap}")
    return TruncationBound(M=M, epsilon=float(epsilon), Y=float(y))
