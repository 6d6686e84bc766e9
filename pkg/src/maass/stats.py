"""Fluctuation statistics of the Weyl remainder ``S(t) = N(t) - M(t)``.

Between consecutive eigenvalues ``S`` is the smooth function ``k - M(t)``, so
every integral and occupation measure here is computed piece by piece
between jumps rather than from sampled series.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .turing import EigenvalueList, _rs, weyl_main_term, _weyl_main_derivative

__all__ = [
    "KINDS",
    "T_MIN",
    "SIGMA_REFERENCE",
    "UnverifiedRangeError",
    "ScaledSeries",
    "WindowMoments",
    "scale_factor",
    "sample_series",
    "window_moments",
    "window_sweep",
    "estimate_sigma",
    "histogram_clt",
    "lil_extremes",
]

KINDS = ("raw", "li_sarnak", "sqrt", "clt", "lil")
T_MIN = {"raw": 0.0, "sqrt": 0.0, "li_sarnak": 15.0, "clt": 15.0, "lil": 15.0}
SIGMA_REFERENCE = 0.140


class UnverifiedRangeError(ValueError):
    """Statistics requested outside the verified-consecutive range."""


def _clt_weight(t):
    return np.log(np.log(t)) / np.sqrt(t)


def scale_factor(kind, t, sigma=1.0):
    """Multiplier applied to ``S`` (or ``|S|``) for each series kind."""
    t = np.asarray(t, dtype=float)
    if kind == "raw":
        return np.ones_like(t)
    if kind == "sqrt":
        return 1.0 / np.sqrt(t)
    if kind == "li_sarnak":
        return np.log(t) / np.sqrt(t) * np.exp(-0.5 * np.log(np.log(t)) ** (5.0 / 17.0))
    if kind == "clt":
        return _clt_weight(t) / sigma
    if kind == "lil":
        return np.sqrt(np.log(np.log(t)) / (2.0 * t))
    raise ValueError(f"unknown series kind {kind!r}")


def _uses_abs(kind):
    return kind in ("li_sarnak", "sqrt", "lil")


def _check_range(a, b, verified_t, override, kind=None):
    if not b > a:
        raise UnverifiedRangeError("empty range")
    if kind is not None and a < T_MIN[kind]:
        raise ValueError(f"range starts below t_min = {T_MIN[kind]} for {kind}")
    if not override and (verified_t is None or b > verified_t):
        raise UnverifiedRangeError(
            f"range end {b} exceeds the verified-consecutive bound {verified_t}; pass override to force"
        )


@dataclass(frozen=True)
class ScaledSeries:
    """Samples ``(t, left, right)``: both one-sided limits at jumps, equal elsewhere."""

    kind: str
    t: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sigma: float = 1.0
    metadata: dict = field(default_factory=dict)


def sample_series(kind, lst, t_range, density=20, verified_t=None, override=False, sigma=1.0):
    """Dense sampling of a scaled remainder series.

    Samples every eigenvalue jump (both sides), each piece midpoint and a
    uniform grid of ``density`` points per unit of ``t``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown series kind {kind!r}")
    a, b = map(float, t_range)
    _check_range(a, b, verified_t, override, kind)
    rs = _rs(lst)
    jumps = rs[(rs >= a) & (rs <= b)]
    edges = np.unique(np.concatenate([[a, b], jumps]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    grid = np.linspace(a, b, max(2, int(math.ceil((b - a) * density)) + 1))
    t = np.unique(np.concatenate([edges, mids, grid]))
    t = t[t > 0]
    m = weyl_main_term(t)
    left = np.searchsorted(rs, t, side="left") - m
    right = np.searchsorted(rs, t, side="right") - m
    f = scale_factor(kind, t, sigma)
    if _uses_abs(kind):
        left, right = np.abs(left), np.abs(right)
    meta = {"t_min": T_MIN[kind], "override_unverified": bool(override), "verified_t": verified_t}
    return ScaledSeries(kind, t, f * left, f * right, sigma, meta)


@dataclass(frozen=True)
class WindowMoments:
    a: float
    b: float
    mu: float
    sigma: float


def _piece_edges(rs, a, b):
    inner = rs[(rs > a) & (rs < b)]
    return np.concatenate([[a], inner, [b]])


def window_moments(lst, a, b, verified_t=None, override=False, epsabs=1e-10):
    """Mean and deviation of ``w(t) S(t)`` over ``[a, b]``, ``w = log log t / sqrt t``.

    Exact piecewise integration: on each piece ``S = k - M(t)`` is smooth.
    """
    a, b = float(a), float(b)
    if a < T_MIN["clt"]:
        raise ValueError(f"window must start at t >= {T_MIN['clt']}")
    _check_range(a, b, verified_t, override)
    rs = _rs(lst)
    edges = _piece_edges(rs, a, b)
    k0 = np.searchsorted(rs, edges[:-1], side="right")
    total = 0.0
    pieces = []
    for (u, v), k in zip(zip(edges[:-1], edges[1:]), k0):
        if v - u <= 0:
            continue
        g = lambda t, k=k: _clt_weight(t) * (k - weyl_main_term(t))
        val, _ = quad(g, u, v, epsabs=epsabs, epsrel=1e-12, limit=200)
        total += val
        pieces.append((u, v, g))
    mu = total / (b - a)
    var = 0.0
    for u, v, g in pieces:
        val, _ = quad(lambda t: (g(t) - mu) ** 2, u, v, epsabs=epsabs, epsrel=1e-12, limit=200)
        var += val
    return WindowMoments(a, b, float(mu), float(math.sqrt(max(var, 0.0) / (b - a))))


def window_sweep(lst, centers, half_width, verified_t=None, override=False):
    """``(t, mu, sigma)`` rows for windows ``[t - half_width, t + half_width]``."""
    rows = []
    for c in centers:
        wm = window_moments(lst, c - half_width, c + half_width, verified_t, override)
        rows.append((float(c), wm.mu, wm.sigma))
    return np.array(rows).reshape(-1, 3)


def estimate_sigma(lst, t_range, verified_t=None, override=False):
    """Window deviation over the whole range: the data-driven scale for the CLT series."""
    return window_moments(lst, t_range[0], t_range[1], verified_t, override).sigma


def _clt_value(t, k, sigma):
    return _clt_weight(t) * (k - weyl_main_term(t)) / sigma


def _clt_slope(t, k, sigma):
    L = np.log(t)
    dw = (1.0 / (t * L) - 0.5 * np.log(L)) / t**1.5
    return (dw * (k - weyl_main_term(t)) - _clt_weight(t) * _weyl_main_derivative(t)) / sigma


def _monotone_pieces(u, v, k, sigma, n=32):
    """Split ``[u, v]`` at the critical points of the scaled value."""
    ts = np.linspace(u, v, n + 1)
    d = _clt_slope(ts, k, sigma)
    cuts = [u]
    for p, q, dp, dq in zip(ts[:-1], ts[1:], d[:-1], d[1:]):
        if dp == 0.0:
            if p > cuts[-1]:
                cuts.append(p)
        elif dp * dq < 0:
            cuts.append(brentq(lambda s: _clt_slope(s, k, sigma), p, q, xtol=1e-14))
    cuts.append(v)
    return cuts


def histogram_clt(lst, t_range, bins=40, sigma=None, verified_t=None, override=False, value_range=None):
    """Occupation-measure density of ``(log log t / sqrt t) S(t) / sigma`` over ``t_range``.

    Returns ``(table, sigma)`` where ``table`` has columns bin center,
    empirical density, standard Gaussian density.  The time spent in each bin
    is computed exactly on monotone subpieces (root solving at bin edges).
    """
    if bins < 10:
        raise ValueError("need at least 10 bins")
    a, b = map(float, t_range)
    if a < T_MIN["clt"]:
        raise ValueError(f"range must start at t >= {T_MIN['clt']}")
    _check_range(a, b, verified_t, override)
    rs = _rs(lst)
    if sigma is None:
        sigma = estimate_sigma(lst, (a, b), verified_t, override)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    edges_t = _piece_edges(rs, a, b)
    ks = np.searchsorted(rs, edges_t[:-1], side="right")
    segments = []
    lo_v, hi_v = math.inf, -math.inf
    for (u, v), k in zip(zip(edges_t[:-1], edges_t[1:]), ks):
        if v <= u:
            continue
        cuts = _monotone_pieces(u, v, k, sigma)
        for p, q in zip(cuts[:-1], cuts[1:]):
            if q <= p:
                continue
            vp, vq = _clt_value(p, k, sigma), _clt_value(q, k, sigma)
            segments.append((p, q, k, vp, vq))
            lo_v, hi_v = min(lo_v, vp, vq), max(hi_v, vp, vq)
    if value_range is None:
        pad = 1e-9 * max(1.0, hi_v - lo_v)
        value_range = (lo_v - pad, hi_v + pad)
    vedges = np.linspace(value_range[0], value_range[1], bins + 1)
    occupation = np.zeros(bins)
    for p, q, k, vp, vq in segments:
        # t at which the monotone value crosses each interior bin edge
        lo, hi = min(vp, vq), max(vp, vq)
        inside = vedges[(vedges > lo) & (vedges < hi)]
        ts = [p]
        for e in (inside if vq >= vp else inside[::-1]):
            ts.append(brentq(lambda s: _clt_value(s, k, sigma) - e, p, q, xtol=1e-13))
        ts.append(q)
        for s0, s1 in zip(ts[:-1], ts[1:]):
            mid = _clt_value(0.5 * (s0 + s1), k, sigma)
            j = int(np.clip(np.searchsorted(vedges, mid, side="right") - 1, 0, bins - 1))
            occupation[j] += s1 - s0
    width = vedges[1] - vedges[0]
    density = occupation / (occupation.sum() * width)
    centers = 0.5 * (vedges[:-1] + vedges[1:])
    gauss = np.exp(-0.5 * centers**2) / math.sqrt(2.0 * math.pi)
    return np.column_stack([centers, density, gauss]), float(sigma)


def lil_extremes(lst, t_range, sigma=None, density=20, verified_t=None, override=False):
    """Running supremum of ``(log log t / (2t))^(1/2) |S(t)|`` and its ratio to ``sigma``.

    Returns ``(table, sigma)`` with columns t, running sup, ratio.
    """
    a, b = map(float, t_range)
    if sigma is None:
        sigma = estimate_sigma(lst, (a, b), verified_t, override)
    series = sample_series("lil", lst, (a, b), density, verified_t, override)
    vals = np.maximum(series.left, series.right)
    sup = np.maximum.accumulate(vals)
    return np.column_stack([series.t, sup, sup / sigma]), float(sigma)
