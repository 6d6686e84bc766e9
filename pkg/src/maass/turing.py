"""Average Weyl law, Turing bounds, consecutiveness verdicts and the control loop.

Counting is over the full spectrum (even and odd forms together), which is
what the average Weyl law ``M(t)`` describes.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._validation import check_positive
from .eigensearch import ScanReport, SearchConfig, TrialGrid, scan

__all__ = [
    "EigenvalueRecord",
    "EigenvalueList",
    "TuringVerdict",
    "ControlConfig",
    "ControlResult",
    "Y_SCHEDULE",
    "weyl_main_term",
    "weyl_main_integral",
    "weyl_remainder",
    "weyl_remainder_sides",
    "averaged_remainder",
    "turing_bounds",
    "verdict",
    "fake_certification",
    "perturb_list",
    "control_loop",
    "CONCAVITY_FLOOR",
    "DEFAULT_T0",
]

log = logging.getLogger(__name__)

_C_LOG = math.e * math.sqrt(math.pi / 2.0)
_E_A = 6.59125
DEFAULT_T0 = 20.0
# deterministic height perturbations used when the loop stagnates
Y_SCHEDULE = (1.0, 0.91, 1.07, 0.83, 1.13, 0.77, 0.95, 1.03)


# -- eigenvalue lists ---------------------------------------------------------


@dataclass(frozen=True, order=True)
class EigenvalueRecord:
    r: float
    symmetry: str
    residual_phase1: float = 0.0
    residual_y_independence: float = 0.0
    note: str = ""


@dataclass(frozen=True)
class EigenvalueList:
    """Sorted records (by ``r``, then symmetry) with provenance notes."""

    entries: tuple = ()
    notes: tuple = ()

    def __post_init__(self):
        entries = tuple(sorted(self.entries, key=lambda e: (e.r, e.symmetry)))
        for e in entries:
            if not e.r > 0:
                raise ValueError("all spectral parameters must be positive")
        for sym in {e.symmetry for e in entries}:
            rs = [e.r for e in entries if e.symmetry == sym]
            if any(b <= a for a, b in zip(rs, rs[1:])):
                raise ValueError(f"duplicate r within symmetry {sym}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "notes", tuple(self.notes))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def r_values(self, symmetry=None):
        return np.array([e.r for e in self.entries if symmetry is None or e.symmetry == symmetry])

    def symmetries(self):
        return sorted({e.symmetry for e in self.entries})

    def with_note(self, note):
        return replace(self, notes=self.notes + (note,))

    @classmethod
    def from_candidates(cls, candidates, note=""):
        return cls(tuple(_record_of(c, note) for c in candidates))

    def merged(self, candidates, dedupe_tol=1e-7):
        """Copy with new candidates added unless an entry of the same symmetry is within ``dedupe_tol``."""
        entries = list(self.entries)
        added = 0
        for c in candidates:
            rec = c if isinstance(c, EigenvalueRecord) else _record_of(c)
            same = [e for e in entries if e.symmetry == rec.symmetry and abs(e.r - rec.r) < dedupe_tol]
            if same:
                continue
            entries.append(rec)
            added += 1
        return replace(self, entries=tuple(entries)), added


def _record_of(c, note=""):
    return EigenvalueRecord(
        r=float(c.r),
        symmetry=c.symmetry,
        residual_phase1=float(c.residual_phase1),
        residual_y_independence=float(c.residual_y_independence),
        note=note,
    )


def _rs(lst):
    if isinstance(lst, EigenvalueList):
        return lst.r_values()
    return np.sort(np.asarray(lst, dtype=float))


# -- Weyl law -----------------------------------------------------------------


def weyl_main_term(t):
    """``M(t) = t^2/12 - (2t/pi) log(t/(e sqrt(pi/2))) - 131/144``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("M(t) is defined for t > 0")
    out = t * t / 12.0 - (2.0 * t / math.pi) * np.log(t / _C_LOG) - 131.0 / 144.0
    return float(out) if out.ndim == 0 else out


def _weyl_main_derivative(t):
    return t / 6.0 - (2.0 / math.pi) * (np.log(t / _C_LOG) + 1.0)


def weyl_main_integral(t):
    """``int_0^t M = t^3/36 - (t^2/pi) log(t/c) + t^2/(2 pi) - 131 t/144``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(t > 0, t * t * np.log(np.where(t > 0, t, 1.0) / _C_LOG), 0.0)
    out = t**3 / 36.0 - log_term / math.pi + t * t / (2.0 * math.pi) - 131.0 * t / 144.0
    return float(out) if out.ndim == 0 else out


def weyl_remainder_sides(t, lst):
    """``(S(t-), S(t+))``: left and right limits of ``N(t) - M(t)``."""
    rs = _rs(lst)
    t = np.asarray(t, dtype=float)
    m = weyl_main_term(t)
    left = np.searchsorted(rs, t, side="left") - m
    right = np.searchsorted(rs, t, side="right") - m
    if np.ndim(left) == 0:
        return float(left), float(right)
    return left, right


def weyl_remainder(t, lst):
    """``S(t) = N(t) - M(t)`` with ``N`` right-continuous."""
    return weyl_remainder_sides(t, lst)[1]


def averaged_remainder(t, lst):
    """``<S>(t) = (1/t) [ sum_{r_j <= t} (t - r_j) - int_0^t M ]``."""
    rs = _rs(lst)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    csum = np.concatenate([[0.0], np.cumsum(rs)])
    k = np.searchsorted(rs, t, side="right")
    counted = k * t - csum[k]
    out = (counted - weyl_main_integral(t)) / t
    return float(out) if out.ndim == 0 else out


def turing_bounds(t):
    """``(-2E(t), E(t))`` with ``E(t) = (1 + 6.59125/log t)(pi/(12 log t))^2``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 1):
        raise ValueError("Turing bounds hold for t > 1")
    L = np.log(t)
    E = (1.0 + _E_A / L) * (math.pi / (12.0 * L)) ** 2
    if E.ndim == 0:
        return -2.0 * float(E), float(E)
    return -2.0 * E, E


def _E(t):
    return turing_bounds(t)[1]


# Above this height t*(<S> + 2E) and t*(<S> - E) are concave between
# consecutive eigenvalues: their second derivative is -M'(t) plus the tiny
# curvature of t*E(t).
def _concavity_floor():
    ts = np.linspace(2.0, 60.0, 5801)
    L = np.log(ts)
    b2 = (math.pi / 12.0) ** 2
    curv = (b2 / ts) * np.abs(-2 * L**-3 - 3 * _E_A * L**-4 + 6 * L**-4 + 12 * _E_A * L**-5)
    bad = _weyl_main_derivative(ts) <= 2.0 * curv
    return float(ts[np.nonzero(bad)[0][-1]] + 0.01) if bad.any() else 2.0


CONCAVITY_FLOOR = _concavity_floor()


# -- verdicts -----------------------------------------------------------------


@dataclass(frozen=True)
class TuringVerdict:
    t: float
    T: float
    t0: float = DEFAULT_T0

    @property
    def complete_below(self):
        return self.t * self.t + 0.25

    @property
    def missing_within(self):
        return (self.t * self.t + 0.25, self.T * self.T + 0.25)

    def missing_r_interval(self):
        return (self.t, self.T)


def _pieces(rs, lo, hi):
    """Consecutive breakpoints covering ``[lo, hi]`` split at the eigenvalues."""
    inner = rs[(rs > lo) & (rs < hi)]
    return np.concatenate([[lo], inner, [hi]])


def _subdivide(a, b):
    # below the concavity floor fall back to short subintervals
    if b <= CONCAVITY_FLOOR:
        n = max(1, math.ceil((b - a) / 0.01))
        return np.linspace(a, b, n + 1)
    if a < CONCAVITY_FLOOR:
        n = max(1, math.ceil((CONCAVITY_FLOOR - a) / 0.01))
        return np.concatenate([np.linspace(a, CONCAVITY_FLOOR, n + 1), [b]])
    return np.array([a, b])


def _lower_gap(tau, rs):
    # tau * (<S> - E_lower); same sign as <S> - E_lower
    return tau * (averaged_remainder(tau, rs) + 2.0 * _E(tau))


def verdict(lst, t0=DEFAULT_T0, xtol=1e-12):
    """``T`` = first ``tau >= t0`` with ``<S>(tau) <= E_lower(tau)`` and the consecutive bound ``t``.

    ``<S>`` is continuous, so the sign of ``tau (<S> - E_lower)`` is examined
    on every interval between eigenvalues, where it is concave; each interval
    needs only its endpoints plus a bisection at the crossing.
    """
    rs = _rs(lst)
    t0 = check_positive(t0, "t0")
    if t0 <= 1:
        raise ValueError("t0 must exceed 1")
    lower, upper = turing_bounds(t0)
    if not (-0.5 < lower and upper < 0.5):
        raise ValueError(f"Turing bounds at t0 = {t0} are not inside (-1/2, 1/2)")
    f = lambda tau: _lower_gap(tau, rs)
    T = None
    if f(t0) <= 0:
        T = t0
    else:
        hi = max(t0, float(rs[-1]) if rs.size else t0)
        edges = _pieces(rs, t0, hi)
        for a, b in zip(edges[:-1], edges[1:]):
            for u, v in zip(*(lambda e: (e[:-1], e[1:]))(_subdivide(a, b))):
                if f(v) <= 0:
                    T = brentq(f, u, v, xtol=xtol, rtol=4 * np.finfo(float).eps) if f(u) > 0 else u
                    break
            if T is not None:
                break
        if T is None:
            # beyond the last entry: -int M eventually dominates
            a, step = hi, 1.0
            while f(a + step) > 0:
                a, step = a + step, 2.0 * step
            T = brentq(f, a, a + step, xtol=xtol, rtol=4 * np.finfo(float).eps)
    t = T * max(0.0, averaged_remainder(T, rs) - _E(T) + 1.0)
    return TuringVerdict(t=float(min(t, T)), T=float(T), t0=float(t0))


def fake_certification(lst, r_fake, t_max=None, t0=DEFAULT_T0):
    """Insert a fake eigenvalue and report whether ``<S>`` exceeds ``E_upper`` after it.

    Returns ``(certified, tau, excess)`` where ``excess = max (<S> - E_upper)``
    over ``tau`` in ``[max(r_fake, t0), t_max]`` attained at ``tau``.  The
    default ``t_max`` is the perturbed list's ``T``.
    """
    rs = np.sort(np.append(_rs(lst), float(r_fake)))
    if t_max is None:
        t_max = verdict(rs, t0).T
    lo = max(float(r_fake), t0, 1.0 + 1e-9)
    if t_max <= lo:
        return False, lo, -math.inf
    g = lambda tau: tau * (averaged_remainder(tau, rs) - _E(tau))
    best_tau, best = lo, -math.inf
    edges = _pieces(rs, lo, t_max)
    for a, b in zip(edges[:-1], edges[1:]):
        for u, v in zip(*(lambda e: (e[:-1], e[1:]))(_subdivide(a, b))):
            for tau in (u, v):
                val = g(tau)
                if val > best:
                    best, best_tau = val, tau
            if v - u > 1e-12:
                res = minimize_scalar(lambda s: -g(s), bounds=(u, v), method="bounded", options={"xatol": 1e-10})
                if -res.fun > best:
                    best, best_tau = -res.fun, float(res.x)
    excess = best / best_tau
    return bool(excess > 0), float(best_tau), float(excess)


def perturb_list(lst, action, r, symmetry="even", tol=1e-9):
    """Remove an entry near ``r`` or insert a fake one; returns a modified copy."""
    r = float(r)
    if action == "remove":
        hits = [e for e in lst.entries if abs(e.r - r) <= tol and (symmetry is None or e.symmetry == symmetry)]
        if not hits:
            hits = [e for e in lst.entries if abs(e.r - r) <= tol]
        if not hits:
            raise KeyError(f"no entry with r = {r:.12f}")
        victim = hits[0]
        entries = tuple(e for e in lst.entries if e is not victim)
        return replace(lst, entries=entries).with_note(f"removed {victim.symmetry} r={victim.r:.12f}")
    if action == "insert":
        if any(abs(e.r - r) <= tol and e.symmetry == symmetry for e in lst.entries):
            raise ValueError(f"entry with r = {r:.12f} already present")
        rec = EigenvalueRecord(r=r, symmetry=symmetry, residual_phase1=math.nan, residual_y_independence=math.nan, note="fake")
        return replace(lst, entries=lst.entries + (rec,)).with_note(f"inserted fake {symmetry} r={r:.12f}")
    raise ValueError("action must be 'remove' or 'insert'")


# -- control loop -------------------------------------------------------------


@dataclass(frozen=True)
class ControlConfig:
    symmetries: tuple = ("even", "odd")
    search: SearchConfig = SearchConfig()
    t0: float = DEFAULT_T0
    r_floor: float = 1.0
    lookahead: float = 0.1
    budget_seconds: float = math.inf
    max_rounds: int = 10_000
    y_schedule: tuple = Y_SCHEDULE
    nu_growth: float = 1.5
    nu_relax: float = 1.1


@dataclass
class ControlResult:
    eigenvalues: EigenvalueList
    verdict: TuringVerdict
    status: str
    rounds: int = 0
    history: list = field(default_factory=list)


def control_loop(lst, target_r, config=ControlConfig(), checkpoint=None, clock=time.monotonic, state=None):
    """Extend ``lst`` until the consecutive bound reaches ``target_r`` or the budget runs out.

    Each round scans ``[t, T (1 + lookahead)]`` for every symmetry class,
    merges new forms, and re-audits.  On stagnation the trial density grows
    by ``nu_growth`` and the horocycle height moves to the next factor of
    ``y_schedule``; after progress the density relaxes by ``nu_relax``.
    ``checkpoint(list, verdict, state)`` is called after every merge; passing
    that ``state`` back in resumes with the same trial density and height.
    """
    start = clock()
    v = verdict(lst, config.t0)
    history = [(v.t, v.T, len(lst))]
    if v.t >= target_r:
        return ControlResult(lst, v, "complete", 0, history)
    state = state or {}
    spacing = float(state.get("spacing", 1.0))
    k_y = int(state.get("y_index", 0))
    first = int(state.get("round", 0)) + 1
    for rounds in range(first, config.max_rounds + 1):
        if clock() - start > config.budget_seconds:
            return ControlResult(lst, v, "partial", rounds - 1, history)
        lo = max(v.t, config.r_floor)
        hi = max(v.T * (1.0 + config.lookahead), lo + 1.0)
        search = replace(config.search, height_factor=config.search.height_factor * config.y_schedule[k_y % len(config.y_schedule)])
        found = []
        report = ScanReport()
        for sym in config.symmetries:
            grid = TrialGrid.from_r(lo, hi, sym, spacing_scale=spacing)
            found += scan(grid, search, known=lst.r_values(sym), report=report)
        lst, added = lst.merged(found, search.dedupe_tol)
        v_new = verdict(lst, config.t0)
        log.info(
            "round %d: scanned [%.4f, %.4f] spacing x%.3f y x%.2f, +%d forms, t=%.6f T=%.6f",
            rounds, lo, hi, spacing, search.height_factor, added, v_new.t, v_new.T,
        )
        if v_new.t == v.t and v_new.T == v.T:
            spacing /= config.nu_growth
            k_y += 1
        else:
            spacing = min(1.0, spacing * config.nu_relax)
        if checkpoint is not None:
            checkpoint(lst, v_new, {"round": rounds, "spacing": spacing, "y_index": k_y})
        v = v_new
        history.append((v.t, v.T, len(lst)))
        if v.t >= target_r:
            return ControlResult(lst, v, "complete", rounds, history)
    return ControlResult(lst, v, "partial", config.max_rounds, history)
