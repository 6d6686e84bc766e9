"""Hejhal's identity on a closed horocycle, Phase 1 / Phase 2 solves and checks.

A form of symmetry ``even`` (``odd``) is written as

    f(x + iy) = sum_{n >= 1} a_n sqrt(y) kappa(r, 2 pi n y) cos(2 pi n x)     (sin)

with ``kappa`` the rescaled K-Bessel function.  On ``Q`` sample points of the
half horocycle at height ``y`` the projection onto mode ``m`` gives

    a_m w_m(y) = sum_n V_mn a_n,   w_m(y) = sqrt(y) kappa(r, 2 pi m y),
    V_mn = (2/Q) sum_j sqrt(y_j*) kappa(r, 2 pi n y_j*) c(2 pi n x_j*) c(2 pi m x_j)

where ``z_j*`` is the pullback of ``z_j`` and ``c`` is cos or sin.  Only
``n <= M0`` enter the right-hand side because every ``y_j* >= sqrt(3)/2``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from ._validation import check_positive, check_symmetry
from .besselk import DEFAULT_EPSILON, besselk_ir_scaled, decay_threshold
from .geometry import Y0, HorocycleSample, pullback_modular_arrays, sample_horocycle

__all__ = [
    "HejhalError",
    "CuspFormCandidate",
    "HejhalSystem",
    "HejhalSetup",
    "ROW_FLOOR",
    "coefficient_count",
    "default_height",
    "verification_heights",
    "choose_height",
    "sample_size",
    "build_system",
    "phase1_solve",
    "phase2_extend",
    "extend_candidate",
    "evaluate_form",
    "evaluation_floor",
    "automorphy_residual",
    "y_independence_check",
]

# Rows with |w_m| below this fraction of the largest are considered badly scaled.
ROW_FLOOR = 1e-3
_ALIAS_MARGIN = 8
_RANK_RTOL = 1e-12


class HejhalError(ValueError):
    """The horocycle height is unusable at this spectral parameter."""


@dataclass(frozen=True)
class CuspFormCandidate:
    symmetry: str
    r: float
    coefficients: np.ndarray
    residual_phase1: float
    residual_y_independence: float = math.nan
    y: float = math.nan
    M0: int = 0
    epsilon: float = DEFAULT_EPSILON
    coefficient_errors: np.ndarray = field(default=None, repr=False)

    @property
    def eigenvalue(self):
        return self.r * self.r + 0.25


@dataclass(frozen=True, eq=False)
class HejhalSystem:
    r: float
    symmetry: str
    sample: HorocycleSample
    M0: int
    rows: np.ndarray
    V: np.ndarray
    C: np.ndarray
    weights: np.ndarray

    @property
    def Mrows(self):
        return int(self.rows.size)

    @property
    def weighted(self):
        """``diag(w) C = D - V`` formed without dividing by the row weights."""
        D = np.zeros_like(self.V)
        D[np.arange(self.rows.size), self.rows - 1] = self.weights
        return D - self.V


def _basis(symmetry):
    return np.cos if symmetry == "even" else np.sin


def coefficient_count(r, epsilon=DEFAULT_EPSILON):
    """``M0 = M(Y0)``: coefficients needed at or above the domain floor."""
    x_big = decay_threshold(r, epsilon)
    return max(2, math.ceil(x_big / (2.0 * math.pi * Y0)))


def sample_size(r, y, M0, epsilon=DEFAULT_EPSILON):
    """Samples per half horocycle; exceeds the expansion length at ``y`` to avoid aliasing."""
    My = math.ceil(decay_threshold(r, epsilon) / (2.0 * math.pi * y))
    return max(My, M0) + _ALIAS_MARGIN


def _row_weights(r, y, M0):
    m = np.arange(1, M0 + 1)
    return math.sqrt(y) * besselk_ir_scaled(r, 2.0 * math.pi * m * y)


def default_height(r):
    """Calibrated primary height ``0.85 Y0 r_ref / (r_ref + r)``, clipped."""
    r_ref = 20.0
    return float(np.clip(0.85 * Y0 * r_ref / (r_ref + abs(r)), 0.05, 0.8 * Y0))


def verification_heights(y):
    return [0.81 * y, 0.87 * y, 0.93 * y]


def _retention_ratio(r, y, M0):
    w = np.abs(_row_weights(r, y, M0))
    return float(w.min() / w.max())


def choose_height(r, M0, start=None, factor=1.0, tries=60):
    """First height from a geometric schedule at which all ``M0`` rows are well scaled.

    The schedule starts at ``start`` (default :func:`default_height`) scaled by
    ``factor`` and shrinks by 3% per step.
    """
    y = (default_height(r) if start is None else start) * factor
    y = min(y, 0.8 * Y0)
    best, best_y = -1.0, y
    for _ in range(tries):
        ratio = _retention_ratio(r, y, M0)
        if ratio >= ROW_FLOOR:
            return y
        if ratio > best:
            best, best_y = ratio, y
        y *= 0.97
    raise HejhalError(f"no usable horocycle height near {best_y:.4g} for r = {r:.6f}")


def build_system(r, symmetry, sample, M0, rows=None):
    """Assemble ``V`` and ``C`` on the retained rows.

    ``rows`` (1-based mode numbers) fixes the row set; by default rows with
    ``|w_m| >= ROW_FLOOR * max|w|`` among ``m <= M0`` are kept.
    """
    check_symmetry(symmetry)
    r = abs(float(r))
    if sample.y >= Y0:
        raise HejhalError("horocycle above fundamental-domain floor")
    basis = _basis(symmetry)
    n = np.arange(1, M0 + 1)
    w_all = _row_weights(r, sample.y, M0)
    if rows is None:
        aw = np.abs(w_all)
        rows = n[aw >= ROW_FLOOR * aw.max()] if aw.max() > 0 else n[:0]
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise HejhalError("horocycle height unusable at this r")
    if sample.Q < max(M0, int(rows.max())):
        raise ValueError("sample too small for the requested rows")
    ys = sample.ys
    # W[j, n] = sqrt(y_j*) kappa(r, 2 pi n y_j*) c(2 pi n x_j*)
    kap = besselk_ir_scaled(r, 2.0 * math.pi * np.outer(ys, n))
    W = np.sqrt(ys)[:, None] * kap * basis(2.0 * math.pi * np.outer(sample.xs, n))
    B = basis(2.0 * math.pi * np.outer(sample.x, rows))
    V = (2.0 / sample.Q) * (B.T @ W)
    w = w_all[rows - 1]
    # an exactly vanishing weight gives an infinite row; Phase 1 rejects it
    with np.errstate(divide="ignore", invalid="ignore"):
        C = -V / w[:, None]
    C[np.arange(rows.size), rows - 1] += 1.0
    for arr in (V, C, w, rows):
        arr.setflags(write=False)
    return HejhalSystem(r=r, symmetry=symmetry, sample=sample, M0=M0, rows=rows, V=V, C=C, weights=w)


def _solve_pinned(C):
    A = C[:, 1:]
    rhs = -C[:, 0]
    sol, _, rank, sv = scipy.linalg.lstsq(A, rhs, lapack_driver="gelsd")
    if A.shape[1] and (rank < A.shape[1] or sv[-1] < _RANK_RTOL * sv[0]):
        raise HejhalError("degenerate system - change y")
    a = np.concatenate([[1.0], sol])
    return a


def phase1_solve(system, epsilon=DEFAULT_EPSILON):
    """Coefficients with ``a_1 = 1`` minimizing ``||C a||`` (least squares)."""
    if system.Mrows < system.M0 - 1:
        raise HejhalError("too few well-scaled rows - change y")
    if not np.all(np.isfinite(system.C)):
        raise HejhalError("vanishing row weight - change y")
    a = _solve_pinned(system.C)
    resid = float(np.max(np.abs(system.C @ a)))
    return CuspFormCandidate(
        symmetry=system.symmetry,
        r=system.r,
        coefficients=a,
        residual_phase1=resid,
        y=system.sample.y,
        M0=system.M0,
        epsilon=epsilon,
    )


def phase2_extend(candidate, y, m_max, epsilon=None):
    """Coefficients ``a_m`` for ``m = M0+1..m_max`` from one horocycle at height ``y``.

    Returns ``(a, bound)`` with the per-coefficient error bound
    ``2 eps / |w_m(y)|``.
    """
    eps = candidate.epsilon if epsilon is None else epsilon
    M0 = candidate.M0
    if m_max <= M0:
        return np.zeros(0), np.zeros(0)
    y = check_positive(y, "y")
    x_big = decay_threshold(candidate.r, eps)
    if m_max > x_big / (2.0 * math.pi * y):
        raise HejhalError(f"m_max = {m_max} exceeds the truncation bound at y = {y:.4g}; use a smaller y")
    Q = max(sample_size(candidate.r, y, M0, eps), m_max + _ALIAS_MARGIN)
    sample = sample_horocycle(y, Q)
    rows = np.arange(M0 + 1, m_max + 1)
    basis = _basis(candidate.symmetry)
    n = np.arange(1, M0 + 1)
    kap = besselk_ir_scaled(candidate.r, 2.0 * math.pi * np.outer(sample.ys, n))
    W = np.sqrt(sample.ys)[:, None] * kap * basis(2.0 * math.pi * np.outer(sample.xs, n))
    B = basis(2.0 * math.pi * np.outer(sample.x, rows))
    rhs = (2.0 / Q) * (B.T @ (W @ candidate.coefficients[:M0]))
    w = math.sqrt(y) * besselk_ir_scaled(candidate.r, 2.0 * math.pi * rows * y)
    with np.errstate(divide="ignore"):
        a = rhs / w
        bound = 2.0 * eps / np.abs(w)
    return a, bound


def extend_candidate(candidate, m_max, y=None):
    """Candidate with coefficients extended to ``m_max`` (Phase 2) and error bounds attached."""
    if y is None:
        # the largest height whose truncation bound still covers m_max
        x_big = decay_threshold(candidate.r, candidate.epsilon)
        y = min(0.5 * Y0, 0.95 * x_big / (2.0 * math.pi * m_max))
    a, bound = phase2_extend(candidate, y, m_max)
    base = candidate.coefficients[: candidate.M0]
    errs = np.concatenate([np.zeros(candidate.M0), bound])
    return replace(candidate, coefficients=np.concatenate([base, a]), coefficient_errors=errs)


def evaluation_floor(candidate):
    """Lowest height at which the stored coefficients keep the tail below epsilon."""
    x_big = decay_threshold(candidate.r, candidate.epsilon)
    return x_big / (2.0 * math.pi * len(candidate.coefficients))


def evaluate_form(candidate, x, y):
    """Truncated expansion of the candidate at points ``(x, y)`` (arrays allowed)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    floor = evaluation_floor(candidate)
    if np.any(y < floor * (1.0 - 1e-12)):
        raise HejhalError(f"y below evaluability floor {floor:.4g}; pull back first")
    x, y = np.broadcast_arrays(x, y)
    n = np.arange(1, len(candidate.coefficients) + 1)
    basis = _basis(candidate.symmetry)
    flat_x, flat_y = x.ravel(), y.ravel()
    kap = besselk_ir_scaled(candidate.r, 2.0 * math.pi * np.outer(flat_y, n))
    terms = np.sqrt(flat_y)[:, None] * kap * basis(2.0 * math.pi * np.outer(flat_x, n))
    out = terms @ candidate.coefficients
    return out.reshape(x.shape) if x.ndim else float(out[0])


def automorphy_residual(candidate, n_points=100, seed=0):
    """``max |f(z) - f(z*)|`` over random ``z`` between the evaluation floor and height 1."""
    rng = np.random.default_rng(seed)
    floor = evaluation_floor(candidate)
    x = rng.uniform(-0.5, 0.5, n_points)
    y = rng.uniform(floor, max(1.0, floor), n_points)
    xs, ys, _ = pullback_modular_arrays(x, y)
    return float(np.max(np.abs(evaluate_form(candidate, x, y) - evaluate_form(candidate, xs, ys))))


def y_independence_check(candidate, heights):
    """Max over heights of ``||C(lambda) a||_inf`` with the coefficients held fixed."""
    heights = [float(h) for h in heights]
    if len(heights) < 2:
        raise ValueError("need at least two heights")
    worst = 0.0
    a = candidate.coefficients[: candidate.M0]
    for y in heights:
        sample = sample_horocycle(y, sample_size(candidate.r, y, candidate.M0, candidate.epsilon))
        system = build_system(candidate.r, candidate.symmetry, sample, candidate.M0)
        if not np.all(np.isfinite(system.C)):
            return math.inf
        worst = max(worst, float(np.max(np.abs(system.C @ a))))
    return worst


@dataclass(frozen=True)
class HejhalSetup:
    """Height, sample and row set frozen at a reference parameter ``r``."""

    r: float
    symmetry: str
    M0: int
    y: float
    sample: HorocycleSample
    rows: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    @classmethod
    def at(cls, r, symmetry, epsilon=DEFAULT_EPSILON, height_factor=1.0, M0=None):
        check_symmetry(symmetry)
        M0 = coefficient_count(r, epsilon) if M0 is None else M0
        y = choose_height(r, M0, factor=height_factor)
        sample = sample_horocycle(y, sample_size(r, y, M0, epsilon))
        rows = np.arange(1, M0 + 1)
        return cls(r=float(r), symmetry=symmetry, M0=M0, y=y, sample=sample, rows=rows, epsilon=epsilon)

    def system(self, r):
        return build_system(r, self.symmetry, self.sample, self.M0, rows=self.rows)
