"""Eigenvalue search by linearising ``C(lambda)`` around trial values.

Near a trial value ``lam`` we have ``C(lam + h) ~ C(lam) + h C'(lam)``; the
generalized eigenvalues ``h`` of the pencil ``(C, -C')`` predict eigenvalues
``lam + h``.  Candidates are refined by re-linearising at ``lam + Re(h)`` with
the height, sample and row set frozen, then filtered by a Phase-1 solve and
the y-independence check.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import check_positive, check_symmetry
from .besselk import DEFAULT_EPSILON
from .hejhal import (
    CuspFormCandidate,
    HejhalError,
    HejhalSetup,
    phase1_solve,
    verification_heights,
    y_independence_check,
)

__all__ = [
    "SearchConfig",
    "TrialGrid",
    "LinearisedSolution",
    "Rejection",
    "LinearisationError",
    "trial_spacing",
    "derivative_C",
    "linearised_solutions",
    "refine",
    "scan",
    "merge_candidates",
    "ScanReport",
]

log = logging.getLogger(__name__)


class LinearisationError(ArithmeticError):
    """``C'`` is singular at the trial value; shift the trial value or change y."""


@dataclass(frozen=True)
class SearchConfig:
    epsilon: float = DEFAULT_EPSILON
    refine_tol: float = 1e-10
    max_iter: int = 12
    dedupe_tol: float = 1e-7
    y_tol: float = 1e-6
    imag_tol: float = 1e-6
    fd_delta_r: float = 1e-4
    cond_max: float = 1e12
    spacing_scale: float = 1.0
    height_factor: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "refine_tol", "dedupe_tol", "y_tol", "imag_tol", "fd_delta_r", "spacing_scale", "height_factor"):
            check_positive(getattr(self, name), name)
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def trial_spacing(r, scale=1.0):
    """Trial step in r: a fraction of the mean level gap per symmetry class."""
    return scale * float(np.clip(3.0 / max(r, 1e-9), 0.02, 0.5))


@dataclass(frozen=True)
class TrialGrid:
    lambda_min: float
    lambda_max: float
    symmetry: str
    spacing_scale: float = 1.0

    def __post_init__(self):
        check_symmetry(self.symmetry)
        if not (0.25 < self.lambda_min <= self.lambda_max):
            raise ValueError("need 1/4 < lambda_min <= lambda_max")

    @classmethod
    def from_r(cls, r_min, r_max, symmetry, spacing_scale=1.0):
        return cls(r_min * r_min + 0.25, r_max * r_max + 0.25, symmetry, spacing_scale)

    def r_values(self):
        r = math.sqrt(self.lambda_min - 0.25)
        r_max = math.sqrt(self.lambda_max - 0.25)
        out = []
        while r <= r_max:
            out.append(r)
            r += trial_spacing(r, self.spacing_scale)
        return np.array(out)


@dataclass(frozen=True)
class LinearisedSolution:
    h: complex
    alpha: np.ndarray
    trial_lambda: float


@dataclass(frozen=True)
class Rejection:
    reason: str
    r: float
    detail: str = ""


def _r_of(lam):
    return math.sqrt(lam - 0.25)


def _row_multiplied(setup, r):
    # diag(w) C = diag(w) - V: same singular points as C but free of the poles
    # at zeros of w_m(y), hence far closer to linear in lambda
    return setup.system(r).weighted


def derivative_C(lam, setup, delta=None, row_multiplied=False):
    """Central difference ``dC/dlambda`` at ``lam`` with the setup's rows and sample.

    With ``row_multiplied=True`` the derivative of ``diag(w) C`` is returned,
    which is the matrix used for the linearisation.
    """
    r = _r_of(lam)
    if delta is None:
        delta = 2.0 * r * 1e-4
    if row_multiplied:
        f = lambda lm: _row_multiplied(setup, _r_of(lm))
    else:
        f = lambda lm: setup.system(_r_of(lm)).C
    return (f(lam + delta) - f(lam - delta)) / (2.0 * delta)


def linearised_solutions(lam, setup, config=SearchConfig()):
    """All generalized eigenpairs ``(h, alpha)`` of ``C(lam) alpha = -h C'(lam) alpha``.

    ``C`` is taken in row-multiplied form ``diag(w) C``; its eigenvalue
    problem is equivalent while the rows with small ``w_m`` stay well scaled.
    """
    r = _r_of(lam)
    C = _row_multiplied(setup, r)
    if C.shape[0] != C.shape[1]:
        raise LinearisationError("linearisation needs a square retained system")
    Cd = derivative_C(lam, setup, delta=2.0 * r * config.fd_delta_r, row_multiplied=True)
    # QZ on the pencil: high modes make C' rank deficient by construction, they
    # show up as infinite h; only a singular pencil (alpha ~ beta ~ 0) is fatal
    (alpha, beta), vecs = scipy.linalg.eig(C, -Cd, homogeneous_eigvals=True)
    scale = np.linalg.norm(C, 2) + np.linalg.norm(Cd, 2)
    singular = (np.abs(alpha) < scale / config.cond_max) & (np.abs(beta) < scale / config.cond_max)
    if singular.any():
        raise LinearisationError(f"singular pencil at lambda = {lam:.10g}; shift trial value / change y")
    finite = np.abs(beta) > np.abs(alpha) / config.cond_max
    h = np.full(alpha.shape, np.inf, dtype=complex)
    h[finite] = alpha[finite] / beta[finite]
    return [LinearisedSolution(complex(h[k]), vecs[:, k], float(lam)) for k in range(h.size) if finite[k]]


def refine(solution, setup, config=SearchConfig(), known=()):
    """Iterate ``lambda <- lambda + Re(h)`` and filter the result.

    Returns a :class:`CuspFormCandidate` or a :class:`Rejection`.  ``known`` are
    already accepted ``r`` of the same symmetry; iterates landing on one of
    them are rejected as duplicates without further work.
    """
    lam = solution.trial_lambda + solution.h.real
    h = solution.h
    history = [abs(h)]
    converged = False
    for _ in range(config.max_iter):
        if lam <= 0.25:
            return Rejection("below-spectrum", float("nan"))
        r = _r_of(lam)
        if any(abs(r - k) < config.dedupe_tol * 10 for k in known):
            return Rejection("duplicate", r)
        try:
            sols = linearised_solutions(lam, setup, config)
        except (LinearisationError, HejhalError, np.linalg.LinAlgError) as exc:
            return Rejection("singular", r, str(exc))
        h = min((s.h for s in sols), key=abs)
        history.append(abs(h))
        lam += h.real
        if abs(h) < config.refine_tol:
            converged = True
            break
        # noise floor: no further progress but already tiny
        if len(history) > 3 and abs(h) > 0.5 * history[-2] and abs(h) < 1e3 * config.refine_tol * max(1.0, lam):
            converged = True
            break
    r = _r_of(lam)
    if not converged:
        return Rejection("no-convergence", r, f"|h| history {history}")
    if abs(h.imag) > config.imag_tol:
        return Rejection("complex", r, f"Im h = {h.imag:.3g}")
    if any(abs(r - k) < config.dedupe_tol for k in known):
        return Rejection("duplicate", r)
    try:
        cand = phase1_solve(setup.system(r), config.epsilon)
        resid = y_independence_check(cand, verification_heights(setup.y))
    except HejhalError as exc:
        return Rejection("singular", r, str(exc))
    if cand.residual_phase1 > config.y_tol or resid > config.y_tol:
        return Rejection("y-dependent", r, f"residuals {cand.residual_phase1:.3g}, {resid:.3g}")
    log.debug("accepted %s r=%.12f after %d iterations, |h|: %s", setup.symmetry, r, len(history) - 1, history)
    return CuspFormCandidate(
        symmetry=cand.symmetry,
        r=r,
        coefficients=cand.coefficients,
        residual_phase1=cand.residual_phase1,
        residual_y_independence=resid,
        y=cand.y,
        M0=cand.M0,
        epsilon=cand.epsilon,
    )


def merge_candidates(lists, dedupe_tol=1e-7):
    """Union of candidate lists, sorted by ``(symmetry, r)``, duplicates removed.

    Among duplicates the one with the smaller y-independence residual is kept,
    so the result does not depend on the input order.
    """
    pool = sorted(
        (c for lst in lists for c in lst),
        key=lambda c: (c.symmetry, c.r, c.residual_y_independence),
    )
    out = []
    for c in pool:
        if out and out[-1].symmetry == c.symmetry and abs(out[-1].r - c.r) < dedupe_tol:
            if c.residual_y_independence < out[-1].residual_y_independence:
                out[-1] = c
            continue
        out.append(c)
    return out


@dataclass
class ScanReport:
    trials: int = 0
    failed_trials: list = field(default_factory=list)
    rejections: dict = field(default_factory=dict)


def scan(grid, config=SearchConfig(), known=(), report=None):
    """Search every trial value of ``grid``; returns accepted candidates sorted by r."""
    accepted = []
    known_r = sorted(k for k in known)
    report = report if report is not None else ScanReport()
    rs = grid.r_values()
    for i, r_trial in enumerate(rs):
        report.trials += 1
        step = trial_spacing(r_trial, grid.spacing_scale)
        lam = r_trial * r_trial + 0.25
        window = 2.0 * r_trial * step + step * step
        try:
            setup = HejhalSetup.at(r_trial, grid.symmetry, config.epsilon, config.height_factor)
            sols = linearised_solutions(lam, setup, config)
        except (LinearisationError, HejhalError, np.linalg.LinAlgError) as exc:
            log.info("trial r=%.6f %s skipped: %s", r_trial, grid.symmetry, exc)
            report.failed_trials.append(float(r_trial))
            continue
        for sol in sorted(sols, key=lambda s: abs(s.h)):
            if abs(sol.h) > window:
                break
            pred = lam + sol.h.real
            if pred <= 0.25:
                continue
            r_pred = _r_of(pred)
            if any(abs(r_pred - k) < 1e-6 for k in known_r):
                continue
            res = refine(sol, setup, config, known=known_r)
            if isinstance(res, Rejection):
                report.rejections[res.reason] = report.rejections.get(res.reason, 0) + 1
                continue
            if not (grid.lambda_min <= res.eigenvalue <= grid.lambda_max):
                # found outside this grid's range; the neighbouring grid owns it
                continue
            accepted.append(res)
            known_r.append(res.r)
            known_r.sort()
    return merge_candidates([accepted], config.dedupe_tol)
