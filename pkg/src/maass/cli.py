"""``maass`` command-line interface.

Exit codes: 0 success (including a budget-limited partial run), 1 compute
failure, 2 usage or input error.
"""

import argparse
import datetime
import logging
import math
import os
import sys

import numpy as np

from . import stats
from .eigensearch import ScanReport, SearchConfig, TrialGrid, scan
from .hejhal import HejhalError, HejhalSetup, extend_candidate, phase1_solve
from .persistence import (
    FormatError,
    RunConfig,
    read_config_file,
    read_list,
    write_csv,
    write_list,
)
from .turing import (
    ControlConfig,
    EigenvalueList,
    averaged_remainder,
    control_loop,
    fake_certification,
    perturb_list,
    turing_bounds,
    verdict,
)

__all__ = ["main", "build_parser", "load_config", "UsageError"]

log = logging.getLogger("maass")

FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "lil")


class UsageError(ValueError):
    """Bad flags, config or input files: exit code 2."""


# -- configuration --------------------------------------------------------------

_FLAG_KEYS = ("symmetry", "epsilon", "y", "t0", "target_r", "budget_seconds", "r_min", "r_max", "spacing_scale")


def load_config(args, environ=os.environ):
    """Defaults, then the ``MAASS_CONFIG`` file, then command-line flags."""
    config = RunConfig()
    path = environ.get("MAASS_CONFIG")
    if path:
        try:
            config = config.with_updates(read_config_file(path))
        except OSError as exc:
            raise UsageError(f"cannot read MAASS_CONFIG file: {exc}") from None
    flags = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
    config = config.with_updates(flags)
    try:
        return config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _search_config(config):
    return SearchConfig(
        epsilon=config.epsilon,
        refine_tol=config.refine_tol,
        dedupe_tol=config.dedupe_tol,
        y_tol=config.y_tol,
        spacing_scale=config.spacing_scale,
        height_factor=config.y,
    )


def _load_list(path, missing_ok=False):
    if path is None:
        raise UsageError("--list is required")
    if missing_ok and not os.path.exists(path):
        return EigenvalueList(), {}
    try:
        lf = read_list(path)
    except FormatError as exc:
        raise UsageError(str(exc)) from None
    return lf.eigenvalues, lf.header


def _write(path, lst, config, args, v=None, extra=None):
    created = None if args.deterministic else datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    write_list(path, lst, config_hash=config.hash(), verdict=v, created=created, extra=extra)


def _print_verdict(v, out=None):
    out = out or sys.stdout
    print(f"verdict: t={v.t:.12f} T={v.T:.12f} t0={v.t0:g}", file=out)
    if v.T > v.t:
        print(f"missing r-interval: [{v.t:.12f}, {v.T:.12f}]", file=out)


# -- subcommands ----------------------------------------------------------------


def cmd_scan(args, config):
    lst, _ = _load_list(args.list, missing_ok=True)
    out = args.out or args.list
    if math.isnan(config.r_min) or math.isnan(config.r_max):
        raise UsageError("scan needs --r-min and --r-max")
    if config.r_max <= config.r_min:
        print("empty range: nothing to scan")
        return 0
    search = _search_config(config)
    report = ScanReport()
    found = []
    for sym in config.symmetries:
        grid = TrialGrid.from_r(config.r_min, config.r_max, sym, config.spacing_scale)
        found += scan(grid, search, known=lst.r_values(sym), report=report)
    lst, added = lst.merged(found, config.dedupe_tol)
    v = verdict(lst, config.t0)
    _write(out, lst, config, args, v)
    print(f"scanned r in [{config.r_min:g}, {config.r_max:g}] ({report.trials} trials): {added} new records")
    if report.failed_trials:
        print(f"skipped trials: {len(report.failed_trials)}")
    _print_verdict(v)
    return 0


def _checkpoint_path(args, config):
    if args.list:
        return args.list
    if args.out is None:
        raise UsageError("complete needs --out or --list")
    return args.out if config.symmetry == "both" else args.out + ".checkpoint"


def cmd_complete(args, config):
    if math.isnan(config.target_r):
        raise UsageError("complete needs --target-r")
    ckpt = _checkpoint_path(args, config)
    lst, state = EigenvalueList(), None
    if args.resume and os.path.exists(ckpt):
        try:
            lf = read_list(ckpt)
            state = lf.state
        except (FormatError, ValueError, KeyError) as exc:
            # compute-side failure: the checkpoint is left exactly as found
            print(f"error: corrupted checkpoint {ckpt}: {exc}", file=sys.stderr)
            return 1
        lst = lf.eigenvalues
    budget = config.budget_seconds
    control = ControlConfig(
        symmetries=("even", "odd"),  # the audit needs the full spectrum
        search=_search_config(config),
        t0=config.t0,
        lookahead=config.lookahead,
        budget_seconds=budget,
        max_rounds=config.max_rounds,
    )

    def checkpoint(cur, v, st):
        text_state = " ".join(f"{k}={st[k]!r}" for k in ("round", "spacing", "y_index"))
        _write(ckpt, cur, config, args, v, extra={"state": text_state})

    result = control_loop(lst, config.target_r, control, checkpoint=checkpoint, state=state)
    final = result.eigenvalues
    extra = {"status": result.status}
    if config.symmetry != "both":
        final = EigenvalueList(tuple(e for e in final if e.symmetry == config.symmetry), final.notes)
        extra["audit"] = "verdict computed on the combined even+odd list"
    if args.out:
        _write(args.out, final, config, args, result.verdict, extra=extra)
    print(f"status: {result.status} after {result.rounds} rounds, {len(final)} records")
    _print_verdict(result.verdict)
    return 0


def cmd_verify(args, config):
    lst, _ = _load_list(args.list)
    v = verdict(lst, config.t0)
    _print_verdict(v)
    if args.fake_insert is not None:
        ok, tau, excess = fake_certification(lst, args.fake_insert, t0=config.t0)
        word = "PASS" if ok else "FAIL"
        print(f"fake-insert certification at r={args.fake_insert:.12f}: {word} (max <S>-E_upper = {excess:.3e} at t={tau:.6f})")
    return 0


def cmd_coeffs(args, config):
    lst, _ = _load_list(args.list)
    if args.r is None or args.m_max is None:
        raise UsageError("coeffs needs --r and --m-max")
    hits = [e for e in lst if abs(e.r - args.r) < 1e-9 and (config.symmetry == "both" or e.symmetry == config.symmetry)]
    if len(hits) != 1:
        raise UsageError(f"r = {args.r} {'absent from' if not hits else 'ambiguous in'} the list")
    rec = hits[0]
    setup = HejhalSetup.at(rec.r, rec.symmetry, config.epsilon, config.y)
    cand = phase1_solve(setup.system(rec.r), config.epsilon)
    m_max = max(int(args.m_max), cand.M0)
    if m_max > cand.M0:
        cand = extend_candidate(cand, m_max)
    n = np.arange(1, len(cand.coefficients) + 1)
    errs = cand.coefficient_errors if cand.coefficient_errors is not None else np.zeros(len(n))
    rows = np.column_stack([n, cand.coefficients, errs])
    meta = {
        "symmetry": rec.symmetry,
        "r": f"{rec.r:.12f}",
        "epsilon": config.epsilon,
        "phase1_y": cand.y,
        "phase1_residual": f"{cand.residual_phase1:.3e}",
    }
    out = args.out or f"coeffs_{rec.symmetry}_{rec.r:.6f}.csv"
    write_csv(out, ["n", "a_n", "error_bound"], rows[: int(args.m_max)], meta)
    print(f"wrote {min(int(args.m_max), len(n))} coefficients to {out}")
    return 0


def _bounds_table(lst, lo, hi, step=0.01):
    ts = np.arange(lo, hi + 0.5 * step, step)
    lower, upper = turing_bounds(ts)
    return np.column_stack([ts, averaged_remainder(ts, lst), lower, upper])


def cmd_stats(args, config):
    lst, _ = _load_list(args.list)
    v = verdict(lst, config.t0)
    hi = args.t_max if args.t_max is not None else v.t
    lo = args.t_min if args.t_min is not None else stats.T_MIN["clt"]
    override = args.override_unverified
    if hi > v.t and not override:
        raise UsageError(f"range end {hi} exceeds the verified bound t={v.t:.6f}; pass --override-unverified")
    if hi <= lo:
        raise UsageError("empty statistics range")
    which = FIGURES if args.figures in (None, "all") else tuple(args.figures.split(","))
    bad = [w for w in which if w not in FIGURES]
    if bad:
        raise UsageError(f"unknown figure(s): {', '.join(bad)}")
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    base_meta = {
        "t_range": f"[{lo:g}, {hi:.6f}]",
        "verified_t": f"{v.t:.12f}",
        "override_unverified": override,
        "deviation": f"scaled series start at t_min={stats.T_MIN['clt']:g}",
    }
    kw = dict(verified_t=v.t, override=override)
    sigma = args.sigma
    sigma_policy = "fixed by --sigma" if sigma is not None else "estimated from data over the range"
    if sigma is None:
        sigma = stats.estimate_sigma(lst, (lo, hi), **kw)
    for fig in which:
        meta = dict(base_meta, figure=fig)
        path = os.path.join(outdir, f"{fig}.csv")
        if fig in ("fig1", "fig4", "fig5"):
            kind = {"fig1": "raw", "fig4": "li_sarnak", "fig5": "sqrt"}[fig]
            start = lo if fig != "fig1" or args.t_min is not None else 1.0
            s = stats.sample_series(kind, lst, (start, hi), **kw)
            cols = ["t", "S_left", "S_right"] if fig == "fig1" else ["t", "left", "right"]
            write_csv(path, cols, np.column_stack([s.t, s.left, s.right]), dict(meta, series=kind))
        elif fig in ("fig2", "fig3"):
            if fig == "fig2":
                interior = [e for e in lst if config.t0 < e.r < v.t]
                if not interior:
                    raise UsageError("fig2 needs an entry between t0 and the verified bound")
                r = args.remove_r if args.remove_r is not None else interior[len(interior) // 2].r
                mod = perturb_list(lst, "remove", r, symmetry=None)
                meta["removed_r"] = f"{r:.12f}"
            else:
                r = args.fake_r if args.fake_r is not None else v.t
                mod = perturb_list(lst, "insert", r, symmetry="even")
                meta["fake_r"] = f"{r:.12f}"
            end = max(verdict(mod, config.t0).T, r + 1.0)
            write_csv(path, ["t", "S_avg", "E_lower", "E_upper"], _bounds_table(mod, config.t0, end), meta)
        elif fig == "fig6":
            table, sig = stats.histogram_clt(lst, (lo, hi), bins=args.bins, sigma=sigma, **kw)
            width = table[1, 0] - table[0, 0]
            meta.update(sigma=f"{sig:.6f}", sigma_policy=sigma_policy, mass=f"{table[:, 1].sum() * width:.12f}")
            write_csv(path, ["center", "density", "gaussian"], table, meta)
        elif fig == "fig7":
            hw = args.half_width
            centers = np.arange(lo + hw, hi - hw + 1e-9, 1.0)
            if centers.size == 0:
                raise UsageError("range shorter than one window")
            table = stats.window_sweep(lst, centers, hw, **kw)
            write_csv(path, ["t", "mu", "sigma"], table, dict(meta, half_width=hw))
        elif fig == "lil":
            table, sig = stats.lil_extremes(lst, (lo, hi), sigma=sigma, **kw)
            write_csv(path, ["t", "running_sup", "ratio_to_sigma"], table, dict(meta, sigma=f"{sig:.6f}", sigma_policy=sigma_policy))
        print(f"wrote {path}")
    return 0


def cmd_perturb(args, config):
    lst, _ = _load_list(args.list)
    if args.out is None or args.r is None or args.action is None:
        raise UsageError("perturb needs --action, --r and --out")
    if os.path.exists(args.out) and os.path.samefile(args.out, args.list):
        raise UsageError("perturb never writes in place; choose a different --out")
    if config.symmetry == "both":
        sym = None if args.action == "remove" else "even"
    else:
        sym = config.symmetry
    try:
        mod = perturb_list(lst, args.action, args.r, symmetry=sym)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip("'\"")) from None
    v = verdict(mod, config.t0)
    _write(args.out, mod, config, args, v)
    print(f"{args.action} r={args.r:.12f}: wrote {args.out}")
    _print_verdict(v)
    return 0


COMMANDS = {
    "scan": cmd_scan,
    "complete": cmd_complete,
    "verify": cmd_verify,
    "coeffs": cmd_coeffs,
    "stats": cmd_stats,
    "perturb": cmd_perturb,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--symmetry", choices=("even", "odd", "both"))
    common.add_argument("--target-r", type=float)
    common.add_argument("--t0", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--y", type=float, help="factor on the default horocycle height")
    common.add_argument("--spacing-scale", type=float)
    common.add_argument("--list", help="eigenvalue list file")
    common.add_argument("--out", help="output file (directory for stats)")
    common.add_argument("--deterministic", action="store_true", help="omit the creation time; bit-reproducible output")
    common.add_argument("--override-unverified", action="store_true")
    common.add_argument("--budget-seconds", type=float)
    common.add_argument("--resume", action="store_true")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="maass", description="Maass cusp form spectra for SL(2,Z).")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scan", parents=[common], help="scan an r-range once and merge into a list")
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    sub.add_parser("complete", parents=[common], help="extend a list until verified up to --target-r")
    p = sub.add_parser("verify", parents=[common], help="Turing audit of a list")
    p.add_argument("--fake-insert", type=float, metavar="R", help="certify by inserting a fake eigenvalue at R")
    p = sub.add_parser("coeffs", parents=[common], help="Fourier coefficients for one list entry")
    p.add_argument("--r", type=float)
    p.add_argument("--m-max", type=int)
    p = sub.add_parser("stats", parents=[common], help="write figure CSVs")
    p.add_argument("--figures", help=f"comma list from {','.join(FIGURES)} or 'all'")
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--sigma", type=float, help="fixed CLT scale instead of the data estimate")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--half-width", type=float, default=20.0)
    p.add_argument("--remove-r", type=float)
    p.add_argument("--fake-r", type=float)
    p = sub.add_parser("perturb", parents=[common], help="remove an entry or insert a fake one")
    p.add_argument("--action", choices=("insert", "remove"))
    p.add_argument("--r", type=float)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (UsageError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HejhalError, ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
