"""On-disk formats: eigenvalue lists, coefficient files, CSV tables, run config.

All writes go to a temporary file in the target directory followed by an
atomic rename, so an interrupted run never leaves a truncated file behind.
"""

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, fields, replace

import numpy as np

from .turing import DEFAULT_T0, EigenvalueList, EigenvalueRecord, TuringVerdict

__all__ = [
    "FormatError",
    "LIST_MAGIC",
    "ListFile",
    "RunConfig",
    "atomic_write_text",
    "format_list",
    "parse_list",
    "read_list",
    "write_list",
    "format_csv",
    "write_csv",
    "verdict_from_header",
    "read_config_file",
    "parse_config_text",
]

LIST_MAGIC = "# maass eigenvalue list v1"


class FormatError(ValueError):
    """Malformed list, config or checkpoint file."""


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- run configuration ----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Every free numerical parameter of a run.  Defaults match the library defaults."""

    symmetry: str = "both"
    epsilon: float = 1e-9
    y: float = 1.0  # height factor on the default horocycle height
    spacing_scale: float = 1.0
    refine_tol: float = 1e-10
    dedupe_tol: float = 1e-7
    y_tol: float = 1e-6
    t0: float = DEFAULT_T0
    target_r: float = math.nan
    r_min: float = math.nan
    r_max: float = math.nan
    budget_seconds: float = math.inf
    max_rounds: int = 10_000
    lookahead: float = 0.1

    _positive = ("epsilon", "y", "spacing_scale", "refine_tol", "dedupe_tol", "y_tol", "t0", "budget_seconds", "lookahead")

    def validate(self):
        if self.symmetry not in ("even", "odd", "both"):
            raise ValueError("symmetry must be even, odd or both")
        for name in self._positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if not math.isnan(self.target_r) and not self.target_r > self.t0:
            raise ValueError("target_r must exceed t0")
        return self

    @property
    def symmetries(self):
        return ("even", "odd") if self.symmetry == "both" else (self.symmetry,)

    def with_updates(self, updates):
        known = {f.name: f.type for f in fields(self)}
        typed = {}
        for key, value in updates.items():
            if key not in known:
                raise FormatError(f"unknown config key {key!r}")
            typed[key] = _coerce(key, known[key], value)
        return replace(self, **typed)

    def canonical(self):
        """Stable text of the compute-relevant parameters (hashed into list headers)."""
        return "\n".join(f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _coerce(key, typ, value):
    if not isinstance(value, str):
        return value
    try:
        if typ in (float, "float"):
            return float(value)
        if typ in (int, "int"):
            return int(value)
    except ValueError:
        raise FormatError(f"config key {key!r}: cannot parse {value!r}") from None
    return value.strip()


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise FormatError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# -- eigenvalue lists -----------------------------------------------------------


@dataclass(frozen=True)
class ListFile:
    eigenvalues: EigenvalueList
    header: dict

    @property
    def state(self):
        s = self.header.get("state")
        if not s:
            return None
        out = {}
        for item in s.split():
            k, _, v = item.partition("=")
            out[k] = float(v) if k == "spacing" else int(v)
        return out


def _fmt_residual(v):
    return "nan" if math.isnan(v) else f"{v:.3e}"


def format_list(lst, config_hash="", verdict=None, created=None, extra=None):
    """Serialize; omitting ``created`` gives byte-reproducible output."""
    lines = [LIST_MAGIC]
    if created is not None:
        lines.append(f"# created: {created}")
    if config_hash:
        lines.append(f"# config_hash: {config_hash}")
    if verdict is not None:
        lines.append(f"# verdict: t={verdict.t:.12f} T={verdict.T:.12f} t0={verdict.t0:g}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value}")
    for note in lst.notes:
        lines.append(f"# note: {note}")
    for e in lst.entries:
        rec = f"{e.symmetry} {e.r:.12f} {_fmt_residual(e.residual_phase1)} {_fmt_residual(e.residual_y_independence)}"
        if e.note:
            rec += f" {e.note}"
        lines.append(rec)
    return "\n".join(lines) + "\n"


def parse_list(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != LIST_MAGIC:
        raise FormatError("not an eigenvalue list (missing header line)")
    header, notes, entries = {}, [], []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition(":")
            if not sep:
                continue
            if key.strip() == "note":
                notes.append(value.strip())
            else:
                header[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) not in (4, 5) or parts[0] not in ("even", "odd"):
            raise FormatError(f"line {lineno}: expected '<symmetry> <r> <res1> <res2> [note]'")
        try:
            r, res1, res2 = (float(p) for p in parts[1:4])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric field") from None
        if not (math.isfinite(r) and r > 0):
            raise FormatError(f"line {lineno}: r must be positive")
        entries.append(EigenvalueRecord(r, parts[0], res1, res2, parts[4] if len(parts) == 5 else ""))
    try:
        lst = EigenvalueList(tuple(entries), tuple(notes))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    return ListFile(lst, header)


def read_list(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    return parse_list(text)


def write_list(path, lst, **kwargs):
    atomic_write_text(path, format_list(lst, **kwargs))


def verdict_from_header(header):
    v = header.get("verdict")
    if not v:
        return None
    kv = dict(item.split("=", 1) for item in v.split())
    return TuringVerdict(float(kv["t"]), float(kv["T"]), float(kv.get("t0", DEFAULT_T0)))


# -- CSV tables -----------------------------------------------------------------


def format_csv(columns, rows, metadata=None):
    """Comma-separated, ``#`` metadata lines first, then a header row."""
    lines = [f"# {k}: {v}" for k, v in (metadata or {}).items()]
    lines.append(",".join(columns))
    for row in np.asarray(rows, dtype=float).reshape(-1, len(columns)):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows, metadata=None):
    atomic_write_text(path, format_csv(columns, rows, metadata))
