"""Line-oriented text formats with a sha256 footer.

Every writer ends the file with "# sha256 <hex>" over the preceding lines;
readers recompute it when present and raise ChecksumError on mismatch.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from fractions import Fraction
from pathlib import Path

from walshuniv.dyadic_core import DyadicInterval, IntervalSet, StepFunction, as_rational

FOOTER = "# sha256 "


class ChecksumError(ValueError):
    pass


class FormatError(ValueError):
    pass


def _frac(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as e:
        raise FormatError(f"bad rational {s!r}") from e


def _q(v) -> str:
    v = as_rational(v)
    return f"{v.numerator}/{v.denominator}"


def _digest(lines: list[str]) -> str:
    return hashlib.sha256("".join(line + "\n" for line in lines).encode()).hexdigest()


def dump_lines(lines: list[str]) -> str:
    return "".join(line + "\n" for line in lines) + FOOTER + _digest(lines) + "\n"


def write_lines(lines: list[str], path) -> str:
    text = dump_lines(lines)
    Path(path).write_text(text)
    return text


def load_lines(text: str) -> list[str]:
    """Body lines (checksum verified, comments and blanks dropped)."""
    raw = text.splitlines()
    if raw and raw[-1].startswith(FOOTER):
        body = raw[:-1]
        if _digest(body) != raw[-1][len(FOOTER):].strip():
            raise ChecksumError("checksum mismatch")
    else:
        body = raw
    return [ln for ln in body if ln.strip() and not ln.startswith("#")]


def read_lines(path) -> list[str]:
    return load_lines(Path(path).read_text())


def header(kind: str, cfg_hash: str = "") -> list[str]:
    out = [f"# walshuniv {kind}"]
    if cfg_hash:
        out.append(f"# config {cfg_hash}")
    return out


def config_of(path) -> str:
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("# config "):
            return ln.split()[2]
    return ""


# ---------------------------------------------------------------- step functions


def step_lines(f: StepFunction) -> list[str]:
    return [f"{iv.scale} {iv.index} {_q(v)}" for iv, v in f.pieces]


def parse_step(lines: list[str]) -> StepFunction:
    pieces = []
    for ln in lines:
        parts = ln.split()
        if len(parts) != 3:
            raise FormatError(f"expected 'K i value', got {ln!r}")
        pieces.append((DyadicInterval(int(parts[0]), int(parts[1])), _frac(parts[2])))
    return StepFunction(pieces)


def write_step(f: StepFunction, path, cfg_hash: str = "") -> str:
    return write_lines(header("step", cfg_hash) + step_lines(f), path)


def read_step(path) -> StepFunction:
    return parse_step(read_lines(path))


def write_intervals(s: IntervalSet, path, cfg_hash: str = "") -> str:
    return write_lines(header("intervals", cfg_hash) + [f"{iv.scale} {iv.index}" for iv in s], path)


def parse_intervals(lines: list[str]) -> IntervalSet:
    out = []
    for ln in lines:
        parts = ln.split()
        if len(parts) != 2:
            raise FormatError(f"expected 'K i', got {ln!r}")
        out.append(DyadicInterval(int(parts[0]), int(parts[1])))
    return IntervalSet(out)


def read_intervals(path) -> IntervalSet:
    return parse_intervals(read_lines(path))


# ---------------------------------------------------------------- coefficient dumps


def coeff_lines(coeffs, k_lo: int = 0, skip_zero: bool = False) -> list[str]:
    return [f"{k} {_q(c)}" for k, c in enumerate(coeffs, start=k_lo)
            if not (skip_zero and c == 0)]


def write_coeffs(coeffs, path, k_lo: int = 0, cfg_hash: str = "") -> str:
    return write_lines(header("coefficients", cfg_hash) + coeff_lines(coeffs, k_lo), path)


def parse_coeffs(lines: list[str]) -> dict[int, Fraction]:
    out = {}
    for ln in lines:
        parts = ln.split()
        if len(parts) != 2:
            raise FormatError(f"expected 'k value', got {ln!r}")
        k = int(parts[0])
        if k in out:
            raise FormatError(f"duplicate index {k}")
        out[k] = _frac(parts[1])
    return out


def read_coeffs(path) -> list[Fraction]:
    """Dense list over [0, max k]; missing indices are zero."""
    d = parse_coeffs(read_lines(path))
    n = max(d) + 1 if d else 0
    return [d.get(k, Fraction(0)) for k in range(n)]


# ---------------------------------------------------------------- reports


def write_json(obj, path) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    Path(path).write_text(text)
    return text


def _json_default(o):
    if isinstance(o, Fraction):
        return _q(o)
    if hasattr(o, "to_fraction"):
        return _q(o.to_fraction())
    if isinstance(o, (set, tuple)):
        return list(o)
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def to_jsonable(obj):
    return json.loads(json.dumps(obj, sort_keys=True, default=_json_default))


TRACE_FIELDS = ["stage", "nu", "error_before", "error_after", "bound", "intra_block_max"]


def trace_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in TRACE_FIELDS})
    return buf.getvalue()
