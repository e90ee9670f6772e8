"""Command-line entry point: walshuniv <subcommand> ..."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from walshuniv import formats
from walshuniv.dyadic_core import DyadicInterval

OUT_ENV = "WALSHUNIV_OUT"


def out_dir(arg: str | None) -> Path:
    d = Path(arg or os.environ.get(OUT_ENV, "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(obj, path: Path | None) -> None:
    text = json.dumps(formats.to_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_transform(a) -> int:
    from walshuniv.walsh import WalshPolynomial, fwt_forward

    d = out_dir(a.out)
    if a.inverse:
        coeffs = formats.read_coeffs(a.input)
        f = WalshPolynomial.from_coeffs(coeffs).to_step(a.R)
        formats.write_step(f, d / a.output)
    else:
        f = formats.read_step(a.input)
        c = fwt_forward(f, a.R)
        formats.write_coeffs(c.coeffs, d / a.output)
    return 0


def cmd_lemma1(a) -> int:
    from walshuniv.flat import lemma1_construct

    d = out_dir(a.out)
    blk = lemma1_construct(DyadicInterval(a.K, a.i), a.M)
    lo, _ = blk.window
    coeffs = [blk.coeff(k) for k in range(lo, 2 * lo)]
    formats.write_lines(formats.header("coefficients")
                        + formats.coeff_lines(coeffs, lo, skip_zero=True), d / "lemma1_coeffs.txt")
    formats.write_intervals(blk.e_minus(), d / "lemma1_E1.txt")
    formats.write_intervals(blk.e_plus(), d / "lemma1_E2.txt")
    _emit({"K": a.K, "i": a.i, "M": a.M, "modulus": blk.scale,
           "E1": str(blk.e_minus().measure().to_fraction()),
           "E2": str(blk.e_plus().measure().to_fraction())}, None)
    return 0


def cmd_lemma2(a) -> int:
    from walshuniv.interval_approx import lemma2_construct

    out = lemma2_construct(DyadicInterval(a.K, a.i), Fraction(a.l), Fraction(a.eps), a.q,
                           a.n0, a.p, a.mode)
    rep = out.report()
    rep["E_q"] = str(out.e_q.measure().to_fraction())
    d = out_dir(a.out)
    if a.coeffs:
        lo, hi = out.seq.window
        formats.write_lines(formats.header("coefficients") + [
            f"{k} {out.seq.delta(k) * out.seq.a(k).to_fraction()}"
            for k in range(lo, hi) if out.seq.delta(k)], d / a.coeffs)
    _emit(rep, d / a.report if a.report else None)
    return 0 if out.ok else 1


def cmd_lemma3(a) -> int:
    from walshuniv.polynomial_approx import lemma3_approx, verify_subset_bound

    f = formats.read_step(a.input)
    out = lemma3_approx(f, Fraction(a.eps), a.p0, a.n0)
    rep = out.report()
    rep["subset_bound"] = verify_subset_bound(out, a.trials, a.seed)
    d = out_dir(a.out)
    _emit(rep, d / a.report if a.report else None)
    return 0 if out.ok and rep["subset_bound"]["ok"] else 1


def cmd_build(a) -> int:
    from walshuniv.universal import build_universal, write_universal, write_weight

    cfg = json.loads(Path(a.config).read_text()) if a.config else {}
    t0 = time.perf_counter()
    res = build_universal(cfg)
    d = out_dir(a.out)
    write_universal(res.universal, d / "universal.txt")
    for delta, w in res.weights.items():
        tag = delta.replace("/", "_")
        write_weight(w, d / f"weight_{tag}.txt", res.universal.config_hash)
    rep = dict(res.report)
    rep["timing"] = {"seconds": time.perf_counter() - t0}
    _emit(rep, d / "build_report.json")
    return 0 if res.report["ok"] else 1


def cmd_approximate(a) -> int:
    from walshuniv.greedy import approximate, check_signs
    from walshuniv.universal import read_universal, read_weight

    u = read_universal(a.universal)
    w = read_weight(a.weight)
    f = formats.read_step(a.target)
    signs, trace = approximate(u, w, f, a.p, a.stages, a.schedule)
    d = out_dir(a.out)
    formats.write_lines(formats.header("signs", u.config_hash) + signs.lines(),
                        d / "signs.txt")
    (d / "trace.csv").write_text(formats.trace_csv(trace))
    summary = {"stages": signs.stages, "p": a.p, "schedule": a.schedule,
               "ok": all(r["ok"] for r in trace), "signs_valid": check_signs(signs),
               "errors": [r["error_after"] for r in trace],
               "timing": {"seconds": sum(r["seconds"] for r in trace)}}
    _emit(summary, d / "summary.json")
    return 0 if summary["ok"] else 1


def cmd_verify(a) -> int:
    from walshuniv.verify import run_verify

    cfg = json.loads(Path(a.config).read_text()) if a.config else {}
    rep = run_verify(cfg)
    _emit(rep, out_dir(a.out) / "verify_report.json")
    for rec in rep["checks"]:
        status = "SKIP" if rec.get("skipped") else ("PASS" if rec["ok"] else "FAIL")
        print(f"{status} {rec['id']}")
    return 0 if rep["ok"] else 1


def cmd_report(a) -> int:
    from walshuniv.universal import read_universal, read_weight

    u = read_universal(a.universal)
    rep = {"config_hash": u.config_hash, "dictionary_hash": u.enum_hash, "M_max": u.M_max,
           "N": u.N, "head": [str(v) for v in u.head], "assembly": u.checks,
           "blocks": {str(b.m): b.checks for b in u.blocks}}
    if a.weight:
        w = read_weight(a.weight)
        rep["weight"] = {"delta": str(w.delta), "n_tilde": w.n_tilde,
                         "unit_measure": str(w.unit_measure), "log2_mu": w.log2_mu}
    _emit(rep, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="walshuniv")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        p.set_defaults(fn=fn)
        return p

    p = add("transform", cmd_transform, "step function <-> coefficient dump")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--R", type=int)

    p = add("lemma1", cmd_lemma1, "flat polynomial on a dyadic interval")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--M", type=int, required=True)

    p = add("lemma2", cmd_lemma2, "signed block approximating a constant on an interval")
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--i", type=int, default=0)
    p.add_argument("--l", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--n0", type=int)
    p.add_argument("--p", type=float, default=2)
    p.add_argument("--mode", choices=["paper", "tuned"], default="paper")
    p.add_argument("--coeffs")
    p.add_argument("--report")

    p = add("lemma3", cmd_lemma3, "signed coefficients approximating a step function")
    p.add_argument("--input", required=True)
    p.add_argument("--eps", required=True)
    p.add_argument("--p0", type=float, default=2)
    p.add_argument("--n0", type=int, default=1)
    p.add_argument("--trials", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")

    p = add("build-universal", cmd_build, "build g and the weights from a JSON config")
    p.add_argument("--config")

    p = add("approximate", cmd_approximate, "choose signs for a target")
    p.add_argument("--universal", required=True)
    p.add_argument("--weight", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--stages", type=int, required=True)
    p.add_argument("--schedule", default="relaxed:2")

    p = add("verify", cmd_verify, "run every check and report")
    p.add_argument("--config")

    p = add("report", cmd_report, "summarize a universal file")
    p.add_argument("--universal", required=True)
    p.add_argument("--weight")
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.fn(a)
    except formats.ChecksumError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
