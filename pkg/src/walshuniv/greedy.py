"""Stage-by-stage choice of signs delta_k in {-1, 0, 1} so that partial sums of
sum delta_k c_k(g) W_k approach a target in the weighted norm."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

from walshuniv.dyadic_core import StepFunction
from walshuniv.universal import (
    CellModel,
    LayeredWeight,
    PolynomialEnumeration,
    UniversalFunction,
    block_value,
    model_for,
    parse_tolerance,
    weighted_partial_bound,
)


class InsufficientDictionary(RuntimeError):
    def __init__(self, msg: str, gap: float, best: int | None = None, trace=None):
        super().__init__(msg)
        self.gap = gap
        self.best = best
        self.trace = trace or []


@dataclass
class SignSequence:
    """delta_k = the stored sign of g on the selected blocks, 0 elsewhere."""

    u: UniversalFunction
    stages: list[int] = field(default_factory=list)

    def delta(self, k: int) -> int:
        m = self.u.block_of(k)
        if m == 0 or m not in self.stages:
            return 0
        return self.u.blocks[m - 1].seq.delta(k)

    def windows(self) -> list[tuple[int, int, int]]:
        return [(1 << self.u.blocks[m - 1].n_start, 1 << self.u.blocks[m - 1].n_end, m)
                for m in self.stages]

    def dense(self, n: int) -> list[int]:
        return [self.delta(k) for k in range(1 << n)]

    def lines(self, dense_limit: int = 1 << 12) -> list[str]:
        """'k delta_k' for every nonzero sign when the selected windows are small;
        otherwise one 'range lo hi m' record per block (signs = block m of g)."""
        out = ["stages " + " ".join(map(str, self.stages))]
        for lo, hi, m in self.windows():
            if hi - lo <= dense_limit:
                out += [f"{k} {self.delta(k)}" for k in range(lo, hi) if self.delta(k)]
            else:
                out.append(f"range {lo} {hi} {m}")
        return out

    @classmethod
    def parse(cls, lines: list[str], u: UniversalFunction) -> "SignSequence":
        stages: list[int] = []
        seen: dict[int, int] = {}
        for ln in lines:
            t = ln.split()
            if t[0] == "stages":
                stages = [int(v) for v in t[1:]]
            elif t[0] == "range":
                continue
            else:
                seen[int(t[0])] = int(t[1])
        s = cls(u, stages)
        for k, d in seen.items():
            if d not in (-1, 0, 1) or s.delta(k) != d:
                raise ValueError(f"sign at {k} does not match the universal function")
        return s

    def __eq__(self, other):
        return isinstance(other, SignSequence) and self.stages == other.stages and \
            self.u.N == other.u.N


def stage_tolerance(schedule: str, q: int, scale: float) -> float:
    """tau_q = 2^-q (mode "paper") or c 2^-q (mode "relaxed:c"), relative to the target norm."""
    mode, c = parse_tolerance(schedule)
    base = 2.0 ** -q if mode == "paper" else float(c) * 2.0 ** -q
    return base * scale


class _Residual:
    """f minus the chosen H_nu, as a function of (cell, exceptional outcome)."""

    def __init__(self, u: UniversalFunction, model: CellModel, f: StepFunction):
        self.u, self.model = u, model
        self.fv = f.values(model.scale)
        self.chosen: list[int] = []
        self._H = {}

    def H(self, m: int):
        if m not in self._H:
            self._H[m] = block_value(self.u.blocks[m - 1], self.model.scale, approx=True)
        return self._H[m]

    def value(self, extra: list[int] = (), nominal: bool = False):
        ms = self.chosen + list(extra)
        fs = [block_value(self.u.blocks[m - 1], self.model.scale, approx=False) if nominal
              else self.H(m) for m in ms]

        def v(i, X):
            return self.fv[i] - sum((h(i, X) for h in fs), Fraction(0))
        return v

    def tails(self, extra: list[int] = ()) -> float:
        return sum(float(self.u.blocks[m - 1].seq.tail_bound()) for m in self.chosen + list(extra))


def _admissible(u: UniversalFunction, w: LayeredWeight, floor: int, p: float) -> list[int]:
    return [b.m for b in u.blocks if b.m > floor and b.m >= w.n_tilde and b.p > p]


def select_next(residual: StepFunction, enum: PolynomialEnumeration | None, floor: int,
                q: int, p: float, w: LayeredWeight, u: UniversalFunction,
                model: CellModel, target: float) -> tuple[int, str, float]:
    """Smallest admissible index whose f_nu is within `target` of the residual in
    L^p_mu: quantize the residual to the dictionary grid and look it up, else take
    the nearest admissible block.  Returns (nu, how, distance)."""
    cand = _admissible(u, w, floor, p)
    if not cand:
        raise InsufficientDictionary(f"stage {q}: no block above index {floor}", math.inf)
    rv = residual.values(model.scale)

    def dist(m):
        fm = block_value(u.blocks[m - 1], model.scale, approx=False)
        return model.norm(lambda i, X: rv[i] - fm(i, X), p, w)

    if enum is not None:
        K = enum.scale
        vals = residual.values(max(K, residual.resolution))
        step = len(vals) >> K
        means = [sum(vals[j * step:(j + 1) * step], Fraction(0)) / step for j in range(1 << K)]
        nu = enum.lookup(enum.quantize(means), floor=max(floor, w.n_tilde - 1))
        if nu is not None and nu in cand:
            d = dist(nu)
            if d < target:
                return nu, "lookup", d
    scored = sorted((dist(m), m) for m in cand)
    d, m = scored[0]
    if d < target:
        return m, "nearest", d
    raise InsufficientDictionary(
        f"stage {q}: best distance {d:.3e} from block {m} is not below {target:.3e}",
        d - target, m)


def _nominal(u: UniversalFunction, f: StepFunction, chosen: list[int]) -> StepFunction:
    r = f
    for m in chosen:
        r = r - u.blocks[m - 1].f
    return r


def approximate(u: UniversalFunction, w: LayeredWeight, f: StepFunction, p: float, Q: int,
                schedule: str = "relaxed:1", enum: PolynomialEnumeration | None = None,
                model: CellModel | None = None) -> tuple[SignSequence, list[dict]]:
    if p < 1:
        raise ValueError("p must be at least 1")
    if Q < 1:
        raise ValueError("need at least one stage")
    if p >= max(b.p for b in u.blocks):
        raise ValueError("p must stay below the largest block exponent")
    parse_tolerance(schedule)
    model = model or model_for(u.blocks, f.resolution)
    if model.scale < f.resolution:
        raise ValueError("cell model coarser than the target")
    res = _Residual(u, model, f)
    norm_f = model.norm(res.value(), p, w)
    err = norm_f
    trace: list[dict] = []
    for q in range(1, Q + 1):
        t0 = time.perf_counter()
        tau = stage_tolerance(schedule, q, norm_f)
        row = {"stage": q, "nu": None, "error_before": err, "bound": tau}
        nominal = _nominal(u, f, res.chosen)
        if all(v == 0 for _, v in nominal.pieces):
            # the target is already reproduced: the stage adds no block
            row.update(error_after=err, intra_block_max=err, intra_bound=err, how="skip",
                       distance=0.0, ok=err < tau or err == 0)
        else:
            floor = res.chosen[-1] if res.chosen else 0
            try:
                nu, how, d = select_next(nominal, enum, floor, q, p, w, u, model, tau / 2)
            except InsufficientDictionary as e:
                e.trace = trace
                raise
            blk = u.blocks[nu - 1]
            after = model.norm(res.value([nu]), p, w) + res.tails([nu])
            fm = block_value(blk, model.scale, approx=False)
            Hm = res.H(nu)
            block_err = model.norm(lambda i, X: fm(i, X) - Hm(i, X), p, w) + \
                float(blk.seq.tail_bound())
            intra = err + weighted_partial_bound(blk, w, model, p)
            intra_bound = err + 2 * model.norm(fm, p, w) + 8 * float(blk.tau)
            res.chosen.append(nu)
            row.update(nu=nu, error_after=after, how=how, distance=d, block_error=block_err,
                       telescoping=after <= d + block_err + res.tails([]) * (1 + 1e-12),
                       intra_block_max=intra, intra_bound=intra_bound,
                       ok=after < tau and intra <= intra_bound)
            err = after
        row["seconds"] = time.perf_counter() - t0
        trace.append(row)
    return SignSequence(u, list(res.chosen)), trace


def check_signs(s: SignSequence, samples: int = 256) -> bool:
    """Every emitted delta_k lies in {-1, 0, 1}; sampled evenly on large windows."""
    for lo, hi, _ in s.windows():
        step = max(1, (hi - lo) // samples)
        for k in range(lo, hi, step):
            if s.delta(k) not in (-1, 0, 1):
                return False
    return True


def unweighted_obstruction_demo(u: UniversalFunction, k0: int, w: LayeredWeight | None = None,
                                enum: PolynomialEnumeration | None = None, p: float = 2) -> dict:
    """Target k0 c_k0 W_k0 in unweighted L^2: any sign choice leaves the coordinate
    error |delta - k0| |c_k0| >= (k0 - 1)|c_k0| (Parseval)."""
    if k0 <= 1:
        raise ValueError("k0 must exceed 1")
    c = u.coefficient(k0)
    if c == 0:
        raise ValueError(f"c_{k0}(g) vanishes")
    lower = min(abs(d - k0) for d in (-1, 0, 1)) * abs(c)
    out = {"k0": k0, "c_k0": c, "lower_bound": lower, "formula": float((k0 - 1) * abs(c))}
    if w is None:
        return out
    # weighted run on the largest admissible dictionary target; the unweighted
    # relative error can never drop below (k0 - 1)/k0
    model = model_for(u.blocks)
    cand = [b for b in u.blocks if b.m >= w.n_tilde and b.p > p]
    pick = max(cand, key=lambda b: (_l2(b.f), -b.m))
    s, trace = approximate(u, w, pick.f, p, 1, "relaxed:1", enum, model)
    err = trace[-1]["error_after"]
    rel = err / trace[0]["error_before"]
    out.update(target_block=pick.m, target_l2=_l2(pick.f), weighted_error=err,
               below=err < float(lower), relative_lower_bound=(k0 - 1) / k0,
               weighted_relative_error=rel, below_relative=rel < (k0 - 1) / k0,
               stages=s.stages)
    return out


def _l2(f: StepFunction) -> float:
    return math.sqrt(sum(float(v) ** 2 * float(iv.length) for iv, v in f.pieces))
