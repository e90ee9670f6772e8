"""A single decreasing coefficient sequence whose sign-subseries reach every
dictionary polynomial, together with the weight that makes this work.

The countable enumeration of rational Walsh polynomials is replaced by a finite
cyclic dictionary.  Block m approximates f_m = D[(m - 1) mod |D|] with an
unbent interval ladder whose exceptional set is affine, so every block fixes
its own binary digits.  Given the scale-K cell of x, the events "x lies in the
exceptional set of block m" are independent, which makes the weight layers and
all weighted norms exact finite sums.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from walshuniv.dyadic_core import (
    DyadicInterval,
    DyadicRational,
    StepFunction,
    as_rational,
    log2_sum,
)
from walshuniv.flat import AffineSet
from walshuniv.interval_approx import (
    SignedBlockSeq,
    certified_signed_bound,
    check_strict_decrease,
)
from walshuniv.polynomial_approx import (
    Lemma3Output,
    joint_certificate,
    lemma3_approx,
)


class ScheduleError(RuntimeError):
    pass


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- dictionary


def _round_half_away(x: Fraction, grid: Sequence[Fraction]) -> Fraction:
    """Nearest grid value; ties go to the value of larger modulus."""
    return min(grid, key=lambda g: (abs(x - g), -abs(g)))


@dataclass
class PolynomialEnumeration:
    """Finite cyclic dictionary of step functions on the scale-K cells."""

    scale: int
    entries: list[tuple[Fraction, ...]]
    grid: tuple[Fraction, ...]
    source: str = "entries"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty dictionary")
        n = 1 << self.scale
        for e in self.entries:
            if len(e) != n:
                raise ValueError("dictionary entry does not match the cell count")
            if not any(e):
                raise ValueError("dictionary entries must not vanish identically")

    def __len__(self) -> int:
        return len(self.entries)

    def cells(self, m: int) -> tuple[Fraction, ...]:
        """Cell values of f_m (m counted from 1, cyclic)."""
        if m < 1:
            raise ValueError("dictionary index starts at 1")
        return self.entries[(m - 1) % len(self.entries)]

    def function(self, m: int) -> StepFunction:
        return StepFunction.from_grid(list(self.cells(m)), self.scale)

    def lookup(self, cells: Sequence[Fraction], floor: int = 0) -> int | None:
        """Smallest index m > floor with f_m equal to `cells`."""
        cells = tuple(as_rational(v) for v in cells)
        hits = [i for i, e in enumerate(self.entries) if e == cells]
        if not hits:
            return None
        n = len(self.entries)
        best = None
        for i in hits:
            # m = i + 1 + t n is the first index of this entry above the floor
            t = max(0, -(-(floor - i) // n))
            m = i + 1 + t * n
            if m <= floor:
                m += n
            best = m if best is None else min(best, m)
        return best

    def quantize(self, means: Sequence[Fraction]) -> tuple[Fraction, ...]:
        return tuple(_round_half_away(as_rational(v), self.grid) for v in means)

    @property
    def hash(self) -> str:
        return config_hash(self.config)


def enumerate_dictionary(cfg: dict) -> PolynomialEnumeration:
    """Dictionary from a config: {"scale": K, "grid": [...]} takes every pattern of
    grid values on the 2^K cells except the zero one, {"scale": K, "entries":
    [[...], ...]} lists them; "unit_log2" multiplies every value by a power of two."""
    K = int(cfg.get("scale", 0))
    if K < 0:
        raise ValueError("dictionary scale must be non-negative")
    unit = Fraction(2) ** int(cfg.get("unit_log2", 0))
    if "entries" in cfg:
        entries = [tuple(as_rational(v) * unit for v in e) for e in cfg["entries"]]
        vals = {v for e in entries for v in e} | {-v for e in entries for v in e}
        source = "entries"
    elif "grid" in cfg:
        vals = [as_rational(v) * unit for v in cfg["grid"]]
        entries = [e for e in itertools.product(vals, repeat=1 << K) if any(e)]
        source = "grid"
    else:
        raise ValueError("dictionary needs 'grid' or 'entries'")
    for v in set(vals):
        if v.denominator & (v.denominator - 1):
            raise ValueError(f"dictionary value {v} is not dyadic")
    grid = tuple(sorted(set(vals) | {Fraction(0)}))
    return PolynomialEnumeration(K, entries, grid, source, dict(cfg))


# ---------------------------------------------------------------- schedules


def p_value(cfg: dict | None, m: int) -> float:
    """p_m = slope * m + offset (default m + 1)."""
    cfg = cfg or {}
    return float(cfg.get("slope", 1)) * m + float(cfg.get("offset", 1))


def parse_tolerance(schedule: str) -> tuple[str, Fraction]:
    if schedule == "paper":
        return "paper", Fraction(1)
    if schedule.startswith("relaxed:"):
        c = as_rational(schedule.split(":", 1)[1])
        if c <= 0:
            raise ValueError("relaxed constant must be positive")
        return "relaxed", c
    raise ValueError(f"unknown tolerance schedule {schedule!r}")


def block_tolerance(schedule: str, m: int) -> tuple[Fraction, Fraction]:
    """(epsilon handed to the interval ladder, approximation tolerance tau_m).

    mode "paper": |E_m| > 1 - 2^-(m+1) and error < 2^-(m+2), so epsilon = 2^-(m+2).
    relaxed:c : epsilon = tau = c 2^-m."""
    mode, c = parse_tolerance(schedule)
    if mode == "paper":
        e = Fraction(1, 1 << (m + 2))
        return e, e
    e = c / (1 << m)
    if e >= 1:
        raise ScheduleError(f"relaxed tolerance {e} at m={m} is not below 1")
    return e, e


def measure_bound(schedule: str, m: int) -> Fraction:
    mode, _ = parse_tolerance(schedule)
    if mode == "paper":
        return 1 - Fraction(1, 1 << (m + 1))
    return 1 - block_tolerance(schedule, m)[0]


# ---------------------------------------------------------------- blocks


@dataclass
class Block:
    """Block m: coefficients on [2^N_(m-1), 2^N_m) approximating f_m."""

    m: int
    f: StepFunction
    p: float
    epsilon: Fraction
    tau: Fraction
    q: int
    parts: list[tuple[DyadicInterval, Fraction]]
    seq: SignedBlockSeq
    out: Lemma3Output | None = None
    checks: dict = field(default_factory=dict)

    @property
    def n_start(self) -> int:
        return self.seq.n0

    @property
    def n_end(self) -> int:
        return self.seq.n_end

    def first(self) -> DyadicRational:
        return self.seq.a(1 << self.n_start)

    def last(self) -> DyadicRational:
        return self.seq.a((1 << self.n_end) - 1)

    def exceptional(self) -> list[tuple[AffineSet, Fraction]]:
        """(affine set where the ladder ends low, piece value) per piece."""
        by_piece: dict[DyadicInterval, list] = {}
        for c in self.seq.carriers:
            by_piece.setdefault(c.piece, []).append(c)
        out = []
        for delta, value in self.parts:
            cs = by_piece[delta]
            last = max(cs, key=lambda c: c.level)
            out.append((last.block.support.with_digit(last.M + 1, 1), value))
        return out

    def uniform_bound(self, p: float) -> float:
        """Pre-tail U with ||S_M||_{L^p(e)} <= ||f||_{L^p(e)} + U for e in E_m, p <= p_m."""
        return joint_certificate(self.seq.carriers, self.parts, self.q, min(p, self.p))[0]

    def partial_bound(self, p: float) -> float:
        """Bound on max_M ||S_M||_{L^p[0,1]} including the tail."""
        v, _ = certified_signed_bound(self.seq.carriers, p)
        return v + float(self.seq.tail_bound())


def _block_tail(f: StepFunction, n0: int) -> int:
    low = min(abs(v) for _, v in f.pieces if v)
    bits = max(0, -math.floor(math.log2(low.numerator) - math.log2(low.denominator)))
    return bits + 2 * n0 + 32


def build_blocks(enum: PolynomialEnumeration, M_max: int, p_schedule: dict | None = None,
                 tolerance: str = "relaxed:1", N0: int = 1,
                 progress: Callable[[Block], None] | None = None) -> list[Block]:
    if M_max < 1:
        raise ValueError("M_max must be positive")
    blocks: list[Block] = []
    n0 = N0
    prev_p = -math.inf
    for m in range(1, M_max + 1):
        f = enum.function(m)
        p = p_value(p_schedule, m)
        if p <= prev_p or p <= 1:
            raise ScheduleError("p_m must increase and exceed 1")
        prev_p = p
        eps, tau = block_tolerance(tolerance, m)
        caps = [Fraction(1, 1 << (2 * n0)), Fraction(1, 1 << m)]
        if blocks:
            caps.append(blocks[-1].last().to_fraction())
        cap = min(caps)
        out = lemma3_approx(f, eps, p0=p, n0=n0, cap=cap, tail=_block_tail(f, n0),
                            schedule="unbent")
        parts = [(pc.delta, pc.value) for pc in out.pieces]
        blk = Block(m, f, p, eps, tau, out.q, parts, out.seq, out)
        blk.checks = block_checks(blk, blocks[-1] if blocks else None, tolerance)
        blocks.append(blk)
        if progress:
            progress(blk)
        n0 = out.n_end
    return blocks


def block_checks(blk: Block, prev: Block | None, tolerance: str) -> dict:
    """Per-block magnitude chain, measure, error and partial-sum bounds."""
    m, seq = blk.m, blk.seq
    checks = {}
    first = blk.first()
    cap43 = DyadicRational(1, 2 * seq.n0)
    ok_dec, pairs = check_strict_decrease(seq)
    checks["magnitude_cap"] = {"ok": first < cap43 and ok_dec, "value": float(first),
                      "bound": float(cap43), "pairs": pairs, "method": "exact"}
    chain = [DyadicRational(1, m)] + ([prev.last()] if prev else [])
    checks["seam_chain"] = {"ok": all(first < c for c in chain), "value": float(first),
                      "bound": float(min(c.to_fraction() for c in chain)), "method": "exact"}
    e_meas = 1 - sum((d.length.to_fraction() for d, _ in blk.parts), Fraction(0)) / (1 << blk.q)
    want = measure_bound(tolerance, m)
    checks["measure"] = {"ok": e_meas > want, "value": str(e_meas), "bound": str(want),
                      "method": "exact"}
    tail = float(seq.tail_bound())
    # H equals f exactly on E_m apart from the tail
    exact = blk.out.checks["statement2"]["exact_on_E"] if blk.out else True
    checks["error_on_E"] = {"ok": exact and tail < float(blk.tau), "value": tail,
                      "bound": float(blk.tau), "p": blk.p, "method": "bound"}
    u = blk.uniform_bound(blk.p) + tail
    checks["subset_partial"] = {"ok": u < float(blk.tau), "value": u, "bound": float(blk.tau),
                      "method": "bound", "uniform": True}
    s4 = blk.out.checks["statement4"] if blk.out else None
    v4 = s4["value"] if s4 else math.nan
    checks["l1_filler"] = {"ok": v4 < float(blk.tau), "value": v4, "bound": float(blk.tau),
                      "method": s4["method"] if s4 else "missing"}
    return checks


# ---------------------------------------------------------------- cell model


def tilde_index(delta) -> int:
    """[log_{1/2} delta] + 1, i.e. the smallest n with 2^-n < delta."""
    d = as_rational(delta)
    if not 0 < d < 1:
        raise ValueError("delta must lie in (0, 1)")
    n = 1
    while Fraction(1, 1 << n) >= d:
        n += 1
    return n


def _log2_frac(v: Fraction) -> float:
    return math.log2(abs(v.numerator)) - math.log2(v.denominator)


def _cell_fraction(a: AffineSet, cell: DyadicInterval) -> Fraction:
    """|a intersect cell| / |cell| for a cell inside the prefix of a."""
    free = 0
    for pos, v in a.fixed:
        if pos <= cell.scale:
            if (cell.index >> (cell.scale - pos)) & 1 != v:
                return Fraction(0)
        else:
            free += 1
    return Fraction(1, 1 << free)


class CellModel:
    """x seen through its scale-K cell and the events x in X_m (one affine set
    family per block).  Digits finer than K fixed by different blocks are
    disjoint, so given the cell the events are independent with exact
    probabilities."""

    def __init__(self, scale: int, sets: dict[int, list[AffineSet]]):
        self.scale = scale
        used: dict[int, int] = {}
        for m, fam in sets.items():
            for a in fam:
                if a.prefix.scale > scale:
                    raise ValueError("affine prefix finer than the cell scale")
                for pos, _ in a.fixed:
                    if pos > scale and used.setdefault(pos, m) != m:
                        raise ValueError("two blocks fix the same digit")
        self.blocks = sorted(sets)
        self.prob: list[dict[int, Fraction]] = []
        for i in range(1 << scale):
            cell = DyadicInterval(scale, i)
            row = {}
            for m, fam in sets.items():
                pr = sum((_cell_fraction(a, cell) for a in fam
                          if a.prefix.contains(cell)), Fraction(0))
                if pr:
                    row[m] = pr
            self.prob.append(row)

    def outcomes(self, i: int):
        """(membership dict, probability) over the blocks touching cell i."""
        row = self.prob[i]
        ms = [m for m in self.blocks if m in row]
        for bits in itertools.product((False, True), repeat=len(ms)):
            pr = Fraction(1)
            for m, b in zip(ms, bits):
                pr *= row[m] if b else 1 - row[m]
            if pr:
                yield dict(zip(ms, bits)), pr

    def power_log2(self, value, p: float, weight: "LayeredWeight | None" = None,
                   region=None) -> float:
        """log2 of the integral of |value(i, X)|^p (times the weight) over the
        outcomes accepted by `region`."""
        terms = []
        for i in range(1 << self.scale):
            for X, pr in self.outcomes(i):
                if region is not None and not region(X):
                    continue
                v = value(i, X)
                if v == 0:
                    continue
                t = p * _log2_frac(as_rational(v)) + _log2_frac(pr) - self.scale
                if weight is not None:
                    t += weight.log2_mu_at(X)
                terms.append(t)
        return log2_sum(terms)

    def norm(self, value, p: float, weight=None, region=None) -> float:
        return 2.0 ** (self.power_log2(value, p, weight, region) / p)

    def measure(self, region) -> Fraction:
        tot = Fraction(0)
        for i in range(1 << self.scale):
            for X, pr in self.outcomes(i):
                if region(X):
                    tot += pr
        return tot / (1 << self.scale)


def model_for(blocks: Sequence[Block], scale: int | None = None) -> CellModel:
    K = max([d.scale for b in blocks for d, _ in b.parts] + [b.f.resolution for b in blocks])
    if scale is not None:
        K = max(K, scale)
    return CellModel(K, {b.m: [a for a, _ in b.exceptional()] for b in blocks})


def block_value(blk: Block, scale: int, approx: bool):
    """f_m (approx=False) or the pre-tail H_m as a function of (cell, outcome)."""
    vals = blk.f.values(scale)
    low = -((1 << blk.q) - 1)

    def value(i, X):
        v = vals[i]
        if approx and X.get(blk.m, False):
            return v * low
        return v
    return value


# ---------------------------------------------------------------- weight


@dataclass
class LayeredWeight:
    """mu = 1 off every exceptional set X_m (m >= n_tilde); otherwise mu equals
    mu_(L+1) where L is the largest such m with x in X_m."""

    delta: Fraction
    n_tilde: int
    M_max: int
    log2_mu: dict[int, float]
    log2_h: dict[int, float]
    p: dict[int, float]
    unit_measure: Fraction | None = None

    def layer(self, X: dict[int, bool]) -> int | None:
        hit = [m for m, b in X.items() if b and m >= self.n_tilde]
        return max(hit) + 1 if hit else None

    def log2_mu_at(self, X: dict[int, bool]) -> float:
        L = self.layer(X)
        return 0.0 if L is None else self.log2_mu[L]

    def mu(self, n: int) -> float:
        return 2.0 ** self.log2_mu[n]


def _h_log2(blk: Block, model: CellModel) -> float:
    """log2 h_m, h_m = max over p in {1, p_m} of 1 + ||f_m||_p^p + (partial bound)^p.
    Both terms are log-convex in p, so the endpoints give the maximum."""
    f = block_value(blk, model.scale, approx=False)
    best = -math.inf
    for p in (1.0, blk.p):
        terms = [0.0, model.power_log2(f, p), p * math.log2(blk.partial_bound(p))]
        best = max(best, log2_sum(terms))
    # one ulp of slack so the float h is never below the true value
    return best + 1e-12


def build_weight(blocks: Sequence[Block], delta, p_schedule: dict | None = None,
                 model: CellModel | None = None) -> LayeredWeight:
    d = as_rational(delta)
    nt = tilde_index(d)
    M = len(blocks)
    if nt > M:
        raise ScheduleError(f"delta={d} needs at least {nt} blocks")
    model = model or model_for(blocks)
    log2_h = {b.m: _h_log2(b, model) for b in blocks}
    ps = {n: p_value(p_schedule, n) for n in range(1, M + 2)}
    for b in blocks:
        ps[b.m] = b.p
    log2_mu = {}
    for n in range(nt + 1, M + 2):
        log2_mu[n] = -ps[n] * (n + 2) - sum(log2_h[k] for k in range(1, min(n, M) + 1))
    w = LayeredWeight(d, nt, M, log2_mu, log2_h, ps)
    w.unit_measure = model.measure(lambda X: w.layer(X) is None)
    return w


def weighted_block_checks(blk: Block, weight: LayeredWeight, model: CellModel) -> dict:
    """Weighted bounds for block m >= n_tilde at p in {1, p_m}."""
    m = blk.m
    f = block_value(blk, model.scale, approx=False)
    H = block_value(blk, model.scale, approx=True)
    tail = float(blk.seq.tail_bound())
    off = lambda X: _off(X, m)
    target = 2.0 ** -(m + 2)
    out = {}
    for p in sorted({1.0, blk.p}):
        tag = f"p={p:g}"
        vH = model.norm(H, p, weight, off) + tail
        vf = model.norm(f, p, weight, off)
        vP = 2.0 ** (weight.log2_mu[m + 1] / p + math.log2(blk.partial_bound(p)))
        diff = lambda i, X: f(i, X) - H(i, X)
        v53 = model.norm(diff, p, weight) + tail
        v54 = weighted_partial_bound(blk, weight, model, p)
        fw = model.norm(f, p, weight)
        out[tag] = {
            "H_off_omega": {"ok": vH < target, "value": vH, "bound": target},
            "f_off_omega": {"ok": vf < target, "value": vf, "bound": target},
            "partial_off_omega": {"ok": vP < target, "value": vP, "bound": target},
            "weighted_error": {"ok": v53 < 8 * float(blk.tau), "value": v53, "bound": 8 * float(blk.tau)},
            "weighted_partial": {"ok": v54 < 2 * fw + 8 * float(blk.tau), "value": v54,
                     "bound": 2 * fw + 8 * float(blk.tau)},
        }
    return out


def weighted_partial_bound(blk: Block, weight: LayeredWeight, model: CellModel,
                           p: float) -> float:
    """Bound on max_M ||sum of block-m terms up to M||_{L^p_mu}, p <= p_m: inside
    Omega_m each layer carries a constant weight and the subset bound applies,
    outside it the weight is at most mu_(m+1)."""
    m = blk.m
    if p > blk.p:
        raise ValueError("p exceeds the block exponent")
    f = block_value(blk, model.scale, approx=False)
    U = blk.uniform_bound(p) + float(blk.seq.tail_bound())
    acc = []
    for L in [None] + list(range(weight.n_tilde + 1, m + 1)):
        reg = lambda X, L=L: not _off(X, m) and weight.layer(X) == L
        if model.measure(reg) == 0:
            continue
        e_norm = 2.0 ** (model.power_log2(f, p, None, reg) / p)
        lw = 0.0 if L is None else weight.log2_mu[L]
        acc.append(lw + p * math.log2(e_norm + U))
    if m + 1 in weight.log2_mu:
        acc.append(weight.log2_mu[m + 1] + p * math.log2(blk.partial_bound(p)))
    else:
        acc.append(p * math.log2(blk.partial_bound(p)))
    return 2.0 ** (log2_sum(acc) / p)


def _off(X: dict[int, bool], m: int) -> bool:
    """x outside Omega_m, i.e. in some X_k with k >= m."""
    return any(b for k, b in X.items() if k >= m)


# ---------------------------------------------------------------- assembly


@dataclass
class UniversalFunction:
    """g = P_0 + P_1 + ... + P_M with a_k = |c_k(g)| strictly decreasing."""

    head: list[Fraction]
    blocks: list[Block]
    enum_hash: str = ""
    config_hash: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def N0(self) -> int:
        return self.blocks[0].n_start

    @property
    def M_max(self) -> int:
        return len(self.blocks)

    @property
    def N(self) -> list[int]:
        """log2 of the block boundaries N_0, N_1, ..., N_M."""
        return [self.N0] + [b.n_end for b in self.blocks]

    def block_of(self, k: int) -> int:
        if k < 0:
            raise ValueError("negative index")
        if k < len(self.head):
            return 0
        for b in self.blocks:
            if k < 1 << b.n_end:
                return b.m
        raise ValueError("index beyond the last block")

    def a(self, k: int) -> Fraction:
        m = self.block_of(k)
        if m == 0:
            return self.head[k]
        return self.blocks[m - 1].seq.a(k).to_fraction()

    def delta(self, k: int) -> int:
        m = self.block_of(k)
        return 1 if m == 0 else self.blocks[m - 1].seq.delta(k)

    def coefficient(self, k: int) -> Fraction:
        """c_k(g) = delta_k a_k."""
        return self.delta(k) * self.a(k)

    def dense_coefficients(self, n: int | None = None) -> list[Fraction]:
        """c_k(g) for k < 2^n (default: everything) within the cell budget."""
        n = self.N[-1] if n is None else n
        from walshuniv.dyadic_core import check_scale
        check_scale(n, "dense universal coefficients")
        return [self.coefficient(k) for k in range(1 << n)]


def default_head(N0: int, first: DyadicRational) -> list[Fraction]:
    """a_k = 2 a_(N_0) 2^(N_0 - k) for k < N_0 (here N_0 = 2^n0)."""
    size = 1 << N0
    a1 = first.to_fraction()
    return [2 * a1 * Fraction(2) ** (size - k) for k in range(size)]


def assemble(blocks: Sequence[Block], head: Sequence | None = None,
             enum_hash: str = "", cfg_hash: str = "") -> UniversalFunction:
    if not blocks:
        raise ValueError("no blocks")
    N0 = blocks[0].n_start
    head = default_head(N0, blocks[0].first()) if head is None else [as_rational(v) for v in head]
    if len(head) != 1 << N0:
        raise ValueError(f"head needs {1 << N0} coefficients")
    if any(v <= 0 for v in head) or any(b >= a for a, b in zip(head, head[1:])):
        raise ValueError("head must be positive and strictly decreasing")
    if head[-1] <= blocks[0].first().to_fraction():
        raise ValueError("head violates the seam condition a_(N_0 - 1) > a_(N_0)")
    u = UniversalFunction(list(head), list(blocks), enum_hash, cfg_hash)
    u.checks = assembly_checks(u)
    return u


def assembly_checks(u: UniversalFunction) -> dict:
    seams = []
    prev = DyadicRational.from_value(u.head[-1])
    for b in u.blocks:
        seams.append(prev > b.first())
        prev = b.last()
    inner = all(check_strict_decrease(b.seq)[0] for b in u.blocks)
    # L^1 witness: each block contributes at most its partial-sum bound
    l1 = [b.partial_bound(1.0) for b in u.blocks]
    head_l1 = float(sum(u.head))
    limit = head_l1 + sum(float(b.tau) for b in u.blocks)
    return {
        "strict_decrease": {"ok": all(seams) and inner, "seams": seams, "method": "exact"},
        "l1_witness": {"ok": all(v < float(b.tau) for v, b in zip(l1, u.blocks)),
                       "partial": [head_l1 + sum(l1[:i + 1]) for i in range(len(l1))],
                       "bound": limit},
    }


# ---------------------------------------------------------------- files


def _aff(a: AffineSet) -> str:
    fx = ",".join(f"{p}:{v}" for p, v in a.fixed) or "-"
    return f"{a.prefix.scale} {a.prefix.index} {fx}"


def _parse_aff(K: str, i: str, fx: str) -> AffineSet:
    fixed = () if fx == "-" else tuple(tuple(int(t) for t in s.split(":")) for s in fx.split(","))
    return AffineSet(DyadicInterval(int(K), int(i)), fixed)


def universal_lines(u: UniversalFunction) -> list[str]:
    """Header, head coefficient dump, then per block its groups and signed carriers
    (the coefficients follow from these; a dense dump has 2^N_M lines)."""
    from walshuniv.formats import _q, coeff_lines, header

    out = header("universal", u.config_hash)
    out += [f"dictionary {u.enum_hash}", f"M_max {u.M_max}", "N " + " ".join(map(str, u.N))]
    out += ["coef " + ln for ln in coeff_lines(u.head)]
    for b in u.blocks:
        s = b.seq
        out.append(f"block {b.m} {s.n0} {s.n_end} {b.q} {b.p!r} {_q(b.epsilon)} {_q(b.tau)} "
                   f"{s.tail if s.tail is not None else '-'} {int(s.ramp)}")
        out += [f"f {iv.scale} {iv.index} {_q(v)}" for iv, v in b.f.pieces]
        out += [f"part {d.scale} {d.index} {_q(v)}" for d, v in b.parts]
        out += [f"group {n} {_q(s.group_mag[n])}" for n in sorted(s.group_mag)]
        for c in s.carriers:
            k = c.block
            out.append(f"carrier {k.M} {c.level} {int(k.bent)} {_q(k.amplitude)} {_q(c.base)} "
                       f"{c.piece.scale} {c.piece.index} {_aff(k.support)}")
        out.append("checks " + json.dumps(_plain(b.checks), sort_keys=True))
    return out


def _plain(obj):
    from walshuniv.formats import to_jsonable
    return to_jsonable(obj)


def write_universal(u: UniversalFunction, path) -> str:
    from walshuniv.formats import write_lines
    return write_lines(universal_lines(u), path)


def parse_universal(lines: list[str], cfg_hash: str = "") -> UniversalFunction:
    from walshuniv.flat import SplitBlock
    from walshuniv.formats import FormatError, _frac
    from walshuniv.interval_approx import Carrier

    head: dict[int, Fraction] = {}
    enum_hash = ""
    raw_blocks: list[dict] = []
    for ln in lines:
        tag, *rest = ln.split(" ", 1)
        rest = rest[0] if rest else ""
        t = rest.split()
        if tag == "dictionary":
            enum_hash = rest.strip()
        elif tag in ("M_max", "N"):
            continue
        elif tag == "coef":
            head[int(t[0])] = _frac(t[1])
        elif tag == "block":
            raw_blocks.append({"hdr": t, "f": [], "part": [], "group": {}, "carrier": [],
                               "checks": {}})
        elif not raw_blocks:
            raise FormatError(f"unexpected line {ln!r}")
        elif tag == "f":
            raw_blocks[-1]["f"].append((DyadicInterval(int(t[0]), int(t[1])), _frac(t[2])))
        elif tag == "part":
            raw_blocks[-1]["part"].append((DyadicInterval(int(t[0]), int(t[1])), _frac(t[2])))
        elif tag == "group":
            raw_blocks[-1]["group"][int(t[0])] = _frac(t[1])
        elif tag == "carrier":
            sb = SplitBlock(_parse_aff(t[7], t[8], t[9]), int(t[0]), _frac(t[3]), bool(int(t[2])))
            raw_blocks[-1]["carrier"].append(
                Carrier(sb, int(t[1]), DyadicInterval(int(t[5]), int(t[6])), _frac(t[4])))
        elif tag == "checks":
            raw_blocks[-1]["checks"] = json.loads(rest)
        else:
            raise FormatError(f"unknown record {tag!r}")
    blocks = []
    for rb in raw_blocks:
        m, n0, n_end, q, p, eps, tau, tail, ramp = rb["hdr"]
        seq = SignedBlockSeq(int(n0), int(n_end), rb["group"], rb["carrier"],
                             None if tail == "-" else int(tail), bool(int(ramp)))
        blocks.append(Block(int(m), StepFunction(rb["f"]), float(p), _frac(eps), _frac(tau),
                            int(q), rb["part"], seq, None, rb["checks"]))
    head_list = [head[k] for k in range(len(head))]
    u = UniversalFunction(head_list, blocks, enum_hash, cfg_hash)
    u.checks = assembly_checks(u)
    return u


def read_universal(path) -> UniversalFunction:
    from walshuniv.formats import config_of, read_lines
    return parse_universal(read_lines(path), config_of(path))


def weight_lines(w: LayeredWeight, cfg_hash: str = "") -> list[str]:
    """Layers are described symbolically: layer n is X_(n-1) minus every X_k, k >= n."""
    from walshuniv.formats import _q, header

    out = header("weight", cfg_hash)
    out += [f"delta {_q(w.delta)}", f"n_tilde {w.n_tilde}", f"M_max {w.M_max}"]
    if w.unit_measure is not None:
        out.append(f"unit_measure {_q(w.unit_measure)}")
    out += [f"p {n} {w.p[n]!r}" for n in sorted(w.p)]
    out += [f"h {m} {w.log2_h[m]!r}" for m in sorted(w.log2_h)]
    out += [f"layer {n} {w.log2_mu[n]!r} X{n - 1}" for n in sorted(w.log2_mu)]
    return out


def write_weight(w: LayeredWeight, path, cfg_hash: str = "") -> str:
    from walshuniv.formats import write_lines
    return write_lines(weight_lines(w, cfg_hash), path)


def parse_weight(lines: list[str]) -> LayeredWeight:
    from walshuniv.formats import FormatError, _frac

    kv: dict = {"p": {}, "h": {}, "layer": {}}
    for ln in lines:
        t = ln.split()
        if t[0] in ("delta", "unit_measure"):
            kv[t[0]] = _frac(t[1])
        elif t[0] in ("n_tilde", "M_max"):
            kv[t[0]] = int(t[1])
        elif t[0] in ("p", "h", "layer"):
            kv[t[0]][int(t[1])] = float(t[2])
        else:
            raise FormatError(f"unknown record {t[0]!r}")
    return LayeredWeight(kv["delta"], kv["n_tilde"], kv["M_max"], kv["layer"], kv["h"],
                         kv["p"], kv.get("unit_measure"))


def read_weight(path) -> LayeredWeight:
    from walshuniv.formats import read_lines
    return parse_weight(read_lines(path))


# ---------------------------------------------------------------- pipeline

DEFAULT_CONFIG = {
    "dictionary": {
        "scale": 1,
        "unit_log2": -100,
        # amplitudes shrink by 4 per entry so that every seam can descend
        "entries": [["1", "1/2"], ["1/4", "-1/4"], ["1/16", "1/32"],
                    ["1/64", "-1/64"], ["1/256", "1/512"], ["1/1024", "-1/1024"]],
    },
    "M_max": 6,
    "N0": 3,
    "p_schedule": {"slope": 1, "offset": 1},
    "tolerance": "relaxed:1",
    "delta": ["1/2", "1/4"],
    "budget": 1 << 22,
    "seed": 0,
}

_KEYS = set(DEFAULT_CONFIG)


def validate_config(cfg: dict) -> dict:
    """Fill defaults and check every field before anything is built."""
    unknown = set(cfg) - _KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = {**DEFAULT_CONFIG, **cfg}
    if not isinstance(out["M_max"], int) or not 1 <= out["M_max"] <= 64:
        raise ValueError("M_max must be an integer in [1, 64]")
    if not isinstance(out["N0"], int) or not 1 <= out["N0"] <= 16:
        raise ValueError("N0 must be an integer in [1, 16]")
    parse_tolerance(out["tolerance"])
    deltas = out["delta"] if isinstance(out["delta"], list) else [out["delta"]]
    for d in deltas:
        tilde_index(d)
    out["delta"] = [str(as_rational(d)) for d in deltas]
    ps = out["p_schedule"]
    if not isinstance(ps, dict) or set(ps) - {"slope", "offset"} or float(ps.get("slope", 1)) <= 0:
        raise ValueError("p_schedule needs a positive slope and an offset")
    if not isinstance(out["budget"], int) or out["budget"] < 1:
        raise ValueError("budget must be a positive integer")
    enumerate_dictionary(out["dictionary"])
    return out


@dataclass
class BuildResult:
    config: dict
    enum: PolynomialEnumeration
    universal: UniversalFunction
    weights: dict[str, LayeredWeight]
    model: CellModel
    report: dict


def build_universal(cfg: dict | None = None, progress=None) -> BuildResult:
    from walshuniv.dyadic_core import budget

    cfg = validate_config(cfg or {})
    h = config_hash(cfg)
    enum = enumerate_dictionary(cfg["dictionary"])
    with budget(cfg["budget"]):
        blocks = build_blocks(enum, cfg["M_max"], cfg["p_schedule"], cfg["tolerance"],
                              cfg["N0"], progress)
        u = assemble(blocks, enum_hash=enum.hash, cfg_hash=h)
        model = model_for(blocks)
        weights, wreport = {}, {}
        for d in cfg["delta"]:
            w = build_weight(blocks, d, cfg["p_schedule"], model)
            weights[d] = w
            bound = 1 - as_rational(d)
            wreport[d] = {
                "n_tilde": w.n_tilde,
                "unit_measure": {"ok": w.unit_measure > bound, "value": str(w.unit_measure),
                                 "bound": str(bound), "method": "exact"},
                "log2_mu": {str(n): v for n, v in w.log2_mu.items()},
                "layers_below_bound": all(w.log2_mu[n] <= -w.p[n] * (n + 2) for n in w.log2_mu),
                "blocks": {str(b.m): weighted_block_checks(b, w, model)
                           for b in blocks if b.m >= w.n_tilde},
            }
    report = {
        "config_hash": h,
        "dictionary_hash": enum.hash,
        "M_max": u.M_max,
        "N": u.N,
        "blocks": {str(b.m): b.checks for b in blocks},
        "assembly": u.checks,
        "weights": wreport,
    }
    report["ok"] = report_ok(report)
    return BuildResult(cfg, enum, u, weights, model, _plain(report))


def report_ok(obj) -> bool:
    """True when every nested record with an 'ok' flag passes."""
    if isinstance(obj, dict):
        if obj.get("ok") is False:
            return False
        return all(report_ok(v) for k, v in obj.items() if k != "ok")
    if isinstance(obj, list):
        return all(report_ok(v) for v in obj)
    return True


def endpoint_audit(trials: int = 200, seed: int = 0, p_max: float = 8.0,
                   grid: int = 2001, rtol: float = 1e-12) -> dict:
    """p -> sum w_i |v_i|^p is convex, so its maximum over [1, p_max] sits at an
    endpoint; compare against a dense p-grid on random step functions."""
    import numpy as np

    rng = np.random.default_rng(seed)
    ps = np.linspace(1.0, p_max, grid)
    worst = 0.0
    for _ in range(trials):
        R = int(rng.integers(1, 7))
        v = rng.integers(-64, 65, size=1 << R) / float(1 << int(rng.integers(0, 8)))
        v = np.abs(v)
        if not v.any():
            continue
        logs = [log2_sum((p * np.log2(v[v > 0]) - R).tolist()) for p in ps]
        ends = max(logs[0], logs[-1])
        worst = max(worst, 2.0 ** (max(logs) - ends) - 1.0)
    return {"ok": worst <= rtol, "max_relative_excess": worst, "trials": trials,
            "grid": grid, "p_max": p_max}
