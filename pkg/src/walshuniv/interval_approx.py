"""Exact representation of l * chi_Delta off a small set by signed Walsh blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from walshuniv.dyadic_core import (
    BudgetError,
    DyadicInterval,
    DyadicRational,
    IntervalSet,
    as_rational,
    cell_budget,
)
from walshuniv.flat import AffineSet, SplitBlock

MODES = ("paper", "tuned")


def max_scale() -> int:
    return cell_budget().bit_length() - 1


def _lt_sqrt2(coef: Fraction, e: int, bound: Fraction) -> bool:
    """coef * 2^(-e/2) < bound, exactly, for coef, bound > 0."""
    return coef * coef < bound * bound * Fraction(2) ** e


def _dyadic(x, what: str) -> Fraction:
    q = as_rational(x)
    if q.denominator & (q.denominator - 1):
        raise ValueError(f"{what} must be a dyadic rational, got {q}")
    return q


def split_scale(delta: DyadicInterval, l, epsilon) -> int:
    """Smallest K1 > K with |l| 2^(-(K1+1)/2) < epsilon / 2."""
    l, eps = abs(as_rational(l)), as_rational(epsilon)
    K1 = delta.scale + 1
    while not _lt_sqrt2(l, K1 + 1, eps / 2):
        K1 += 1
    return K1


@dataclass(frozen=True)
class KSchedule:
    mode: str
    delta: DyadicInterval
    q: int
    n0: int
    split: int
    levels: tuple[tuple[int, ...], ...]

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(lv) for lv in self.levels)

    @property
    def scales(self) -> list[int]:
        return [k for lv in self.levels for k in lv]

    @property
    def n_q(self) -> int:
        return self.scales[-1] + 1

    def to_dict(self) -> dict:
        return {"mode": self.mode, "delta": [self.delta.scale, self.delta.index], "q": self.q,
                "n0": self.n0, "split_scale": self.split, "counts": list(self.counts),
                "levels": [list(lv) for lv in self.levels], "n_q": self.n_q}


def _paper_levels(delta, l, eps, q, n0, K1):
    l = abs(l)
    K = delta.scale
    top = max_scale()
    levels: list[tuple[int, ...]] = []
    ref = K1
    prev = n0 - 1
    for nu in range(1, q + 1):
        N = 1 << (K1 - K + 1) if nu == 1 else 1 << (ref + 1 - K - (nu - 1))
        if N > cell_budget():
            raise BudgetError(f"level {nu} needs {N} intervals")
        lvl = []
        for _ in range(N):
            k = max(prev + 1, ref + 3)
            if (k - ref - 1) % 2:
                k += 1
            while True:
                if k + 1 > top:
                    raise BudgetError(
                        f"paper schedule needs resolution above 2^{top} at level {nu}")
                amp = (1 << (nu - 1)) * l
                ok_b = _lt_sqrt2((k - prev) * amp, k + ref + 1, eps / ((2 << nu) * N))
                ok_c = _lt_sqrt2((1 << nu) * l, k + 1, eps / 2)
                if ok_b and ok_c:
                    break
                k += 2
            lvl.append(k)
            prev = k
        levels.append(tuple(lvl))
        ref = prev
    return tuple(levels)


def _tuned_levels(delta, q, n0, K1):
    Kp = K1 + 1
    N = 1 << (K1 - delta.scale + 1)
    top = max_scale()
    levels = []
    prev = n0 - 1
    for nu in range(1, q + 1):
        lvl = []
        for _ in range(N):
            M = max(prev + 1, Kp + 1)
            if nu == q:
                while (M - Kp - (q - 1)) % 2:
                    M += 1
            if M + 1 > top:
                raise BudgetError(f"tuned schedule needs resolution above 2^{top}")
            lvl.append(M)
            prev = M
        levels.append(tuple(lvl))
    return tuple(levels)


def choose_schedule(delta: DyadicInterval, l, epsilon, q: int, n0: int | None = None,
                    mode: str = "paper", split: int | None = None) -> KSchedule:
    """Carrier scales for each level.  With n0=None the n0 giving the smallest
    final resolution is used."""
    l, eps = as_rational(l), as_rational(epsilon)
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if l == 0:
        raise ValueError("l must be nonzero")
    if q < 1:
        raise ValueError("q must be positive")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    K1 = split_scale(delta, l, eps) if split is None else int(split)
    if K1 < delta.scale - 1:
        raise ValueError("split scale must be at least K - 1")

    def build(n):
        if mode == "paper":
            return _paper_levels(delta, l, eps, q, n, K1)
        return _tuned_levels(delta, q, n, K1)

    if n0 is not None:
        if n0 < 1:
            raise ValueError("n0 must be a positive integer")
        return KSchedule(mode, delta, q, n0, K1, build(n0))
    best = None
    last_err = None
    for n in range(1, max_scale() + 1):
        try:
            lv = build(n)
        except BudgetError as err:
            last_err = last_err or err
            continue
        if best is None or lv[-1][-1] < best[1][-1][-1]:
            best = (n, lv)
    if best is None:
        raise last_err or BudgetError("no feasible schedule")
    return KSchedule(mode, delta, q, best[0], K1, best[1])


@dataclass(frozen=True)
class Carrier:
    """One signed block; `base` is the value of the completed prefix on its support."""

    block: SplitBlock
    level: int
    piece: DyadicInterval
    base: Fraction

    @property
    def M(self) -> int:
        return self.block.M


TAIL_BITS = 1 << 14


@dataclass
class SignedBlockSeq:
    """Coefficients a_k on [2^n0, 2^n_end), constant b_n on each group [2^n, 2^(n+1)),
    signs from the carriers; optional perturbation a_k += 2^-(tail + k)."""

    n0: int
    n_end: int
    group_mag: dict[int, Fraction]
    carriers: list[Carrier]
    tail: int | None = None
    ramp: bool = False

    def __post_init__(self):
        self.carriers = sorted(self.carriers, key=lambda c: c.M)
        self._by_scale = {c.M: c for c in self.carriers}

    @property
    def window(self) -> tuple[int, int]:
        return 1 << self.n0, 1 << self.n_end

    def a(self, k: int) -> DyadicRational:
        lo, hi = self.window
        if not lo <= k < hi:
            raise ValueError("index outside window")
        v = DyadicRational.from_value(self.group_mag[k.bit_length() - 1])
        if self.tail is not None:
            v = v + self.tail_term(k)
        return v

    def tail_term(self, k: int) -> DyadicRational:
        """2^-(tail+k), or with `ramp` (2^(n+1) - j) 2^-(tail+3n+1) for k = 2^n + j;
        both strictly decrease in k."""
        if self.ramp:
            n = k.bit_length() - 1
            return DyadicRational((2 << n) - (k - (1 << n)), self.tail + 3 * n + 1)
        if self.tail + k > TAIL_BITS:
            raise BudgetError("tail term too small to represent; use the ramp tail")
        return DyadicRational(1, self.tail + k)

    def delta(self, k: int) -> int:
        c = self._by_scale.get(k.bit_length() - 1)
        return 0 if c is None else c.block.sign(k)

    def group_array(self) -> np.ndarray:
        """b_n for n in [n0, n_end) as floats."""
        return np.array([float(self.group_mag[n]) for n in range(self.n0, self.n_end)])

    def coeff_array(self, signed: bool) -> np.ndarray:
        """Unperturbed coefficients (delta_k) a_k over the window, as floats (exact dyadics)."""
        lo, hi = self.window
        if hi - lo > cell_budget():
            raise BudgetError("coefficient window exceeds the budget")
        out = np.zeros(hi - lo)
        for n in range(self.n0, self.n_end):
            a, b = (1 << n) - lo, (2 << n) - lo
            if signed:
                c = self._by_scale.get(n)
                if c is not None:
                    out[a:b] = c.block.signs() * float(self.group_mag[n])
            else:
                out[a:b] = float(self.group_mag[n])
        return out

    def tail_bound(self) -> DyadicRational:
        """Upper bound for the sum of the perturbation terms 2^-(tail+k) over the window."""
        if self.tail is None:
            return DyadicRational(0)
        if self.ramp:
            # group n sums to at most 2^-(tail+n)
            return DyadicRational(1, self.tail + self.n0 - 1)
        return DyadicRational(1, self.tail + (1 << self.n0) - 1)

    def check_ladder(self, eps) -> tuple[bool, str]:
        """Statement-1 ladder: positive, non-increasing, below eps, carrier moduli match."""
        eps = as_rational(eps)
        prev = None
        for n in range(self.n0, self.n_end):
            b = self.group_mag[n]
            if b <= 0 or b >= eps:
                return False, f"group {n} magnitude {b} outside (0, eps)"
            if prev is not None and b > prev:
                return False, f"group {n} magnitude increases"
            prev = b
        for c in self.carriers:
            if c.block.magnitude != self.group_mag[c.M]:
                return False, f"carrier {c.M} modulus differs from the group magnitude"
        return True, "ok"


def _subintervals(s: IntervalSet, scale: int) -> list[DyadicInterval]:
    out = []
    for iv in s:
        if iv.scale > scale:
            raise ValueError("set is finer than the requested partition")
        a, b = iv.cells(scale)
        out.extend(DyadicInterval(scale, j) for j in range(a, b))
    return out


def _pieces(delta: DyadicInterval, scale: int) -> list[DyadicInterval]:
    if scale <= delta.scale:
        return [delta]
    a, b = delta.cells(scale)
    return [DyadicInterval(scale, j) for j in range(a, b)]


def build_carriers(schedule: KSchedule, l: Fraction) -> list[Carrier]:
    q, delta = schedule.q, schedule.delta
    Kp = max(schedule.split + 1, delta.scale)
    top = _pieces(delta, Kp)
    carriers: list[Carrier] = []
    if schedule.mode == "paper":
        pieces = top
        tops = top
        for nu, scales in enumerate(schedule.levels, start=1):
            if len(pieces) != len(scales):
                raise AssertionError("schedule does not match the partition")
            amp = (1 << (nu - 1)) * l
            base = -((1 << (nu - 1)) - 1) * l
            minus = []
            for piece, M in zip(pieces, scales):
                blk = SplitBlock(AffineSet(piece), M, amp, bent=True)
                owner = next(t for t in tops if t.contains(piece))
                carriers.append(Carrier(blk, nu, owner, base))
                minus.append(blk.minus_set())
            if nu < q:
                pieces = _subintervals(IntervalSet(iv for s in minus for iv in s), scales[-1] + 1)
        return carriers
    supports = [AffineSet(t) for t in top]
    for nu, scales in enumerate(schedule.levels, start=1):
        amp = (1 << (nu - 1)) * l
        base = -((1 << (nu - 1)) - 1) * l
        for i, M in enumerate(scales):
            blk = SplitBlock(supports[i], M, amp, bent=(nu == q and schedule.mode != "unbent"))
            carriers.append(Carrier(blk, nu, top[i], base))
            if nu < q:
                supports[i] = supports[i].with_digit(M + 1, 1)
    return carriers


def group_magnitudes(carriers: list[Carrier], n0: int) -> dict[int, Fraction]:
    out: dict[int, Fraction] = {}
    prev = n0 - 1
    for c in sorted(carriers, key=lambda c: c.M):
        for n in range(prev + 1, c.M + 1):
            out[n] = c.block.magnitude
        prev = c.M
    return out


def envelope_norm(block: SplitBlock, p: float) -> float:
    """L^p norm of the block's unit partial-sum envelope."""
    terms = [p * math.log2(float(v)) - e.exponent for _, e, v in block.partial_envelope() if v > 0]
    from walshuniv.dyadic_core import log2_sum
    return 2.0 ** (log2_sum(terms) / p) if terms else 0.0


def _class_norm(classes: dict[Fraction, Fraction], p: float) -> float:
    from walshuniv.dyadic_core import log2_sum
    terms = [p * math.log2(abs(float(v))) + math.log2(float(m))
             for v, m in classes.items() if v != 0 and m > 0]
    return 2.0 ** (log2_sum(terms) / p) if terms else 0.0


def certified_signed_bound(carriers: list[Carrier], p: float,
                           classes: dict[Fraction, Fraction] | None = None) -> tuple[float, int]:
    """Upper bound on max_M ||sum_{k <= M} delta_k a_k W_k||_p.

    Partial sums inside a carrier window are bounded by the norm of the completed
    prefix (tracked exactly as value classes) plus the carrier's envelope norm.
    Returns (bound, scale of the binding carrier)."""
    cls = dict(classes) if classes else {Fraction(0): Fraction(1)}
    best, arg = _class_norm(cls, p), -1
    for c in sorted(carriers, key=lambda c: c.M):
        b = _class_norm(cls, p) + abs(float(c.block.amplitude)) * envelope_norm(c.block, p)
        if b > best:
            best, arg = b, c.M
        meas = c.block.support.measure().to_fraction()
        amp = c.block.amplitude
        cls[c.base] = cls.get(c.base, Fraction(0)) - meas
        if cls[c.base] < 0:
            raise AssertionError("carrier support exceeds its base class")
        for v in (c.base + amp, c.base - amp):
            cls[v] = cls.get(v, Fraction(0)) + meas / 2
        end = _class_norm(cls, p)
        if end > best:
            best, arg = end, c.M
    return best, arg


def certified_unsigned_bound(group_mag: dict[int, Fraction], n0: int, n_end: int) -> float:
    """Upper bound on max_M ||sum_{k=2^n0}^{M} a_k W_k||_1 for group-constant a_k.

    Complete groups telescope to a radial function with exact L^1 norm; the open
    group contributes at most b_n * max ||D_s||_1 <= b_n * (n + 3) / 2."""
    best = 0.0
    for nb in range(n0, n_end):
        # complete groups n0..nb-1 : sum b_n (D_{2^{n+1}} - D_{2^n})
        vals = {}
        for j in range(nb + 2):
            tot = Fraction(0)
            for n in range(n0, nb):
                tot += group_mag[n] * ((1 << (n + 1)) * (n + 1 <= j) - (1 << n) * (n <= j))
            vals[j] = tot
        # shell j carries measure 2^(-j-1) for j <= nb, tail [0, 2^(-nb-1)) uses j = nb + 1
        l1 = sum(abs(vals[j]) * Fraction(1, 2 << j) for j in range(nb + 1)) \
            + abs(vals[nb + 1]) * Fraction(1, 2 << nb)
        best = max(best, float(l1) + float(group_mag[nb]) * (nb + 3) / 2)
    return best


EXACT_SCAN_WORK = 2**30
RADIAL_WORK = 2**29


def verification_constant(p: float) -> float:
    """Measured basicity constant plus one."""
    from walshuniv.walsh import empirical_basicity
    return empirical_basicity(p) + 1.0


def signed_partial_max(seq: SignedBlockSeq, p: float, classes=None,
                       exact_work: int = EXACT_SCAN_WORK) -> tuple[float, int, str]:
    """(value, argmax, method) for the signed partial sums; exact when affordable."""
    from walshuniv.partials import dense_scan

    lo, hi = seq.window
    R = seq.n_end
    if classes is None and (hi - lo) * (1 << R) <= exact_work and (1 << R) <= cell_budget():
        v, arg = dense_scan(seq.coeff_array(True), lo, R, p)
        return v, arg, "exact"
    v, arg = certified_signed_bound(seq.carriers, p, classes)
    return v, arg, "bound"


def unsigned_partial_max(seq: SignedBlockSeq, p: float = 1,
                         radial_work: int = RADIAL_WORK) -> tuple[float, str]:
    from walshuniv.partials import radial_scan

    if (1 << seq.n_end) * seq.n_end <= radial_work:
        v, _ = radial_scan(seq.group_mag, seq.n0, seq.n_end, p)
        return v, "exact"
    if p != 1:
        raise BudgetError("radial scan too large and no certified bound for p != 1")
    return certified_unsigned_bound(seq.group_mag, seq.n0, seq.n_end), "bound"


@dataclass
class Lemma2Output:
    schedule: KSchedule
    l: Fraction
    epsilon: Fraction
    seq: SignedBlockSeq
    checks: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return self.schedule.q

    @property
    def delta(self) -> DyadicInterval:
        return self.schedule.delta

    @property
    def n_q(self) -> int:
        return self.schedule.n_q

    def piece_values(self):
        """Per top piece: (piece, scale R, values of H / l on the local scale-R cells)."""
        groups: dict[DyadicInterval, list[Carrier]] = {}
        for c in self.seq.carriers:
            groups.setdefault(c.piece, []).append(c)
        for piece in sorted(groups, key=lambda t: t.index):
            cs = groups[piece]
            R = max(c.M for c in cs) + 1
            vals = np.zeros(1 << (R - piece.scale), dtype=np.int64)
            for c in cs:
                pre = c.block.support.prefix
                off = (pre.index - (piece.index << (pre.scale - piece.scale))) << (R - pre.scale)
                loc = c.block.local_unit_values(R) * (1 << (c.level - 1))
                vals[off:off + loc.size] += loc
            yield piece, R, vals

    @cached_property
    def e_tilde(self) -> IntervalSet:
        low = -((1 << self.q) - 1)
        runs, S = [], self.n_q
        for piece, R, vals in self.piece_values():
            base = piece.index << (R - piece.scale)
            shift = S - R
            for c in np.flatnonzero(vals == low).tolist():
                runs.append(((base + c) << shift, (base + c + 1) << shift))
        return IntervalSet.from_runs(runs, S)

    @cached_property
    def e_q(self) -> IntervalSet:
        return IntervalSet([self.delta]).difference(self.e_tilde)

    def value_classes(self) -> dict[Fraction, Fraction]:
        """Measure of each value of H on [0, 1)."""
        lo = -((1 << self.q) - 1) * self.l
        tilde = self.delta.length.to_fraction() / (1 << self.q)
        return {Fraction(0): 1 - self.delta.length.to_fraction(),
                self.l: self.delta.length.to_fraction() - tilde, lo: tilde}

    def check_values(self) -> dict:
        """H takes only the values l and -(2^q - 1) l on the piece, the latter on a set
        of measure 2^-q |piece|."""
        low = -((1 << self.q) - 1)
        ok, count = True, 0
        for piece, R, vals in self.piece_values():
            if not self.delta.contains(piece):
                ok = False
            ok &= bool(np.all((vals == 1) | (vals == low)))
            count += int(np.sum(vals == low)) * (1 << (self.n_q - R))
        tilde = DyadicRational(count, self.n_q)
        want = DyadicRational(1, self.delta.scale + self.q)
        return {"ok": ok and tilde == want, "method": "exact",
                "tilde_measure": str(tilde), "expected": str(want)}

    def verify(self, p: float = 2, C: float | None = None) -> dict:
        q, l, eps = self.q, self.l, self.epsilon
        C = verification_constant(p) if C is None else C
        checks = {}
        ok1, why = self.seq.check_ladder(eps)
        checks["statement1"] = {"ok": ok1, "detail": why, "method": "exact"}
        checks["statement2"] = self.check_values()
        tilde = DyadicRational.from_value(Fraction(checks["statement2"]["tilde_measure"]))
        want = DyadicRational(1, self.delta.scale + q)
        v3, arg3, m3 = signed_partial_max(self.seq, p)
        bound3 = (1 << q) * C * abs(float(l)) * float(self.delta.length) ** (1 / p)
        checks["statement3"] = {"ok": v3 < bound3, "value": v3, "bound": bound3, "p": p,
                                "C": C, "argmax": arg3, "method": m3}
        v4, m4 = unsigned_partial_max(self.seq, 1)
        checks["statement4"] = {"ok": v4 < float(eps), "value": v4, "bound": float(eps),
                                "method": m4}
        e_meas = self.delta.length - tilde
        checks["E_measure"] = {"ok": e_meas == self.delta.length - want, "value": str(e_meas)}
        self.checks = checks
        return checks

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(c["ok"] for c in self.checks.values())

    def report(self) -> dict:
        return {"schedule": self.schedule.to_dict(), "l": str(self.l),
                "epsilon": str(self.epsilon),
                "resolution": self.n_q, "checks": self.checks}


class ConstructionError(RuntimeError):
    pass


def lemma2_construct(delta: DyadicInterval, l, epsilon, q: int = 1, n0: int | None = None,
                     p: float = 2, mode: str = "paper", split: int | None = None,
                     C: float | None = None, verify: bool = True) -> Lemma2Output:
    l = _dyadic(l, "l")
    eps = as_rational(epsilon)
    sched = choose_schedule(delta, l, eps, q, n0, mode, split)
    carriers = build_carriers(sched, l)
    seq = SignedBlockSeq(sched.n0, sched.n_q, group_magnitudes(carriers, sched.n0), carriers)
    out = Lemma2Output(sched, l, eps, seq)
    if verify:
        out.verify(p, C)
        if mode == "tuned" and not out.ok:
            bad = [k for k, c in out.checks.items() if not c["ok"]]
            raise ConstructionError(f"tuned construction violates {', '.join(bad)}")
    return out


def max_partial_norm(s: SignedBlockSeq, p: float, signed: bool = True, w=None) -> tuple[float, int]:
    """Exact max over M of ||sum_{k=2^n0}^{M} (delta_k) a_k W_k||_{p, w} (dense; budget-limited)."""
    from walshuniv.partials import dense_scan, radial_scan

    lo, hi = s.window
    if not signed and w is None:
        return radial_scan(s.group_mag, s.n0, s.n_end, p)
    R = s.n_end
    wl = None if w is None else w.log2_grid(R)
    return dense_scan(s.coeff_array(signed), lo, R, p, wl)


def check_strict_decrease(seq: SignedBlockSeq) -> tuple[bool, int]:
    """Exhaustive check of a_k > a_(k+1) over the whole window, exactly.

    Inside a group a_k = b_n + 2^-(tail+k) decreases strictly with k, so only the
    group boundaries need exact comparison.  Returns (ok, number of comparisons
    covered)."""
    lo, hi = seq.window
    if seq.tail is None:
        # equal magnitudes inside a group of size > 1
        return hi - lo <= 1, hi - lo - 1
    for n in range(seq.n0, seq.n_end - 1):
        last = (2 << n) - 1
        if not seq.a(last) > seq.a(last + 1):
            return False, hi - lo - 1
    return True, hi - lo - 1
