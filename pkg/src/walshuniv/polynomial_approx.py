"""Approximation of a dyadic step function by a chain of interval constructions.

Each constant piece l_j on an equal-length dyadic interval is represented by an
interval construction whose index window starts where the previous one ended; the
coefficient magnitudes descend strictly across every seam, and a tiny geometric
tail 2^-(N0 + k) makes the whole ladder strictly decreasing.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from walshuniv.dyadic_core import (
    BudgetError,
    DyadicInterval,
    DyadicRational,
    IntervalSet,
    StepFunction,
    as_rational,
    cell_budget,
)
from walshuniv.flat import AffineSet
from walshuniv.interval_approx import (
    Carrier,
    ConstructionError,
    KSchedule,
    Lemma2Output,
    TAIL_BITS,
    SignedBlockSeq,
    build_carriers,
    envelope_norm,
    group_magnitudes,
    lemma2_construct,
    max_scale,
    unsigned_partial_max,
    verification_constant,
)

DIRECT_WORK = 2**28


def levels_for(epsilon) -> int:
    """Smallest q with 2^-q < epsilon."""
    eps = as_rational(epsilon)
    q = 1
    while Fraction(1, 1 << q) >= eps:
        q += 1
    return q


def tail_base(epsilon) -> int:
    """Smallest N0 with 2^-N0 < epsilon / 2."""
    eps = as_rational(epsilon)
    n = 1
    while Fraction(1, 1 << n) >= eps / 2:
        n += 1
    return n


def partition_scale(f: StepFunction, q: int, C: float, epsilon, p0: float) -> int:
    """Coarsest common scale with 2^q C |l| |piece|^(1/p0) < epsilon/2 for every value l."""
    eps = float(as_rational(epsilon))
    top = max(abs(float(v)) for _, v in f.pieces)
    s = f.resolution
    while (1 << q) * C * top * 2.0 ** (-s / p0) >= eps / 2:
        s += 1
        if s > 62:
            raise BudgetError("no partition scale satisfies the piece bound")
    return s


@dataclass
class Piece:
    delta: DyadicInterval
    value: Fraction
    out: Lemma2Output

    @property
    def window(self) -> tuple[int, int]:
        return self.out.seq.window


@dataclass
class Lemma3Output:
    f: StepFunction
    epsilon: Fraction
    p0: float
    q: int
    scale: int
    C: float
    pieces: list[Piece]
    N0: int
    seq: SignedBlockSeq
    cap: Fraction | None = None
    schedule: str = "sequential"
    checks: dict = field(default_factory=dict)

    @property
    def n0(self) -> int:
        return self.seq.n0

    @property
    def n_end(self) -> int:
        return self.seq.n_end

    def e_measure(self) -> Fraction:
        lost = sum((pc.delta.length.to_fraction() for pc in self.pieces), Fraction(0))
        return 1 - lost / (1 << self.q)

    @property
    def e_eps(self) -> IntervalSet:
        bad = IntervalSet([])
        for pc in self.pieces:
            if self.schedule == "unbent":
                bad = bad.union(exceptional_set(pc.out).to_interval_set())
            else:
                bad = bad.union(pc.out.e_tilde)
        return bad.complement()

    def coefficient(self, k: int) -> tuple[DyadicRational, int]:
        """Final a_k (with the tail) and its sign selector."""
        return self.seq.a(k), self.seq.delta(k)

    def piece_maxima(self) -> list[float]:
        """Per piece: max over cuts of the signed partial-sum L^p0 norm on [0, 1)."""
        return [pc.out.checks["statement3"]["value"] for pc in self.pieces]

    def uniform_bound(self) -> float:
        """U with ||S_M||_{L^p(e)} <= ||f||_{L^p(e)} + U for every cut, e inside E, p <= p0."""
        if self.schedule == "sequential":
            # earlier pieces equal f on e, later ones vanish, the open one is bounded
            return max(self.piece_maxima())
        parts = [(pc.delta, pc.value) for pc in self.pieces]
        return joint_certificate(self.seq.carriers, parts, self.q, self.p0)[0]

    def _uniform_method(self) -> str:
        if self.schedule == "sequential":
            methods = {pc.out.checks["statement3"]["method"] for pc in self.pieces}
            return "exact" if methods == {"exact"} else "bound"
        return "bound"

    def verify(self) -> dict:
        eps = self.epsilon
        tail = self.seq.tail_bound()
        checks = {}

        # statement 1: unperturbed ladder below eps/2, final a_k < eps
        ok, why = self.seq.check_ladder(eps / 2)
        if self.schedule == "sequential":
            for prev, nxt in zip(self.pieces, self.pieces[1:]):
                a = prev.out.seq.group_mag[prev.out.seq.n_end - 1]
                b = nxt.out.seq.group_mag[nxt.out.seq.n0]
                if not b < a:
                    ok, why = False, f"seam at 2^{nxt.out.seq.n0} does not descend"
        first = self.seq.a(self.seq.window[0])
        if not first < eps:
            ok, why = False, "first coefficient not below epsilon"
        if self.cap is not None and not first < self.cap:
            ok, why = False, "first coefficient not below the cap"
        checks["statement1"] = {"ok": ok, "detail": why, "method": "exact"}

        # statement 2: H equals f on E exactly before the tail; the tail is below 2^-N0
        if self.schedule == "sequential":
            exact = all(pc.out.checks["statement2"]["ok"] for pc in self.pieces)
        elif self.schedule == "unbent":
            exact = all(ladder_is_affine(pc.out) for pc in self.pieces)
        else:
            exact = all(pc.out.check_values()["ok"] for pc in self.pieces)
        checks["statement2"] = {"ok": exact and tail < eps, "value": float(tail),
                                "bound": float(eps), "method": "bound",
                                "exact_on_E": exact}

        # statement 3 for every e inside E and every p <= p0
        worst = self.uniform_bound() + float(tail)
        checks["statement3"] = {"ok": worst < float(eps), "value": worst, "bound": float(eps),
                                "p": self.p0, "method": self._uniform_method(),
                                "uniform": True}

        v, method = unsigned_partial_max(self.seq, 1)
        v += float(tail)
        checks["statement4"] = {"ok": v < float(eps), "value": v, "bound": float(eps),
                                "method": method}

        m = self.e_measure()
        checks["E_measure"] = {"ok": m > 1 - eps, "value": str(m)}
        self.checks = checks
        return checks

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(c["ok"] for c in self.checks.values())

    def report(self) -> dict:
        return {
            "epsilon": str(self.epsilon), "p0": self.p0, "q": self.q, "C": self.C,
            "partition_scale": self.scale, "pieces": len(self.pieces), "N0": self.N0,
            "window": [self.n0, self.n_end],
            "schedule": self.schedule,
            "piece_scales": [list(pc.out.schedule.scales) for pc in self.pieces],
            "checks": self.checks,
        }


def _split(f: StepFunction, scale: int) -> list[tuple[DyadicInterval, Fraction]]:
    out = []
    for iv, v in f.pieces:
        if v == 0:
            continue
        a, b = iv.cells(scale)
        out.extend((DyadicInterval(scale, j), v) for j in range(a, b))
    return sorted(out, key=lambda t: t[0].index)


def _attempts(delta: DyadicInterval, limit: int):
    # one carrier per level first (no split), then the default split
    for shift in range(limit):
        yield shift, delta.scale - 1
        yield shift, None


def _excess_power(state: dict[int, int], parts, q: int, p: float) -> float:
    """Integral over E of (|completed sum| - |f|)_+^p while piece j has state[j]
    unbent levels done: (2^v - 2)|l| on a set of measure (2^-v - 2^-q)|piece|."""
    tot = 0.0
    for j, v in state.items():
        if 2 <= v < q:
            delta, l = parts[j]
            meas = float(delta.length) * (2.0 ** -v - 2.0 ** -q)
            tot += ((1 << v) - 2) ** p * abs(float(l)) ** p * meas
    return tot


def joint_certificate(carriers: list[Carrier], parts, q: int, p: float) -> tuple[float, int]:
    """Bound U with ||S_M||_{L^p(e)} <= ||f||_{L^p(e)} + U for every cut M, every e
    inside E and every p' <= p (before the tail).

    The completed carriers exceed |f| on E only on the pieces caught between two
    unbent levels; the open carrier adds at most its envelope norm."""
    state: dict[int, int] = {}
    index = {d: j for j, (d, _) in enumerate(parts)}
    best, arg = 0.0, -1
    for c in sorted(carriers, key=lambda c: c.M):
        j = index[c.piece]
        x = _excess_power(state, parts, q, p) ** (1 / p)
        b = x + abs(float(c.block.amplitude)) * envelope_norm(c.block, p)
        if b > best:
            best, arg = b, c.M
        state[j] = c.level
        x = _excess_power(state, parts, q, p) ** (1 / p)
        if x > best:
            best, arg = x, c.M
    return best, arg


def _bent_scale(start: int, depth: int, K: int, q: int, l: Fraction, size: Fraction,
                bound: Fraction | None, strict: bool) -> int:
    """First M >= start whose bent level has an even number of free digits and
    magnitude |l| |piece| 2^(-m/2) below `bound`."""
    M = max(start, depth, K + 1)
    while True:
        m = M - K - (q - 1)
        if m >= 0 and m % 2 == 0:
            mag2 = (l * size) ** 2 / (1 << m)
            if bound is None or mag2 < bound ** 2 or (not strict and mag2 == bound ** 2):
                return M
        M += 1
        if M > max_scale() + 40:
            raise ConstructionError("no bent scale meets the magnitude bound")


def _joint(parts, eps: Fraction, q: int, n0: int, cap: Fraction | None):
    """All unbent levels first (pieces by decreasing |l|, each piece's levels on
    consecutive groups), then the bent top levels at increasing scales, so that the
    group magnitudes never increase."""
    order = sorted(range(len(parts)), key=lambda j: (-abs(parts[j][1]), j))
    K = parts[0][0].scale
    size = parts[0][0].length.to_fraction()
    scales = {j: [] for j in order}
    M = max(n0, K + 1)
    for j in order:
        for _ in range(q - 1):
            scales[j].append(M)
            M += 1
    bound, strict = (cap, True) if cap is not None else (eps / 2, True)
    if q > 1:
        bound, strict = min(abs(parts[j][1]) for j in order) * size, False
    for j in order:
        l = abs(parts[j][1])
        depth = scales[j][-1] + 1 if scales[j] else K
        M = _bent_scale(M, depth, K, q, l, size, bound, strict)
        scales[j].append(M)
        bound, strict = l * size / (1 << ((M - K - (q - 1)) // 2)), False
        M += 1
    pieces = []
    for j, (delta, value) in enumerate(parts):
        sched = KSchedule("tuned", delta, q, scales[j][0], delta.scale - 1,
                          tuple((m,) for m in scales[j]))
        carriers = build_carriers(sched, value)
        seq = SignedBlockSeq(sched.n0, sched.n_q, group_magnitudes(carriers, sched.n0), carriers)
        pieces.append(Piece(delta, value, Lemma2Output(sched, value, eps, seq)))
    return pieces, M


def _first_tail(N0: int, n0: int) -> Fraction:
    # the larger of the two tail forms at k = 2^n0
    return max(Fraction(1, 1 << (N0 + (1 << n0))) if N0 + (1 << n0) <= TAIL_BITS else Fraction(0),
               Fraction(2, 1 << (N0 + 2 * n0 + 1)))


def _unbent(parts, eps: Fraction, q: int, n0: int):
    """Every level a plain Rademacher split: pieces by decreasing |l|, each on q
    consecutive groups, all of magnitude |l| |piece|."""
    order = sorted(range(len(parts)), key=lambda j: (-abs(parts[j][1]), j))
    K = parts[0][0].scale
    M = max(n0, K + 1)
    pieces = [None] * len(parts)
    for j in order:
        delta, value = parts[j]
        sched = KSchedule("unbent", delta, q, M, delta.scale - 1,
                          tuple((M + i,) for i in range(q)))
        carriers = build_carriers(sched, value)
        seq = SignedBlockSeq(sched.n0, sched.n_q, group_magnitudes(carriers, sched.n0), carriers)
        pieces[j] = Piece(delta, value, Lemma2Output(sched, value, eps, seq))
        M += q
    return pieces, M


def exceptional_set(out: Lemma2Output) -> AffineSet:
    """Where an unbent ladder ends at -(2^q - 1) l."""
    last = max(out.seq.carriers, key=lambda c: c.level)
    return last.block.support.with_digit(last.M + 1, 1)


def ladder_is_affine(out: Lemma2Output) -> bool:
    """Each level halves the previous minus set with amplitude 2^(v-1) l on base
    -(2^(v-1) - 1) l, so H is l or -(2^q - 1) l and the low set has measure 2^-q."""
    cs = sorted(out.seq.carriers, key=lambda c: c.level)
    support = AffineSet(out.delta)
    for v, c in enumerate(cs, start=1):
        if c.level != v or c.block.bent or c.block.support != support:
            return False
        if c.block.amplitude != (1 << (v - 1)) * out.l or c.base != -((1 << (v - 1)) - 1) * out.l:
            return False
        support = support.with_digit(c.M + 1, 1)
    return len(cs) == out.q and support.measure() == DyadicRational(1, out.delta.scale + out.q)


def lemma3_approx(f: StepFunction, epsilon, p0: float = 2, n0: int = 1,
                  C: float | None = None, verify: bool = True, cap=None,
                  tail: int | None = None, schedule: str = "auto") -> Lemma3Output:
    """Chain interval constructions over the pieces of f.

    `cap` is a strict upper bound for every coefficient magnitude.  `tail`
    overrides N0 (any N0 with 2^-N0 < epsilon/2 is admissible).  `schedule` is
    "sequential" (one index window per piece), "joint" (levels of all pieces
    interleaved by magnitude), "unbent" (no bent factor; affine exceptional sets)
    or "auto" (sequential, then joint)."""
    eps = as_rational(epsilon)
    if not 0 < eps < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if p0 <= 1:
        raise ValueError("p0 must exceed 1")
    if all(v == 0 for _, v in f.pieces):
        raise ValueError("the zero function has nothing to approximate")
    N0 = tail_base(eps) if tail is None else int(tail)
    if Fraction(1, 1 << N0) >= eps / 2:
        raise ValueError("tail base too small for epsilon")
    q = levels_for(eps)
    C = verification_constant(p0) if C is None else C
    scale = partition_scale(f, q, C, eps, p0)
    cap = None if cap is None else as_rational(cap)
    if cap is not None and (q > 1 or schedule == "unbent"):
        top = max(abs(as_rational(v)) for _, v in f.pieces)
        # unbent levels carry |l| |piece| whatever their scale
        while top / (1 << scale) >= cap:
            scale += 1
    parts = _split(f, scale)
    if len(parts) > cell_budget():
        raise BudgetError("too many pieces")
    # the tail term of the first coefficient counts against the cap
    inner = None if cap is None else cap - _first_tail(N0, n0)
    if inner is not None and inner <= 0:
        raise ValueError("the tail alone reaches the cap; raise the tail base")
    if schedule not in ("auto", "sequential", "joint", "unbent"):
        raise ValueError(f"unknown schedule {schedule!r}")

    if schedule == "unbent":
        pieces, start = _unbent(parts, eps, q, n0)
        used = "unbent"
    elif schedule != "joint":
        try:
            pieces, start = _sequential(parts, eps, q, n0, C, p0, inner)
            used = "sequential"
        except ConstructionError:
            if schedule == "sequential":
                raise
            schedule = "joint"
    if schedule == "joint":
        pieces, start = _joint(parts, eps, q, n0, inner)
        used = "joint"

    # groups skipped by a shifted start inherit the next magnitude
    group_mag, carriers = {}, []
    for pc in pieces:
        carriers.extend(pc.out.seq.carriers)
    for c in carriers:
        group_mag[c.M] = c.block.magnitude
    for n in range(start - 1, n0 - 1, -1):
        if n not in group_mag:
            group_mag[n] = group_mag[n + 1]
    seq = SignedBlockSeq(n0, start, group_mag, carriers, tail=N0,
                         ramp=N0 + (1 << start) > TAIL_BITS)
    out = Lemma3Output(f, eps, float(p0), q, scale, C, pieces, N0, seq, cap=cap, schedule=used)
    if verify:
        out.verify()
    return out


def _sequential(parts, eps: Fraction, q: int, n0: int, C: float, p0: float,
                cap: Fraction | None):
    pieces: list[Piece] = []
    start = n0
    bound = cap
    limit = max(max_scale() - n0, 1)
    for j, (delta, value) in enumerate(parts, start=1):
        eps_j = eps / (1 << (j + 1))
        out = None
        for shift, split in _attempts(delta, limit):
            try:
                cand = lemma2_construct(delta, value, eps_j, q=q, n0=start + shift, p=p0,
                                        mode="tuned", split=split, C=C, verify=False)
            except (ConstructionError, BudgetError):
                continue
            if bound is not None and not cand.seq.group_mag[cand.seq.n0] < bound:
                continue
            cand.verify(p0, C)
            if cand.ok:
                out = cand
                break
        if out is None:
            raise ConstructionError(f"piece {j} admits no descending construction")
        pieces.append(Piece(delta, value, out))
        start = out.seq.n_end
        bound = out.seq.group_mag[out.seq.n_end - 1]
    return pieces, start


def _part_measures(out: Lemma3Output):
    """Parts of E: (piece index or None, value, measure of E inside)."""
    keep = 1 - Fraction(1, 1 << out.q)
    parts = [(j, pc.value, pc.delta.length.to_fraction() * keep)
             for j, pc in enumerate(out.pieces)]
    rest = 1 - sum((pc.delta.length.to_fraction() for pc in out.pieces), Fraction(0))
    if rest:
        parts.append((None, Fraction(0), rest))
    return parts


def _norm(parts, p: float) -> float:
    terms = [abs(float(v)) ** p * float(m) for _, v, m in parts if v]
    return math.fsum(terms) ** (1 / p) if terms else 0.0


def _direct(out: Lemma3Output, mask: np.ndarray, p: float) -> float:
    from walshuniv.partials import dense_scan

    if not mask.any():
        return 0.0
    wl = np.where(mask, 0.0, -math.inf)
    v, _ = dense_scan(out.seq.coeff_array(True), out.seq.window[0], out.n_end, p, wl)
    return v


def verify_subset_bound(out: Lemma3Output, trials: int = 64, seed: int = 0,
                        direct: bool | None = None) -> dict:
    """Check max_M ||S_M||_{L^p(e)} < ||f||_{L^p(e)} + eps over a family of e inside E."""
    parts = _part_measures(out)
    rng = random.Random(seed)
    family = [("empty", []), ("E", list(range(len(parts))))]
    family += [(f"part{i}", [i]) for i in range(len(parts))]
    for t in range(trials):
        family.append((f"random{t}", [i for i in range(len(parts)) if rng.random() < 0.5]))
    ps = sorted({1.0, out.p0, (1.0 + out.p0) / 2})
    maxima = out.piece_maxima() if out.schedule == "sequential" else None
    uniform = None if maxima else out.uniform_bound()
    tail = float(out.seq.tail_bound())
    eps = float(out.epsilon)

    R = out.n_end
    lo, hi = out.seq.window
    if direct is None:
        direct = (hi - lo) * (1 << R) <= DIRECT_WORK and (1 << R) <= cell_budget()
    e_mask = out.e_eps.to_mask(R) if direct else None
    piece_masks = {}
    if direct:
        for j, pc in enumerate(out.pieces):
            a, b = pc.delta.cells(R)
            m = np.zeros(1 << R, dtype=bool)
            m[a:b] = True
            piece_masks[j] = m
        piece_masks[None] = ~np.any(list(piece_masks.values()), axis=0) if out.pieces \
            else np.ones(1 << R, dtype=bool)

    rows, violations = [], 0
    for name, idx in family:
        chosen = [parts[i] for i in idx]
        for p in ps:
            rhs = _norm(chosen, p) + eps
            if maxima:
                # earlier pieces contribute exactly f on e; the open piece is bounded
                cert = tail
                for m in range(len(out.pieces)):
                    earlier = [c for c in chosen if c[0] is not None and c[0] < m]
                    cert = max(cert, _norm(earlier, p) + maxima[m] + tail)
            else:
                cert = _norm(chosen, p) + uniform + tail
            row = {"set": name, "p": p, "bound": rhs, "certificate": cert}
            ok = cert < rhs
            if direct:
                mask = np.zeros(1 << R, dtype=bool)
                for c in chosen:
                    mask |= piece_masks[c[0]]
                mask &= e_mask
                row["direct"] = _direct(out, mask, p) + tail
                ok = ok or row["direct"] < rhs
            row["ok"] = ok
            violations += not ok
            rows.append(row)
    return {"ok": violations == 0, "violations": violations, "checked": len(rows),
            "direct": bool(direct), "rows": rows}
