"""Exact dyadic scalars, dyadic intervals, step functions and L^p norms."""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

Rational = Fraction

DEFAULT_CELL_BUDGET = 2**24
_budget = {"cells": DEFAULT_CELL_BUDGET}


class BudgetError(RuntimeError):
    """Raised when an operation would need more cells than the resolution budget."""


def cell_budget() -> int:
    return _budget["cells"]


def set_cell_budget(cells: int) -> None:
    if cells < 1:
        raise ValueError("budget must be positive")
    _budget["cells"] = int(cells)


@contextlib.contextmanager
def budget(cells: int):
    old = _budget["cells"]
    set_cell_budget(cells)
    try:
        yield
    finally:
        _budget["cells"] = old


def check_scale(R: int, what: str = "grid") -> None:
    if R < 0:
        raise ValueError("scale must be nonnegative")
    if R > 62 or (1 << R) > _budget["cells"]:
        raise BudgetError(
            f"{what} at scale {R} needs 2^{R} cells, budget is {_budget['cells']}"
        )


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, DyadicRational):
        return x.to_fraction()
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite value")
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(x)


@dataclass(frozen=True, order=False)
class DyadicRational:
    """numerator / 2**exponent in canonical form."""

    numerator: int
    exponent: int = 0

    def __post_init__(self):
        n, e = int(self.numerator), int(self.exponent)
        if n == 0:
            e = 0
        else:
            while e > 0 and n % 2 == 0:
                n //= 2
                e -= 1
            if e < 0:
                n <<= -e
                e = 0
        object.__setattr__(self, "numerator", n)
        object.__setattr__(self, "exponent", e)

    @classmethod
    def from_value(cls, x) -> "DyadicRational":
        if isinstance(x, DyadicRational):
            return x
        q = as_rational(x)
        d = q.denominator
        if d & (d - 1):
            raise ValueError(f"{q} is not dyadic")
        return cls(q.numerator, d.bit_length() - 1)

    def to_fraction(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.exponent)

    def __float__(self) -> float:
        if self.numerator.bit_length() <= 53:
            return math.ldexp(self.numerator, -self.exponent)
        return float(self.to_fraction())

    def _coerce(self, other) -> "DyadicRational":
        return DyadicRational.from_value(other)

    def __add__(self, other):
        o = self._coerce(other)
        e = max(self.exponent, o.exponent)
        return DyadicRational(
            (self.numerator << (e - self.exponent)) + (o.numerator << (e - o.exponent)), e
        )

    __radd__ = __add__

    def __neg__(self):
        return DyadicRational(-self.numerator, self.exponent)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        return DyadicRational(self.numerator * o.numerator, self.exponent + o.exponent)

    __rmul__ = __mul__

    def shift(self, j: int) -> "DyadicRational":
        """Multiply by 2**j."""
        return DyadicRational(self.numerator, self.exponent - j)

    def __abs__(self):
        return DyadicRational(abs(self.numerator), self.exponent)

    def __eq__(self, other):
        try:
            return self.to_fraction() == as_rational(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __hash__(self):
        return hash(self.to_fraction())

    def __lt__(self, other):
        return self.to_fraction() < as_rational(other)

    def __le__(self, other):
        return self.to_fraction() <= as_rational(other)

    def __gt__(self, other):
        return self.to_fraction() > as_rational(other)

    def __ge__(self, other):
        return self.to_fraction() >= as_rational(other)

    def log2_abs(self) -> float:
        if self.numerator == 0:
            return -math.inf
        return math.log2(abs(self.numerator)) - self.exponent

    def __repr__(self):
        return f"DyadicRational({self.numerator}, {self.exponent})"

    def __str__(self):
        return str(self.to_fraction())


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """[index / 2**scale, (index + 1) / 2**scale)."""

    scale: int
    index: int

    def __post_init__(self):
        if self.scale < 0 or not 0 <= self.index < (1 << self.scale):
            raise ValueError(f"invalid dyadic interval ({self.scale}, {self.index})")

    @property
    def length(self) -> DyadicRational:
        return DyadicRational(1, self.scale)

    @property
    def left(self) -> Fraction:
        return Fraction(self.index, 1 << self.scale)

    @property
    def right(self) -> Fraction:
        return Fraction(self.index + 1, 1 << self.scale)

    def cells(self, R: int) -> tuple[int, int]:
        """Half-open range of scale-R cells covered."""
        if R < self.scale:
            raise ValueError("grid coarser than interval")
        s = R - self.scale
        return self.index << s, (self.index + 1) << s

    def contains(self, other: "DyadicInterval") -> bool:
        if other.scale < self.scale:
            return False
        return other.index >> (other.scale - self.scale) == self.index

    def contains_point(self, x) -> bool:
        x = as_rational(x)
        return self.left <= x < self.right

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return (DyadicInterval(self.scale + 1, 2 * self.index),
                DyadicInterval(self.scale + 1, 2 * self.index + 1))

    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.scale - 1, self.index >> 1)


UNIT = DyadicInterval(0, 0)


def _decompose_run(a: int, b: int, S: int) -> list[DyadicInterval]:
    """Maximal dyadic pieces of the scale-S cell run [a, b)."""
    out = []
    while a < b:
        k = (a & -a).bit_length() - 1 if a else S
        while (1 << k) > b - a:
            k -= 1
        out.append(DyadicInterval(S - k, a >> k))
        a += 1 << k
    return out


def _merge_runs(runs: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for a, b in sorted(runs):
        if a >= b:
            continue
        if out and a <= out[-1][1]:
            if b > out[-1][1]:
                out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


class IntervalSet:
    """Finite union of dyadic intervals in canonical (maximal) form."""

    __slots__ = ("intervals",)

    def __init__(self, intervals: Iterable[DyadicInterval] = ()):
        ivs = list(intervals)
        S = max((iv.scale for iv in ivs), default=0)
        runs = [iv.cells(S) for iv in ivs]
        self.intervals: tuple[DyadicInterval, ...] = tuple(
            p for a, b in _merge_runs(runs) for p in _decompose_run(a, b, S))

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[int, int]], S: int) -> "IntervalSet":
        obj = cls.__new__(cls)
        obj.intervals = tuple(p for a, b in _merge_runs(runs) for p in _decompose_run(a, b, S))
        return obj

    @classmethod
    def from_mask(cls, mask: np.ndarray, R: int) -> "IntervalSet":
        m = np.asarray(mask, dtype=bool)
        if m.size != 1 << R:
            raise ValueError("mask size does not match scale")
        d = np.diff(np.concatenate(([0], m.view(np.int8), [0])))
        starts = np.flatnonzero(d == 1)
        ends = np.flatnonzero(d == -1)
        return cls.from_runs(zip(starts.tolist(), ends.tolist()), R)

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls([UNIT])

    @property
    def max_scale(self) -> int:
        return max((iv.scale for iv in self.intervals), default=0)

    def runs(self, S: int | None = None) -> list[tuple[int, int]]:
        S = self.max_scale if S is None else S
        return _merge_runs(iv.cells(S) for iv in self.intervals)

    def to_mask(self, R: int) -> np.ndarray:
        check_scale(R, "interval mask")
        m = np.zeros(1 << R, dtype=bool)
        for iv in self.intervals:
            a, b = iv.cells(R)
            m[a:b] = True
        return m

    def measure(self) -> DyadicRational:
        S = self.max_scale
        return DyadicRational(sum(b - a for a, b in self.runs(S)), S)

    def _binary(self, other: "IntervalSet", op) -> "IntervalSet":
        S = max(self.max_scale, other.max_scale)
        pts = sorted({0, 1 << S, *[x for r in self.runs(S) + other.runs(S) for x in r]})
        a_runs, b_runs = self.runs(S), other.runs(S)
        out = []
        ia = ib = 0
        for lo, hi in zip(pts, pts[1:]):
            while ia < len(a_runs) and a_runs[ia][1] <= lo:
                ia += 1
            while ib < len(b_runs) and b_runs[ib][1] <= lo:
                ib += 1
            in_a = ia < len(a_runs) and a_runs[ia][0] <= lo
            in_b = ib < len(b_runs) and b_runs[ib][0] <= lo
            if op(in_a, in_b):
                out.append((lo, hi))
        return IntervalSet.from_runs(out, S)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return self._binary(other, lambda x, y: x or y)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return self._binary(other, lambda x, y: x and y)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self._binary(other, lambda x, y: x and not y)

    def complement(self) -> "IntervalSet":
        return IntervalSet.full().difference(self)

    def contains_interval(self, iv: DyadicInterval) -> bool:
        return any(J.contains(iv) for J in self.intervals)

    def __iter__(self) -> Iterator[DyadicInterval]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __repr__(self):
        return f"IntervalSet({list(self.intervals)!r})"


def measure(s: IntervalSet) -> DyadicRational:
    return s.measure()


def union_all(sets: Iterable[IntervalSet]) -> IntervalSet:
    ivs = [iv for s in sets for iv in s]
    return IntervalSet(ivs)


def _overlay(a: Sequence[tuple[DyadicInterval, object]],
             b: Sequence[tuple[DyadicInterval, object]]):
    """Walk two sorted dyadic partitions of the same region; yield common cells."""
    i = j = 0
    while i < len(a) and j < len(b):
        Ia, va = a[i]
        Ib, vb = b[j]
        if Ia.scale >= Ib.scale:
            yield Ia, va, vb
            i += 1
            if Ia.index + 1 == (Ib.index + 1) << (Ia.scale - Ib.scale):
                j += 1
        else:
            yield Ib, va, vb
            j += 1
            if Ib.index + 1 == (Ia.index + 1) << (Ib.scale - Ia.scale):
                i += 1


def _canonical_pieces(pieces: list[tuple[DyadicInterval, Fraction]]):
    stack: list[tuple[DyadicInterval, Fraction]] = []
    for iv, v in pieces:
        stack.append((iv, v))
        while len(stack) >= 2:
            (I1, v1), (I2, v2) = stack[-2], stack[-1]
            if (v1 == v2 and I1.scale == I2.scale and I1.scale > 0
                    and I1.index % 2 == 0 and I2.index == I1.index + 1):
                stack[-2:] = [(I1.parent(), v1)]
            else:
                break
    return tuple(stack)


class StepFunction:
    """Rational-valued function, constant on each piece of a dyadic partition of [0, 1)."""

    __slots__ = ("pieces",)

    def __init__(self, pieces: Iterable[tuple[DyadicInterval, object]], fill=None):
        ps = sorted(((iv, as_rational(v)) for iv, v in pieces),
                    key=lambda t: (t[0].left, t[0].scale))
        if fill is not None:
            covered = IntervalSet(iv for iv, _ in ps)
            f = as_rational(fill)
            ps = sorted(ps + [(iv, f) for iv in covered.complement()],
                        key=lambda t: (t[0].left, t[0].scale))
        pos = Fraction(0)
        for iv, _ in ps:
            if iv.left != pos:
                raise ValueError("pieces must be disjoint and cover [0, 1)")
            pos = iv.right
        if pos != 1:
            raise ValueError("pieces must cover [0, 1)")
        self.pieces: tuple[tuple[DyadicInterval, Fraction], ...] = _canonical_pieces(ps)

    @classmethod
    def constant(cls, value) -> "StepFunction":
        return cls([(UNIT, value)])

    @classmethod
    def indicator(cls, s: IntervalSet, value=1) -> "StepFunction":
        return cls([(iv, value) for iv in s], fill=0)

    @classmethod
    def from_grid(cls, numerators, R: int, denominator: int = 1) -> "StepFunction":
        vals = list(numerators)
        if len(vals) != 1 << R:
            raise ValueError("grid size does not match scale")
        d = int(denominator)
        return cls((DyadicInterval(R, i), Fraction(int(v), d) if not isinstance(v, Fraction)
                    else v / d) for i, v in enumerate(vals))

    @property
    def resolution(self) -> int:
        return max(iv.scale for iv, _ in self.pieces)

    def to_grid(self, R: int | None = None) -> tuple[np.ndarray, int]:
        """Integer numerators on the scale-R grid and their common denominator."""
        R = self.resolution if R is None else R
        check_scale(R, "step function grid")
        den = math.lcm(*(v.denominator for _, v in self.pieces))
        nums = [v.numerator * (den // v.denominator) for _, v in self.pieces]
        big = max(abs(n) for n in nums) >= 2**62
        out = np.zeros(1 << R, dtype=object if big else np.int64)
        for (iv, _), n in zip(self.pieces, nums):
            a, b = iv.cells(R)
            out[a:b] = n
        return out, den

    def values(self, R: int | None = None) -> list[Fraction]:
        nums, den = self.to_grid(R)
        return [Fraction(int(n), den) for n in nums]

    def __call__(self, x) -> Fraction:
        x = as_rational(x)
        if not 0 <= x < 1:
            raise ValueError("point outside [0, 1)")
        for iv, v in self.pieces:
            if iv.left <= x < iv.right:
                return v
        raise AssertionError("unreachable")

    def _combine(self, other, op) -> "StepFunction":
        if not isinstance(other, StepFunction):
            c = as_rational(other)
            return StepFunction((iv, op(v, c)) for iv, v in self.pieces)
        return StepFunction((iv, op(va, vb)) for iv, va, vb in _overlay(self.pieces, other.pieces))

    def __add__(self, other):
        return self._combine(other, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda x, y: x - y)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._combine(other, lambda x, y: x * y)

    __rmul__ = __mul__

    def __neg__(self):
        return StepFunction((iv, -v) for iv, v in self.pieces)

    def abs(self) -> "StepFunction":
        return StepFunction((iv, abs(v)) for iv, v in self.pieces)

    def restrict(self, s: IntervalSet) -> "StepFunction":
        """Zero outside s."""
        return self * StepFunction.indicator(s)

    def level_set(self, pred) -> IntervalSet:
        return IntervalSet(iv for iv, v in self.pieces if pred(v))

    def support(self) -> IntervalSet:
        return self.level_set(lambda v: v != 0)

    def __eq__(self, other):
        return isinstance(other, StepFunction) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def __repr__(self):
        return f"StepFunction({len(self.pieces)} pieces, resolution {self.resolution})"


def refine(a: StepFunction, b: StepFunction):
    """Both functions as piece lists on their common partition."""
    cells = list(_overlay(a.pieces, b.pieces))
    if len(cells) > cell_budget():
        raise BudgetError(f"common refinement has {len(cells)} cells")
    return ([(iv, va) for iv, va, _ in cells], [(iv, vb) for iv, _, vb in cells])


@dataclass(frozen=True)
class WeightSpec:
    """Piecewise-constant weight: log2 value on disjoint layers, 1 elsewhere."""

    layers: tuple[tuple[int, float, IntervalSet], ...] = ()

    def pieces(self) -> list[tuple[DyadicInterval, float]]:
        out = [(iv, float(lg)) for _, lg, s in self.layers for iv in s]
        covered = IntervalSet(iv for iv, _ in out)
        out += [(iv, 0.0) for iv in covered.complement()]
        out.sort(key=lambda t: (t[0].left, t[0].scale))
        return out

    def unit_set(self) -> IntervalSet:
        """Where the weight equals 1."""
        return IntervalSet(iv for iv, lg in self.pieces() if lg == 0.0)

    def log2_at(self, x) -> float:
        for iv, lg in self.pieces():
            if iv.contains_point(x):
                return lg
        raise ValueError("point outside [0, 1)")

    def log2_grid(self, R: int) -> np.ndarray:
        check_scale(R, "weight grid")
        out = np.zeros(1 << R)
        for _, lg, s in self.layers:
            for iv in s:
                a, b = iv.cells(R)
                out[a:b] = lg
        return out


def log2_sum(terms: Iterable[float]) -> float:
    """log2 of the sum of 2**t; correctly rounded inner sum via fsum."""
    ts = [t for t in terms if t != -math.inf]
    if not ts:
        return -math.inf
    m = max(ts)
    return m + math.log2(math.fsum(2.0 ** (t - m) for t in ts))


def _log2_abs(v: Fraction) -> float:
    if v == 0:
        return -math.inf
    return math.log2(abs(v.numerator)) - math.log2(v.denominator)


def _check_p(p) -> None:
    if p < 1:
        raise ValueError("p must be at least 1")


def _is_int_p(p) -> bool:
    return isinstance(p, (int, np.integer)) or (isinstance(p, Fraction) and p.denominator == 1)


def lp_power(f: StepFunction, p, w: WeightSpec | None = None, over: IntervalSet | None = None):
    """Integral of |f|^p (times the weight) over `over` or [0, 1).

    Exact Fraction for integer p without weight, otherwise a float.
    """
    _check_p(p)
    pieces = f.pieces
    if over is not None:
        pieces = [(iv, va) for iv, va, inside in
                  _overlay(pieces, StepFunction.indicator(over).pieces) if inside]
    if w is None and _is_int_p(p):
        q = int(p)
        return sum((abs(v) ** q * Fraction(1, 1 << iv.scale) for iv, v in pieces), Fraction(0))
    return 2.0 ** lp_power_log2(f, p, w, over)


def lp_power_log2(f: StepFunction, p, w: WeightSpec | None = None,
                  over: IntervalSet | None = None) -> float:
    """log2 of the weighted integral of |f|^p; terms summed by log2_sum."""
    _check_p(p)
    p = float(p)
    if over is not None:
        f = f.restrict(over)
    if w is None:
        terms = (p * _log2_abs(v) - iv.scale for iv, v in f.pieces if v != 0)
    else:
        terms = (p * _log2_abs(v) - iv.scale + lg
                 for iv, v, lg in _overlay(f.pieces, w.pieces()) if v != 0)
    return log2_sum(terms)


def lp_norm(f: StepFunction, p, w: WeightSpec | None = None) -> float:
    _check_p(p)
    return 2.0 ** (lp_power_log2(f, p, w) / float(p))


def restrict_norm(f: StepFunction, e: IntervalSet, p, w: WeightSpec | None = None) -> float:
    _check_p(p)
    return 2.0 ** (lp_power_log2(f, p, w, over=e) / float(p))
