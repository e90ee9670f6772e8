"""Flat-spectrum Walsh blocks supported on a dyadic interval.

A block is chi_Delta * R_{M+1} * g(bits K+1..M), with g the inner-product
bent function on m = M - K bits.  Every coefficient in [2^M, 2^(M+1)) then
has modulus 2^(-(M+K)/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from walshuniv.dyadic_core import (
    DyadicInterval,
    DyadicRational,
    IntervalSet,
    StepFunction,
    as_rational,
    check_scale,
)
from walshuniv.walsh import WalshPolynomial, bit_reverse, bitrev_perm, popcount_parity

_PAIR_MASK = int("01" * 32, 2)


def _bent_parity(v):
    """Parity of v0 v1 + v2 v3 + ... for ints or integer arrays."""
    if isinstance(v, np.ndarray):
        return popcount_parity(v & (v >> 1) & _PAIR_MASK)
    return bin(v & (v >> 1) & _PAIR_MASK).count("1") & 1


@dataclass(frozen=True)
class BentFunction:
    """Inner-product bent function on m bits; bit j-1 of the argument is u_j."""

    m: int

    def __post_init__(self):
        if self.m < 0 or self.m % 2:
            raise ValueError("bent functions need an even number of bits")

    def __call__(self, v: int) -> int:
        return -1 if _bent_parity(v) else 1

    def values(self) -> np.ndarray:
        return 1 - 2 * _bent_parity(np.arange(1 << self.m, dtype=np.int64))

    def spectrum_sign(self, t):
        # self-dual: the normalized spectrum is 2^(-m/2) times the function itself
        return 1 - 2 * _bent_parity(t) if isinstance(t, np.ndarray) else self(t)

    def spectrum(self) -> list[Fraction]:
        scale = Fraction(1, 1 << (self.m // 2))
        return [scale * s for s in self.values().tolist()]

    def naive_spectrum(self) -> list[Fraction]:
        vals = self.values()
        n = 1 << self.m
        out = []
        for t in range(n):
            chars = 1 - 2 * popcount_parity(np.arange(n, dtype=np.int64) & t)
            out.append(Fraction(int(np.dot(vals, chars)), n))
        return out


def make_bent(m: int) -> BentFunction:
    return BentFunction(m)


@dataclass(frozen=True)
class FlatBlock:
    """amplitude * chi_delta * R_{M+1} * bent(bits K+1..M)."""

    delta: DyadicInterval
    M: int
    amplitude: Fraction = Fraction(1)

    def __post_init__(self):
        K = self.delta.scale
        if self.M <= K:
            raise ValueError("block scale M must exceed the interval scale K")
        if (self.M - K) % 2:
            raise ValueError("M - K must be even")
        object.__setattr__(self, "amplitude", as_rational(self.amplitude))

    @property
    def K(self) -> int:
        return self.delta.scale

    @property
    def m(self) -> int:
        return self.M - self.K

    @property
    def bent(self) -> BentFunction:
        return BentFunction(self.m)

    @property
    def scale(self) -> DyadicRational:
        """Unit-amplitude coefficient modulus 2^(-(M+K)/2)."""
        return DyadicRational(1, (self.M + self.K) // 2)

    @property
    def magnitude(self) -> Fraction:
        return abs(self.amplitude) * self.scale.to_fraction()

    @property
    def window(self) -> tuple[int, int]:
        return 1 << self.M, 2 << self.M

    def sign(self, k: int) -> int:
        lo, hi = self.window
        if not lo <= k < hi:
            return 0
        K = self.K
        t = (k >> K) & ((1 << self.m) - 1)
        k_low = k & ((1 << K) - 1)
        s = bin(k_low & bit_reverse(self.delta.index, K)).count("1") & 1
        s ^= _bent_parity(t)
        s_amp = 1 if self.amplitude >= 0 else -1
        return s_amp * (-1 if s else 1)

    def coeff(self, k: int) -> Fraction:
        return self.sign(k) * self.magnitude

    def signs(self) -> np.ndarray:
        """Signs for every k in the window, in index order."""
        check_scale(self.M, "block signs")
        K, m = self.K, self.m
        k = np.arange(1 << self.M, dtype=np.int64)
        t = (k >> K) & ((1 << m) - 1)
        k_low = k & ((1 << K) - 1)
        par = popcount_parity(k_low & bit_reverse(self.delta.index, K)) ^ _bent_parity(t)
        s_amp = 1 if self.amplitude >= 0 else -1
        return s_amp * (1 - 2 * par)

    def unit_values(self) -> np.ndarray:
        """Values of the unit-amplitude block on the 2^(m+1) cells of delta at scale M+1."""
        c = np.arange(2 << self.m, dtype=np.int64)
        mid = c >> 1
        v = bitrev_perm(self.m)[mid] if self.m else mid
        return (1 - 2 * (c & 1)) * (1 - 2 * _bent_parity(v))

    def value_grid(self, R: int | None = None) -> np.ndarray:
        """Unit-amplitude values on the whole scale-R grid (R >= M+1)."""
        R = self.M + 1 if R is None else R
        if R < self.M + 1:
            raise ValueError("grid too coarse for the block")
        check_scale(R, "block grid")
        out = np.zeros(1 << R, dtype=np.int64)
        a, b = self.delta.cells(R)
        out[a:b] = np.repeat(self.unit_values(), 1 << (R - self.M - 1))
        return out

    def _level(self, target: int) -> IntervalSet:
        vals = self.unit_values()
        base = self.delta.index << (self.m + 1)
        S = self.M + 1
        return IntervalSet.from_runs(((base + c, base + c + 1)
                                      for c in np.flatnonzero(vals == target).tolist()), S)

    def e_minus(self) -> IntervalSet:
        """Where the unit block equals -1."""
        return self._level(-1)

    def e_plus(self) -> IntervalSet:
        return self._level(1)

    def to_step(self) -> StepFunction:
        vals = self.unit_values()
        base = self.delta.index << (self.m + 1)
        S = self.M + 1
        return StepFunction(((DyadicInterval(S, base + c), self.amplitude * int(v))
                             for c, v in enumerate(vals.tolist())), fill=0)

    def to_polynomial(self) -> WalshPolynomial:
        mag = self.magnitude
        lo, hi = self.window
        num = self.signs() * mag.numerator
        return WalshPolynomial(lo, hi, num, mag.denominator)


def lemma1_construct(delta: DyadicInterval, M: int) -> FlatBlock:
    return FlatBlock(delta, M)


def _bit_at(c: np.ndarray, pos: int, R: int, K: int) -> np.ndarray:
    """Binary digit `pos` (1 = most significant) of points in local scale-R cells of a scale-K interval."""
    return (c >> (R - pos)) & 1


@dataclass(frozen=True)
class AffineSet:
    """Points of `prefix` whose binary digits at the given positions are fixed."""

    prefix: DyadicInterval
    fixed: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        fx = tuple(sorted((int(p), int(v)) for p, v in self.fixed))
        if any(p <= self.prefix.scale or v not in (0, 1) for p, v in fx):
            raise ValueError("fixed digits must lie below the prefix scale")
        if len({p for p, _ in fx}) != len(fx):
            raise ValueError("duplicate fixed position")
        object.__setattr__(self, "fixed", fx)

    @property
    def depth(self) -> int:
        return max([self.prefix.scale] + [p for p, _ in self.fixed])

    def measure(self) -> DyadicRational:
        return DyadicRational(1, self.prefix.scale + len(self.fixed))

    def with_digit(self, pos: int, bit: int) -> "AffineSet":
        return AffineSet(self.prefix, self.fixed + ((pos, bit),))

    def local_mask(self, R: int) -> np.ndarray:
        """Membership of the 2^(R-K) scale-R cells of the prefix interval."""
        K = self.prefix.scale
        if R < self.depth:
            raise ValueError("grid too coarse for the set")
        check_scale(R - K, "local grid")
        c = np.arange(1 << (R - K), dtype=np.int64)
        m = np.ones(c.size, dtype=bool)
        for p, v in self.fixed:
            m &= _bit_at(c, p, R, K) == v
        return m

    def to_interval_set(self) -> IntervalSet:
        R = self.depth
        K = self.prefix.scale
        base = self.prefix.index << (R - K)
        cells = np.flatnonzero(self.local_mask(R))
        return IntervalSet.from_runs(((base + c, base + c + 1) for c in cells.tolist()), R)


@dataclass(frozen=True)
class SplitBlock:
    """amplitude * chi_S * R_{M+1} * g, with g the bent function on the free digits of
    (K, M] (or g = 1 when `bent` is False).  Nonzero coefficients all have the same
    modulus, and the block equals +-amplitude on two halves of S."""

    support: AffineSet
    M: int
    amplitude: Fraction = Fraction(1)
    bent: bool = True

    def __post_init__(self):
        if self.M < self.support.depth or self.M <= self.support.prefix.scale:
            raise ValueError("block scale must exceed every digit fixed by the support")
        if self.bent and len(self.free_positions) % 2:
            raise ValueError("bent factor needs an even number of free digits")
        object.__setattr__(self, "amplitude", as_rational(self.amplitude))

    @property
    def K(self) -> int:
        return self.support.prefix.scale

    @property
    def free_positions(self) -> tuple[int, ...]:
        fixed = {p for p, _ in self.support.fixed}
        return tuple(p for p in range(self.K + 1, self.M + 1) if p not in fixed)

    @property
    def window(self) -> tuple[int, int]:
        return 1 << self.M, 2 << self.M

    @property
    def magnitude(self) -> Fraction:
        e = self.K + len(self.support.fixed)
        if self.bent:
            e += len(self.free_positions) // 2
        return abs(self.amplitude) / (1 << e)

    def _sign_parity(self, k):
        """(nonzero mask, parity) for offsets k - 2^M, scalar or array."""
        K = self.K
        lowmask = (1 << K) - 1
        par = popcount_parity(np.asarray(k & lowmask) & bit_reverse(self.support.prefix.index, K))
        for p, v in self.support.fixed:
            if v:
                par = par ^ ((k >> (p - 1)) & 1)
        free = self.free_positions
        nz = np.ones(np.shape(k), dtype=bool)
        if self.bent:
            for a, b in zip(free[0::2], free[1::2]):
                par = par ^ (((k >> (a - 1)) & 1) & ((k >> (b - 1)) & 1))
        else:
            for a in free:
                nz = nz & (((k >> (a - 1)) & 1) == 0)
        return nz, par

    def signs(self) -> np.ndarray:
        """Coefficient signs (+1, -1 or 0) for every index of the window, in order."""
        check_scale(self.M, "block signs")
        k = np.arange(1 << self.M, dtype=np.int64)
        nz, par = self._sign_parity(k)
        s = 1 if self.amplitude >= 0 else -1
        return np.where(nz, s * (1 - 2 * par), 0).astype(np.int64)

    def sign(self, k: int) -> int:
        lo, hi = self.window
        if not lo <= k < hi:
            return 0
        nz, par = self._sign_parity(np.array([k - lo], dtype=np.int64))
        s = 1 if self.amplitude >= 0 else -1
        return int(s * (1 - 2 * par[0])) if nz[0] else 0

    def coeff(self, k: int) -> Fraction:
        return self.sign(k) * self.magnitude

    def local_unit_values(self, R: int | None = None) -> np.ndarray:
        """Unit-amplitude values on the scale-R cells of the prefix interval."""
        R = self.M + 1 if R is None else R
        if R < self.M + 1:
            raise ValueError("grid too coarse for the block")
        K = self.K
        check_scale(R - K, "local grid")
        c = np.arange(1 << (R - K), dtype=np.int64)
        par = _bit_at(c, self.M + 1, R, K)
        if self.bent:
            free = self.free_positions
            for a, b in zip(free[0::2], free[1::2]):
                par = par ^ (_bit_at(c, a, R, K) & _bit_at(c, b, R, K))
        vals = 1 - 2 * par
        return np.where(self.support.local_mask(R), vals, 0)

    def minus_set(self) -> AffineSet | IntervalSet:
        """Where the unit block is -1; affine when there is no bent factor."""
        if not self.bent or not self.free_positions:
            return self.support.with_digit(self.M + 1, 1)
        R = self.M + 1
        base = self.support.prefix.index << (R - self.K)
        cells = np.flatnonzero(self.local_unit_values(R) == -1)
        return IntervalSet.from_runs(((base + c, base + c + 1) for c in cells.tolist()), R)

    def to_polynomial(self) -> WalshPolynomial:
        mag = self.magnitude
        lo, hi = self.window
        return WalshPolynomial(lo, hi, self.signs() * mag.numerator, mag.denominator)

    def _constraints(self) -> list[tuple[int, int]]:
        K = self.K
        pre = [(p, (self.support.prefix.index >> (K - p)) & 1) for p in range(1, K + 1)]
        return pre + list(self.support.fixed)

    def partial_envelope(self) -> list[tuple[int | None, DyadicRational, Fraction]]:
        """Pointwise bound on all unit-amplitude partial sums of the block.

        Returns (first disagreeing digit or None for S, class measure, bound).
        The bound uses the conditional-expectation form of Paley partial sums
        at each binary digit of the cut index.
        """
        cons = self._constraints()
        cpos = sorted(p for p, _ in cons)
        free = self.free_positions
        pair_first = free[0::2] if self.bent else ()
        unbent = set() if self.bent else set(free)
        w = []
        for b in range(self.M):
            beyond = sum(1 for p in cpos if p > b) + sum(1 for a in pair_first if a > b)
            w.append(Fraction(1, 1 << beyond))
        safe = [b for b in range(self.M) if (b + 1) not in unbent]
        risky = [b for b in range(self.M) if (b + 1) in unbent]

        def bound(T: int) -> Fraction:
            best = sum((w[b] for b in safe if b < T), Fraction(0))
            for d in risky:
                if d < T:
                    best = max(best, w[d] + sum((w[b] for b in safe if d < b < T), Fraction(0)))
            return best

        out = []
        for r, c in enumerate(cpos, start=1):
            out.append((c, DyadicRational(1, r), bound(c)))
        out.append((None, DyadicRational(1, len(cpos)), bound(self.M)))
        return out

    def envelope_grid(self, R: int) -> np.ndarray:
        """The partial-sum envelope on the full scale-R grid (for testing)."""
        check_scale(R, "envelope grid")
        x = np.arange(1 << R, dtype=np.int64)
        cons = sorted(self._constraints())
        out = np.zeros(x.size, dtype=float)
        done = np.zeros(x.size, dtype=bool)
        env = self.partial_envelope()
        for (p, v), (_, _, val) in zip(cons, env):
            dis = (((x >> (R - p)) & 1) != v) & ~done
            out[dis] = float(val)
            done |= dis
        out[~done] = float(env[-1][2])
        return out
