"""Walsh-Paley system, exact fast transform and partial sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from walshuniv.dyadic_core import (
    BudgetError,
    StepFunction,
    as_rational,
    check_scale,
)

NAIVE_MAX_SCALE = 12


def _bits_of(x, n: int) -> int:
    """Integer formed by the first n binary digits of x in [0, 1)."""
    x = as_rational(x)
    if not 0 <= x < 1:
        raise ValueError("point outside [0, 1)")
    return math.floor(x * (1 << n))


def rademacher(n: int, x) -> int:
    if n < 1:
        raise ValueError("Rademacher index starts at 1")
    return -1 if _bits_of(x, n) & 1 else 1


def walsh_eval(k: int, x) -> int:
    if k < 0:
        raise ValueError("negative Walsh index")
    if k == 0:
        return 1
    R = k.bit_length()
    return -1 if bin(k & bit_reverse(_bits_of(x, R), R)).count("1") & 1 else 1


def bit_reverse(i: int, R: int) -> int:
    return int(format(i, f"0{R}b")[::-1], 2) if R else 0


def bitrev_perm(R: int) -> np.ndarray:
    perm = np.zeros(1, dtype=np.int64)
    for _ in range(R):
        perm = np.concatenate((2 * perm, 2 * perm + 1))
    return perm


def popcount_parity(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    out = np.zeros(a.shape, dtype=np.uint64)
    while np.any(a):
        out ^= a & np.uint64(1)
        a = a >> np.uint64(1)
    return out.astype(np.int64)


def walsh_grid(k: int, R: int) -> np.ndarray:
    """Values of W_k on the 2^R cells (requires k < 2^R)."""
    if k >= 1 << R:
        raise ValueError("index needs a finer grid")
    check_scale(R, "Walsh grid")
    cells = bitrev_perm(R)
    return 1 - 2 * popcount_parity(cells & k)


def _safe_int(a: np.ndarray, growth_bits: int) -> np.ndarray:
    if a.dtype == object:
        return a
    m = int(np.max(np.abs(a))) if a.size else 0
    if m.bit_length() + growth_bits >= 62:
        return a.astype(object)
    return a.astype(np.int64)


def hadamard_butterfly(a: np.ndarray) -> np.ndarray:
    """Unnormalized natural-order Walsh-Hadamard transform over integers."""
    n = a.size
    R = n.bit_length() - 1
    if n != 1 << R:
        raise ValueError("length must be a power of two")
    x = _safe_int(np.asarray(a), R).copy()
    h = 1
    while h < n:
        x = x.reshape(-1, 2, h)
        x = np.concatenate((x[:, 0] + x[:, 1], x[:, 0] - x[:, 1]), axis=1)
        h *= 2
    return x.reshape(n)


@dataclass
class WalshPolynomial:
    """Coefficients num[k - k_lo] / den for Paley indices k_lo <= k < k_hi."""

    k_lo: int
    k_hi: int
    num: np.ndarray
    den: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.k_lo <= self.k_hi:
            raise ValueError("bad index window")
        if len(self.num) != self.k_hi - self.k_lo:
            raise ValueError("coefficient count does not match window")
        if self.den <= 0:
            raise ValueError("denominator must be positive")

    @classmethod
    def from_coeffs(cls, coeffs: Iterable, k_lo: int = 0) -> "WalshPolynomial":
        cs = [as_rational(c) for c in coeffs]
        den = math.lcm(*(c.denominator for c in cs)) if cs else 1
        nums = [c.numerator * (den // c.denominator) for c in cs]
        big = bool(nums) and max(abs(n) for n in nums) >= 2**62
        arr = np.array(nums, dtype=object if big else np.int64)
        return cls(k_lo, k_lo + len(cs), arr, den)

    @property
    def coeffs(self) -> list[Fraction]:
        return [Fraction(int(n), self.den) for n in self.num]

    def coeff(self, k: int) -> Fraction:
        if not self.k_lo <= k < self.k_hi:
            return Fraction(0)
        return Fraction(int(self.num[k - self.k_lo]), self.den)

    @property
    def scale(self) -> int:
        """Scale of the cells on which the polynomial is constant."""
        return max(self.k_hi - 1, 0).bit_length()

    def padded(self, R: int) -> np.ndarray:
        check_scale(R, "coefficient vector")
        if self.k_hi > 1 << R:
            raise ValueError("window exceeds grid")
        out = np.zeros(1 << R, dtype=self.num.dtype)
        out[self.k_lo:self.k_hi] = self.num
        return out

    def grid(self, R: int | None = None) -> tuple[np.ndarray, int]:
        """Exact values on the scale-R grid as (numerators, denominator)."""
        R = self.scale if R is None else R
        vals = hadamard_butterfly(self.padded(R))
        return vals[bitrev_perm(R)], self.den

    def to_step(self, R: int | None = None) -> StepFunction:
        R = self.scale if R is None else R
        nums, den = self.grid(R)
        return StepFunction.from_grid(nums, R, den)

    def float_grid(self, R: int | None = None) -> np.ndarray:
        nums, den = self.grid(R)
        return nums.astype(float) / den


def fwt_forward(f: StepFunction, R: int | None = None) -> WalshPolynomial:
    """Exact coefficients c_k = integral of f * W_k for k < 2^R."""
    R = f.resolution if R is None else R
    if R < f.resolution:
        raise ValueError("grid coarser than the step function")
    nums, den = f.to_grid(R)
    return fwt_forward_grid(nums, den, R)


def fwt_forward_grid(nums: np.ndarray, den: int, R: int) -> WalshPolynomial:
    check_scale(R, "transform")
    c = hadamard_butterfly(np.asarray(nums)[bitrev_perm(R)])
    # divide by 2^R via the denominator, then cancel common powers of two
    den = den << R
    return _reduce(WalshPolynomial(0, 1 << R, c, den))


def _reduce(poly: WalshPolynomial) -> WalshPolynomial:
    g = poly.den
    for n in poly.num:
        g = math.gcd(g, int(n))
        if g == 1:
            break
    if g > 1:
        num = poly.num // g
        return WalshPolynomial(poly.k_lo, poly.k_hi, _safe_int(num, 0), poly.den // g)
    return poly


def fwt_inverse(c: WalshPolynomial, R: int | None = None) -> StepFunction:
    return c.to_step(R)


def partial_sum(c: WalshPolynomial, M: int, R: int | None = None) -> StepFunction:
    """Sum of the terms with k_lo <= k < M."""
    if not c.k_lo <= M <= c.k_hi:
        raise ValueError("M outside the coefficient window")
    R = c.scale if R is None else R
    head = WalshPolynomial(c.k_lo, M, c.num[: M - c.k_lo], c.den)
    return head.to_step(R)


def naive_transform(f: StepFunction, R: int | None = None) -> list[Fraction]:
    """O(4^R) inner-product oracle."""
    R = f.resolution if R is None else R
    if R > NAIVE_MAX_SCALE:
        raise BudgetError(f"naive transform limited to scale {NAIVE_MAX_SCALE}")
    nums, den = f.to_grid(R)
    nums = np.asarray(nums, dtype=object)
    n = 1 << R
    out = []
    for k in range(n):
        w = walsh_grid(k, R)
        out.append(Fraction(int(np.dot(w.astype(object), nums)), den * n))
    return out


def dirichlet_kernel(m: int) -> WalshPolynomial:
    """Sum of W_k for k < 2^m."""
    return WalshPolynomial(0, 1 << m, np.ones(1 << m, dtype=np.int64))


def dyadic_block(m: int) -> WalshPolynomial:
    """Sum of W_k for 2^m <= k < 2^(m+1)."""
    return WalshPolynomial(1 << m, 2 << m, np.ones(1 << m, dtype=np.int64))


def grid_power_log2(values: np.ndarray, R: int, p: float,
                    weight_log2: np.ndarray | None = None) -> float:
    """log2 of the (weighted) integral of |values|^p over the scale-R grid."""
    from walshuniv.dyadic_core import log2_sum

    v = np.abs(np.asarray(values, dtype=float))
    nz = v > 0
    with np.errstate(divide="ignore"):
        t = p * np.log2(v[nz]) - R
    if weight_log2 is not None:
        t = t + np.asarray(weight_log2)[nz]
    return log2_sum(t.tolist())


def grid_norm(values: np.ndarray, R: int, p: float,
              weight_log2: np.ndarray | None = None) -> float:
    return 2.0 ** (grid_power_log2(values, R, p, weight_log2) / p)


def exact_grid_power(nums: np.ndarray, den: int, R: int, p: int) -> Fraction:
    """Exact integral of |f|^p for integer p on the scale-R grid."""
    a = np.abs(np.asarray(nums).astype(object))
    total = sum(int(x) ** p for x in a)
    return Fraction(total, den**p << R)


_BASICITY_CACHE: dict[tuple, float] = {}


def empirical_basicity(p: float, R: int = 8, trials: int = 24, seed: int = 0) -> float:
    """max over k and a random corpus of ||S_k f||_p / ||f||_p (dyadic step functions at scale R)."""
    from walshuniv.partials import dense_scan

    key = (float(p), R, trials, seed)
    if key in _BASICITY_CACHE:
        return _BASICITY_CACHE[key]
    rng = np.random.default_rng(seed)
    worst = 1.0
    for t in range(trials):
        if t % 3 == 0:
            vals = rng.integers(-8, 9, size=1 << R)
        elif t % 3 == 1:
            # sparse spikes stress the partial sums
            vals = np.zeros(1 << R, dtype=np.int64)
            vals[rng.integers(0, 1 << R, size=3)] = rng.integers(1, 9, size=3)
        else:
            vals = np.where(rng.random(1 << R) < 0.5, 1, -1) * rng.integers(0, 3, size=1 << R)
        if not np.any(vals):
            continue
        c = fwt_forward_grid(vals.astype(np.int64), 1, R)
        coeffs = c.num.astype(float) / c.den
        top, _ = dense_scan(coeffs, 0, R, p)
        norm = grid_norm(vals, R, p)
        worst = max(worst, top / norm)
    _BASICITY_CACHE[key] = worst
    return worst
