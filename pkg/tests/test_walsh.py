from fractions import Fraction as F

import numpy as np
import pytest

from walshuniv.dyadic_core import DyadicInterval as I, StepFunction, lp_power
from walshuniv.walsh import (
    WalshPolynomial,
    dirichlet_kernel,
    dyadic_block,
    empirical_basicity,
    fwt_forward,
    fwt_inverse,
    naive_transform,
    partial_sum,
    rademacher,
    walsh_eval,
    walsh_grid,
)


def test_rademacher_examples():
    assert rademacher(1, F(0)) == 1
    assert rademacher(1, F(1, 2)) == -1
    assert rademacher(3, F(5, 8)) == -1


def test_walsh_eval_examples():
    for x in (F(0), F(3, 7), F(5, 8)):
        assert walsh_eval(0, x) == 1
    assert walsh_eval(3, F(1, 4)) == -1
    for m in range(6):
        for i in range(64):
            x = F(i, 64)
            assert walsh_eval(1 << m, x) == rademacher(m + 1, x)


def test_character_property():
    R = 10
    rng = np.random.default_rng(0)
    grids = {}
    for _ in range(200):
        j, k = (int(v) for v in rng.integers(0, 1 << R, 2))
        for n in (j, k, j ^ k):
            if n not in grids:
                grids[n] = walsh_grid(n, R)
        assert np.array_equal(grids[j] * grids[k], grids[j ^ k])


def test_forward_examples():
    assert fwt_forward(StepFunction.constant(1), 3).coeffs == [1] + [0] * 7
    c = fwt_forward(StepFunction.from_grid(walsh_grid(5, 3), 3))
    assert c.coeffs == [int(k == 5) for k in range(8)]


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(7)
    for R in (3, 5):
        vals = rng.integers(-50, 50, size=1 << R)
        f = StepFunction.from_grid(vals, R, 9)
        assert fwt_forward(f, R).coeffs == naive_transform(f, R)


def test_inverse_examples():
    assert fwt_inverse(WalshPolynomial.from_coeffs([1, 0, 0, 0])) == StepFunction.constant(1)
    for m in range(4):
        unit = WalshPolynomial.from_coeffs([int(k == 1 << m) for k in range(2 << m)])
        assert np.array_equal(fwt_inverse(unit).values(m + 1),
                              walsh_grid(1 << m, m + 1))
    m = 3
    d = fwt_inverse(dirichlet_kernel(m))
    assert d == StepFunction([(I(m, 0), F(8))], fill=0)


def test_roundtrip_and_parseval():
    rng = np.random.default_rng(1)
    for R in (1, 6, 12):
        nums = rng.integers(-1000, 1000, size=1 << R)
        c = WalshPolynomial(0, 1 << R, nums, 37)
        f = fwt_inverse(c)
        back = fwt_forward(f, R)
        assert back.coeffs == c.coeffs
        assert lp_power(f, 2) == sum(x * x for x in c.coeffs)


def test_partial_sum_examples():
    c = WalshPolynomial.from_coeffs([1, 2, 3, 4])
    assert partial_sum(c, 0) == StepFunction.constant(0)
    assert partial_sum(c, 4) == fwt_inverse(c)
    blk = partial_sum(dyadic_block(2), 8)
    assert blk == StepFunction([(I(3, 0), F(4)), (I(3, 1), F(-4))], fill=0)
    with pytest.raises(ValueError):
        partial_sum(c, 5)


def test_block_identity():
    for m in range(11):
        f = fwt_inverse(dyadic_block(m))
        for p in (1, 2, 3, 4):
            assert lp_power(f, p) == F(2) ** (m * (p - 1))
        d = fwt_inverse(dirichlet_kernel(m))
        assert d == StepFunction([(I(m, 0), F(1 << m))], fill=0)


def test_block_partial_l1_below_l2():
    rng = np.random.default_rng(5)
    for m in range(1, 7):
        a = rng.integers(-20, 21, size=1 << m)
        c = WalshPolynomial(1 << m, 2 << m, a, 20)
        full2 = float(lp_power(fwt_inverse(c, m + 1), 2)) ** 0.5
        for M in range((1 << m) + 1, (2 << m) + 1):
            part = partial_sum(c, M, m + 1)
            assert float(lp_power(part, 1)) <= full2 + 1e-12


@pytest.mark.parametrize("p", [2, 4])
def test_empirical_basicity_recorded(p):
    C = empirical_basicity(p)
    assert 1.0 - 1e-9 <= C <= 4
