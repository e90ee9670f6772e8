from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walshuniv.dyadic_core import (
    BudgetError,
    DyadicInterval as I,
    DyadicRational as D,
    IntervalSet,
    StepFunction,
    WeightSpec,
    budget,
    lp_norm,
    lp_power,
    measure,
    refine,
    restrict_norm,
)
from walshuniv.walsh import dyadic_block, walsh_grid


def test_dyadic_canonical():
    assert D(4, 3) == F(1, 2)
    assert (D(4, 3).numerator, D(4, 3).exponent) == (1, 1)
    assert (D(0, 7).numerator, D(0, 7).exponent) == (0, 0)
    assert D(3, 2) + D(1, 2) == 1
    assert D(3, 2) * D(1, 1) == F(3, 8)
    assert D(3, 2).shift(2) == 3
    assert D(3, 2).shift(-1) == F(3, 8)
    with pytest.raises(ValueError):
        D.from_value(F(1, 3))


def test_measure_examples():
    assert measure(IntervalSet([I(0, 0)])) == 1
    assert measure(IntervalSet([I(2, 0), I(2, 2)])) == F(1, 2)


def test_interval_set_canonical_merge():
    s = IntervalSet([I(2, 0), I(2, 1), I(3, 4)])
    assert s.intervals == (I(1, 0), I(3, 4))


def test_refine_examples():
    a = StepFunction.indicator(IntervalSet([I(1, 0)]))
    b = StepFunction.indicator(IntervalSet([I(2, 0)]))
    pa, pb = refine(a, b)
    assert [iv for iv, _ in pa] == [I(2, 0), I(2, 1), I(1, 1)]
    assert [iv for iv, _ in pa] == [iv for iv, _ in pb]
    w1 = StepFunction.from_grid(walsh_grid(1, 2), 2)
    w2 = StepFunction.from_grid(walsh_grid(2, 2), 2)
    pa, pb = refine(w1, w2)
    assert len(pa) == 4 and all(iv.scale == 2 for iv, _ in pa)
    f = StepFunction.from_grid([1, 2, 3, 4], 2)
    assert refine(f, f)[0] == list(f.pieces)


def test_refine_budget():
    f = StepFunction.from_grid(list(range(16)), 4)
    with budget(8):
        with pytest.raises(BudgetError):
            refine(f, f)


def test_lp_norm_examples():
    f = StepFunction.indicator(IntervalSet([I(1, 0)]))
    assert lp_power(f, 2) == F(1, 2)
    assert abs(lp_norm(f, 2) - 2 ** -0.5) < 1e-15
    blk = dyadic_block(3).to_step()
    assert lp_power(blk, 2) == 8
    w = WeightSpec(((1, -10.0, IntervalSet([I(0, 0)])),))
    for p in (1, 2, 3):
        assert abs(lp_norm(StepFunction.constant(1), p, w) - 2 ** (-10 / p)) < 1e-15
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


def test_restrict_norm_examples():
    one = StepFunction.constant(1)
    assert restrict_norm(one, IntervalSet([I(2, 0)]), 1) == 0.25
    w5 = StepFunction.from_grid(walsh_grid(5, 3), 3)
    assert restrict_norm(w5, IntervalSet([I(0, 0)]), 2) == 1.0


def test_exact_power_matches_cell_oracle():
    rng = np.random.default_rng(3)
    for R in (1, 5, 12):
        vals = rng.integers(-9, 10, size=1 << R)
        f = StepFunction.from_grid(vals, R, 7)
        for p in (1, 2, 3):
            oracle = sum(F(abs(int(v)), 7) ** p for v in vals) / (1 << R)
            assert lp_power(f, p) == oracle


intervals = st.integers(0, 6).flatmap(lambda K: st.builds(I, st.just(K), st.integers(0, (1 << K) - 1)))


@settings(max_examples=60, deadline=None)
@given(st.lists(intervals, max_size=8))
def test_complement_measure(ivs):
    s = IntervalSet(ivs)
    assert measure(s.complement()) == 1 - measure(s)
    assert IntervalSet(s.intervals) == s


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.data())
def test_canonicalization_fixpoint_and_refine_values(R, data):
    vals = data.draw(st.lists(st.integers(-2, 2), min_size=1 << R, max_size=1 << R))
    f = StepFunction.from_grid(vals, R)
    assert StepFunction(f.pieces) == f
    g = StepFunction.from_grid(data.draw(st.lists(st.integers(-2, 2), min_size=1 << R,
                                                  max_size=1 << R)), R)
    pa, pb = refine(f, g)
    for (iv, va), (_, vb) in zip(pa, pb):
        mid = (iv.left + iv.right) / 2
        assert f(mid) == va and g(mid) == vb


def test_serialization_roundtrip(tmp_path):
    from walshuniv.formats import read_intervals, read_step, write_intervals, write_step

    f = StepFunction([(I(2, 0), F(1, 3)), (I(2, 1), F(-5, 2))], fill=0)
    p = tmp_path / "f.txt"
    write_step(f, p)
    assert read_step(p) == f
    s = IntervalSet([I(3, 1), I(1, 1)])
    write_intervals(s, p)
    assert read_intervals(p) == s
