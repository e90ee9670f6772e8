from fractions import Fraction as F

import numpy as np
import pytest

from walshuniv.dyadic_core import BudgetError, DyadicInterval as I, measure
from walshuniv.interval_approx import (
    SignedBlockSeq,
    choose_schedule,
    lemma2_construct,
    max_partial_norm,
    verification_constant,
)
from walshuniv.partials import dense_scan
from walshuniv.walsh import WalshPolynomial


def dense_h(out):
    """H on the full scale-n_q grid, from the carrier coefficients."""
    R = out.n_q
    total = None
    for c in out.seq.carriers:
        poly = c.block.to_polynomial()
        nums, den = poly.grid(R)
        vals = [F(int(v), den) for v in nums]
        total = vals if total is None else [a + b for a, b in zip(total, vals)]
    return total


def test_schedule_examples():
    s = choose_schedule(I(0, 0), F(1, 4), F(3, 4), 1)
    assert s.split == 1 and tuple(s.counts) == (4,)
    t = choose_schedule(I(0, 0), F(1, 4), F(3, 4), 1, mode="tuned")
    assert list(t.levels[0]) == [t.split + 1 + 2 * i for i in range(1, 5)]
    with pytest.raises(BudgetError):
        choose_schedule(I(0, 0), F(1, 4), F(3, 4), 3)


@pytest.mark.parametrize("delta,l,eps,q,mode", [
    (I(0, 0), F(1, 4), F(3, 4), 1, "paper"),
    (I(0, 0), F(-1, 4), F(1, 2), 1, "paper"),
    (I(1, 0), F(1, 4), F(3, 4), 2, "tuned"),
    (I(2, 1), F(1, 8), F(1, 2), 2, "tuned"),
])
def test_lemma2_exact_structure(delta, l, eps, q, mode):
    out = lemma2_construct(delta, l, eps, q=q, mode=mode)
    assert out.ok
    h = dense_h(out)
    R = out.n_q
    a, b = delta.cells(R)
    low = -((1 << q) - 1) * l
    assert all(v == 0 for v in h[:a] + h[b:])
    inside = h[a:b]
    assert set(inside) <= {l, low}
    assert F(inside.count(low), 1 << R) == delta.length.to_fraction() / (1 << q)
    assert sum(h) == 0
    # H equals l on E_q, cell by cell
    eq = out.e_q.to_mask(R)
    assert all(h[c] == l for c in np.flatnonzero(eq))
    assert measure(out.e_q) == (1 - F(1, 1 << q)) * delta.length.to_fraction()


def test_ladder_and_disjoint_carriers():
    out = lemma2_construct(I(2, 1), F(1, 8), F(1, 2), q=3, mode="tuned")
    seq = out.seq
    mags = [seq.group_mag[n] for n in range(seq.n0, seq.n_end)]
    assert all(m > 0 for m in mags)
    assert all(x >= y for x, y in zip(mags, mags[1:]))
    assert sum(mags) < out.epsilon
    scales = [c.M for c in seq.carriers]
    assert len(set(scales)) == len(scales)
    for c in seq.carriers:
        assert abs(c.block.coeff(1 << c.M)) == seq.group_mag[c.M]
    assert seq.delta((1 << seq.n0)) in (-1, 0, 1)


def test_max_partial_norm_examples():
    z = SignedBlockSeq(1, 3, {1: F(0), 2: F(0)}, [])
    assert max_partial_norm(z, 2) == (0.0, 2)
    out = lemma2_construct(I(0, 0), F(1, 4), F(3, 4))
    v, _ = max_partial_norm(out.seq, 2)
    C = verification_constant(2)
    assert v < 2 * C * 0.25


def test_single_block_partial_scan():
    out = lemma2_construct(I(1, 1), F(1, 2), F(3, 4), q=1, mode="tuned")
    c = out.seq.carriers[0]
    poly = c.block.to_polynomial()
    lo, hi = poly.k_lo, poly.k_hi
    R = c.M + 1
    arr = np.array([float(x) for x in poly.coeffs])
    v, _ = dense_scan(arr, lo, R, 1)
    brute = 0.0
    for M in range(lo, hi):
        head = WalshPolynomial(lo, M + 1, poly.num[: M + 1 - lo], poly.den)
        nums, den = head.grid(R)
        brute = max(brute, float(np.abs(nums).sum()) / den / (1 << R))
    assert abs(v - brute) < 1e-12
    # full block L1 plus a Dirichlet-type term bounds every partial sum
    assert v <= float(abs(c.block.amplitude)) * 0.5 + 2 * float(abs(poly.coeff(lo))) * 2 ** (c.M - 1) + 1e-12


def test_non_dyadic_rejected():
    with pytest.raises(ValueError):
        lemma2_construct(I(0, 0), F(1, 3), F(3, 4))
