from fractions import Fraction as F

import numpy as np
import pytest

from walshuniv.dyadic_core import DyadicInterval as I, IntervalSet, lp_power, measure
from walshuniv.flat import AffineSet, SplitBlock, lemma1_construct, make_bent
from walshuniv.walsh import fwt_forward_grid, rademacher


def test_bent_examples():
    assert make_bent(0).values().tolist() == [1]
    assert make_bent(0).naive_spectrum() == [1]
    b2 = make_bent(2)
    assert b2.values().tolist() == [1, 1, 1, -1]
    assert all(abs(c) == F(1, 2) for c in b2.naive_spectrum())
    assert all(abs(c) == F(1, 4) for c in make_bent(4).naive_spectrum())
    with pytest.raises(ValueError):
        make_bent(3)


@pytest.mark.parametrize("m", [0, 2, 4, 6, 8])
def test_bent_flat_spectrum(m):
    b = make_bent(m)
    assert b.naive_spectrum() == b.spectrum()


def test_lemma1_examples():
    h = lemma1_construct(I(0, 0), 2)
    assert h.window == (4, 8)
    assert [abs(h.coeff(k)) for k in range(4, 8)] == [F(1, 2)] * 4
    assert measure(h.e_minus()) == F(1, 2)
    h = lemma1_construct(I(1, 1), 3)
    assert h.window == (8, 16)
    assert all(abs(h.coeff(k)) == F(1, 4) for k in range(8, 16))
    assert all(v == 0 for v in h.value_grid()[:8])
    with pytest.raises(ValueError):
        lemma1_construct(I(0, 0), 1)
    with pytest.raises(ValueError):
        lemma1_construct(I(2, 0), 2)


def test_coeff_outside_window_and_signs():
    h = lemma1_construct(I(0, 0), 2)
    assert h.coeff(3) == 0 and h.coeff(8) == 0
    dense = fwt_forward_grid(h.value_grid(8), 1, 8)
    assert [dense.coeff(k) for k in range(4, 8)] == [h.coeff(k) for k in range(4, 8)]
    assert [int(np.sign(h.coeff(k))) for k in range(4, 8)] == make_bent(2).values().tolist()


def test_dense_agrees_with_symbolic_all_small():
    for K in range(5):
        for M in range(K + 2, 13, 2):
            for i in {0, (1 << K) - 1, (1 << K) // 3}:
                h = lemma1_construct(I(K, i), M)
                c = fwt_forward_grid(h.value_grid(), 1, M + 1)
                sym = h.to_polynomial()
                assert c.coeffs[: 1 << M] == [0] * (1 << M)
                assert c.coeffs[1 << M:] == sym.coeffs


def test_decomposition_and_level_sets():
    for K, i, M in [(0, 0, 4), (1, 1, 5), (2, 3, 6), (3, 5, 7)]:
        h = lemma1_construct(I(K, i), M)
        R = M + 1
        g = make_bent(M - K)
        vals = h.value_grid(R)
        for c in range(1 << R):
            x = F(c, 1 << R)
            inside = (c >> (R - K)) == i
            mid = (c >> 1) & ((1 << (M - K)) - 1)
            # bit K+1 of x is u_1 of the bent argument
            u = int(format(mid, f"0{M - K}b")[::-1], 2) if M > K else 0
            want = rademacher(M + 1, x) * g(u) if inside else 0
            assert vals[c] == want
        assert sum(h.to_step().values(R)) == 0
        em, ep = h.e_minus(), h.e_plus()
        assert em.union(ep) == IntervalSet([I(K, i)])
        assert em.intersection(ep) == IntervalSet([])
        assert measure(em) == measure(ep) == F(1, 2 ** (K + 1))


def test_split_block_matches_dense():
    S = AffineSet(I(1, 0), ((3, 1),))
    for bent, M in [(True, 6), (False, 4), (False, 6)]:
        blk = SplitBlock(S, M, F(3, 4), bent)
        R = M + 1
        grid = np.zeros(1 << R, dtype=np.int64)
        a, b = S.prefix.cells(R)
        grid[a:b] = blk.local_unit_values(R) * 3
        c = fwt_forward_grid(grid, 4, R)
        poly = blk.to_polynomial()
        for k in range(1 << R):
            assert c.coeff(k) == poly.coeff(k)
        assert lp_power(poly.to_step(R), 2) == F(9, 16) * F(1, 4)
