from fractions import Fraction as F

import numpy as np
import pytest

from walshuniv.dyadic_core import DyadicInterval as I, StepFunction, lp_norm
from walshuniv.polynomial_approx import (
    lemma3_approx,
    levels_for,
    tail_base,
    verify_subset_bound,
)

HALVES = StepFunction([(I(1, 0), F(1, 4)), (I(1, 1), F(-1, 4))])
SMALL = StepFunction([(I(1, 0), F(1, 16)), (I(1, 1), F(-1, 32))])


@pytest.fixture(scope="module")
def halves():
    return lemma3_approx(HALVES, F(3, 4), 2)


@pytest.fixture(scope="module")
def small():
    return lemma3_approx(SMALL, F(3, 4), 2)


def test_parameters():
    assert levels_for(F(3, 4)) == 1
    assert levels_for(F(1, 2)) == 2
    assert tail_base(F(3, 4)) == 2
    assert tail_base(F(1, 2)) == 3


def test_halves_example(halves):
    assert halves.q == 1
    assert halves.ok, halves.checks
    assert halves.e_measure() > F(1, 4)
    assert halves.checks["statement2"]["exact_on_E"]


def test_windows_abut_and_descend(halves):
    ws = [pc.window for pc in halves.pieces]
    assert all(a[1] == b[0] for a, b in zip(ws, ws[1:]))
    assert len({pc.delta.scale for pc in halves.pieces}) == 1


def test_coefficients_strictly_decrease(small):
    lo, hi = small.seq.window
    prev = None
    for k in range(lo, hi):
        a = small.seq.a(k)
        assert 0 < a < small.epsilon
        if prev is not None:
            assert a < prev
        prev = a


def test_partition_reproduces_f(halves):
    rebuilt = StepFunction([(pc.delta, pc.value) for pc in halves.pieces], fill=0)
    assert rebuilt == HALVES


def test_h_matches_f_on_e_and_vanishes_off_pieces(small):
    R = small.n_end
    coeffs = np.zeros(1 << R)
    lo, hi = small.seq.window
    coeffs[lo:hi] = small.seq.coeff_array(True)
    from walshuniv.walsh import WalshPolynomial

    poly = WalshPolynomial(0, 1 << R, (coeffs * 2**40).astype(np.int64), 2**40)
    nums, den = poly.grid(R)
    h = [F(int(v), den) for v in nums]
    fv = SMALL.values(R)
    e = small.e_eps.to_mask(R)
    assert all(h[c] == fv[c] for c in np.flatnonzero(e))
    assert F(int(e.sum()), 1 << R) == small.e_measure()


def test_subset_bound_examples(small, halves):
    rep = verify_subset_bound(small, trials=64, seed=1)
    assert rep["direct"] and rep["ok"]
    empty = [r for r in rep["rows"] if r["set"] == "empty"]
    assert all(r["direct"] < r["bound"] for r in empty)
    for r in rep["rows"]:
        assert r["direct"] <= r["certificate"] + 1e-12
    assert verify_subset_bound(halves, trials=64, seed=1)["ok"]


def test_power_is_convex_in_p():
    rng = np.random.default_rng(2)
    ps = np.linspace(1, 4, 13)
    for _ in range(20):
        vals = rng.integers(-8, 9, size=32)
        f = StepFunction.from_grid(vals, 5, 4)
        powers = [lp_norm(f, p) ** p for p in ps]
        second = np.diff(powers, 2)
        assert (second >= -1e-9).all()


def test_rejects_zero_and_bad_args():
    with pytest.raises(ValueError):
        lemma3_approx(StepFunction.constant(0), F(1, 2))
    with pytest.raises(ValueError):
        lemma3_approx(HALVES, F(1, 2), p0=1)


FOUR = StepFunction([(I(2, i), v) for i, v in enumerate((F(1, 16), F(-1, 32), F(1, 64), F(-1, 16)))])


@pytest.fixture(scope="module")
def joint():
    return lemma3_approx(FOUR, F(1, 2), 2, schedule="joint")


def test_joint_schedule_levels_and_checks(joint):
    assert joint.schedule == "joint" and joint.q == 2 and joint.ok
    scales = [m for pc in joint.pieces for m in pc.out.schedule.scales]
    assert len(scales) == len(set(scales)) == 2 * len(joint.pieces)
    # unbent levels (by decreasing |l|) precede every bent level
    unbent = [pc.out.schedule.scales[0] for pc in joint.pieces]
    bent = [pc.out.schedule.scales[1] for pc in joint.pieces]
    assert max(unbent) < min(bent)
    mags = joint.seq.group_array()
    assert np.all(np.diff(mags) <= 0)


def test_joint_strict_decrease_and_subsets(joint):
    from walshuniv.interval_approx import check_strict_decrease

    ok, count = check_strict_decrease(joint.seq)
    assert ok and count == (1 << joint.n_end) - (1 << joint.n0) - 1
    assert verify_subset_bound(joint, trials=8)["ok"]


def test_auto_falls_back_to_joint():
    out = lemma3_approx(FOUR, F(1, 2), 2)
    assert out.schedule == "joint" and out.ok


def test_cap_bounds_every_coefficient():
    with pytest.raises(ValueError):
        lemma3_approx(SMALL, F(3, 4), 2, cap=F(1, 1 << 12))
    out = lemma3_approx(SMALL, F(3, 4), 2, cap=F(1, 1 << 12), tail=40)
    assert out.ok
    assert out.seq.a(out.seq.window[0]) < F(1, 1 << 12)
