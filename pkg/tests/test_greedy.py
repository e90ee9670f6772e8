import pytest

from walshuniv import verify
from walshuniv.dyadic_core import StepFunction
from walshuniv.greedy import (
    InsufficientDictionary,
    SignSequence,
    approximate,
    check_signs,
    select_next,
    stage_tolerance,
    unweighted_obstruction_demo,
)


@pytest.fixture(scope="module")
def built():
    return verify.default_build()


@pytest.fixture(scope="module")
def weight(built):
    return built.weights["1/2"]


def test_stage_tolerance():
    assert stage_tolerance("paper", 2, 1.0) == 0.25
    assert stage_tolerance("relaxed:4", 3, 2.0) == 1.0


def test_select_exact_member_and_cyclic_floor(built, weight):
    u, enum, model = built.universal, built.enum, built.model
    f3 = enum.function(3)
    nu, how, d = select_next(f3, enum, 0, 1, 2.0, weight, u, model, 1.0)
    assert (nu, how, d) == (3, "lookup", 0.0)
    # D[3] has no later occurrence among the built blocks
    with pytest.raises(InsufficientDictionary) as e:
        select_next(f3, enum, 3, 1, 2.0, weight, u, model, 1e-40)
    assert e.value.gap > 0
    assert enum.lookup(enum.cells(3), floor=len(enum)) == len(enum) + 3


def test_far_residual_reports_gap(built, weight):
    big = StepFunction.constant(1)
    with pytest.raises(InsufficientDictionary) as e:
        select_next(big, built.enum, 0, 1, 1.0, weight, built.universal, built.model, 1e-3)
    assert e.value.gap > 0 and e.value.best is not None


def test_single_member_one_stage(built, weight):
    f = built.enum.function(2)
    s, trace = approximate(built.universal, weight, f, 2.0, 1, "relaxed:2", built.enum, built.model)
    assert s.stages == [2] and trace[0]["ok"]
    assert trace[0]["error_after"] < trace[0]["bound"]
    assert trace[0]["telescoping"]


def test_zero_target(built, weight):
    s, trace = approximate(built.universal, weight, StepFunction.constant(0), 1.0, 3,
                           "relaxed:2", built.enum, built.model)
    assert s.stages == []
    assert all(r["error_after"] == 0 and r["how"] == "skip" for r in trace)
    assert all(s.delta(k) == 0 for k in range(64))


def test_three_stage_trace(built, weight):
    enum = built.enum
    f = enum.function(2) + enum.function(3) + enum.function(4)
    for p in (1.0, 2.0):
        s, trace = approximate(built.universal, weight, f, p, 3, "relaxed:2", enum, built.model)
        errs = [r["error_after"] for r in trace]
        assert s.stages == [2, 3, 4]
        assert all(b <= a / 2 for a, b in zip(errs, errs[1:]))
        assert all(r["ok"] and r["intra_block_max"] <= r["intra_bound"] for r in trace)
        assert check_signs(s)


def test_signs_follow_selected_blocks(built, weight):
    u = built.universal
    s = SignSequence(u, [2])
    blk = u.blocks[1]
    lo, hi = 1 << blk.n_start, 1 << blk.n_end
    assert all(s.delta(k) == blk.seq.delta(k) for k in range(lo, min(hi, lo + 512)))
    assert all(s.delta(k) == 0 for k in range(1 << u.blocks[0].n_start, lo))


def test_rejects_bad_p(built, weight):
    f = built.enum.function(2)
    with pytest.raises(ValueError):
        approximate(built.universal, weight, f, 0.5, 1)
    with pytest.raises(ValueError):
        approximate(built.universal, weight, f, 50.0, 1)


def test_obstruction_demo(built, weight):
    u = built.universal
    for k0 in (2, 5):
        d = unweighted_obstruction_demo(u, k0)
        assert d["lower_bound"] == (k0 - 1) * abs(u.coefficient(k0))
    d = unweighted_obstruction_demo(u, 5, weight, built.enum)
    assert d["below"] and d["below_relative"]
    with pytest.raises(ValueError):
        unweighted_obstruction_demo(u, 1)
