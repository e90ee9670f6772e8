from fractions import Fraction as F

import pytest

from walshuniv import verify
from walshuniv.dyadic_core import DyadicInterval as I
from walshuniv.flat import AffineSet
from walshuniv.universal import (
    CellModel,
    ScheduleError,
    assemble,
    block_tolerance,
    build_weight,
    default_head,
    endpoint_audit,
    enumerate_dictionary,
    p_value,
    tilde_index,
    validate_config,
)


@pytest.fixture(scope="module")
def built():
    return verify.default_build()


def test_enumeration_examples():
    d = enumerate_dictionary({"scale": 1, "grid": ["-1/2", "1/2"]})
    assert len(d) == 4
    assert d.lookup(d.entries[2], floor=0) == 3
    assert d.lookup(d.entries[2], floor=len(d)) == len(d) + 3
    assert d.cells(len(d) + 1) == d.cells(1)
    assert d.lookup((F(0), F(0))) is None
    with pytest.raises(ValueError):
        enumerate_dictionary({"scale": 1, "entries": []})
    with pytest.raises(ValueError):
        enumerate_dictionary({"scale": 0, "entries": [["1/3"]]})


def test_quantize_ties_go_outward():
    d = enumerate_dictionary({"scale": 0, "grid": ["1/2", "1"]})
    assert d.quantize([F(3, 4)]) == (F(1),)
    assert d.quantize([F(1, 4)]) == (F(1, 2),)
    assert d.quantize([F(1, 8)]) == (F(0),)


def test_schedules():
    assert tilde_index(F(1, 2)) == 2
    assert tilde_index(F(1, 4)) == 3
    assert tilde_index(F(1, 3)) == 2
    assert p_value(None, 3) == 4
    assert block_tolerance("paper", 1) == (F(1, 8), F(1, 8))
    assert block_tolerance("relaxed:1", 2) == (F(1, 4), F(1, 4))
    with pytest.raises(ScheduleError):
        block_tolerance("relaxed:2", 1)
    with pytest.raises(ValueError):
        validate_config({"M_max": 0})
    with pytest.raises(ValueError):
        validate_config({"colour": 1})


def test_cell_model_independence():
    sets = {1: [AffineSet(I(1, 0), ((3, 1),))], 2: [AffineSet(I(0, 0), ((5, 1), (6, 0)))]}
    m = CellModel(1, sets)
    assert m.prob[0] == {1: F(1, 2), 2: F(1, 4)}
    assert m.prob[1] == {2: F(1, 4)}
    both = m.measure(lambda X: X.get(1, False) and X.get(2, False))
    assert both == F(1, 2) * F(1, 2) * F(1, 4)
    with pytest.raises(ValueError):
        CellModel(1, {1: [AffineSet(I(0, 0), ((3, 1),))], 2: [AffineSet(I(0, 0), ((3, 0),))]})


def test_block_chains(built):
    u = built.universal
    for b in u.blocks:
        assert b.first() < F(1, 1 << (2 * b.n_start))
        assert b.first() < F(1, 1 << b.m)
        assert all(c["ok"] for c in b.checks.values()), b.checks
    assert u.checks["strict_decrease"]["ok"]
    assert all(u.N[i] < u.N[i + 1] for i in range(len(u.N) - 1))


def test_global_decrease_across_head_and_seams(built):
    u = built.universal
    ks = list(range(0, 1 << u.N[1]))
    for b in u.blocks[1:]:
        lo = 1 << b.n_start
        ks += [lo - 2, lo - 1, lo, lo + 1]
    vals = [u.a(k) for k in sorted(set(ks))]
    assert all(y < x for x, y in zip(vals, vals[1:]))


def test_dense_coefficients_match_transform(built):
    from walshuniv.walsh import WalshPolynomial, fwt_forward

    u = built.universal
    n = u.N[1]
    cs = u.dense_coefficients(n)
    g = WalshPolynomial.from_coeffs(cs).to_step(n)
    assert fwt_forward(g, n).coeffs == cs


def test_weight_layers(built):
    for d, w in built.weights.items():
        assert w.n_tilde == tilde_index(F(d))
        assert w.unit_measure > 1 - F(d)
        assert all(w.log2_mu[n] <= -w.p[n] * (n + 2) for n in w.log2_mu)
        rep = built.report["weights"][d]["blocks"]
        assert set(rep) == {str(m) for m in range(w.n_tilde, w.M_max + 1)}
        for m, checks in rep.items():
            assert set(checks) == {"p=1", f"p={p_value(None, int(m)):g}"}
            assert all(v["ok"] for pr in checks.values() for v in pr.values())


def test_weight_needs_enough_blocks(built):
    with pytest.raises(ScheduleError):
        build_weight(built.universal.blocks[:2], F(1, 8))


def test_head_seam_condition(built):
    blocks = built.universal.blocks
    head = default_head(blocks[0].n_start, blocks[0].first())
    assert head[-1] == 4 * blocks[0].first().to_fraction()
    with pytest.raises(ValueError):
        assemble(blocks, head=[F(1)] * len(head))
    bad = [blocks[0].first().to_fraction() * (len(head) - k) / 2 for k in range(len(head))]
    with pytest.raises(ValueError):
        assemble(blocks, head=bad)


def test_endpoint_audit():
    rep = endpoint_audit(200, 0)
    assert rep["ok"] and rep["max_relative_excess"] <= 1e-12
