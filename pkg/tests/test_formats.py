from fractions import Fraction as F

import pytest

from walshuniv import formats, verify
from walshuniv.dyadic_core import DyadicInterval as I, StepFunction
from walshuniv.greedy import SignSequence
from walshuniv.universal import read_universal, read_weight, universal_lines, write_universal, write_weight


def test_coefficient_dump_roundtrip_and_tamper(tmp_path):
    cs = [F(0), F(1, 2), F(-3, 8), F(5)]
    p = tmp_path / "c.txt"
    formats.write_coeffs(cs, p)
    assert formats.read_coeffs(p) == cs
    text = p.read_text().replace("-3/8", "-3/16")
    p.write_text(text)
    with pytest.raises(formats.ChecksumError):
        formats.read_coeffs(p)


def test_plain_files_without_footer(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("1 0 1/2\n1 1 -1\n")
    assert formats.read_step(p) == StepFunction([(I(1, 0), F(1, 2)), (I(1, 1), F(-1))])
    p.write_text("1 0\n")
    with pytest.raises(formats.FormatError):
        formats.read_step(p)


def test_config_hash_in_header(tmp_path):
    p = tmp_path / "f.txt"
    formats.write_step(StepFunction.constant(1), p, cfg_hash="abc")
    assert formats.config_of(p) == "abc"


def test_universal_and_weight_files(tmp_path):
    res = verify.default_build()
    u = res.universal
    write_universal(u, tmp_path / "u.txt")
    u2 = read_universal(tmp_path / "u.txt")
    assert universal_lines(u2) == universal_lines(u)
    assert u2.config_hash == u.config_hash and u2.N == u.N
    for k in (0, 3, 8, 100, (1 << u.N[-1]) - 1):
        assert u2.coefficient(k) == u.coefficient(k)
    w = res.weights["1/4"]
    write_weight(w, tmp_path / "w.txt", u.config_hash)
    assert read_weight(tmp_path / "w.txt") == w
    lines = (tmp_path / "u.txt").read_text().splitlines()
    lines[5] = lines[5] + "0"
    (tmp_path / "u.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(formats.ChecksumError):
        read_universal(tmp_path / "u.txt")


def test_sign_file_roundtrip():
    u = verify.default_build().universal
    s = SignSequence(u, [1, 3])
    lines = formats.load_lines(formats.dump_lines(s.lines(dense_limit=1 << 8)))
    assert any(ln.startswith("range") for ln in lines)
    assert SignSequence.parse(lines, u) == s
    with pytest.raises(ValueError):
        SignSequence.parse(["stages 1", f"{1 << u.blocks[0].n_start} 5"], u)


def test_trace_csv():
    text = formats.trace_csv([{"stage": 1, "nu": 2, "error_before": 1.0, "error_after": 0.5,
                               "bound": 0.75, "intra_block_max": 1.1, "extra": 0}])
    assert text.splitlines()[0] == "stage,nu,error_before,error_after,bound,intra_block_max"
    assert text.splitlines()[1] == "1,2,1.0,0.5,0.75,1.1"
