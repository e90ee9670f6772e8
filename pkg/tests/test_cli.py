import json
from fractions import Fraction as F

import pytest

from walshuniv import formats
from walshuniv.cli import main
from walshuniv.dyadic_core import DyadicInterval as I, StepFunction
from walshuniv.universal import DEFAULT_CONFIG, enumerate_dictionary


def test_transform_both_ways(tmp_path):
    f = StepFunction([(I(2, i), F(v, 3)) for i, v in enumerate((1, -2, 0, 5))])
    formats.write_step(f, tmp_path / "f.txt")
    assert main(["transform", "--input", str(tmp_path / "f.txt"), "--output", "c.txt",
                 "--out", str(tmp_path)]) == 0
    assert main(["transform", "--inverse", "--input", str(tmp_path / "c.txt"),
                 "--output", "g.txt", "--out", str(tmp_path)]) == 0
    assert formats.read_step(tmp_path / "g.txt") == f


def test_lemma_commands(tmp_path, capsys):
    assert main(["lemma1", "--K", "1", "--i", "1", "--M", "3", "--out", str(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["E1"] == rep["E2"] == "1/4"
    assert len(formats.read_coeffs(tmp_path / "lemma1_coeffs.txt")) == 16
    assert main(["lemma2", "--l", "1/4", "--eps", "3/4", "--coeffs", "h.txt",
                 "--report", "r.json", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["E_q"] == "1/2" and all(c["ok"] for c in rep["checks"].values())
    f = StepFunction([(I(1, 0), F(1, 16)), (I(1, 1), F(-1, 32))])
    formats.write_step(f, tmp_path / "f.txt")
    assert main(["lemma3", "--input", str(tmp_path / "f.txt"), "--eps", "3/4",
                 "--trials", "8", "--report", "l3.json", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "l3.json").read_text())
    assert rep["subset_bound"]["violations"] == 0


def test_build_approximate_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("WALSHUNIV_OUT", str(tmp_path))
    (tmp_path / "cfg.json").write_text(json.dumps({"delta": "1/2"}))
    assert main(["build-universal", "--config", str(tmp_path / "cfg.json")]) == 0
    first = (tmp_path / "universal.txt").read_bytes()
    assert main(["build-universal", "--config", str(tmp_path / "cfg.json")]) == 0
    assert (tmp_path / "universal.txt").read_bytes() == first
    enum = enumerate_dictionary(DEFAULT_CONFIG["dictionary"])
    formats.write_step(enum.function(2) + enum.function(4), tmp_path / "t.txt")
    assert main(["approximate", "--universal", str(tmp_path / "universal.txt"),
                 "--weight", str(tmp_path / "weight_1_2.txt"), "--target",
                 str(tmp_path / "t.txt"), "--p", "2", "--stages", "2"]) == 0
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0] == "stage,nu,error_before,error_after,bound,intra_block_max"
    assert len(rows) == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["stages"] == [2, 4] and summary["signs_valid"]
    assert (tmp_path / "signs.txt").read_text().startswith("# walshuniv signs")
    capsys.readouterr()
    assert main(["report", "--universal", str(tmp_path / "universal.txt"),
                 "--weight", str(tmp_path / "weight_1_2.txt")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["weight"]["n_tilde"] == 2


def test_tampered_file_exit_code(tmp_path):
    formats.write_coeffs([F(1), F(2)], tmp_path / "c.txt")
    (tmp_path / "c.txt").write_text((tmp_path / "c.txt").read_text().replace("2/1", "3/1"))
    assert main(["transform", "--inverse", "--input", str(tmp_path / "c.txt"),
                 "--output", "g.txt", "--out", str(tmp_path)]) == 3


def test_verify_skips_deep_checks_under_small_budget(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"R_max": 256}))
    code = main(["verify", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("SKIP") == 5
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert all("reason" in c for c in rep["checks"] if c.get("skipped"))


def test_bad_subcommand():
    with pytest.raises(SystemExit):
        main(["nope"])
