import json

import numpy as np
import pytest

from mhdpot import cli, harness
from mhdpot.harness import ConvergenceTable, StudyConfig


def test_config_validation():
    StudyConfig()
    bad = [dict(case="disk"), dict(scheme="x"), dict(levels=[]), dict(levels=[32, 16]),
           dict(levels=[15]), dict(mu=0.0), dict(tau=0.3), dict(provider_factor=0)]
    for kw in bad:
        with pytest.raises(ValueError):
            StudyConfig(**kw)


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# study\ncase = annulus\nlevels = 8, 16\ntau = h\nmu = 2.5  # comment\nquad-degree = 6\n")
    d = harness.read_config(p)
    assert d == {"case": "annulus", "levels": [8, 16], "tau": None, "mu": 2.5, "quad_degree": 6}
    cfg = StudyConfig(**d)
    assert cfg.tau_for(16) == 1 / 16
    p.write_text("colour = red\n")
    with pytest.raises(ValueError, match="c.cfg:1"):
        harness.read_config(p)
    p.write_text("case annulus\n")
    with pytest.raises(ValueError):
        harness.read_config(p)


def test_table_csv_round_trip():
    h = [1 / 16, 1 / 32, 1 / 64]
    t = ConvergenceTable(h, [4.295e-3, 1.894e-3, 1.092e-3], [6.540e-5, 2.073e-5, 8.492e-6])
    text = harness.table_csv(t)
    lines = text.splitlines()
    assert lines[0] == "h,err_H_L2,err_u_L2"
    assert lines[1] == "6.250E-02,4.295E-03,6.540E-05"
    assert lines[-1].startswith("# rate_H=0.7945 rate_u=1.2875")
    back = harness.parse_table_csv(text)
    np.testing.assert_allclose(back.err_H, t.err_H, rtol=1e-12)
    assert back.err_A is None


def test_table_csv_with_A():
    t = ConvergenceTable([0.5, 0.25], [1.0, 0.5], [1.0, 0.25], [1.0, 0.125])
    text = harness.table_csv(t)
    assert text.splitlines()[0] == "h,err_H_L2,err_u_L2,err_A_L2"
    assert harness.parse_table_csv(text).err_A == [1.0, 0.125]


def test_rate_conventions():
    t = ConvergenceTable([1 / 16, 1 / 32, 1 / 64], [4.295e-3, 1.894e-3, 1.092e-3], [6.540e-5, 2.073e-5, 8.492e-6])
    assert t.rate("H") == pytest.approx(np.log2(1.894 / 1.092), rel=1e-12)
    assert t.pairwise("u")[0] == pytest.approx(np.log2(6.540e-5 / 2.073e-5), rel=1e-12)
    assert t.fitted_rate("H") == pytest.approx(harness.lsq_rate(t.h, t.err_H))
    assert ConvergenceTable([0.1], [1.0], [1.0]).rate("H") is None
    with pytest.raises(ValueError):
        ConvergenceTable([0.1, 0.05], [1.0], [1.0, 2.0])


def test_markdown():
    t = ConvergenceTable([1 / 16, 1 / 32], [0.1, 0.05], [0.01, 0.0025])
    md = harness.table_markdown(t)
    rows = md.strip().splitlines()
    assert rows[2].startswith("| 1/16 | 1.000E-01 |")
    assert rows[-1] == "| convergence rate | O(h^{1.00}) | O(h^{2.00}) |"


def test_fmt_and_factor():
    assert harness.fmt(0.004295) == "4.295E-03"
    assert harness.isclose_factor(3.0, 1.0, 3.0) and not harness.isclose_factor(3.1, 1.0, 3.0)
    assert not harness.isclose_factor(float("nan"), 1.0, 3.0)


def test_zero_case_is_exact():
    for scheme in harness.SCHEMES:
        r = harness.run_single(StudyConfig(case="zero", scheme=scheme, levels=[4], T=0.5))
        assert r.err_H == 0 and r.err_u == 0
        assert r.steps == 2 and r.energy.passed


def test_run_single_deterministic():
    cfg = StudyConfig(case="annulus", levels=[8], T=0.25)
    a, b = harness.run_single(cfg), harness.run_single(cfg)
    assert a.err_H == b.err_H and a.err_u == b.err_u and a.beta == b.beta


def test_convergence_needs_two_levels():
    with pytest.raises(ValueError):
        harness.run_convergence(StudyConfig(levels=[8]))


def test_cli_converge_csv(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert cli.main(["converge", "--case", "lshape", "--levels", "4,8", "--T", "0.5", "--out", str(out)]) == 0
    text = out.read_text()
    assert text == capsys.readouterr().out
    t = harness.parse_table_csv(text)
    assert len(t) == 2 and t.err_A is not None
    assert t.err_H[1] < t.err_H[0]


def test_cli_converge_markdown(tmp_path):
    out = tmp_path / "t.md"
    assert cli.main(["converge", "--case", "zero", "--scheme", "direct-h1", "--levels", "4,8",
                     "--T", "0.25", "--out", str(out)]) == 0
    assert out.read_text().startswith("| τ = h |")


def test_cli_run_json(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("case = annulus\nT = 0.25\n")
    out = tmp_path / "r.json"
    assert cli.main(["run", "--config", str(cfg), "--M", "8", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["M"] == 8 and d["steps"] == 2 and len(d["beta"]) == 1
    assert d["max_div_H"] <= 1e-11
    assert (tmp_path / "r.energy.csv").exists()
    capsys.readouterr()


def test_cli_bad_config(capsys):
    assert cli.main(["run", "--case", "lshape", "--M", "7"]) == 1
    assert "even" in capsys.readouterr().err


def test_cli_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out and all(line.startswith("PASS") for line in out)


def test_cli_selftest_failure_exit_code(monkeypatch, capsys):
    from mhdpot.selftest import Check
    monkeypatch.setattr(cli, "run_all", lambda: [Check("x", False, "forced")])
    assert cli.main(["selftest"]) == 2
    assert capsys.readouterr().out.startswith("FAIL")


@pytest.mark.slow
def test_annulus_baseline_level32():
    r = harness.run_single(StudyConfig(case="annulus", scheme="direct-h1", levels=[32]))
    assert harness.isclose_factor(r.err_H, 2.912e-1, 3.0), r.err_H
