import subprocess
import sys

import pytest

import rffso.experiments as ex
from rffso.cli import main
from rffso.experiments import CSV_HEADER

SMALL = """
[tiny]
fso = exponential
rate_R = 2
max_rounds_M = 2
fso_realizations_N = 5
snr_db = 0:10:5
trials = 1000
seed = 3
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(SMALL)
    return p


def methods_of(text):
    return {line.split(",")[2] for line in text.splitlines()[1:]}


@pytest.mark.parametrize("cmd, expected", [
    ("simulate", {"mc"}),
    ("analytic", {"clt_quadrature", "lemma1", "lemma2", "lemma3", "lemma4", "lemma5"}),
    ("validate", {"mc", "clt_quadrature", "lemma1", "lemma2", "lemma3", "lemma4", "lemma5"}),
])
def test_subcommands(cmd, expected, cfg, capsys):
    assert main([cmd, "--config", str(cfg)]) == 0
    out, err = capsys.readouterr()
    assert out.splitlines()[0] == CSV_HEADER
    assert methods_of(out) == expected
    assert "validation: 0 bound-ordering violations" in err
    if cmd == "validate":
        assert "SNR (dB) at target outage" in err or "max |method - reference|" in err


def test_bounds_includes_reference(tmp_path, capsys):
    p = tmp_path / "gg.ini"
    p.write_text("[gg]\nfso = gammagamma\nrate_R = 5\nmax_rounds_M = 2\nfso_realizations_N = 1\n"
                 "snr_db = 10 30\ntrials = 2000\n")
    assert main(["bounds", "--config", str(p)]) == 0
    assert methods_of(capsys.readouterr().out) == {"mc", "upper_minkowski", "lower_jensen", "high_snr"}


def test_power_opt(capsys):
    assert main(["power-opt", "--preset", "fig11", "--trials", "1000"]) == 0
    out = capsys.readouterr().out
    assert "rf_share" in out and "fig11_power_alloc:exponential:optimal" in out
    assert main(["power-opt"]) == 2
    assert main(["power-opt", "--preset", "fig4"]) == 2


def test_out_file_and_format(cfg, tmp_path, capsys):
    out = tmp_path / "r.dat"
    assert main(["analytic", "--config", str(cfg), "--out", str(out), "--format", "gnuplot"]) == 0
    assert capsys.readouterr().out == ""
    text = out.read_text()
    assert text.startswith("# scenario=tiny method=") and "\n\n\n" in text


def test_overrides_and_determinism(cfg, tmp_path):
    a, b, c = (tmp_path / n for n in "abc")
    assert main(["simulate", "--config", str(cfg), "--seed", "99", "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "99", "--workers", "3", "--out", str(b)]) == 0
    assert main(["simulate", "--config", str(cfg), "--seed", "100", "--trials", "4000", "--out", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


@pytest.mark.parametrize("argv", [
    ["figure"],
    ["figure", "--preset", "fig3", "--config", "x.ini"],
    ["figure", "--preset", "fig13"],
    ["figure", "--preset", "fig3", "--trials", "10"],
    ["figure", "--preset", "fig3", "--seed", "-4"],
    ["simulate", "--config", "/nonexistent/cfg.ini"],
])
def test_config_errors(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_config_content(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[s]\nsnr_db = 10 0\n")
    assert main(["simulate", "--config", str(p)]) == 2
    assert "s.snr_db" in capsys.readouterr().err


def test_numeric_failure_exit(cfg, monkeypatch, capsys):
    def boom(*a, **k):
        raise ArithmeticError("bad moment")

    monkeypatch.setattr(ex, "_analytic_rows", boom)
    assert main(["analytic", "--config", str(cfg)]) == 3
    out, err = capsys.readouterr()
    assert "ArithmeticError: bad moment" in out and "3 failed points" in err


def test_violation_exit(cfg, monkeypatch, capsys):
    monkeypatch.setattr(ex, "find_violations", lambda rows: ["forced"])
    assert main(["analytic", "--config", str(cfg)]) == 4
    assert "violation forced" in capsys.readouterr().err


def test_module_entry_point(cfg):
    proc = subprocess.run([sys.executable, "-m", "rffso", "analytic", "--config", str(cfg)],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == CSV_HEADER
    bad = subprocess.run([sys.executable, "-m", "rffso", "nonsense"], capture_output=True, text=True)
    assert bad.returncode == 2
