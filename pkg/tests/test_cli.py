import csv
import json

import pytest
from hypothesis import given, settings, strategies as st

from steinqueue import cli
from steinqueue.config import ExperimentConfig, SpecEntry
from steinqueue.errors import ConfigurationError, NumericalError

MM1 = "spec=mm1;exp:1;exp:1;0.9\n"


def write_cfg(tmp_path, body, name="run.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return p


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- config ----------------------------------------------------------------------

def test_config_round_trip():
    text = ("command=verify\nseed=7\nn=1000\nreplicates=4\nrho_grid=0.8,0.9,0.95,0.98,0.99\nout=o\n"
            "walks=100\nhorizon=50\ncf_t=0.5,1.0\nstein_n=200\nexport_samples=1\n"
            "spec=a;exp:1;exp:1;0.9\nspec=b;erlang:2,1;det:1;0.5\nspec=c;poisson;uniform:0,2;0.8\n")
    cfg = ExperimentConfig.parse(text)
    assert cfg.emit() == text
    assert ExperimentConfig.parse(cfg.emit()) == cfg


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 10**7), st.floats(0.01, 0.99),
       st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6))
def test_config_round_trip_hypothesis(seed, n, load, grid):
    cfg = ExperimentConfig(specs=(SpecEntry("q", "exp:1", "erlang:2,2", load),), seed=seed, n=n,
                           rho_grid=tuple(grid))
    assert ExperimentConfig.parse(cfg.emit()) == cfg


@pytest.mark.parametrize("body,needle", [
    ("seed=abc\n", "line 1"),
    ("bogus=1\n", "unknown key"),
    ("spec=a;exp:1\n", "label;arrival;service"),
    ("spec=a;exp:1;exp:1;1.2\n", "outside"),
    ("spec=a;exp:1;gamma:1;0.5\n", "gamma"),
    ("command=plot\n", "unknown command"),
    ("rho_grid=0.5,1.0\n", "rho_grid"),
    ("seed=-1\n", "unsigned"),
    ("no equals sign\n", "key=value"),
])
def test_config_errors(body, needle):
    with pytest.raises(ConfigurationError, match=needle):
        ExperimentConfig.parse(body)


def test_unstable_spec_without_load():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.parse("spec=a;exp:1;exp:0.5\n")


# -- exit codes ------------------------------------------------------------------

def test_empty_spec_list_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "seed=1\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "no queue specs" in capsys.readouterr().err


def test_parse_error_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "seed=x\n" + MM1)
    assert cli.main(["verify", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "line 1" in err


def test_missing_config_file(tmp_path):
    assert cli.main(["verify", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_missing_command(tmp_path):
    cfg = write_cfg(tmp_path, MM1)
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalError("quadrature blew up", error=1.0)
    monkeypatch.setattr(cli.bounds, "verify_spec", boom)
    cfg = write_cfg(tmp_path, MM1)
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "quadrature blew up" in capsys.readouterr().err


def test_verdict_failure_exit_code(tmp_path):
    # the Kolmogorov ceiling sits below the atom at zero for a point-mass service
    cfg = write_cfg(tmp_path, "n=100000\nspec=md1;poisson;det:1;0.9\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    rows = read_csv(tmp_path / "o" / "verify.csv")
    failed = [r["check"] for r in rows if r["pass"] == "false"]
    assert failed == ["dK(tilde) <= Brown ceiling"]


# -- commands ----------------------------------------------------------------------

def test_verify_mm1_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "n=200000\nseed=5\n" + MM1)
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "verify.csv")
    row = next(r for r in rows if r["check"] == "dW(tilde) <= tilde bound")
    assert abs(float(row["measured"]) - 0.077484) < 0.01
    assert abs(float(row["bound"]) - 0.2222) < 1e-4 and row["pass"] == "true"
    summary = json.loads((out / "verify.json").read_text())
    assert summary["passed"] is True and len(summary["reports"]) == 1
    assert "PASS" in capsys.readouterr().out


def test_seed_override_and_determinism(tmp_path):
    body = "n=50000\nreplicates=8\nwalks=2000\nstein_n=5000\nexport_samples=1\n" + MM1 + \
        "spec=gg1;erlang:2,1;exp:1;0.9\n"
    cfg = write_cfg(tmp_path, body)
    files = {}
    for tag in ("a", "b", "c"):
        seed = "11" if tag != "c" else "12"
        out = tmp_path / tag
        for cmd in ("verify", "ladder", "couple"):
            cli.main([cmd, "--config", str(cfg), "--out", str(out), "--seed", seed])
        files[tag] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert files["a"] == files["b"]
    assert files["a"]["verify.csv"] != files["c"]["verify.csv"]
    assert "sample_mm1.csv" in files["a"] and "pairs_mm1.csv" in files["a"]


def test_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path, "n=999\n" + MM1)
    out = tmp_path / "o"
    assert cli.main(["couple", "--config", str(cfg), "--out", str(out), "--n", "20000",
                     "--replicates", "4"]) == 0
    summary = json.loads((out / "couple.json").read_text())
    assert "n=20000" in summary["config"] and "replicates=4" in summary["config"]


def test_spec_flag_without_config(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["couple", "--spec", "x;poisson;det:1;0.8", "--n", "20000", "--out", str(out)]) == 0
    assert (out / "couple.csv").exists()


def test_rate_command(tmp_path):
    cfg = write_cfg(tmp_path, "command=rate\n" + MM1)
    out = tmp_path / "o"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "rate.csv")
    slope = next(r for r in rows if r["row"] == "slope")
    assert 0.9 <= float(slope["value"]) <= 1.1 and slope["pass"] == "true"
    unit_t = [r for r in rows if r["row"] == "cf" and r["t"] == "1.0"]
    assert unit_t and all(float(r["predicted"]) == 0.0 and r["ratio"] == "" for r in unit_t)


def test_rate_single_point_grid(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "rho_grid=0.9\n" + MM1)
    assert cli.main(["rate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "at least 5" in capsys.readouterr().err


def test_ladder_command_targets(tmp_path):
    cfg = write_cfg(tmp_path, "walks=20000\nspec=m;exp:1;exp:1;0.7\nspec=g;erlang:2,1;exp:1;0.9\n")
    out = tmp_path / "o"
    assert cli.main(["ladder", "--config", str(cfg), "--out", str(out)]) == 0
    m, g = read_csv(out / "ladder.csv")
    assert float(m["eta_target"]) == 0.7
    assert abs(float(m["eta"]) - 0.7) <= 5 * float(m["eta_se"])
    assert g["eta_target"] == "" and g["y1_target"] == "" and float(g["eta_se"]) > 0


def test_ladder_truncation_warning(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "walks=2000\nhorizon=10\nspec=m;exp:1;exp:1;0.99\n")
    out = tmp_path / "o"
    assert cli.main(["ladder", "--config", str(cfg), "--out", str(out)]) == 0
    assert "biased low" in capsys.readouterr().err
    assert read_csv(out / "ladder.csv")[0]["truncation_warning"] == "true"


def test_stein_check_command(tmp_path):
    cfg = write_cfg(tmp_path, "stein_n=20000\n" + MM1 + "spec=g;erlang:2,1;exp:1;0.9\n")
    out = tmp_path / "o"
    assert cli.main(["stein-check", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "stein.csv")
    assert {r["statistic"] for r in rows} == {"ode_residual_max", "third_derivative_max",
                                              "stationarity_mean", "generator_mean_abs"}
    assert all(r["pass"] == "true" for r in rows)
    assert not any(r["spec"] == "g" for r in rows)
