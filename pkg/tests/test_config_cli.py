"""Configuration files and the command-line interface."""
import json

import numpy as np
import pytest

from netmpc import cli
from netmpc import config as cfgmod
from netmpc.model import ConfigError


@pytest.fixture(scope="module")
def table_path(tables, request):
    return str(request.config.cache.mkdir("netmpc") / "tables.bin")


def test_toml_and_json_round_trip():
    cfg = cfgmod.benchmark_config()
    for fmt in ("toml", "json"):
        back = cfgmod.loads(cfgmod.dumps(cfg, fmt))
        assert back.to_dict() == cfg.to_dict()
    p = cfg.problem()
    assert (p.N, p.d_max, p.h_bounds, p.s_bounds) == (10, 2, (0, 1), (1, 3))


@pytest.mark.parametrize("edit", [
    lambda d: d["controller"].update(N=2),
    lambda d: d["network"].update(mu=[0.5, 0.5, 0.5]),
    lambda d: d["network"].update(s_bounds=[0, 3]),
    lambda d: d["plant"].pop("Mx"),
    lambda d: d.pop("controller"),
])
def test_invalid_configs_rejected(edit):
    d = cfgmod.benchmark_config().to_dict()
    edit(d)
    with pytest.raises(ConfigError):
        cfgmod.RunConfig.from_dict(d)


def test_garbage_text_rejected():
    with pytest.raises(ConfigError):
        cfgmod.loads("this is = = not toml")


def test_script_parser(problem):
    assert cli.parse_script("D=max,H=1,S=min", problem) == {"d_script": 2, "h_script": 1, "s_script": 1}
    with pytest.raises(ConfigError):
        cli.parse_script("D=3", problem)
    with pytest.raises(ConfigError):
        cli.parse_script("X=1", problem)


def test_validate_and_bad_config(tmp_path, capsys):
    good = tmp_path / "run.toml"
    assert cli.main(["validate-config", "--dump", str(good)]) == cli.EXIT_OK
    assert cli.main(["validate-config", "--config", str(good)]) == cli.EXIT_OK
    d = cfgmod.load(good).to_dict()
    d["controller"]["N"] = 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert cli.main(["validate-config", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", str(bad)]) == cli.EXIT_CONFIG


def test_admissible_exit_codes(tmp_path):
    out = tmp_path / "x0set.json"
    assert cli.main(["admissible", "--out", str(out)]) == cli.EXIT_OK
    assert json.loads(out.read_text())["admissible"] is True
    assert cli.main(["admissible", "--x0", "-45", "-26", "-70", "--out", str(out)]) == cli.EXIT_INADMISSIBLE


def test_simulate_writes_outputs(tmp_path, table_path, capsys):
    rc = cli.main(["simulate", "--tables", table_path, "--seed", "7", "--horizon", "30", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    for ext in ("csv", "json", "svg"):
        assert (tmp_path / f"stochastic_seed7.{ext}").exists()
    summary = json.loads((tmp_path / "stochastic_seed7.json").read_text())
    assert summary["violations"] == 0 and summary["steps"] == 30


def test_simulate_inadmissible_start(tmp_path, table_path):
    cfg = cfgmod.benchmark_config()
    cfg.experiment["x0"] = (10 * np.asarray(cfg.experiment["x0"])).tolist()
    path = tmp_path / "far.toml"
    cfgmod.dump(cfg, path)
    rc = cli.main(["simulate", "--config", str(path), "--tables", table_path, "--out", str(tmp_path)])
    assert rc == cli.EXIT_INADMISSIBLE


def test_lqr_script_reports_violations(tmp_path, table_path, capsys):
    rc = cli.main(["simulate", "--variant", "lqr", "--script", "D=max,H=max,S=max",
                   "--tables", table_path, "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    assert "violation:" in capsys.readouterr().out


def test_qp_subcommand(tmp_path, capsys):
    feas = tmp_path / "qp.json"
    feas.write_text(json.dumps({"V": [[1.0]], "v": [-4.0], "W": [[1.0]], "w": [1.0]}))
    assert cli.main(["qp", "--instance", str(feas)]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["u"] == pytest.approx([1.0])
    infeas = tmp_path / "bad.json"
    infeas.write_text(json.dumps({"V": [[1.0]], "v": [0.0], "W": [[1.0], [-1.0]], "w": [-1.0, -1.0]}))
    assert cli.main(["qp", "--instance", str(infeas)]) == cli.EXIT_INFEASIBLE
    assert cli.main(["qp", "--instance", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_precompute_cache_hit(tmp_path, tables, table_path, capsys):
    import shutil
    dst = tmp_path / "tables.bin"
    shutil.copy(table_path, dst)
    assert cli.main(["precompute", "--out", str(dst)]) == cli.EXIT_OK
    assert "cache: hit" in capsys.readouterr().out
