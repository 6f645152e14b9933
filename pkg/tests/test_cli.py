import csv
import json

import pytest

from spinorlab import cli
from spinorlab.errors import ConfigInvalid
from spinorlab.experiments import CLAIMS

TINY_MC = {
    "deltas": ["1/4", "1/6"],
    "mc": {"n_therm": 100, "n_clusters": 8000, "batch": 1000},
    "options": {"ratio_check": {"delta": "1/4", "points": [[0, 0], [0.5, 0]], "rel_tol": 0.02}},
}


def run_cli(tmp_path, experiment, config=None, *extra):
    argv = [experiment, "--out", str(tmp_path)]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv + list(extra))


def read_csv(path):
    with open(path) as fh:
        header = fh.readline()
        return header, list(csv.reader(fh))


def test_every_experiment_has_defaults_and_a_claim():
    assert set(cli.DEFAULTS) == set(CLAIMS) == set(cli.OPTION_SCHEMAS)
    for name in cli.DEFAULTS:
        cfg = cli.load_config(name)
        assert cfg["experiment"] == name and cfg["schema_version"] == cli.SCHEMA_VERSION


@pytest.mark.parametrize("config", [
    {"bogus": 1},
    {"options": {"bogus": 1}},
    {"deltas": ["0.5/3"]},
    {"schema_version": 2},
    {"experiment": "cft-match"},
    {"mc": {"n_clusters": 100, "batch": 50}},
])
def test_invalid_configs_exit_2(tmp_path, config, capsys):
    assert run_cli(tmp_path, "decorrelation", config) == 2
    assert "configuration error" in capsys.readouterr().err
    with pytest.raises(ConfigInvalid):
        cli.load_config("decorrelation", config)


def test_unreadable_config_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["decorrelation", "--config", str(bad)]) == 2


def test_reports(tmp_path, capsys):
    assert run_cli(tmp_path, "decorrelation") == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out
    header, rows = read_csv(tmp_path / "decorrelation.csv")
    assert header.strip() == "# schema=spinorlab.decorrelation/1"
    assert tuple(rows[0]) == cli.CSV_COLUMNS
    assert all(len(r) == len(cli.CSV_COLUMNS) for r in rows[1:])
    summary = json.loads((tmp_path / "decorrelation.json").read_text())
    assert summary["schema"] == "spinorlab.summary/1"
    assert summary["claim"] == CLAIMS["decorrelation"]
    assert summary["build_id"] == cli.build_id() and len(summary["build_id"]) == 16
    assert summary["passed"] is True
    assert summary["n_rows"] == len(rows) - 1
    assert summary["config"]["experiment"] == "decorrelation"


def test_output_names(tmp_path):
    cfg = {"output": {"csv": "a.csv", "json": "b.json"}}
    assert run_cli(tmp_path, "decorrelation", cfg) == 0
    assert (tmp_path / "a.csv").exists() and (tmp_path / "b.json").exists()
    assert json.loads((tmp_path / "b.json").read_text())["csv"] == "a.csv"


def test_tolerance_failure_exits_1(tmp_path, capsys):
    assert run_cli(tmp_path, "decorrelation", {"tolerances": {"decorrelation": 1e-12}}) == 1
    assert "FAIL" in capsys.readouterr().out
    assert json.loads((tmp_path / "decorrelation.json").read_text())["passed"] is False


def test_upstream_failure_exits_1(tmp_path, capsys):
    cfg = {"deltas": ["1/4"], "points": [[[5, 0]]]}
    assert run_cli(tmp_path, "logderiv-convergence", cfg) == 1
    assert "upstream failure" in capsys.readouterr().err
    assert not (tmp_path / "logderiv-convergence.json").exists()


def test_seeded_runs_are_reproducible(tmp_path):
    runs = {}
    for name, seed in [("a", 7), ("b", 7), ("c", 8)]:
        out = tmp_path / name
        out.mkdir()
        cli.main(["magnetization-scaling", "--out", str(out), "--seed", str(seed), "--threads", "1",
                  "--config", str(_write(out / "cfg.json", TINY_MC))])
        runs[name] = (out / "magnetization-scaling.csv").read_text()
    assert runs["a"] == runs["b"]
    assert runs["a"] != runs["c"]


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return path
